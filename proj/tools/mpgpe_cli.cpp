// Command-line front end: dataset collection, transition-model fitting,
// policy training, evaluation, and the sampling-schedule sweep. Every run
// is fully determined by --seed; CSV outputs are byte-stable across runs.

#include <CLI11.hpp>

#include <mpgpe/mpgpe.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace mpgpe;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

EnvKind parse_env_kind(const std::string& name) {
    if (name == "chainwalk-gaussian") return EnvKind::chainwalk_gaussian;
    if (name == "chainwalk-bimodal") return EnvKind::chainwalk_bimodal;
    if (name == "arm2") return EnvKind::arm2;
    throw CLI::ValidationError("--env", "unknown environment '" + name +
                                            "' (expected chainwalk-gaussian, "
                                            "chainwalk-bimodal, or arm2)");
}

Algo parse_algo(const std::string& name) {
    if (name == "mpgpe-lscde") return Algo::mpgpe_lscde;
    if (name == "mpgpe-gp") return Algo::mpgpe_gp;
    if (name == "iwpgpe") return Algo::iwpgpe;
    if (name == "reinforce") return Algo::reinforce;
    throw CLI::ValidationError("--algo", "unknown algorithm '" + name + "'");
}

struct EnvOptions {
    std::string name = "chainwalk-gaussian";
    int horizon = -1;        // -1: environment default
    double gamma = -1.0;     // <0: environment default
    double noise_std = -1.0; // <0: environment default

    Environment build() const {
        const EnvKind kind = parse_env_kind(name);
        EnvConfig cfg = kind == EnvKind::arm2 ? arm2_config() : chain_walk_config(kind);
        if (horizon > 0) cfg.horizon = horizon;
        if (gamma >= 0.0) cfg.gamma = gamma;
        if (noise_std >= 0.0) cfg.noise_std = noise_std;
        return Environment(cfg);
    }

    void describe(std::map<std::string, std::string>& kv) const {
        const Environment env = build();
        kv["env"] = name;
        kv["horizon"] = std::to_string(env.config().horizon);
        kv["gamma"] = format_double(env.config().gamma);
        kv["noise_std"] = format_double(env.config().noise_std);
    }
};

void add_env_options(CLI::App* cmd, EnvOptions& opts) {
    cmd->add_option("--env", opts.name, "Environment: chainwalk-gaussian, chainwalk-bimodal, arm2");
    cmd->add_option("--horizon", opts.horizon, "Episode length T (default: environment standard)");
    cmd->add_option("--gamma", opts.gamma, "Discount factor (default: environment standard)");
    cmd->add_option("--noise-std", opts.noise_std,
                    "Dynamics noise std; 0 makes the dynamics deterministic");
}

std::string canonical_config(const std::map<std::string, std::string>& kv) {
    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
    return out.str();
}

void emit_manifest(const std::string& command, const std::map<std::string, std::string>& kv,
                   std::uint64_t seed, const std::string& started,
                   const std::vector<std::string>& outputs) {
    if (outputs.empty()) return;
    RunManifest m;
    m.command = command;
    m.config_text = canonical_config(kv);
    m.seed = seed;
    m.started_at = started;
    m.finished_at = utc_now();
    m.outputs = outputs;
    write_manifest(outputs.front() + ".manifest.txt", m);
}

// ---- collect ---------------------------------------------------------------

int run_collect(const EnvOptions& env_opts, int episodes, std::uint64_t seed,
                const std::string& out) {
    const std::string started = utc_now();
    const Environment env = env_opts.build();
    Rng rng = Rng(seed).derive(0); // collection stream
    const auto samples = collect_uniform_dataset(env, episodes, rng);
    write_transitions_csv(out, samples);

    std::map<std::string, std::string> kv;
    env_opts.describe(kv);
    kv["episodes"] = std::to_string(episodes);
    kv["seed"] = std::to_string(seed);
    kv["out"] = out;
    emit_manifest("collect", kv, seed, started, {out});
    std::cout << "wrote " << samples.size() << " transitions to " << out << "\n";
    return 0;
}

// ---- fit -------------------------------------------------------------------

struct FitOptions {
    std::string model = "lscde";
    std::string data;
    std::string out;
    std::uint64_t seed = 0;
    int max_centers = 500;
    double kappa = 0.0;  // 0: select by cross-validation
    double lambda = -1.0; // <0: select by cross-validation
    int folds = 5;
};

int run_fit(const FitOptions& opts) {
    const std::string started = utc_now();
    const auto samples = read_transitions_csv(opts.data);
    std::map<std::string, std::string> kv{{"model", opts.model},
                                          {"data", opts.data},
                                          {"out", opts.out},
                                          {"seed", std::to_string(opts.seed)},
                                          {"max_centers", std::to_string(opts.max_centers)}};

    if (opts.model == "lscde") {
        Rng rng = Rng(opts.seed).derive(1); // model-fit stream
        double kappa = opts.kappa;
        double lambda = opts.lambda;
        if (kappa <= 0.0 || lambda < 0.0) {
            CvGrid grid;
            grid.folds = opts.folds;
            const CvResult cv = cross_validate_lscde(samples, grid, opts.max_centers, rng);
            kappa = kappa > 0.0 ? kappa : cv.kappa;
            lambda = lambda >= 0.0 ? lambda : cv.lambda;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& row : cv.table) best = std::min(best, row.score);
            std::cout << "cross-validation selected kappa=" << format_double(cv.kappa)
                      << " lambda=" << format_double(cv.lambda)
                      << " (score=" << format_double(best) << ")\n";
        }
        const LscdeModel model = fit_lscde(samples, kappa, lambda, opts.max_centers, rng);
        save_lscde(opts.out, model);
        kv["kappa"] = format_double(kappa);
        kv["lambda"] = format_double(lambda);
        emit_manifest("fit", kv, opts.seed, started, {opts.out});
        std::cout << "fit lscde model with " << model.num_centers() << " centers, kappa="
                  << format_double(kappa) << ", lambda=" << format_double(lambda) << " -> "
                  << opts.out << "\n";
        return 0;
    }
    if (opts.model == "gp") {
        const GpModel model = fit_gp(samples);
        save_gp(opts.out, model);
        kv["amplitude"] = format_double(model.amplitude());
        kv["lengthscale"] = format_double(model.lengthscale()[0]);
        kv["noise_var"] = format_double(model.noise_var());
        emit_manifest("fit", kv, opts.seed, started, {opts.out});
        std::cout << "fit gp model on " << model.num_points()
                  << " points: amplitude=" << format_double(model.amplitude())
                  << " lengthscale=" << format_double(model.lengthscale()[0])
                  << " noise_var=" << format_double(model.noise_var())
                  << " log_evidence=" << format_double(model.log_evidence()) << " -> "
                  << opts.out << "\n";
        return 0;
    }
    throw CLI::ValidationError("--model", "unknown model '" + opts.model + "'");
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
    EnvOptions env;
    std::string algo = "mpgpe-lscde";
    int budget = 20;
    int iters = 20;
    int synthetic = 2000;
    double lr = 0.1;
    bool normalize_step = false;
    std::string schedule = "20x1";
    int updates_per_batch = 100;
    int eval_episodes = 100;
    int max_centers = 500;
    double init_scale = 0.5;
    double tau_init = 1.0;
    double tau_floor = -1.0; // <0: algorithm default
    std::uint64_t seed = 0;
    std::string out = "curve.csv";
    std::string policy_out;
    std::string model_in; // optional pre-fitted model (mpgpe algos)
};

int run_train(const TrainOptions& opts) {
    const std::string started = utc_now();
    std::vector<std::string> errors;

    std::optional<Environment> env;
    try {
        env.emplace(opts.env.build());
    } catch (const std::exception& e) {
        errors.emplace_back(e.what());
    }
    std::optional<Algo> algo;
    try {
        algo = parse_algo(opts.algo);
    } catch (const std::exception& e) {
        errors.emplace_back(e.what());
    }
    const auto sched = parse_schedule(opts.schedule);
    if (!sched) errors.push_back("invalid --schedule '" + opts.schedule + "' (expected KxR)");

    TrainConfig cfg;
    if (algo) cfg.algo = *algo;
    cfg.budget_episodes = opts.budget;
    cfg.iterations = opts.iters;
    cfg.synthetic_per_update = opts.synthetic;
    cfg.learning_rate = opts.lr;
    cfg.normalize_step = opts.normalize_step;
    if (sched) cfg.schedule = *sched;
    cfg.updates_per_batch = opts.updates_per_batch;
    cfg.eval_episodes = opts.eval_episodes;
    cfg.max_centers = opts.max_centers;
    cfg.init_scale = opts.init_scale;
    cfg.tau_init = opts.tau_init;
    cfg.tau_floor = opts.tau_floor >= 0.0 ? opts.tau_floor
                                          : (algo ? default_tau_floor(*algo) : 0.05);
    cfg.seed = opts.seed;
    if (env && algo) {
        const auto cfg_errors = validate(cfg, *env);
        errors.insert(errors.end(), cfg_errors.begin(), cfg_errors.end());
    }
    if (!opts.model_in.empty() && algo && *algo != Algo::mpgpe_lscde && *algo != Algo::mpgpe_gp)
        errors.push_back("--model-in only applies to mpgpe-lscde / mpgpe-gp");
    if (!errors.empty()) {
        std::cerr << "train: configuration errors:\n";
        for (const auto& e : errors) std::cerr << "  - " << e << "\n";
        return 1;
    }

    const Rng root(opts.seed);
    TrainResult result;
    if (!opts.model_in.empty()) {
        if (*algo == Algo::mpgpe_lscde)
            result = train_mpgpe_with_model(*env, load_lscde(opts.model_in), cfg, root);
        else
            result = train_mpgpe_with_model(*env, load_gp(opts.model_in), cfg, root);
    } else {
        result = train(*env, cfg, root);
    }

    write_curve_csv(opts.out, result.curve);
    std::vector<std::string> outputs{opts.out};
    const std::string policy_out =
        opts.policy_out.empty() ? opts.out + ".prior" : opts.policy_out;
    save_prior(policy_out, result.final_rho);
    outputs.push_back(policy_out);

    std::map<std::string, std::string> kv;
    opts.env.describe(kv);
    kv["algo"] = opts.algo;
    kv["budget"] = std::to_string(opts.budget);
    kv["iterations"] = std::to_string(opts.iters);
    kv["synthetic_per_update"] = std::to_string(opts.synthetic);
    kv["learning_rate"] = format_double(opts.lr);
    kv["normalize_step"] = opts.normalize_step ? "true" : "false";
    kv["schedule"] = cfg.schedule.str();
    kv["updates_per_batch"] = std::to_string(opts.updates_per_batch);
    kv["eval_episodes"] = std::to_string(opts.eval_episodes);
    kv["max_centers"] = std::to_string(opts.max_centers);
    kv["init_scale"] = format_double(cfg.init_scale);
    kv["tau_init"] = format_double(cfg.tau_init);
    kv["tau_floor"] = format_double(cfg.tau_floor);
    kv["seed"] = std::to_string(opts.seed);
    kv["model_in"] = opts.model_in;
    kv["out"] = opts.out;
    kv["policy_out"] = policy_out;
    emit_manifest("train", kv, opts.seed, started, outputs);

    std::cout << "trained " << opts.algo << ": " << result.curve.rows.size()
              << " curve rows, final return "
              << format_double(result.curve.rows.back().mean_return) << " +- "
              << format_double(result.curve.rows.back().std_error) << "\n";
    std::cout << "curve -> " << opts.out << "\npolicy -> " << policy_out << "\n";
    if (result.degenerate_resamples > 0)
        std::cout << "degenerate rollouts resampled: " << result.degenerate_resamples << "\n";
    return 0;
}

// ---- evaluate ----------------------------------------------------------------

int run_evaluate(const EnvOptions& env_opts, const std::string& policy_path, int episodes,
                 std::uint64_t seed, const std::string& out) {
    const std::string started = utc_now();
    const Environment env = env_opts.build();
    const PriorHyper rho = load_prior(policy_path);
    Rng rng = Rng(seed).derive(3); // evaluation stream
    const Evaluation ev = evaluate_policy(env, rho, episodes, rng);
    std::cout << "mean_return " << format_double(ev.mean_return) << " std_error "
              << format_double(ev.std_error) << " over " << episodes << " episodes\n";
    if (!out.empty()) {
        std::ostringstream csv;
        csv << "episodes,mean_return,std_error\n"
            << episodes << "," << format_double(ev.mean_return) << ","
            << format_double(ev.std_error) << "\n";
        atomic_write_file(out, csv.str());
        std::map<std::string, std::string> kv;
        env_opts.describe(kv);
        kv["policy"] = policy_path;
        kv["episodes"] = std::to_string(episodes);
        kv["seed"] = std::to_string(seed);
        kv["out"] = out;
        emit_manifest("evaluate", kv, seed, started, {out});
    }
    return 0;
}

// ---- sweep ------------------------------------------------------------------

struct SweepOptions {
    EnvOptions env;
    int budget = 20;
    std::string schedules = "1x20,2x10,4x5,5x4,10x2,20x1";
    int runs = 50;
    int updates_per_batch = 100;
    int eval_episodes = 100;
    double lr = 0.1;
    double init_scale = 0.5;
    double tau_init = 1.0;
    double tau_floor = -1.0; // <0: iwpgpe default
    std::uint64_t seed = 0;
    std::string out = "sweep.csv";
};

int run_sweep(const SweepOptions& opts) {
    const std::string started = utc_now();
    const Environment env = opts.env.build();

    std::vector<Schedule> schedules;
    std::vector<std::string> errors;
    std::stringstream ss(opts.schedules);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto sched = parse_schedule(tok);
        if (!sched) {
            errors.push_back("invalid schedule '" + tok + "'");
            continue;
        }
        if (sched->batch_size * sched->repeats != opts.budget)
            errors.push_back("schedule " + tok + " does not exhaust budget " +
                             std::to_string(opts.budget));
        else
            schedules.push_back(*sched);
    }
    if (schedules.empty()) errors.push_back("no usable schedules");
    if (!errors.empty()) {
        std::cerr << "sweep: configuration errors:\n";
        for (const auto& e : errors) std::cerr << "  - " << e << "\n";
        return 1;
    }

    TrainConfig cfg;
    cfg.algo = Algo::iwpgpe;
    cfg.budget_episodes = opts.budget;
    cfg.updates_per_batch = opts.updates_per_batch;
    cfg.eval_episodes = opts.eval_episodes;
    cfg.learning_rate = opts.lr;
    cfg.init_scale = opts.init_scale;
    cfg.tau_init = opts.tau_init;
    cfg.tau_floor = opts.tau_floor >= 0.0 ? opts.tau_floor : default_tau_floor(Algo::iwpgpe);

    const auto rows = schedule_sweep(env, cfg, schedules, opts.runs, Rng(opts.seed));
    write_sweep_csv(opts.out, rows);

    std::map<std::string, std::string> kv;
    opts.env.describe(kv);
    kv["budget"] = std::to_string(opts.budget);
    kv["schedules"] = opts.schedules;
    kv["runs"] = std::to_string(opts.runs);
    kv["updates_per_batch"] = std::to_string(opts.updates_per_batch);
    kv["eval_episodes"] = std::to_string(opts.eval_episodes);
    kv["learning_rate"] = format_double(opts.lr);
    kv["init_scale"] = format_double(cfg.init_scale);
    kv["tau_init"] = format_double(cfg.tau_init);
    kv["tau_floor"] = format_double(cfg.tau_floor);
    kv["seed"] = std::to_string(opts.seed);
    kv["out"] = opts.out;
    emit_manifest("sweep", kv, opts.seed, started, {opts.out});

    for (const auto& row : rows)
        std::cout << row.schedule.str() << ": " << format_double(row.mean_return) << " +- "
                  << format_double(row.std_error) << "\n";
    std::cout << "table -> " << opts.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-based PGPE policy search toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value config file; command-line flags override it");

    // collect
    EnvOptions collect_env;
    int collect_episodes = 20;
    std::uint64_t collect_seed = 0;
    std::string collect_out = "data.csv";
    auto* collect = app.add_subcommand("collect", "Collect a uniform-exploration dataset");
    add_env_options(collect, collect_env);
    collect->add_option("--episodes", collect_episodes, "Number of episodes")
        ->check(CLI::PositiveNumber);
    collect->add_option("--seed", collect_seed, "Random seed");
    collect->add_option("--out", collect_out, "Output CSV path");

    // fit
    FitOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "Fit a transition model from a dataset CSV");
    fit->add_option("--model", fit_opts.model, "Model kind: lscde or gp");
    fit->add_option("--data", fit_opts.data, "Input dataset CSV")->required();
    fit->add_option("--out", fit_opts.out, "Output model path")->required();
    fit->add_option("--seed", fit_opts.seed, "Random seed (center subsampling, CV folds)");
    fit->add_option("--max-centers", fit_opts.max_centers, "Gaussian-center cap; 0 keeps all");
    fit->add_option("--kappa", fit_opts.kappa, "Fix the bandwidth instead of cross-validating");
    fit->add_option("--lambda", fit_opts.lambda,
                    "Fix the regularizer instead of cross-validating");
    fit->add_option("--folds", fit_opts.folds, "Cross-validation folds")->check(CLI::Range(2, 100));

    // train
    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a policy prior");
    add_env_options(train_cmd, train_opts.env);
    train_cmd->add_option("--algo", train_opts.algo,
                          "mpgpe-lscde, mpgpe-gp, iwpgpe, or reinforce");
    train_cmd->add_option("--budget", train_opts.budget, "Real-episode budget N");
    train_cmd->add_option("--iters", train_opts.iters, "Model-based update iterations");
    train_cmd->add_option("--synthetic", train_opts.synthetic,
                          "Synthetic rollouts per update (half baseline, half gradient)");
    train_cmd->add_option("--lr", train_opts.lr, "Learning rate");
    train_cmd->add_flag("--normalize-step", train_opts.normalize_step,
                        "Normalize updates to length lr");
    train_cmd->add_option("--schedule", train_opts.schedule, "Batching KxR for iwpgpe/reinforce");
    train_cmd->add_option("--updates-per-batch", train_opts.updates_per_batch,
                          "IW-PGPE updates after each batch");
    train_cmd->add_option("--eval-episodes", train_opts.eval_episodes,
                          "Real evaluation episodes per curve row");
    train_cmd->add_option("--max-centers", train_opts.max_centers,
                          "LSCDE Gaussian-center cap; 0 keeps all");
    train_cmd->add_option("--init-scale", train_opts.init_scale,
                          "Std of the random initial prior mean (0 = zero init)");
    train_cmd->add_option("--tau-init", train_opts.tau_init, "Initial prior std");
    train_cmd->add_option("--tau-floor", train_opts.tau_floor,
                          "Lower bound on tau after updates (default: 0.05 for "
                          "model-based, 1e-6 for model-free)");
    train_cmd->add_option("--seed", train_opts.seed, "Random seed");
    train_cmd->add_option("--out", train_opts.out, "Learning-curve CSV path");
    train_cmd->add_option("--policy-out", train_opts.policy_out,
                          "Final prior path (default: <out>.prior)");
    train_cmd->add_option("--model-in", train_opts.model_in,
                          "Pre-fitted transition model; skips collection and fitting");

    // evaluate
    EnvOptions eval_env;
    std::string eval_policy;
    int eval_episodes = 100;
    std::uint64_t eval_seed = 0;
    std::string eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved prior's mean policy");
    add_env_options(evaluate, eval_env);
    evaluate->add_option("--policy", eval_policy, "Prior file to evaluate")->required();
    evaluate->add_option("--episodes", eval_episodes, "Evaluation episodes")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--seed", eval_seed, "Random seed");
    evaluate->add_option("--out", eval_out, "Optional CSV output");

    // sweep
    SweepOptions sweep_opts;
    auto* sweep = app.add_subcommand("sweep", "IW-PGPE sampling-schedule sweep");
    add_env_options(sweep, sweep_opts.env);
    sweep->add_option("--budget", sweep_opts.budget, "Real-episode budget N");
    sweep->add_option("--schedules", sweep_opts.schedules, "Comma-separated KxR list");
    sweep->add_option("--runs", sweep_opts.runs, "Runs per schedule")->check(CLI::PositiveNumber);
    sweep->add_option("--updates-per-batch", sweep_opts.updates_per_batch,
                      "IW-PGPE updates after each batch");
    sweep->add_option("--eval-episodes", sweep_opts.eval_episodes,
                      "Real evaluation episodes per point");
    sweep->add_option("--lr", sweep_opts.lr, "Learning rate");
    sweep->add_option("--init-scale", sweep_opts.init_scale,
                      "Std of the random initial prior mean (0 = zero init)");
    sweep->add_option("--tau-init", sweep_opts.tau_init, "Initial prior std");
    sweep->add_option("--tau-floor", sweep_opts.tau_floor,
                      "Lower bound on tau after updates (default: 1e-6)");
    sweep->add_option("--seed", sweep_opts.seed, "Random seed");
    sweep->add_option("--out", sweep_opts.out, "Sweep table CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed())
            return run_collect(collect_env, collect_episodes, collect_seed, collect_out);
        if (fit->parsed()) return run_fit(fit_opts);
        if (train_cmd->parsed()) return run_train(train_opts);
        if (evaluate->parsed())
            return run_evaluate(eval_env, eval_policy, eval_episodes, eval_seed, eval_out);
        if (sweep->parsed()) return run_sweep(sweep_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
