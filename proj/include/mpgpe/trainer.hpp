#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "env.hpp"
#include "estimators.hpp"
#include "gp.hpp"
#include "lscde.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace mpgpe {

enum class Algo { mpgpe_lscde, mpgpe_gp, iwpgpe, reinforce };

struct Schedule {
    int batch_size = 20; // k
    int repeats = 1;     // N / k

    std::string str() const {
        return std::to_string(batch_size) + "x" + std::to_string(repeats);
    }
};

inline std::optional<Schedule> parse_schedule(const std::string& text) {
    const auto pos = text.find('x');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size()) return std::nullopt;
    try {
        std::size_t used = 0;
        const int k = std::stoi(text.substr(0, pos), &used);
        if (used != pos) return std::nullopt;
        const int r = std::stoi(text.substr(pos + 1), &used);
        if (used != text.size() - pos - 1) return std::nullopt;
        if (k <= 0 || r <= 0) return std::nullopt;
        return Schedule{k, r};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

struct TrainConfig {
    Algo algo = Algo::mpgpe_lscde;
    int budget_episodes = 20;        // N real episodes, consumed exactly once
    int iterations = 20;             // model-based policy updates
    int synthetic_per_update = 2000; // split half baseline / half gradient
    double learning_rate = 0.1;
    bool normalize_step = false;     // step eps * grad / |grad|
    Schedule schedule{20, 1};        // iwpgpe / reinforce batching
    int updates_per_batch = 100;     // iwpgpe
    int eval_episodes = 100;
    std::uint64_t seed = 0;
    double stop_delta = 0.0;         // optional early stop on |delta rho|; 0 disables

    // Prior initialization: eta drawn from Normal(0, init_scale^2) per run.
    // An exactly-zero mean sits on a saddle of sign-symmetric dynamics
    // (bimodal chain walk), where the eta-gradient vanishes identically.
    double init_scale = 0.5;
    double tau_init = 1.0;
    // Lower bound kept on tau after each update; see default_tau_floor.
    // The default matches the default algo (model-based).
    double tau_floor = 0.05;

    // model-fitting knobs
    CvGrid cv_grid{};
    GpHyperGrid gp_grid{};
    int max_centers = 500;
};

// Safeguard defaults per algorithm: the model-based loop takes ~20 exact
// gradient steps and must not let tau collapse; the model-free runs keep
// the raw floor (schedule sensitivity under small batches is part of the
// observed behavior, not something to mask).
inline double default_tau_floor(Algo algo) {
    return (algo == Algo::mpgpe_lscde || algo == Algo::mpgpe_gp) ? 0.05 : 1e-6;
}

struct CurveRow {
    int iteration;
    long cumulative_real_episodes;
    double mean_return;
    double std_error;
};

struct LearningCurve {
    std::vector<CurveRow> rows;
};

struct TrainResult {
    PriorHyper initial_rho;
    PriorHyper final_rho;
    LearningCurve curve;
    LinearPolicy policy; // structure used; theta holds the final mean parameters
    long real_episodes_used = 0;
    long eval_episodes_used = 0;
    long degenerate_resamples = 0;
    // model-selection report (whichever applies)
    double lscde_kappa = 0.0;
    double lscde_lambda = 0.0;
    double gp_log_evidence = 0.0;
};

// Validation messages for a config/environment pair; empty means valid.
inline std::vector<std::string> validate(const TrainConfig& cfg, const Environment&) {
    std::vector<std::string> errors;
    if (cfg.budget_episodes < 1) errors.push_back("budget_episodes must be >= 1");
    if (cfg.eval_episodes < 1) errors.push_back("eval_episodes must be >= 1");
    if (cfg.learning_rate < 0.0) errors.push_back("learning_rate must be >= 0");
    if (cfg.init_scale < 0.0) errors.push_back("init_scale must be >= 0");
    if (cfg.tau_init <= 0.0) errors.push_back("tau_init must be > 0");
    if (cfg.tau_floor <= 0.0) errors.push_back("tau_floor must be > 0");
    if (cfg.algo == Algo::mpgpe_lscde || cfg.algo == Algo::mpgpe_gp) {
        if (cfg.iterations < 1) errors.push_back("iterations must be >= 1");
        if (cfg.synthetic_per_update < 2) errors.push_back("synthetic_per_update must be >= 2");
        if (cfg.synthetic_per_update % 2 != 0)
            errors.push_back("synthetic_per_update must be even (half baseline, half gradient)");
    } else {
        if (cfg.schedule.batch_size < 1 || cfg.schedule.repeats < 1)
            errors.push_back("schedule must have positive batch size and repeats");
        else if (cfg.schedule.batch_size * cfg.schedule.repeats != cfg.budget_episodes)
            errors.push_back("schedule " + cfg.schedule.str() + " does not exhaust budget " +
                             std::to_string(cfg.budget_episodes));
        if (cfg.algo == Algo::iwpgpe && cfg.updates_per_batch < 0)
            errors.push_back("updates_per_batch must be >= 0");
    }
    return errors;
}

inline void validate_or_throw(const TrainConfig& cfg, const Environment& env) {
    const auto errors = validate(cfg, env);
    if (errors.empty()) return;
    std::string joined = "invalid train config:";
    for (const auto& e : errors) joined += "\n  - " + e;
    throw std::invalid_argument(joined);
}

struct Evaluation {
    double mean_return = 0.0;
    double std_error = 0.0;
};

inline Evaluation evaluate_linear_policy(const Environment& env, const LinearPolicy& policy,
                                         int n_episodes, Rng& rng) {
    require(n_episodes >= 1, "evaluate: n_episodes must be >= 1");
    std::vector<double> rets(n_episodes);
    for (int i = 0; i < n_episodes; ++i) {
        const Trajectory traj = rollout(env, [&](const Vec& s) { return policy.act(s); }, rng);
        rets[i] = discounted_return(traj, env.config().gamma);
    }
    double mean = 0.0;
    for (double r : rets) mean += r;
    mean /= n_episodes;
    if (n_episodes == 1) return {mean, 0.0};
    double var = 0.0;
    for (double r : rets) var += (r - mean) * (r - mean);
    var /= (n_episodes - 1);
    return {mean, std::sqrt(var / n_episodes)};
}

/// Evaluate the prior-mean policy theta = eta on the real environment.
inline Evaluation evaluate_policy(const Environment& env, const PriorHyper& rho, int n_episodes,
                                  Rng& rng) {
    LinearPolicy policy = default_policy_for(env);
    require(rho.dim() == policy.param_dim(), "evaluate_policy: prior dimension mismatch");
    policy.set_flat_params(rho.eta);
    return evaluate_linear_policy(env, policy, n_episodes, rng);
}

namespace detail {

// Fixed sub-stream labels so component counts never perturb each other.
enum RngStream : std::uint64_t {
    stream_collect = 0,
    stream_model_fit = 1,
    stream_synthetic = 2,
    stream_eval = 3,
    stream_real_rollouts = 4,
    stream_init = 5,
};

inline PriorHyper initial_prior(int dim, const TrainConfig& cfg, const Rng& root) {
    Vec eta = Vec::Zero(dim);
    if (cfg.init_scale > 0.0) {
        Rng rng = root.derive(stream_init);
        for (int i = 0; i < dim; ++i) eta[i] = rng.normal(0.0, cfg.init_scale);
    }
    return {std::move(eta), Vec::Constant(dim, cfg.tau_init)};
}

inline void apply_update(PriorHyper& rho, const GradientReport& grad, const TrainConfig& cfg) {
    Vec step(rho.dim() * 2);
    step << grad.grad_eta, grad.grad_tau;
    double scale = cfg.learning_rate;
    if (cfg.normalize_step) {
        const double norm = step.norm();
        if (norm > 0.0) scale /= norm;
    }
    rho.eta += scale * grad.grad_eta;
    rho.tau += scale * grad.grad_tau;
    rho.tau = rho.tau.cwiseMax(cfg.tau_floor);
}

// One synthetic trajectory against the learned model; returns its return.
// Throws DegenerateDensity through from the model sampler.
template <typename Model>
double model_rollout_return(const Environment& env, const Model& model,
                            const LinearPolicy& policy, Rng& rng) {
    const int T = env.config().horizon;
    const double gamma = env.config().gamma;
    Vec s = env.init_state(rng);
    double ret = 0.0;
    double w = 1.0;
    for (int t = 0; t < T; ++t) {
        const Vec a = env.clamp_action(policy.act(s));
        Vec s_next = env.clamp_state(model.sample(s, a, rng));
        ret += w * env.reward(s, a, s_next);
        w *= gamma;
        s = std::move(s_next);
    }
    return ret;
}

template <typename Model>
TrainResult mpgpe_loop(const Environment& env, const Model& model, const TrainConfig& cfg,
                       const Rng& root, long real_episodes) {
    const Rng synth_root = root.derive(stream_synthetic);
    const Rng eval_root = root.derive(stream_eval);

    LinearPolicy policy = default_policy_for(env);
    PriorHyper rho = initial_prior(policy.param_dim(), cfg, root);

    TrainResult result;
    result.initial_rho = rho;
    result.real_episodes_used = real_episodes;
    const int half = cfg.synthetic_per_update / 2;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        Rng rng = synth_root.derive(static_cast<std::uint64_t>(iter));
        std::vector<PgpeSample> rollouts;
        rollouts.reserve(cfg.synthetic_per_update);
        long attempts = 0;
        while (static_cast<int>(rollouts.size()) < cfg.synthetic_per_update) {
            ++attempts;
            Vec theta = prior_draw(rho, rng);
            policy.set_flat_params(theta);
            try {
                const double ret = model_rollout_return(env, model, policy, rng);
                rollouts.push_back({std::move(theta), ret, rho});
            } catch (const DegenerateDensity&) {
                ++result.degenerate_resamples;
                const long failures = attempts - static_cast<long>(rollouts.size());
                if (attempts >= cfg.synthetic_per_update && 2 * failures > attempts)
                    throw std::runtime_error(
                        "train_mpgpe: over half of the synthetic rollouts in iteration " +
                        std::to_string(iter + 1) +
                        " hit a degenerate model density; the model does not cover the "
                        "visited state-action region");
            }
        }

        // disjoint halves: baseline from the first, gradient from the second
        const std::vector<PgpeSample> base_half(rollouts.begin(), rollouts.begin() + half);
        const std::vector<PgpeSample> grad_half(rollouts.begin() + half, rollouts.end());
        const auto baseline = pgpe_baseline_info(base_half, rho);
        GradientReport grad = pgpe_gradient(grad_half, rho, baseline.value);
        grad.baseline_fallback = baseline.fallback;

        const PriorHyper before = rho;
        apply_update(rho, grad, cfg);

        Rng eval_rng = eval_root.derive(static_cast<std::uint64_t>(iter));
        const Evaluation ev = evaluate_policy(env, rho, cfg.eval_episodes, eval_rng);
        result.eval_episodes_used += cfg.eval_episodes;
        result.curve.rows.push_back({iter + 1, real_episodes, ev.mean_return, ev.std_error});

        if (cfg.stop_delta > 0.0) {
            Vec delta(rho.dim() * 2);
            delta << (rho.eta - before.eta), (rho.tau - before.tau);
            if (delta.norm() < cfg.stop_delta) break;
        }
    }
    policy.set_flat_params(rho.eta);
    result.policy = policy;
    result.final_rho = std::move(rho);
    return result;
}

} // namespace detail

/// M-PGPE: collect the whole real-episode budget once, fit the transition
/// model, then ascend the prior hyper-parameters on synthetic rollouts only.
/// Training consumes nothing from `rng` itself; all randomness comes from
/// sub-streams derived off it, so a given stream always yields the same run.
inline TrainResult train_mpgpe(const Environment& env, const TrainConfig& cfg, const Rng& root) {
    validate_or_throw(cfg, env);
    require(cfg.algo == Algo::mpgpe_lscde || cfg.algo == Algo::mpgpe_gp,
            "train_mpgpe: config algo is not a model-based variant");
    Rng collect_rng = root.derive(detail::stream_collect);
    const auto samples = collect_uniform_dataset(env, cfg.budget_episodes, collect_rng);

    if (cfg.algo == Algo::mpgpe_lscde) {
        Rng fit_rng = root.derive(detail::stream_model_fit);
        const CvResult cv = cross_validate_lscde(samples, cfg.cv_grid, cfg.max_centers, fit_rng);
        const LscdeModel model =
            fit_lscde(samples, cv.kappa, cv.lambda, cfg.max_centers, fit_rng);
        TrainResult result = detail::mpgpe_loop(env, model, cfg, root, cfg.budget_episodes);
        result.lscde_kappa = cv.kappa;
        result.lscde_lambda = cv.lambda;
        return result;
    }
    const GpModel model = fit_gp(samples, cfg.gp_grid);
    TrainResult result = detail::mpgpe_loop(env, model, cfg, root, cfg.budget_episodes);
    result.gp_log_evidence = model.log_evidence();
    return result;
}

// Model-based loop against an already-fitted model (no real-data collection
// beyond evaluation). Exposed for fit-then-train workflows.
template <typename Model>
TrainResult train_mpgpe_with_model(const Environment& env, const Model& model,
                                   const TrainConfig& cfg, const Rng& root) {
    validate_or_throw(cfg, env);
    return detail::mpgpe_loop(env, model, cfg, root, 0);
}

/// IW-PGPE under a fixed budget: batches of k real episodes, every past
/// sample kept in the reuse buffer with the prior that produced it.
inline TrainResult train_iwpgpe(const Environment& env, const TrainConfig& cfg, const Rng& root) {
    validate_or_throw(cfg, env);
    require(cfg.algo == Algo::iwpgpe, "train_iwpgpe: config algo mismatch");
    const Rng real_root = root.derive(detail::stream_real_rollouts);
    const Rng eval_root = root.derive(detail::stream_eval);

    LinearPolicy policy = default_policy_for(env);
    PriorHyper rho = detail::initial_prior(policy.param_dim(), cfg, root);

    TrainResult result;
    result.initial_rho = rho;
    std::vector<PgpeSample> buffer;
    buffer.reserve(cfg.budget_episodes);

    for (int batch = 0; batch < cfg.schedule.repeats; ++batch) {
        Rng batch_rng = real_root.derive(static_cast<std::uint64_t>(batch));
        for (int j = 0; j < cfg.schedule.batch_size; ++j) {
            Vec theta = prior_draw(rho, batch_rng);
            policy.set_flat_params(theta);
            const Trajectory traj =
                rollout(env, [&](const Vec& s) { return policy.act(s); }, batch_rng);
            buffer.push_back({std::move(theta), discounted_return(traj, env.config().gamma), rho});
            ++result.real_episodes_used;
        }
        for (int u = 0; u < cfg.updates_per_batch; ++u) {
            const GradientReport grad = iw_pgpe_gradient(buffer, rho);
            detail::apply_update(rho, grad, cfg);
        }
        Rng eval_rng = eval_root.derive(static_cast<std::uint64_t>(batch));
        const Evaluation ev = evaluate_policy(env, rho, cfg.eval_episodes, eval_rng);
        result.eval_episodes_used += cfg.eval_episodes;
        result.curve.rows.push_back({batch + 1, result.real_episodes_used, ev.mean_return,
                                     ev.std_error});
    }
    policy.set_flat_params(rho.eta);
    result.policy = policy;
    result.final_rho = std::move(rho);
    return result;
}

/// Plain REINFORCE on the real environment: one policy update per batch of
/// fresh on-policy trajectories. Returns the deterministic mean policy.
inline TrainResult train_reinforce(const Environment& env, const TrainConfig& cfg,
                                   const Rng& root) {
    validate_or_throw(cfg, env);
    require(cfg.algo == Algo::reinforce, "train_reinforce: config algo mismatch");
    require(env.action_dim() == 1, "train_reinforce: scalar-action environments only");
    const Rng real_root = root.derive(detail::stream_real_rollouts);
    const Rng eval_root = root.derive(detail::stream_eval);

    GaussianPolicy policy(default_policy_for(env).basis, cfg.tau_init);
    const PriorHyper init = detail::initial_prior(static_cast<int>(policy.mu.size()), cfg, root);
    policy.mu = init.eta;
    TrainResult result;
    result.initial_rho = init;

    for (int batch = 0; batch < cfg.schedule.repeats; ++batch) {
        Rng batch_rng = real_root.derive(static_cast<std::uint64_t>(batch));
        std::vector<Trajectory> trajs;
        trajs.reserve(cfg.schedule.batch_size);
        for (int j = 0; j < cfg.schedule.batch_size; ++j) {
            trajs.push_back(
                rollout(env, [&](const Vec& s) { return policy.act(s, batch_rng); }, batch_rng));
            ++result.real_episodes_used;
        }
        const ReinforceReport rep = reinforce_gradient(trajs, policy, env.config().gamma);
        Vec step(policy.mu.size() + 1);
        step << rep.grad_mu, rep.grad_sigma;
        double scale = cfg.learning_rate;
        if (cfg.normalize_step && step.norm() > 0.0) scale /= step.norm();
        policy.mu += scale * rep.grad_mu;
        policy.sigma = std::max(policy.sigma + scale * rep.grad_sigma, cfg.tau_floor);

        LinearPolicy mean_policy(policy.basis, 1);
        mean_policy.set_flat_params(policy.mu);
        Rng eval_rng = eval_root.derive(static_cast<std::uint64_t>(batch));
        const Evaluation ev =
            evaluate_linear_policy(env, mean_policy, cfg.eval_episodes, eval_rng);
        result.eval_episodes_used += cfg.eval_episodes;
        result.curve.rows.push_back({batch + 1, result.real_episodes_used, ev.mean_return,
                                     ev.std_error});
    }
    LinearPolicy mean_policy(policy.basis, 1);
    mean_policy.set_flat_params(policy.mu);
    result.policy = mean_policy;
    result.final_rho = PriorHyper(policy.mu, Vec::Constant(policy.mu.size(), policy.sigma));
    return result;
}

inline TrainResult train(const Environment& env, const TrainConfig& cfg, const Rng& rng) {
    switch (cfg.algo) {
    case Algo::mpgpe_lscde:
    case Algo::mpgpe_gp:
        return train_mpgpe(env, cfg, rng);
    case Algo::iwpgpe:
        return train_iwpgpe(env, cfg, rng);
    case Algo::reinforce:
        return train_reinforce(env, cfg, rng);
    }
    throw std::invalid_argument("train: unknown algorithm");
}

struct SweepRow {
    Schedule schedule;
    double mean_return = 0.0;
    double std_error = 0.0;
    int n_runs = 0;
};

/// Run IW-PGPE once per (schedule, seed) pair and report final-policy
/// returns. Runs execute concurrently on derived seeds; results are
/// deterministic regardless of thread interleaving.
inline std::vector<SweepRow> schedule_sweep(const Environment& env, const TrainConfig& base_cfg,
                                            const std::vector<Schedule>& schedules, int n_runs,
                                            const Rng& rng) {
    require(!schedules.empty(), "schedule_sweep: schedules must be non-empty");
    require(n_runs >= 1, "schedule_sweep: n_runs must be >= 1");
    std::vector<std::string> errors;
    for (const auto& sched : schedules) {
        if (sched.batch_size * sched.repeats != base_cfg.budget_episodes)
            errors.push_back("schedule " + sched.str() + " does not exhaust budget " +
                             std::to_string(base_cfg.budget_episodes));
    }
    if (!errors.empty()) {
        std::string joined = "schedule_sweep:";
        for (const auto& e : errors) joined += "\n  - " + e;
        throw std::invalid_argument(joined);
    }

    const Rng root = rng.derive(0x5eedull);
    const int total = static_cast<int>(schedules.size()) * n_runs;
    std::vector<double> finals(static_cast<std::size_t>(total), 0.0);

    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            const int job = next.fetch_add(1);
            if (job >= total) return;
            const int sched_idx = job / n_runs;
            const int run = job % n_runs;
            TrainConfig cfg = base_cfg;
            cfg.algo = Algo::iwpgpe;
            cfg.schedule = schedules[static_cast<std::size_t>(sched_idx)];
            const Rng run_rng = root.derive(static_cast<std::uint64_t>(job));
            const TrainResult res = train_iwpgpe(env, cfg, run_rng);
            finals[static_cast<std::size_t>(job)] = res.curve.rows.back().mean_return;
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::vector<SweepRow> rows;
    rows.reserve(schedules.size());
    for (std::size_t sidx = 0; sidx < schedules.size(); ++sidx) {
        double mean = 0.0;
        for (int r = 0; r < n_runs; ++r) mean += finals[sidx * n_runs + r];
        mean /= n_runs;
        double se = 0.0;
        if (n_runs > 1) {
            double var = 0.0;
            for (int r = 0; r < n_runs; ++r) {
                const double d = finals[sidx * n_runs + r] - mean;
                var += d * d;
            }
            se = std::sqrt(var / (n_runs - 1) / n_runs);
        }
        rows.push_back({schedules[sidx], mean, se, n_runs});
    }
    return rows;
}

} // namespace mpgpe
