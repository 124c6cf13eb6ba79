#include <catch2/catch_amalgamated.hpp>

#include <mpgpe/env.hpp>
#include <mpgpe/policy.hpp>

#include "support/oracles.hpp"

using namespace mpgpe;

namespace {
Vec vec1(double x) {
    Vec v(1);
    v[0] = x;
    return v;
}
} // namespace

TEST_CASE("gaussian chain walk arithmetic with zero noise", "[env]") {
    EnvConfig cfg = chain_walk_config();
    cfg.noise_std = 0.0;
    Environment env(cfg);
    Rng rng(1);
    auto [s_next, r] = env.step(vec1(2.0), vec1(3.0), rng);
    REQUIRE(s_next[0] == 5.0);
    REQUIRE(r == 1.0);
}

TEST_CASE("reward boundary is strict", "[env]") {
    EnvConfig cfg = chain_walk_config();
    cfg.noise_std = 0.0;
    Environment env(cfg);
    Rng rng(1);
    auto [s4, r4] = env.step(vec1(2.0), vec1(2.0), rng);
    REQUIRE(s4[0] == 4.0);
    REQUIRE(r4 == 0.0);
    auto [s6, r6] = env.step(vec1(3.0), vec1(3.0), rng);
    REQUIRE(s6[0] == 6.0);
    REQUIRE(r6 == 0.0);
    auto [s5, r5] = env.step(vec1(2.0), vec1(2.5), rng);
    REQUIRE(r5 == 1.0);
}

TEST_CASE("bimodal sign frequencies are even", "[env]") {
    EnvConfig cfg = chain_walk_config(EnvKind::chainwalk_bimodal);
    cfg.noise_std = 0.0;
    Environment env(cfg);
    Rng rng(17);
    int up = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto [s_next, r] = env.step(vec1(5.0), vec1(2.0), rng);
        REQUIRE((s_next[0] == 7.0 || s_next[0] == 3.0));
        if (s_next[0] == 7.0) ++up;
    }
    REQUIRE(std::abs(up / double(n) - 0.5) < 0.02);
}

TEST_CASE("bimodal dynamics with zero action match gaussian dynamics", "[env]") {
    Environment gauss(chain_walk_config(EnvKind::chainwalk_gaussian));
    Environment bimod(chain_walk_config(EnvKind::chainwalk_bimodal));
    Rng rng_g(3), rng_b(4);
    const int n = 10000;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = gauss.step(vec1(5.0), vec1(0.0), rng_g).first[0];
        b[i] = bimod.step(vec1(5.0), vec1(0.0), rng_b).first[0];
    }
    REQUIRE(oracles::ks_two_sample(a, b) < 0.03);
}

TEST_CASE("step rejects dimension mismatches", "[env]") {
    Environment env(chain_walk_config());
    Rng rng(1);
    Vec bad(2);
    bad << 1.0, 2.0;
    REQUIRE_THROWS_AS(env.step(bad, vec1(0.0), rng), std::invalid_argument);
    REQUIRE_THROWS_AS(env.step(vec1(1.0), bad, rng), std::invalid_argument);
}

TEST_CASE("uniform dataset has the contracted size and stays in bounds", "[env]") {
    Environment env(chain_walk_config());
    Rng rng(2);
    const auto samples = collect_uniform_dataset(env, 20, rng);
    REQUIRE(samples.size() == 200);
    Rng rng2(3);
    const auto one = collect_uniform_dataset(env, 1, rng2);
    REQUIRE(one.size() == 10);
    for (const auto& t : one) {
        REQUIRE((t.s[0] >= 0.0 && t.s[0] <= 10.0));
        REQUIRE((t.s_next[0] >= 0.0 && t.s_next[0] <= 10.0));
        REQUIRE((t.a[0] >= -5.0 && t.a[0] <= 5.0));
    }
    REQUIRE_THROWS_AS(collect_uniform_dataset(env, 0, rng), std::invalid_argument);
}

TEST_CASE("initial states are uniform on the state space", "[env]") {
    Environment env(chain_walk_config());
    Rng rng(6);
    std::vector<double> firsts(10000);
    for (auto& x : firsts) x = env.uniform_state(rng)[0];
    const double d = oracles::ks_statistic(firsts, [](double x) {
        return std::clamp(x / 10.0, 0.0, 1.0);
    });
    REQUIRE(d < 0.02);
}

TEST_CASE("rollout length contract and determinism", "[env]") {
    Environment env(chain_walk_config());
    LinearPolicy policy = default_policy_for(env);
    Rng rng(9);
    const auto traj = rollout(env, [&](const Vec& s) { return policy.act(s); }, rng);
    REQUIRE(traj.states.size() == 11);
    REQUIRE(traj.actions.size() == 10);
    REQUIRE(traj.rewards.size() == 10);

    Rng r1(21), r2(21);
    const auto t1 = rollout(env, [&](const Vec& s) { return policy.act(s); }, r1);
    const auto t2 = rollout(env, [&](const Vec& s) { return policy.act(s); }, r2);
    for (std::size_t i = 0; i < t1.states.size(); ++i)
        REQUIRE(t1.states[i][0] == t2.states[i][0]);
    for (std::size_t i = 0; i < t1.rewards.size(); ++i)
        REQUIRE(t1.rewards[i] == t2.rewards[i]);
}

TEST_CASE("zero policy from the center collects every reward", "[env]") {
    EnvConfig cfg = chain_walk_config();
    cfg.noise_std = 0.0;
    Environment env(cfg);
    LinearPolicy policy = default_policy_for(env); // theta = 0
    Rng rng(1);
    const auto traj = rollout_from(env, [&](const Vec& s) { return policy.act(s); }, vec1(5.0), rng);
    for (const auto& s : traj.states) REQUIRE(s[0] == 5.0);
    const double want = (1.0 - std::pow(0.99, 10)) / (1.0 - 0.99); // geometric sum
    REQUIRE(discounted_return(traj, 0.99) == Catch::Approx(want).epsilon(1e-12));
    REQUIRE(want == Catch::Approx(9.56179).margin(1e-5));
}

TEST_CASE("discounted_return basics and linearity", "[env]") {
    Trajectory traj;
    traj.rewards = {1.0, 2.0, 3.0};
    REQUIRE(discounted_return(traj, 1.0) == 6.0);
    Trajectory zeros;
    zeros.rewards = {0.0, 0.0, 0.0, 0.0};
    REQUIRE(discounted_return(zeros, 0.5) == 0.0);

    Rng rng(33);
    for (int rep = 0; rep < 50; ++rep) {
        Trajectory t;
        const int T = 1 + static_cast<int>(rng.uniform_index(12));
        for (int i = 0; i < T; ++i) t.rewards.push_back(rng.uniform(-2.0, 2.0));
        const double gamma = rng.uniform(0.1, 1.0);
        const double c = rng.uniform(-3.0, 3.0);
        Trajectory scaled = t;
        for (auto& r : scaled.rewards) r *= c;
        REQUIRE(discounted_return(scaled, gamma) ==
                Catch::Approx(c * discounted_return(t, gamma)).margin(1e-12));
    }
}

TEST_CASE("all-ones rewards match the closed-form geometric sum", "[env]") {
    Trajectory traj;
    traj.rewards.assign(10, 1.0);
    const double want = (1.0 - std::pow(0.99, 10)) / 0.01;
    REQUIRE(discounted_return(traj, 0.99) == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("arm2 shapes, determinism without noise, and reward form", "[env]") {
    EnvConfig cfg = arm2_config();
    Environment env(cfg);
    REQUIRE(env.state_dim() == 4);
    REQUIRE(env.action_dim() == 2);

    cfg.noise_std = 0.0;
    Environment det(cfg);
    Rng rng(5);
    const Vec s0 = det.init_state(rng);
    REQUIRE(s0.isZero());
    Vec a(2);
    a << 10.0, -10.0;
    auto [s1, r1] = det.step(s0, a, rng);
    REQUIRE(s1[0] == Catch::Approx(2.0));  // 0 + 0.2 * (10 - 0)
    REQUIRE(s1[1] == Catch::Approx(-2.0));
    REQUIRE(s1[2] == Catch::Approx(2.0));  // angle delta
    REQUIRE(s1[3] == Catch::Approx(-2.0));

    // reward decreases with distance from the fixed target and includes
    // the control cost term
    const double r_far = det.reward(s0, a, s1);
    Vec at_target(4);
    at_target << 40.0, 60.0, 0.0, 0.0;
    const double r_near = det.reward(s0, Vec::Zero(2), at_target);
    REQUIRE(r_near == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(r_far < r_near);
    const double cost_only =
        det.reward(s0, a, s1) - (det.reward(s0, Vec::Zero(2), s1));
    REQUIRE(cost_only == Catch::Approx(-0.000005 * a.squaredNorm()).margin(1e-15));
}

TEST_CASE("arm2 exploration actions stay inside the window", "[env]") {
    Environment env(arm2_config());
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const Vec s = env.uniform_state(rng);
        const Vec a = env.uniform_action(s, rng);
        REQUIRE(std::abs(a[0] - s[0]) <= 5.0);
        REQUIRE(std::abs(a[1] - s[1]) <= 5.0);
    }
}
