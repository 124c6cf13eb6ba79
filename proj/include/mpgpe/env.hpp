#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "rng.hpp"
#include "types.hpp"

namespace mpgpe {

enum class EnvKind { chainwalk_gaussian, chainwalk_bimodal, arm2 };

struct EnvConfig {
    EnvKind kind = EnvKind::chainwalk_gaussian;
    int horizon = 10;       // episode length T
    double gamma = 0.99;    // discount factor
    double noise_std = 0.3; // chain-walk transition noise; 0 disables all dynamics noise
    std::uint64_t seed = 0;
};

inline EnvConfig chain_walk_config(EnvKind kind = EnvKind::chainwalk_gaussian) {
    EnvConfig cfg;
    cfg.kind = kind;
    return cfg;
}

inline EnvConfig arm2_config() {
    EnvConfig cfg;
    cfg.kind = EnvKind::arm2;
    cfg.horizon = 100;
    cfg.gamma = 0.9;
    cfg.noise_std = 3.0;
    return cfg;
}

namespace arm2_detail {
// Planar 2-link kinematic arm, angles in degrees. State is
// (theta1, theta2, omega1, omega2); action is the pair of target angles.
inline constexpr double kTrackingGain = 0.2;
inline constexpr double kNoiseStd = 3.0;
inline constexpr double kNoiseShift = -5.0;  // mean of the second noise mode
inline constexpr double kShiftProb = 0.4;
inline constexpr double kAngleLimit = 180.0;
inline constexpr double kVelLimit = 90.0;
inline constexpr double kCollectAngleRange = 90.0;
inline constexpr double kCollectVelRange = 10.0;
inline constexpr double kActionWindow = 5.0;  // exploration window around current angle

inline Eigen::Vector2d end_effector(double th1_deg, double th2_deg) {
    const double d2r = std::numbers::pi / 180.0;
    const double p1 = th1_deg * d2r;
    const double p2 = (th1_deg + th2_deg) * d2r;
    return {std::cos(p1) + std::cos(p2), std::sin(p1) + std::sin(p2)};
}

inline const Eigen::Vector2d& target_point() {
    static const Eigen::Vector2d target = end_effector(40.0, 60.0);
    return target;
}
} // namespace arm2_detail

/// Episodic environment: the continuous chain walk (Gaussian or bimodal
/// dynamics) and a planar 2-link arm. Stepping is pure given an explicit
/// RNG stream, so rollouts can run concurrently on independent streams.
class Environment {
public:
    explicit Environment(EnvConfig cfg) : cfg_(cfg) {
        require(cfg_.horizon >= 1, "EnvConfig: horizon must be >= 1");
        require(cfg_.gamma > 0.0 && cfg_.gamma <= 1.0, "EnvConfig: gamma must be in (0,1]");
        require(cfg_.noise_std >= 0.0, "EnvConfig: noise_std must be >= 0");
    }

    const EnvConfig& config() const { return cfg_; }

    bool is_chain_walk() const { return cfg_.kind != EnvKind::arm2; }
    int state_dim() const { return is_chain_walk() ? 1 : 4; }
    int action_dim() const { return is_chain_walk() ? 1 : 2; }

    Vec clamp_state(Vec s) const {
        check_state(s);
        if (is_chain_walk()) {
            s[0] = std::clamp(s[0], 0.0, 10.0);
        } else {
            using namespace arm2_detail;
            s[0] = std::clamp(s[0], -kAngleLimit, kAngleLimit);
            s[1] = std::clamp(s[1], -kAngleLimit, kAngleLimit);
            s[2] = std::clamp(s[2], -kVelLimit, kVelLimit);
            s[3] = std::clamp(s[3], -kVelLimit, kVelLimit);
        }
        return s;
    }

    Vec clamp_action(Vec a) const {
        check_action(a);
        if (is_chain_walk()) {
            a[0] = std::clamp(a[0], -5.0, 5.0);
        } else {
            using namespace arm2_detail;
            a[0] = std::clamp(a[0], -kAngleLimit, kAngleLimit);
            a[1] = std::clamp(a[1], -kAngleLimit, kAngleLimit);
        }
        return a;
    }

    // Initial state for policy rollouts: uniform over S for the chain walk,
    // fixed zero posture for the arm.
    Vec init_state(Rng& rng) const {
        if (is_chain_walk()) {
            Vec s(1);
            s[0] = rng.uniform(0.0, 10.0);
            return s;
        }
        return Vec::Zero(4);
    }

    // Uniform state used when gathering exploration data.
    Vec uniform_state(Rng& rng) const {
        if (is_chain_walk()) return init_state(rng);
        using namespace arm2_detail;
        Vec s(4);
        s[0] = rng.uniform(-kCollectAngleRange, kCollectAngleRange);
        s[1] = rng.uniform(-kCollectAngleRange, kCollectAngleRange);
        s[2] = rng.uniform(-kCollectVelRange, kCollectVelRange);
        s[3] = rng.uniform(-kCollectVelRange, kCollectVelRange);
        return s;
    }

    // Exploration action: uniform over A for the chain walk; for the arm,
    // uniform in a window around the current joint angles.
    Vec uniform_action(const Vec& s, Rng& rng) const {
        check_state(s);
        if (is_chain_walk()) {
            Vec a(1);
            a[0] = rng.uniform(-5.0, 5.0);
            return a;
        }
        using namespace arm2_detail;
        Vec a(2);
        a[0] = rng.uniform(s[0] - kActionWindow, s[0] + kActionWindow);
        a[1] = rng.uniform(s[1] - kActionWindow, s[1] + kActionWindow);
        return a;
    }

    double reward(const Vec& s, const Vec& a, const Vec& s_next) const {
        check_state(s);
        check_action(a);
        check_state(s_next);
        if (is_chain_walk()) {
            return (s_next[0] > 4.0 && s_next[0] < 6.0) ? 1.0 : 0.0;
        }
        using namespace arm2_detail;
        const double d = (end_effector(s_next[0], s_next[1]) - target_point()).norm();
        const double c = a.squaredNorm();
        return std::exp(-10.0 * d) - 0.000005 * std::min(c, 1.0e6);
    }

    std::pair<Vec, double> step(const Vec& s, const Vec& a, Rng& rng) const {
        check_state(s);
        check_action(a);
        Vec next(state_dim());
        if (is_chain_walk()) {
            double move = a[0];
            if (cfg_.kind == EnvKind::chainwalk_bimodal && rng.uniform() < 0.5) move = -move;
            const double eps = cfg_.noise_std > 0.0 ? rng.normal(0.0, cfg_.noise_std) : 0.0;
            next[0] = s[0] + move + eps;
        } else {
            using namespace arm2_detail;
            for (int i = 0; i < 2; ++i) {
                double angle = s[i] + kTrackingGain * (a[i] - s[i]);
                if (cfg_.noise_std > 0.0) {
                    const double mean = rng.uniform() < kShiftProb ? kNoiseShift : 0.0;
                    angle += rng.normal(mean, kNoiseStd);
                }
                next[i] = angle;
                next[2 + i] = angle - s[i];
            }
        }
        next = clamp_state(std::move(next));
        return {next, reward(s, a, next)};
    }

private:
    void check_state(const Vec& s) const {
        require(s.size() == state_dim(), "Environment: state dimension mismatch");
    }
    void check_action(const Vec& a) const {
        require(a.size() == action_dim(), "Environment: action dimension mismatch");
    }

    EnvConfig cfg_;
};

// Exploration dataset: n_episodes episodes of T steps each, uniform initial
// states and uniform exploration actions; every visited transition is kept.
inline std::vector<TransitionSample> collect_uniform_dataset(const Environment& env,
                                                             int n_episodes, Rng& rng) {
    require(n_episodes >= 1, "collect_uniform_dataset: n_episodes must be >= 1");
    std::vector<TransitionSample> samples;
    samples.reserve(static_cast<std::size_t>(n_episodes) * env.config().horizon);
    for (int ep = 0; ep < n_episodes; ++ep) {
        Vec s = env.uniform_state(rng);
        for (int t = 0; t < env.config().horizon; ++t) {
            const Vec a = env.uniform_action(s, rng);
            auto [s_next, r] = env.step(s, a, rng);
            samples.push_back({s, a, s_next});
            s = std::move(s_next);
        }
    }
    return samples;
}

// Roll out a fixed action-selection rule from a given initial state.
// `act` is any callable Vec(const Vec&); actions are clamped to A.
template <typename ActFn>
Trajectory rollout_from(const Environment& env, ActFn&& act, Vec s1, Rng& rng) {
    Trajectory traj;
    const int T = env.config().horizon;
    traj.states.reserve(T + 1);
    traj.actions.reserve(T);
    traj.rewards.reserve(T);
    Vec s = env.clamp_state(std::move(s1));
    traj.states.push_back(s);
    for (int t = 0; t < T; ++t) {
        Vec a = env.clamp_action(act(s));
        auto [s_next, r] = env.step(s, a, rng);
        traj.actions.push_back(std::move(a));
        traj.rewards.push_back(r);
        traj.states.push_back(s_next);
        s = std::move(s_next);
    }
    return traj;
}

template <typename ActFn>
Trajectory rollout(const Environment& env, ActFn&& act, Rng& rng) {
    Vec s1 = env.init_state(rng);
    return rollout_from(env, std::forward<ActFn>(act), std::move(s1), rng);
}

} // namespace mpgpe
