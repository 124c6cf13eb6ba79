#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

namespace mpgpe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One roll-out h = [s_1, a_1, ..., s_T, a_T, s_{T+1}] with per-step rewards.
struct Trajectory {
    std::vector<Vec> states;  // length T+1
    std::vector<Vec> actions; // length T
    std::vector<double> rewards; // length T

    int steps() const { return static_cast<int>(actions.size()); }
};

// One (s, a, s') triple used for transition-model fitting.
struct TransitionSample {
    Vec s;
    Vec a;
    Vec s_next;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

// Return for one trajectory: sum_{t=1..T} gamma^{t-1} r_t.
inline double discounted_return(const Trajectory& traj, double gamma) {
    require(gamma > 0.0 && gamma <= 1.0, "discounted_return: gamma must be in (0,1]");
    double ret = 0.0;
    double w = 1.0;
    for (const double r : traj.rewards) {
        ret += w * r;
        w *= gamma;
    }
    return ret;
}

} // namespace mpgpe
