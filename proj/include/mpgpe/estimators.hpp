#pragma once

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "policy.hpp"
#include "types.hpp"

namespace mpgpe {

// One PGPE roll-out: the drawn parameters, the return they earned, and the
// prior they were drawn from.
struct PgpeSample {
    Vec theta;
    double ret = 0.0;
    PriorHyper behavior;
};

struct GradientReport {
    Vec grad_eta;
    Vec grad_tau;
    double baseline = 0.0;
    int n_used = 0;
    int n_dropped = 0;                      // importance-weight overflow
    bool baseline_fallback = false;         // all score norms were zero
    bool baseline_from_same_samples = false;

    Vec packed() const {
        Vec g(grad_eta.size() + grad_tau.size());
        g << grad_eta, grad_tau;
        return g;
    }
};

namespace detail {

inline Vec packed_prior_score(const Vec& theta, const PriorHyper& rho) {
    auto [ge, gt] = prior_logp_grad(theta, rho);
    Vec g(ge.size() + gt.size());
    g << ge, gt;
    return g;
}

} // namespace detail

struct BaselineInfo {
    double value = 0.0;
    bool fallback = false; // all score norms zero: plain mean return used
};

/// Variance-optimal PGPE baseline: returns weighted by squared score norms,
///   b = sum_n R_n |g_n|^2 / sum_n |g_n|^2,  g_n = grad_rho log p(theta_n | rho).
inline BaselineInfo pgpe_baseline_info(const std::vector<PgpeSample>& samples,
                                       const PriorHyper& rho) {
    require(!samples.empty(), "pgpe_baseline: samples must be non-empty");
    double num = 0.0, den = 0.0, mean_ret = 0.0;
    for (const auto& smp : samples) {
        const double n2 = detail::packed_prior_score(smp.theta, rho).squaredNorm();
        num += smp.ret * n2;
        den += n2;
        mean_ret += smp.ret;
    }
    if (den <= 0.0) return {mean_ret / static_cast<double>(samples.size()), true};
    return {num / den, false};
}

inline double pgpe_baseline(const std::vector<PgpeSample>& samples, const PriorHyper& rho) {
    return pgpe_baseline_info(samples, rho).value;
}

/// Baseline-subtracted PGPE gradient estimate at rho:
///   (1/N) sum_n (R_n - b) grad_rho log p(theta_n | rho).
inline GradientReport pgpe_gradient(const std::vector<PgpeSample>& samples, const PriorHyper& rho,
                                    double baseline) {
    require(!samples.empty(), "pgpe_gradient: samples must be non-empty");
    const int B = rho.dim();
    GradientReport rep;
    rep.grad_eta = Vec::Zero(B);
    rep.grad_tau = Vec::Zero(B);
    rep.baseline = baseline;
    for (const auto& smp : samples) {
        auto [ge, gt] = prior_logp_grad(smp.theta, rho);
        const double w = smp.ret - baseline;
        rep.grad_eta += w * ge;
        rep.grad_tau += w * gt;
        ++rep.n_used;
    }
    rep.grad_eta /= static_cast<double>(rep.n_used);
    rep.grad_tau /= static_cast<double>(rep.n_used);
    return rep;
}

// Convenience form with the baseline estimated on the same samples; flagged
// in the report because that couples the two estimates.
inline GradientReport pgpe_gradient(const std::vector<PgpeSample>& samples,
                                    const PriorHyper& rho) {
    const auto b = pgpe_baseline_info(samples, rho);
    GradientReport rep = pgpe_gradient(samples, rho, b.value);
    rep.baseline_fallback = b.fallback;
    rep.baseline_from_same_samples = true;
    return rep;
}

/// Importance-weighted PGPE gradient at rho from samples drawn under their
/// recorded behavior priors. Weights are computed in log space; samples
/// whose log-weight exceeds 700 are dropped and counted, not clipped.
/// The baseline uses the w^2-weighted form.
inline GradientReport iw_pgpe_gradient(const std::vector<PgpeSample>& samples,
                                       const PriorHyper& rho) {
    require(!samples.empty(), "iw_pgpe_gradient: samples must be non-empty");
    const int B = rho.dim();
    GradientReport rep;
    rep.grad_eta = Vec::Zero(B);
    rep.grad_tau = Vec::Zero(B);
    rep.baseline_from_same_samples = true;

    std::vector<double> w(samples.size(), 0.0);
    std::vector<bool> keep(samples.size(), false);
    double num = 0.0, den = 0.0, mean_ret = 0.0;
    int kept = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& smp = samples[i];
        require(smp.behavior.dim() == B, "iw_pgpe_gradient: behavior prior dimension mismatch");
        const double logw = prior_logp(smp.theta, rho) - prior_logp(smp.theta, smp.behavior);
        if (logw > 700.0) {
            ++rep.n_dropped;
            continue;
        }
        w[i] = std::exp(logw);
        keep[i] = true;
        ++kept;
        const double n2 = detail::packed_prior_score(smp.theta, rho).squaredNorm();
        num += smp.ret * w[i] * w[i] * n2;
        den += w[i] * w[i] * n2;
        mean_ret += smp.ret;
    }
    require(kept > 0, "iw_pgpe_gradient: every sample overflowed its importance weight");
    if (den > 0.0) {
        rep.baseline = num / den;
    } else {
        rep.baseline = mean_ret / static_cast<double>(kept);
        rep.baseline_fallback = true;
    }

    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!keep[i]) continue;
        auto [ge, gt] = prior_logp_grad(samples[i].theta, rho);
        const double c = w[i] * (samples[i].ret - rep.baseline);
        rep.grad_eta += c * ge;
        rep.grad_tau += c * gt;
    }
    rep.n_used = kept;
    rep.grad_eta /= static_cast<double>(kept);
    rep.grad_tau /= static_cast<double>(kept);
    return rep;
}

struct ReinforceReport {
    Vec grad_mu;
    double grad_sigma = 0.0;
    double baseline = 0.0;
    int n_used = 0;
};

/// REINFORCE gradient for the Gaussian policy, with the squared-norm
/// baseline over per-trajectory scores
///   xi_n = sum_t grad log pi(a_t | s_t).
inline ReinforceReport reinforce_gradient(const std::vector<Trajectory>& trajs,
                                          const GaussianPolicy& policy, double gamma) {
    require(!trajs.empty(), "reinforce_gradient: trajectories must be non-empty");
    const int B = static_cast<int>(policy.mu.size());
    const int n = static_cast<int>(trajs.size());

    std::vector<Vec> scores_mu(n, Vec::Zero(B));
    std::vector<double> scores_sigma(n, 0.0);
    std::vector<double> rets(n, 0.0);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& traj = trajs[i];
        require(traj.steps() >= 1, "reinforce_gradient: empty trajectory");
        for (int t = 0; t < traj.steps(); ++t) {
            auto [gm, gs] = policy.logp_grad(traj.states[t], traj.actions[t]);
            scores_mu[i] += gm;
            scores_sigma[i] += gs;
        }
        rets[i] = discounted_return(traj, gamma);
        const double n2 = scores_mu[i].squaredNorm() + scores_sigma[i] * scores_sigma[i];
        num += rets[i] * n2;
        den += n2;
    }

    ReinforceReport rep;
    rep.baseline = den > 0.0 ? num / den
                             : std::accumulate(rets.begin(), rets.end(), 0.0) / n;
    rep.grad_mu = Vec::Zero(B);
    for (int i = 0; i < n; ++i) {
        const double w = rets[i] - rep.baseline;
        rep.grad_mu += w * scores_mu[i];
        rep.grad_sigma += w * scores_sigma[i];
    }
    rep.grad_mu /= static_cast<double>(n);
    rep.grad_sigma /= static_cast<double>(n);
    rep.n_used = n;
    return rep;
}

} // namespace mpgpe
