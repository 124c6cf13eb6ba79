#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "env.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace mpgpe {

enum class BasisKind { gaussian_rbf, identity };

// State feature map phi(s). The RBF variant is 1-D (chain walk); the
// identity variant passes the state through unchanged (arm).
struct PolicyBasis {
    BasisKind kind = BasisKind::gaussian_rbf;
    Vec centers;        // gaussian_rbf only
    double width = 1.0; // gaussian_rbf only
    int state_dim = 1;

    int size() const {
        return kind == BasisKind::gaussian_rbf ? static_cast<int>(centers.size()) : state_dim;
    }

    Vec eval(const Vec& s) const {
        require(s.size() == state_dim, "PolicyBasis: state dimension mismatch");
        if (kind == BasisKind::identity) return s;
        Vec phi(centers.size());
        const double inv = 1.0 / (2.0 * width * width);
        for (Eigen::Index i = 0; i < centers.size(); ++i) {
            const double d = s[0] - centers[i];
            phi[i] = std::exp(-d * d * inv);
        }
        return phi;
    }
};

// Chain-walk basis: 6 Gaussians at (0,2,4,6,8,10), width 1.
inline PolicyBasis chain_walk_basis() {
    PolicyBasis b;
    b.kind = BasisKind::gaussian_rbf;
    b.centers = (Vec(6) << 0, 2, 4, 6, 8, 10).finished();
    b.width = 1.0;
    b.state_dim = 1;
    return b;
}

inline PolicyBasis identity_basis(int state_dim) {
    PolicyBasis b;
    b.kind = BasisKind::identity;
    b.state_dim = state_dim;
    return b;
}

/// Deterministic linear policy a = Theta * phi(s). For multi-dimensional
/// actions Theta has one row per action element; the flat parameter vector
/// is the row-major stacking of those rows.
struct LinearPolicy {
    PolicyBasis basis;
    Mat theta; // action_dim x B

    LinearPolicy() = default;
    LinearPolicy(PolicyBasis b, int action_dim)
        : basis(std::move(b)), theta(Mat::Zero(action_dim, basis.size())) {}

    int action_dim() const { return static_cast<int>(theta.rows()); }
    int param_dim() const { return static_cast<int>(theta.size()); }

    Vec act(const Vec& s) const { return theta * basis.eval(s); }

    Vec flat_params() const {
        Vec out(theta.size());
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < theta.rows(); ++r)
            for (Eigen::Index c = 0; c < theta.cols(); ++c) out[k++] = theta(r, c);
        return out;
    }

    void set_flat_params(const Vec& p) {
        require(p.size() == theta.size(), "LinearPolicy: parameter size mismatch");
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < theta.rows(); ++r)
            for (Eigen::Index c = 0; c < theta.cols(); ++c) theta(r, c) = p[k++];
    }
};

// Default policy structure for an environment: RBF basis for the chain
// walk, identity features for the arm.
inline LinearPolicy default_policy_for(const Environment& env) {
    if (env.is_chain_walk()) return LinearPolicy(chain_walk_basis(), 1);
    return LinearPolicy(identity_basis(env.state_dim()), env.action_dim());
}

/// Stochastic Gaussian policy for REINFORCE: scalar action
/// a ~ Normal(mu^T phi(s), sigma^2).
struct GaussianPolicy {
    PolicyBasis basis;
    Vec mu;
    double sigma = 1.0;

    GaussianPolicy() = default;
    GaussianPolicy(PolicyBasis b, double sigma_init = 1.0)
        : basis(std::move(b)), mu(Vec::Zero(basis.size())), sigma(sigma_init) {}

    Vec act(const Vec& s, Rng& rng) const {
        require(sigma > 0.0, "GaussianPolicy: sigma must be > 0");
        Vec a(1);
        a[0] = rng.normal(mu.dot(basis.eval(s)), sigma);
        return a;
    }

    // grad_mu = ((a - mu^T phi) / sigma^2) phi
    // grad_sigma = ((a - mu^T phi)^2 - sigma^2) / sigma^3
    std::pair<Vec, double> logp_grad(const Vec& s, const Vec& a) const {
        require(sigma > 0.0, "GaussianPolicy: sigma must be > 0");
        require(a.size() == 1, "GaussianPolicy: scalar actions only");
        const Vec phi = basis.eval(s);
        const double resid = a[0] - mu.dot(phi);
        const double s2 = sigma * sigma;
        Vec grad_mu = (resid / s2) * phi;
        const double grad_sigma = (resid * resid - s2) / (s2 * sigma);
        return {std::move(grad_mu), grad_sigma};
    }

    double logp(const Vec& s, const Vec& a) const {
        const double resid = a[0] - mu.dot(basis.eval(s));
        const double s2 = sigma * sigma;
        return -0.5 * std::log(2.0 * std::numbers::pi * s2) - resid * resid / (2.0 * s2);
    }
};

/// Gaussian prior over policy parameters: theta_i ~ Normal(eta_i, tau_i^2).
/// This is the quantity PGPE optimizes.
struct PriorHyper {
    Vec eta;
    Vec tau;

    PriorHyper() = default;
    PriorHyper(Vec eta_, Vec tau_) : eta(std::move(eta_)), tau(std::move(tau_)) {
        require(eta.size() == tau.size(), "PriorHyper: eta/tau size mismatch");
        require((tau.array() > 0.0).all(), "PriorHyper: tau must be > 0 element-wise");
    }

    static PriorHyper standard(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

    int dim() const { return static_cast<int>(eta.size()); }
};

inline Vec prior_draw(const PriorHyper& rho, Rng& rng) {
    Vec theta(rho.dim());
    for (int i = 0; i < rho.dim(); ++i) theta[i] = rng.normal(rho.eta[i], rho.tau[i]);
    return theta;
}

inline double prior_logp(const Vec& theta, const PriorHyper& rho) {
    require(theta.size() == rho.eta.size(), "prior_logp: dimension mismatch");
    double lp = 0.0;
    for (int i = 0; i < rho.dim(); ++i) {
        const double t2 = rho.tau[i] * rho.tau[i];
        const double d = theta[i] - rho.eta[i];
        lp += -0.5 * std::log(2.0 * std::numbers::pi * t2) - d * d / (2.0 * t2);
    }
    return lp;
}

// grad_eta_i = (theta_i - eta_i) / tau_i^2
// grad_tau_i = ((theta_i - eta_i)^2 - tau_i^2) / tau_i^3
inline std::pair<Vec, Vec> prior_logp_grad(const Vec& theta, const PriorHyper& rho) {
    require(theta.size() == rho.eta.size(), "prior_logp_grad: dimension mismatch");
    Vec grad_eta(rho.dim());
    Vec grad_tau(rho.dim());
    for (int i = 0; i < rho.dim(); ++i) {
        const double tau = rho.tau[i];
        const double t2 = tau * tau;
        const double d = theta[i] - rho.eta[i];
        grad_eta[i] = d / t2;
        grad_tau[i] = (d * d - t2) / (t2 * tau);
    }
    return {std::move(grad_eta), std::move(grad_tau)};
}

} // namespace mpgpe
