#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "types.hpp"

namespace mpgpe {

// Deterministic hyper-parameter grid for evidence maximization. The
// lengthscale entries produce isotropic scaling matrices.
struct GpHyperGrid {
    std::vector<double> amplitudes{0.1, 1.0, 10.0};
    std::vector<double> lengthscales{0.25, 0.5, 1.0, 2.0, 4.0};
    std::vector<double> noise_vars{1e-4, 1e-2, 1e-1, 1.0};
};

/// Gaussian-process regression model of p(s'|s,a): one independent GP per
/// output dimension, sharing the input covariance
///   k(x, x') = amplitude * exp(-sum_j ((x_j - x'_j) / lengthscale_j)^2).
class GpModel {
public:
    GpModel() = default;

    GpModel(Mat X, Mat Y, double amplitude, Vec lengthscale, double noise_var)
        : X_(std::move(X)), Y_(std::move(Y)), amplitude_(amplitude),
          lengthscale_(std::move(lengthscale)), noise_var_(noise_var) {
        require(X_.rows() >= 1 && X_.rows() == Y_.rows(), "GpModel: input/target row mismatch");
        require(amplitude_ > 0.0, "GpModel: amplitude must be > 0");
        require(noise_var_ > 0.0, "GpModel: noise_var must be > 0");
        require(lengthscale_.size() == X_.cols(), "GpModel: lengthscale dimension mismatch");
        require((lengthscale_.array() > 0.0).all(), "GpModel: lengthscales must be > 0");
        factorize();
    }

    int num_points() const { return static_cast<int>(X_.rows()); }
    int input_dim() const { return static_cast<int>(X_.cols()); }
    int out_dim() const { return static_cast<int>(Y_.cols()); }

    const Mat& inputs() const { return X_; }
    const Mat& targets() const { return Y_; }
    double amplitude() const { return amplitude_; }
    const Vec& lengthscale() const { return lengthscale_; }
    double noise_var() const { return noise_var_; }

    // Posterior mean and variance per output dimension, variance floored
    // at zero. The variance is shared across outputs (common kernel).
    std::pair<Vec, Vec> predict(const Vec& s, const Vec& a) const {
        const Vec k = kernel_vector(joint(s, a));
        Vec mean = alpha_.transpose() * k;
        const Vec v = chol_.matrixL().solve(k);
        const double var = std::max(0.0, amplitude_ - v.squaredNorm());
        return {std::move(mean), Vec::Constant(out_dim(), var)};
    }

    // Per-dimension draw Normal(mean_i, var_i + noise_var): the transition
    // density includes the observation noise.
    Vec sample(const Vec& s, const Vec& a, Rng& rng) const {
        auto [mean, var] = predict(s, a);
        Vec out(out_dim());
        for (int d = 0; d < out_dim(); ++d)
            out[d] = rng.normal(mean[d], std::sqrt(var[d] + noise_var_));
        return out;
    }

    // Sum over output dimensions of the Gaussian log marginal likelihood,
    // evaluated through the cached Cholesky factor.
    double log_evidence() const { return log_evidence_; }

    static double grid_log_evidence(const Mat& X, const Mat& Y, double amplitude,
                                    double lengthscale, double noise_var) {
        GpModel m(X, Y, amplitude, Vec::Constant(X.cols(), lengthscale), noise_var);
        return m.log_evidence();
    }

private:
    Vec joint(const Vec& s, const Vec& a) const {
        require(s.size() + a.size() == X_.cols(), "GpModel: query dimension mismatch");
        Vec x(s.size() + a.size());
        x << s, a;
        return x;
    }

    Vec kernel_vector(const Vec& x) const {
        Vec k(num_points());
        for (int i = 0; i < num_points(); ++i) {
            double d = 0.0;
            for (int j = 0; j < input_dim(); ++j) {
                const double t = (X_(i, j) - x[j]) / lengthscale_[j];
                d += t * t;
            }
            k[i] = amplitude_ * std::exp(-d);
        }
        return k;
    }

    void factorize() {
        const int m = num_points();
        Mat K(m, m);
        for (int i = 0; i < m; ++i) {
            K(i, i) = amplitude_ + noise_var_;
            for (int j = i + 1; j < m; ++j) {
                double d = 0.0;
                for (int c = 0; c < input_dim(); ++c) {
                    const double t = (X_(i, c) - X_(j, c)) / lengthscale_[c];
                    d += t * t;
                }
                K(i, j) = K(j, i) = amplitude_ * std::exp(-d);
            }
        }
        chol_.compute(K);
        if (chol_.info() != Eigen::Success)
            throw std::runtime_error("GpModel: Cholesky factorization of K + noise_var*I failed");
        alpha_ = chol_.solve(Y_);

        double logdet = 0.0;
        const auto& L = chol_.matrixLLT();
        for (int i = 0; i < m; ++i) logdet += std::log(L(i, i));
        logdet *= 2.0;
        double le = 0.0;
        for (int d = 0; d < out_dim(); ++d) {
            le += -0.5 * Y_.col(d).dot(alpha_.col(d)) - 0.5 * logdet -
                  0.5 * m * std::log(2.0 * std::numbers::pi);
        }
        log_evidence_ = le;
    }

    Mat X_; // M x (d_s + d_a)
    Mat Y_; // M x d_out
    double amplitude_ = 1.0;
    Vec lengthscale_;
    double noise_var_ = 1e-2;
    Eigen::LLT<Mat> chol_; // of K + noise_var * I
    Mat alpha_;            // (K + noise_var I)^{-1} Y
    double log_evidence_ = 0.0;
};

/// Fit by exhaustive evidence maximization over the grid; deterministic.
inline GpModel fit_gp(const std::vector<TransitionSample>& samples, const GpHyperGrid& grid = {}) {
    require(!samples.empty(), "fit_gp: samples must be non-empty");
    require(!grid.amplitudes.empty() && !grid.lengthscales.empty() && !grid.noise_vars.empty(),
            "fit_gp: empty hyper grid");
    const int n = static_cast<int>(samples.size());
    const int ds = static_cast<int>(samples[0].s.size());
    const int da = static_cast<int>(samples[0].a.size());
    const int dn = static_cast<int>(samples[0].s_next.size());
    Mat X(n, ds + da), Y(n, dn);
    for (int i = 0; i < n; ++i) {
        require(samples[i].s.size() == ds && samples[i].a.size() == da &&
                    samples[i].s_next.size() == dn,
                "fit_gp: inconsistent sample dimensions");
        X.row(i).head(ds) = samples[i].s.transpose();
        X.row(i).tail(da) = samples[i].a.transpose();
        Y.row(i) = samples[i].s_next.transpose();
    }

    GpModel best;
    double best_le = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double amp : grid.amplitudes) {
        for (double ls : grid.lengthscales) {
            for (double nv : grid.noise_vars) {
                GpModel m(X, Y, amp, Vec::Constant(ds + da, ls), nv);
                if (!found || m.log_evidence() > best_le) {
                    best_le = m.log_evidence();
                    best = std::move(m);
                    found = true;
                }
            }
        }
    }
    return best;
}

} // namespace mpgpe
