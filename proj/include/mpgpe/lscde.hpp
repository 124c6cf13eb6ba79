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

/// Thrown when a conditional-density query lands so far from all training
/// data that the mixture normalizer underflows; callers typically resample.
class DegenerateDensity : public std::runtime_error {
public:
    DegenerateDensity() : std::runtime_error("LSCDE: degenerate conditional density (query far from all training data)") {}
};

// Gaussian widths for the s / a / s' blocks of the product kernel. The
// default is one shared width; per-block widths are an optional refinement.
struct LscdeBandwidth {
    double s = 1.0;
    double a = 1.0;
    double out = 1.0;

    LscdeBandwidth() = default;
    explicit LscdeBandwidth(double shared) : s(shared), a(shared), out(shared) {}
    LscdeBandwidth(double s_, double a_, double out_) : s(s_), a(a_), out(out_) {}

    bool shared() const { return s == a && a == out; }
};

struct CvGrid {
    std::vector<double> kappas{0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
    std::vector<double> lambdas{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    int folds = 5;
};

struct CvScore {
    double kappa;
    double lambda;
    double score; // mean out-of-fold objective (lower is better)
};

struct CvResult {
    double kappa;
    double lambda;
    std::vector<CvScore> table;
};

namespace detail {

// Row i, column m: squared distance between query row i and center row m.
inline Mat pairwise_sqdist(const Mat& a, const Mat& b) {
    Mat d(a.rows(), b.rows());
    const Vec an = a.rowwise().squaredNorm();
    const Vec bn = b.rowwise().squaredNorm();
    d.noalias() = -2.0 * a * b.transpose();
    d.colwise() += an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

} // namespace detail

/// Non-parametric conditional density estimate of p(s'|s,a): a clipped
/// linear combination of Gaussian product kernels centred on training
/// transitions, renormalized analytically at query time.
class LscdeModel {
public:
    LscdeModel() = default;

    LscdeModel(Mat centers_s, Mat centers_a, Mat centers_out, LscdeBandwidth bw, double lambda,
               Vec alpha)
        : cs_(std::move(centers_s)), ca_(std::move(centers_a)), co_(std::move(centers_out)),
          bw_(bw), lambda_(lambda), alpha_(std::move(alpha)) {
        require(cs_.rows() >= 1, "LscdeModel: at least one center required");
        require(cs_.rows() == ca_.rows() && cs_.rows() == co_.rows() && cs_.rows() == alpha_.size(),
                "LscdeModel: center/alpha row mismatch");
        require(bw_.s > 0.0 && bw_.a > 0.0 && bw_.out > 0.0, "LscdeModel: bandwidths must be > 0");
        require(lambda_ >= 0.0, "LscdeModel: lambda must be >= 0");
        require((alpha_.array() >= 0.0).all(), "LscdeModel: alpha must be non-negative");
    }

    int num_centers() const { return static_cast<int>(cs_.rows()); }
    int state_dim() const { return static_cast<int>(cs_.cols()); }
    int action_dim() const { return static_cast<int>(ca_.cols()); }
    int out_dim() const { return static_cast<int>(co_.cols()); }

    const Mat& centers_s() const { return cs_; }
    const Mat& centers_a() const { return ca_; }
    const Mat& centers_out() const { return co_; }
    const LscdeBandwidth& bandwidth() const { return bw_; }
    double lambda() const { return lambda_; }
    const Vec& alpha() const { return alpha_; }

    // Pre-clip ridge solution, kept as a fit diagnostic (not serialized).
    const Vec& alpha_unclipped() const { return alpha_raw_; }
    void set_alpha_unclipped(Vec a) { alpha_raw_ = std::move(a); }

    // Basis vector phi(s, a, s'): one Gaussian product kernel per center.
    Vec basis(const Vec& s, const Vec& a, const Vec& s_next) const {
        check_query(s, a);
        require(s_next.size() == out_dim(), "LscdeModel: s_next dimension mismatch");
        const int m = num_centers();
        Vec phi(m);
        const double is = 0.5 / (bw_.s * bw_.s);
        const double ia = 0.5 / (bw_.a * bw_.a);
        const double io = 0.5 / (bw_.out * bw_.out);
        for (int i = 0; i < m; ++i) {
            const double ds = (cs_.row(i).transpose() - s).squaredNorm();
            const double da = (ca_.row(i).transpose() - a).squaredNorm();
            const double dn = (co_.row(i).transpose() - s_next).squaredNorm();
            phi[i] = std::exp(-(ds * is + da * ia + dn * io));
        }
        return phi;
    }

    // (m, m') element of the analytic integral of phi phi^T over s'.
    double phi_bar_element(int m, int m2, const Vec& s, const Vec& a) const {
        check_query(s, a);
        require(m >= 0 && m < num_centers() && m2 >= 0 && m2 < num_centers(),
                "LscdeModel: center index out of range");
        const double ds = (cs_.row(m).transpose() - s).squaredNorm() +
                          (cs_.row(m2).transpose() - s).squaredNorm();
        const double da = (ca_.row(m).transpose() - a).squaredNorm() +
                          (ca_.row(m2).transpose() - a).squaredNorm();
        const double dcc = (co_.row(m) - co_.row(m2)).squaredNorm();
        const double pre = std::pow(std::sqrt(std::numbers::pi) * bw_.out, out_dim());
        return pre * std::exp(-ds / (2.0 * bw_.s * bw_.s)) *
               std::exp(-da / (2.0 * bw_.a * bw_.a)) * std::exp(-dcc / (4.0 * bw_.out * bw_.out));
    }

    // Analytic integral of alpha^T phi over s'; >= 0, may underflow to 0.
    double normalizer(const Vec& s, const Vec& a) const {
        return std::exp(log_normalizer(s, a));
    }

    double log_normalizer(const Vec& s, const Vec& a) const {
        double shift, total;
        mixture_weights(s, a, shift, total);
        if (total <= 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(total) - shift +
               out_dim() * std::log(std::sqrt(2.0 * std::numbers::pi) * bw_.out);
    }

    /// Renormalized conditional density. Computed with a shared exponent
    /// shift so the value stays finite even when the raw numerator and
    /// normalizer both underflow.
    double density(const Vec& s, const Vec& a, const Vec& s_next) const {
        require(s_next.size() == out_dim(), "LscdeModel: s_next dimension mismatch");
        double shift, total;
        const Vec w = mixture_weights(s, a, shift, total);
        throw_if_degenerate(shift, total);
        const double io = 0.5 / (bw_.out * bw_.out);
        double num = 0.0;
        for (int i = 0; i < num_centers(); ++i) {
            if (w[i] == 0.0) continue;
            const double dn = (co_.row(i).transpose() - s_next).squaredNorm();
            num += w[i] * std::exp(-dn * io);
        }
        const double vol = std::pow(std::sqrt(2.0 * std::numbers::pi) * bw_.out, out_dim());
        return num / (total * vol);
    }

    /// Exact draw from the renormalized mixture: pick a center with
    /// probability proportional to its conditional weight, then add
    /// Gaussian noise of width kappa_out around its s' component.
    Vec sample(const Vec& s, const Vec& a, Rng& rng) const {
        double shift, total;
        const Vec w = mixture_weights(s, a, shift, total);
        throw_if_degenerate(shift, total);
        const double u = rng.uniform() * total;
        int pick = num_centers() - 1;
        double acc = 0.0;
        for (int i = 0; i < num_centers(); ++i) {
            acc += w[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        Vec out(out_dim());
        for (int d = 0; d < out_dim(); ++d)
            out[d] = rng.normal(co_(pick, d), bw_.out);
        return out;
    }

private:
    void check_query(const Vec& s, const Vec& a) const {
        require(s.size() == state_dim(), "LscdeModel: state dimension mismatch");
        require(a.size() == action_dim(), "LscdeModel: action dimension mismatch");
    }

    // Shift-stabilized conditional mixture weights
    //   w_i = alpha_i exp(shift - |s-s_i|^2/2k_s^2 - |a-a_i|^2/2k_a^2),
    // with shift chosen as the smallest exponent among active centers.
    Vec mixture_weights(const Vec& s, const Vec& a, double& shift, double& total) const {
        check_query(s, a);
        const int m = num_centers();
        const double is = 0.5 / (bw_.s * bw_.s);
        const double ia = 0.5 / (bw_.a * bw_.a);
        Vec z(m);
        shift = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            const double ds = (cs_.row(i).transpose() - s).squaredNorm();
            const double da = (ca_.row(i).transpose() - a).squaredNorm();
            z[i] = ds * is + da * ia;
            if (alpha_[i] > 0.0 && z[i] < shift) shift = z[i];
        }
        Vec w(m);
        total = 0.0;
        if (!std::isfinite(shift)) { // all alpha are zero
            w.setZero();
            return w;
        }
        for (int i = 0; i < m; ++i) {
            w[i] = alpha_[i] > 0.0 ? alpha_[i] * std::exp(shift - z[i]) : 0.0;
            total += w[i];
        }
        return w;
    }

    void throw_if_degenerate(double shift, double total) const {
        constexpr double log_floor = -690.77552789821368; // log(1e-300)
        if (total <= 0.0) throw DegenerateDensity();
        const double log_norm = std::log(total) - shift +
                                out_dim() * std::log(std::sqrt(2.0 * std::numbers::pi) * bw_.out);
        if (log_norm <= log_floor) throw DegenerateDensity();
    }

    Mat cs_; // M x d_s
    Mat ca_; // M x d_a
    Mat co_; // M x d_out
    LscdeBandwidth bw_;
    double lambda_ = 0.0;
    Vec alpha_;
    Vec alpha_raw_;
};

namespace detail {

struct PackedSamples {
    Mat s;
    Mat a;
    Mat out;
};

inline PackedSamples pack_samples(const std::vector<TransitionSample>& samples) {
    require(!samples.empty(), "LSCDE: samples must be non-empty");
    const int n = static_cast<int>(samples.size());
    const int ds = static_cast<int>(samples[0].s.size());
    const int da = static_cast<int>(samples[0].a.size());
    const int dn = static_cast<int>(samples[0].s_next.size());
    PackedSamples p{Mat(n, ds), Mat(n, da), Mat(n, dn)};
    for (int i = 0; i < n; ++i) {
        require(samples[i].s.size() == ds && samples[i].a.size() == da &&
                    samples[i].s_next.size() == dn,
                "LSCDE: inconsistent sample dimensions");
        p.s.row(i) = samples[i].s.transpose();
        p.a.row(i) = samples[i].a.transpose();
        p.out.row(i) = samples[i].s_next.transpose();
    }
    return p;
}

// Distance matrices shared by every (kappa, lambda) grid point.
struct FitWorkspace {
    Mat dss; // n x M  |s_i - s_m|^2
    Mat daa; // n x M
    Mat dno; // n x M  |s'_i - s'_m|^2
    Mat dcc; // M x M  |s'_m - s'_m'|^2
    int out_dim = 1;

    FitWorkspace(const PackedSamples& data, const PackedSamples& centers)
        : dss(pairwise_sqdist(data.s, centers.s)), daa(pairwise_sqdist(data.a, centers.a)),
          dno(pairwise_sqdist(data.out, centers.out)),
          dcc(pairwise_sqdist(centers.out, centers.out)),
          out_dim(static_cast<int>(data.out.cols())) {}

    // Sample-average estimates of the quadratic form:
    //   H_hat = (sqrt(pi) k_out)^d (G^T G / n) .* F,  h_hat = (G .* E)^T 1 / n
    void estimate(const LscdeBandwidth& bw, Mat& H, Vec& h) const {
        const double is = 0.5 / (bw.s * bw.s);
        const double ia = 0.5 / (bw.a * bw.a);
        const double io = 0.5 / (bw.out * bw.out);
        const double n = static_cast<double>(dss.rows());
        const Mat G = (-(dss * is) - (daa * ia)).array().exp().matrix();
        const Mat F = (dcc * (-0.5 * io)).array().exp().matrix(); // exp(-|..|^2 / 4k^2)
        const double pre = std::pow(std::sqrt(std::numbers::pi) * bw.out, out_dim);
        H.noalias() = G.transpose() * G;
        H = pre / n * H.cwiseProduct(F);
        h = (G.cwiseProduct((-(dno * io)).array().exp().matrix())).colwise().sum().transpose() / n;
    }
};

// Ridge solve of (H + lambda I) x = h with one step of iterative
// refinement; falls back to a pseudo-inverse when the factorization is
// unusable, and surfaces irrecoverably singular systems to the caller.
inline Vec solve_regularized(const Mat& H, const Vec& h, double lambda) {
    Mat A = H;
    A.diagonal().array() += lambda;
    const double scale = std::max({1.0, h.lpNorm<Eigen::Infinity>(), A.lpNorm<Eigen::Infinity>()});

    Eigen::LLT<Mat> llt(A);
    Vec x;
    if (llt.info() == Eigen::Success) {
        x = llt.solve(h);
        x += llt.solve(h - A * x);
        if ((h - A * x).lpNorm<Eigen::Infinity>() <= 1e-12 * scale) return x;
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
    x = cod.solve(h);
    x += cod.solve(h - A * x);
    if ((h - A * x).lpNorm<Eigen::Infinity>() > 1e-8 * scale)
        throw std::runtime_error(
            "LSCDE: regularized system is numerically singular; use lambda > 0");
    return x;
}

inline PackedSamples select_centers(const PackedSamples& data, int max_centers, Rng& rng) {
    const int n = static_cast<int>(data.s.rows());
    if (max_centers <= 0 || n <= max_centers) return data;
    auto order = rng.permutation(static_cast<std::size_t>(n));
    PackedSamples c{Mat(max_centers, data.s.cols()), Mat(max_centers, data.a.cols()),
                    Mat(max_centers, data.out.cols())};
    for (int i = 0; i < max_centers; ++i) {
        c.s.row(i) = data.s.row(static_cast<Eigen::Index>(order[i]));
        c.a.row(i) = data.a.row(static_cast<Eigen::Index>(order[i]));
        c.out.row(i) = data.out.row(static_cast<Eigen::Index>(order[i]));
    }
    return c;
}

} // namespace detail

/// Fit the clipped ridge solution. Centers are all samples, or a uniform
/// random subset of size max_centers when the sample count exceeds it; the
/// H/h sample averages always run over the full sample set.
inline LscdeModel fit_lscde(const std::vector<TransitionSample>& samples, LscdeBandwidth bw,
                            double lambda, int max_centers, Rng& rng) {
    require(lambda >= 0.0, "fit_lscde: lambda must be >= 0");
    const auto data = detail::pack_samples(samples);
    const auto centers = detail::select_centers(data, max_centers, rng);
    detail::FitWorkspace ws(data, centers);
    Mat H;
    Vec h;
    ws.estimate(bw, H, h);
    Vec raw = detail::solve_regularized(H, h, lambda);
    LscdeModel model(centers.s, centers.a, centers.out, bw, lambda, raw.cwiseMax(0.0));
    model.set_alpha_unclipped(std::move(raw));
    return model;
}

inline LscdeModel fit_lscde(const std::vector<TransitionSample>& samples, double kappa,
                            double lambda, int max_centers, Rng& rng) {
    require(kappa > 0.0, "fit_lscde: kappa must be > 0");
    return fit_lscde(samples, LscdeBandwidth(kappa), lambda, max_centers, rng);
}

/// K-fold selection of (kappa, lambda): minimizes the out-of-fold estimate
/// of the squared-error objective G(alpha) = alpha^T H alpha / 2 - h^T alpha.
/// Ties break toward larger lambda, then larger kappa.
inline CvResult cross_validate_lscde(const std::vector<TransitionSample>& samples,
                                     const CvGrid& grid, int max_centers, Rng& rng) {
    require(!grid.kappas.empty() && !grid.lambdas.empty(), "cross_validate_lscde: empty grid");
    require(grid.folds >= 2, "cross_validate_lscde: folds must be >= 2");
    require(static_cast<std::size_t>(grid.folds) <= samples.size(),
            "cross_validate_lscde: folds must not exceed sample count");
    for (double k : grid.kappas) require(k > 0.0, "cross_validate_lscde: kappa must be > 0");
    for (double l : grid.lambdas) require(l >= 0.0, "cross_validate_lscde: lambda must be >= 0");

    const auto data = detail::pack_samples(samples);
    const int n = static_cast<int>(samples.size());
    const auto order = rng.permutation(static_cast<std::size_t>(n));

    struct FoldWorkspace {
        detail::FitWorkspace train;
        detail::FitWorkspace test;
    };
    std::vector<FoldWorkspace> folds;
    folds.reserve(grid.folds);
    for (int f = 0; f < grid.folds; ++f) {
        const int lo = static_cast<int>(static_cast<long long>(n) * f / grid.folds);
        const int hi = static_cast<int>(static_cast<long long>(n) * (f + 1) / grid.folds);
        detail::PackedSamples train{Mat(n - (hi - lo), data.s.cols()),
                                    Mat(n - (hi - lo), data.a.cols()),
                                    Mat(n - (hi - lo), data.out.cols())};
        detail::PackedSamples test{Mat(hi - lo, data.s.cols()), Mat(hi - lo, data.a.cols()),
                                   Mat(hi - lo, data.out.cols())};
        int it = 0, iv = 0;
        for (int i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(order[i]);
            if (i >= lo && i < hi) {
                test.s.row(iv) = data.s.row(row);
                test.a.row(iv) = data.a.row(row);
                test.out.row(iv) = data.out.row(row);
                ++iv;
            } else {
                train.s.row(it) = data.s.row(row);
                train.a.row(it) = data.a.row(row);
                train.out.row(it) = data.out.row(row);
                ++it;
            }
        }
        auto centers = detail::select_centers(train, max_centers, rng);
        folds.push_back({detail::FitWorkspace(train, centers), detail::FitWorkspace(test, centers)});
    }

    CvResult result{0.0, 0.0, {}};
    double best = std::numeric_limits<double>::infinity();
    // Largest lambda / kappa visited first so strict improvement implements
    // the tie-break.
    for (auto lam = grid.lambdas.rbegin(); lam != grid.lambdas.rend(); ++lam) {
        for (auto kap = grid.kappas.rbegin(); kap != grid.kappas.rend(); ++kap) {
            const LscdeBandwidth bw(*kap);
            double score = 0.0;
            for (const auto& fold : folds) {
                Mat Ht;
                Vec ht;
                fold.train.estimate(bw, Ht, ht);
                const Vec alpha = detail::solve_regularized(Ht, ht, *lam).cwiseMax(0.0);
                Mat Hv;
                Vec hv;
                fold.test.estimate(bw, Hv, hv);
                score += 0.5 * alpha.dot(Hv * alpha) - hv.dot(alpha);
            }
            score /= static_cast<double>(grid.folds);
            result.table.push_back({*kap, *lam, score});
            if (score < best) {
                best = score;
                result.kappa = *kap;
                result.lambda = *lam;
            }
        }
    }
    return result;
}

} // namespace mpgpe
