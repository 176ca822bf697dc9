#pragma once

// Dirichlet sine eigenbasis of (I - Laplacian) on the unit cube, the spectral
// regularizer S_{eta,K} and the smooth clip.

#include "fgt/measure.hpp"

#include <memory>
#include <ostream>

namespace fgt {

/// First K eigenpairs of (I - Laplacian) with Dirichlet conditions on [0,1]^d:
/// psi_k(x) = prod_i sqrt(2) sin(k_i pi x_i), lambda_k = 1 + pi^2 |k|^2.
/// Ordered by eigenvalue, ties broken by lexicographic multi-index.
class SineBasis {
public:
    SineBasis(std::size_t dim, std::size_t count) : dim_(dim) {
        require(dim >= 1, "basis dimension must be positive");
        require(count >= 1, "basis needs K >= 1");
        // Any of the first K modes has every component <= K.
        std::vector<std::vector<int>> candidates;
        std::vector<int> idx(dim, 1);
        const int top = static_cast<int>(count);
        while (true) {
            candidates.push_back(idx);
            std::size_t a = dim;
            while (a-- > 0) {
                if (idx[a] < top) {
                    ++idx[a];
                    break;
                }
                idx[a] = 1;
            }
            if (a == static_cast<std::size_t>(-1)) break;
        }
        auto norm2 = [](const std::vector<int>& k) {
            long s = 0;
            for (int c : k) s += static_cast<long>(c) * c;
            return s;
        };
        std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
            const long na = norm2(a), nb = norm2(b);
            return na != nb ? na < nb : a < b;
        });
        candidates.resize(count);
        indices_ = std::move(candidates);
        eigenvalues_.reserve(count);
        for (const auto& k : indices_) eigenvalues_.push_back(1.0 + kPi * kPi * static_cast<double>(norm2(k)));
    }

    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] std::size_t count() const { return indices_.size(); }
    [[nodiscard]] const std::vector<std::vector<int>>& indices() const { return indices_; }
    [[nodiscard]] const Vector& eigenvalues() const { return eigenvalues_; }
    [[nodiscard]] double eigenvalue(std::size_t k) const { return eigenvalues_[k]; }

    [[nodiscard]] double eval(std::size_t k, std::span<const double> x) const {
        require_dims(x.size() == dim_, "basis point has wrong dimension");
        double v = 1.0;
        for (std::size_t i = 0; i < dim_; ++i) v *= std::sqrt(2.0) * std::sin(indices_[k][i] * kPi * x[i]);
        return v;
    }

    /// All K basis values at x.
    [[nodiscard]] Vector eval_all(std::span<const double> x) const {
        Vector out(count());
        for (std::size_t k = 0; k < count(); ++k) out[k] = eval(k, x);
        return out;
    }

private:
    std::size_t dim_;
    std::vector<std::vector<int>> indices_;
    Vector eigenvalues_;
};

inline SineBasis basis_eigenpairs(std::size_t d, std::size_t k) { return SineBasis(d, k); }

struct SpectralConfig {
    int r = 2;
    double eta = 1e-2;
    std::size_t K = 1;
    std::size_t n_channels = 1;

    void validate(std::size_t d) const {
        require(r > 0 && r % 2 == 0, "r must be an even positive integer");
        require(2.0 * r > static_cast<double>(d), "r must exceed d/2");
        require(eta >= 0.0, "eta must be nonnegative");
        require(K >= 1 && n_channels >= 1, "K and n_channels must be positive");
    }
};

/// K(eta) = ceil(eta^{-d/(4r)}). Values within 1e-12 (relative) of an integer are
/// snapped first so that exact powers such as (1e-4)^{-1/4} = 10 do not round up.
inline std::size_t k_schedule(double eta, std::size_t d, int r) {
    require(eta > 0.0 && eta <= 1.0, "k_schedule needs 0 < eta <= 1");
    require(r > 0, "r must be positive");
    const double v = std::pow(eta, -static_cast<double>(d) / (4.0 * r));
    const double nearest = std::round(v);
    if (std::abs(v - nearest) <= 1e-12 * nearest) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(v));
}

/// (k, c) entry: vol * sum_j w_j psi_k(x_j) y_{j,c}. Exact for discrete measures.
inline Matrix measure_moments(const DiscreteMeasure& mu, const SineBasis& basis) {
    require_dims(mu.split() == basis.dim(), "measure split differs from basis dimension");
    const std::size_t d = basis.dim();
    const auto n = static_cast<Eigen::Index>(mu.value_dim());
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(basis.count()), n);
    for (const auto& a : mu.atoms()) {
        const std::span<const double> x(a.location.data(), d);
        for (std::size_t k = 0; k < basis.count(); ++k) {
            const double s = a.weight * basis.eval(k, x);
            for (Eigen::Index c = 0; c < n; ++c) m(static_cast<Eigen::Index>(k), c) += s * a.location[d + static_cast<std::size_t>(c)];
        }
    }
    return m;  // vol(cube) = 1
}

/// S_{eta,K}(mu) as coefficients on the first K basis functions.
class SpectralFunction {
public:
    SpectralFunction(std::shared_ptr<const SineBasis> basis, Matrix coefficients)
        : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {}

    [[nodiscard]] const Matrix& coefficients() const { return coefficients_; }
    [[nodiscard]] const SineBasis& basis() const { return *basis_; }
    [[nodiscard]] std::size_t channels() const { return static_cast<std::size_t>(coefficients_.cols()); }

    [[nodiscard]] Vector operator()(std::span<const double> x) const {
        Vector out(channels(), 0.0);
        for (Eigen::Index k = 0; k < coefficients_.rows(); ++k) {
            const double p = basis_->eval(static_cast<std::size_t>(k), x);
            for (std::size_t c = 0; c < channels(); ++c) out[c] += coefficients_(k, static_cast<Eigen::Index>(c)) * p;
        }
        return out;
    }

    /// sum_k lambda_k^{-s} |c_k|^2: a truncated diagnostic for negative-order norms.
    [[nodiscard]] double spectral_proxy_norm2(double s) const {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < coefficients_.rows(); ++k)
            acc += std::pow(basis_->eigenvalue(static_cast<std::size_t>(k)), -s) * coefficients_.row(k).squaredNorm();
        return acc;
    }

    /// CSV rows: k_1..k_d, channel, value.
    void write_csv(std::ostream& os) const {
        const std::size_t d = basis_->dim();
        for (std::size_t i = 0; i < d; ++i) os << 'k' << (i + 1) << ',';
        os << "channel,value\n";
        os.precision(17);
        for (Eigen::Index k = 0; k < coefficients_.rows(); ++k)
            for (Eigen::Index c = 0; c < coefficients_.cols(); ++c) {
                for (int ki : basis_->indices()[static_cast<std::size_t>(k)]) os << ki << ',';
                os << c << ',' << coefficients_(k, c) << '\n';
            }
    }

private:
    std::shared_ptr<const SineBasis> basis_;
    Matrix coefficients_;
};

/// Multipliers (eta lambda_k^r + 1)^{-1} applied to moments.
inline Matrix spectral_filter(const Matrix& moments, const SineBasis& basis, const SpectralConfig& cfg) {
    require(basis.count() >= cfg.K, "basis has fewer than K functions");
    require_dims(static_cast<std::size_t>(moments.rows()) >= cfg.K, "moment matrix has fewer than K rows");
    Matrix c = moments.topRows(static_cast<Eigen::Index>(cfg.K));
    for (std::size_t k = 0; k < cfg.K; ++k)
        c.row(static_cast<Eigen::Index>(k)) /= cfg.eta * std::pow(basis.eigenvalue(k), cfg.r) + 1.0;
    return c;
}

inline SpectralFunction s_eta_k(const DiscreteMeasure& mu, const SpectralConfig& cfg,
                                std::shared_ptr<const SineBasis> basis) {
    cfg.validate(basis->dim());
    require_dims(mu.value_dim() == cfg.n_channels, "measure value dimension differs from n_channels");
    Matrix c = spectral_filter(measure_moments(mu, *basis), *basis, cfg);
    return SpectralFunction(std::move(basis), std::move(c));
}

inline SpectralFunction s_eta_k(const DiscreteMeasure& mu, const SpectralConfig& cfg, const SineBasis& basis) {
    return s_eta_k(mu, cfg, std::make_shared<const SineBasis>(basis));
}

/// Odd saturating map: identity on |y| <= (L + L1)/2, then a monotone cubic reaching
/// L1 with zero slope at |y| = L1, constant beyond. Continuously differentiable.
class SmoothClip {
public:
    SmoothClip(double inner, double outer) : inner_(inner), outer_(outer) {
        require(inner > 0.0 && outer > inner, "clip needs 0 < L < L1");
    }

    [[nodiscard]] double inner() const { return inner_; }
    [[nodiscard]] double outer() const { return outer_; }
    [[nodiscard]] double plateau() const { return 0.5 * (inner_ + outer_); }

    [[nodiscard]] double operator()(double y) const {
        const double a = plateau(), a_abs = std::abs(y);
        if (a_abs <= a) return y;
        const double delta = outer_ - a;
        const double t = std::min((a_abs - a) / delta, 1.0);
        return std::copysign(a + delta * t * (1.0 + t - t * t), y);
    }

    [[nodiscard]] double derivative(double y) const {
        const double a = plateau(), a_abs = std::abs(y);
        if (a_abs <= a) return 1.0;
        const double t = (a_abs - a) / (outer_ - a);
        if (t >= 1.0) return 0.0;
        return (1.0 - t) * (3.0 * t + 1.0);
    }

    [[nodiscard]] Vector operator()(std::span<const double> y) const {
        Vector out(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = (*this)(y[i]);
        return out;
    }

private:
    double inner_;
    double outer_;
};

inline Vector smooth_clip(std::span<const double> y, const SmoothClip& clip) { return clip(y); }

}  // namespace fgt
