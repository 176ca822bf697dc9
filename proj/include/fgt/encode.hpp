#pragma once

// Point sampling, graph tokenization, mollifier regularization and mollifier decoding.

#include "fgt/measure.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>

namespace fgt {

enum class DomainKind { unit_cube, torus };

/// [0,1]^d (or the flat torus on the same square) with values in [-L, L]^n.
struct Domain {
    std::size_t dim = 1;
    DomainKind kind = DomainKind::unit_cube;
    double value_bound = 1.0;

    Domain() = default;
    Domain(std::size_t d, DomainKind k, double bound) : dim(d), kind(k), value_bound(bound) {
        require(d == 1 || d == 2, "domain dimension must be 1 or 2");
        require(bound > 0.0, "value bound must be positive");
    }

    [[nodiscard]] double volume() const { return 1.0; }

    /// Distance to the boundary of the cube; infinite on the torus.
    [[nodiscard]] double boundary_distance(std::span<const double> x) const {
        if (kind == DomainKind::torus) return std::numeric_limits<double>::infinity();
        double d = std::numeric_limits<double>::infinity();
        for (double c : x) d = std::min({d, c, 1.0 - c});
        return d;
    }
};

/// Normalised even bump rho(x) = prod_i c exp(-1/(1 - x_i^2)), supported in [-1,1]^d.
class Mollifier {
public:
    explicit Mollifier(std::size_t quadrature_nodes = 20001) : quadrature_nodes_(quadrature_nodes) {
        require(quadrature_nodes >= 3, "mollifier quadrature needs at least 3 nodes");
        // Trapezoid rule; spectrally accurate because every derivative vanishes at +-1.
        const double step = 2.0 / static_cast<double>(quadrature_nodes - 1);
        double s = 0.0;
        for (std::size_t i = 0; i < quadrature_nodes; ++i) s += raw(-1.0 + step * static_cast<double>(i));
        constant_ = 1.0 / (s * step);
    }

    [[nodiscard]] double profile(double t) const { return constant_ * raw(t); }

    [[nodiscard]] double operator()(std::span<const double> x) const {
        double v = 1.0;
        for (double c : x) {
            v *= profile(c);
            if (v == 0.0) break;
        }
        return v;
    }

    /// rho_tau(x) = tau^{-d} rho(x / tau).
    [[nodiscard]] double scaled(std::span<const double> x, double tau) const {
        double v = 1.0;
        for (double c : x) v *= profile(c / tau) / tau;
        return v;
    }

    [[nodiscard]] double normalization() const { return constant_; }
    [[nodiscard]] std::size_t quadrature_nodes() const { return quadrature_nodes_; }

private:
    static double raw(double t) {
        const double a = std::abs(t);
        if (a >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - t * t));
    }

    std::size_t quadrature_nodes_;
    double constant_ = 1.0;
};

inline double mollifier_eval(const Mollifier& m, std::span<const double> x) { return m(x); }

using FieldFn = std::function<Vector(std::span<const double>)>;

/// Vector-valued function sampled on a regular grid with M nodes per axis. Cube grids
/// are cell centred ((k + 1/2) / M), torus grids are node based (k / M).
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(Domain domain, std::size_t resolution, std::size_t channels)
        : domain_(domain), resolution_(resolution), channels_(channels),
          values_(node_count_for(domain.dim, resolution) * channels, 0.0) {
        require(resolution >= 1 && channels >= 1, "grid needs at least one node and one channel");
    }

    static GridFunction from_function(Domain domain, std::size_t resolution, std::size_t channels, const FieldFn& f) {
        GridFunction g(domain, resolution, channels);
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            const Vector v = f(g.node(i));
            require_dims(v.size() == channels, "function returned wrong channel count");
            for (std::size_t c = 0; c < channels; ++c) g.at(i, c) = v[c];
        }
        return g;
    }

    [[nodiscard]] const Domain& domain() const { return domain_; }
    [[nodiscard]] std::size_t resolution() const { return resolution_; }
    [[nodiscard]] std::size_t channels() const { return channels_; }
    [[nodiscard]] std::size_t dim() const { return domain_.dim; }
    [[nodiscard]] std::size_t node_count() const { return node_count_for(domain_.dim, resolution_); }
    [[nodiscard]] double offset() const { return domain_.kind == DomainKind::unit_cube ? 0.5 : 0.0; }
    [[nodiscard]] double spacing() const { return 1.0 / static_cast<double>(resolution_); }

    [[nodiscard]] double& at(std::size_t node, std::size_t channel) { return values_[node * channels_ + channel]; }
    [[nodiscard]] double at(std::size_t node, std::size_t channel) const { return values_[node * channels_ + channel]; }
    [[nodiscard]] const Vector& raw() const { return values_; }
    [[nodiscard]] Vector& raw() { return values_; }

    /// Multi-index (row-major, last axis fastest) of a flat node index.
    [[nodiscard]] std::vector<std::size_t> multi_index(std::size_t node) const {
        std::vector<std::size_t> idx(domain_.dim);
        for (std::size_t a = domain_.dim; a-- > 0;) {
            idx[a] = node % resolution_;
            node /= resolution_;
        }
        return idx;
    }

    [[nodiscard]] std::size_t flat(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t a = 0; a < idx.size(); ++a) f = f * resolution_ + idx[a];
        return f;
    }

    [[nodiscard]] Point node(std::size_t flat_index) const {
        const auto idx = multi_index(flat_index);
        Point p(domain_.dim);
        for (std::size_t a = 0; a < domain_.dim; ++a) p[a] = (static_cast<double>(idx[a]) + offset()) * spacing();
        return p;
    }

    [[nodiscard]] double sup_norm() const {
        double s = 0.0;
        for (double v : values_) s = std::max(s, std::abs(v));
        return s;
    }

    /// Multilinear interpolation; periodic on the torus, clamped to the outermost nodes on the cube.
    [[nodiscard]] Vector interpolate(std::span<const double> x) const {
        const std::size_t d = domain_.dim;
        require_dims(x.size() == d, "interpolation point has wrong dimension");
        std::vector<std::size_t> lo(d), hi(d);
        Vector frac(d);
        const auto m = static_cast<double>(resolution_);
        for (std::size_t a = 0; a < d; ++a) {
            double t = x[a] * m - offset();
            if (domain_.kind == DomainKind::torus) {
                t -= m * std::floor(t / m);
                const auto i0 = static_cast<std::size_t>(std::floor(t)) % resolution_;
                lo[a] = i0;
                hi[a] = (i0 + 1) % resolution_;
                frac[a] = t - std::floor(t);
            } else {
                t = std::clamp(t, 0.0, m - 1.0);
                auto i0 = static_cast<std::size_t>(std::floor(t));
                if (i0 + 1 >= resolution_) i0 = resolution_ >= 2 ? resolution_ - 2 : 0;
                lo[a] = i0;
                hi[a] = std::min(i0 + 1, resolution_ - 1);
                frac[a] = t - static_cast<double>(i0);
            }
        }
        Vector out(channels_, 0.0);
        std::vector<std::size_t> idx(d);
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double w = 1.0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool upper = (corner >> a) & 1U;
                idx[a] = upper ? hi[a] : lo[a];
                w *= upper ? frac[a] : 1.0 - frac[a];
            }
            if (w == 0.0) continue;
            const std::size_t f = flat(idx);
            for (std::size_t c = 0; c < channels_; ++c) out[c] += w * at(f, c);
        }
        return out;
    }

    [[nodiscard]] FieldFn evaluator() const {
        return [g = *this](std::span<const double> x) { return g.interpolate(x); };
    }

    /// CSV: header "M,d,n", a row with those numbers, then one row of n values per node.
    void write_csv(std::ostream& os) const {
        os << "M,d,n\n" << resolution_ << ',' << domain_.dim << ',' << channels_ << '\n';
        os.precision(17);
        for (std::size_t i = 0; i < node_count(); ++i) {
            for (std::size_t c = 0; c < channels_; ++c) os << (c ? "," : "") << at(i, c);
            os << '\n';
        }
    }

    static GridFunction read_csv(std::istream& is, Domain domain) {
        std::string line;
        std::getline(is, line);
        require(line == "M,d,n", "grid CSV must start with header M,d,n");
        std::getline(is, line);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream hdr(line);
        std::size_t m = 0, d = 0, n = 0;
        hdr >> m >> d >> n;
        require_dims(d == domain.dim, "grid CSV dimension differs from domain");
        GridFunction g(domain, m, n);
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            require(static_cast<bool>(std::getline(is, line)), "grid CSV truncated");
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            for (std::size_t c = 0; c < n; ++c) row >> g.at(i, c);
        }
        return g;
    }

private:
    static std::size_t node_count_for(std::size_t d, std::size_t m) {
        std::size_t n = 1;
        for (std::size_t a = 0; a < d; ++a) n *= m;
        return n;
    }

    Domain domain_;
    std::size_t resolution_ = 1;
    std::size_t channels_ = 1;
    Vector values_;
};

enum class SchemeKind { grid, jittered_grid, uniform_random, gaussian };

/// How sample points are drawn. The Gaussian scheme is a stress test: its points are
/// not regularly distributed (empirical averages do not converge to the integral).
struct SamplingScheme {
    SchemeKind kind = SchemeKind::grid;
    std::uint64_t seed = 0;
    double jitter = 1.0;          // fraction of a cell for jittered grids
    double gaussian_center = 0.5;
    double gaussian_scale = 0.15;

    static SamplingScheme parse(std::string_view name, std::uint64_t seed = 0) {
        SamplingScheme s;
        s.seed = seed;
        if (name == "grid") s.kind = SchemeKind::grid;
        else if (name == "jitter") s.kind = SchemeKind::jittered_grid;
        else if (name == "uniform") s.kind = SchemeKind::uniform_random;
        else if (name == "gauss") s.kind = SchemeKind::gaussian;
        else throw DomainError("unknown sampling scheme '" + std::string(name) + "' (grid|jitter|uniform|gauss)");
        return s;
    }
};

inline std::string_view scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::grid: return "grid";
        case SchemeKind::jittered_grid: return "jitter";
        case SchemeKind::uniform_random: return "uniform";
        case SchemeKind::gaussian: return "gauss";
    }
    return "grid";
}

namespace detail {

inline std::size_t exact_root(std::size_t n, std::size_t d) {
    const auto m = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(d))));
    std::size_t p = 1;
    for (std::size_t a = 0; a < d; ++a) p *= m;
    require(p == n, "grid sampling needs N to be a perfect d-th power (N = " + std::to_string(n) + ")");
    return m;
}

inline double into_domain(double t, DomainKind kind) {
    if (kind == DomainKind::torus) return t - std::floor(t);
    return std::clamp(t, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

}  // namespace detail

/// Deterministic (given the seed) sample points in the domain.
inline std::vector<Point> sample_points(const Domain& domain, const SamplingScheme& scheme, std::size_t n_points) {
    require(n_points >= 1, "sample_points needs n_points >= 1");
    const std::size_t d = domain.dim;
    std::mt19937_64 rng(scheme.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Point> pts;
    pts.reserve(n_points);

    switch (scheme.kind) {
        case SchemeKind::grid:
        case SchemeKind::jittered_grid: {
            const std::size_t m = detail::exact_root(n_points, d);
            const double h = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < n_points; ++i) {
                Point p(d);
                std::size_t rest = i;
                for (std::size_t a = d; a-- > 0;) {
                    const auto k = static_cast<double>(rest % m);
                    rest /= m;
                    double c = (k + 0.5) * h;
                    if (scheme.kind == SchemeKind::jittered_grid) c += (unit(rng) - 0.5) * scheme.jitter * h;
                    p[a] = detail::into_domain(c, domain.kind);
                }
                pts.push_back(std::move(p));
            }
            break;
        }
        case SchemeKind::uniform_random:
            for (std::size_t i = 0; i < n_points; ++i) {
                Point p(d);
                for (auto& c : p) c = detail::into_domain(unit(rng), domain.kind);
                pts.push_back(std::move(p));
            }
            break;
        case SchemeKind::gaussian:
            for (std::size_t i = 0; i < n_points; ++i) {
                Point p(d);
                for (auto& c : p)
                    c = detail::into_domain(scheme.gaussian_center + scheme.gaussian_scale * normal(rng), domain.kind);
                pts.push_back(std::move(p));
            }
            break;
    }
    return pts;
}

namespace detail {

inline constexpr double kClampTolerance = 1e-9;

inline Vector checked_value(Vector v, double bound) {
    for (double& c : v) {
        if (std::abs(c) > bound + kClampTolerance)
            throw DomainError("function value " + std::to_string(c) + " outside [-L, L]");
        c = std::clamp(c, -bound, bound);
    }
    return v;
}

}  // namespace detail

/// M_N(h): uniform atoms (x_j, h(x_j)).
inline DiscreteMeasure tokenize(const FieldFn& h, const std::vector<Point>& points, const Domain& domain) {
    require(!points.empty(), "tokenize needs at least one point");
    std::vector<Point> locs;
    locs.reserve(points.size());
    for (const auto& x : points) {
        require_dims(x.size() == domain.dim, "sample point has wrong dimension");
        Point z = x;
        const Vector y = detail::checked_value(h(x), domain.value_bound);
        z.insert(z.end(), y.begin(), y.end());
        locs.push_back(std::move(z));
    }
    return DiscreteMeasure::uniform(locs, domain.dim);
}

namespace detail {

/// Discrete stencil of rho_tau on a grid of spacing 1/M, normalised to unit sum.
inline Vector mollifier_stencil(const Mollifier& rho, double tau, std::size_t resolution) {
    const double reach = tau * static_cast<double>(resolution);
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(reach));
    Vector w(static_cast<std::size_t>(2 * half + 1));
    double s = 0.0;
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        const double v = rho.profile(static_cast<double>(i) / reach);
        w[static_cast<std::size_t>(i + half)] = v;
        s += v;
    }
    for (double& v : w) v /= s;
    return w;
}

/// Separable convolution with the product stencil, zero extension on the cube and
/// periodic wrap on the torus.
inline GridFunction convolve(const GridFunction& g, const Vector& stencil) {
    const std::size_t d = g.dim();
    const std::size_t m = g.resolution();
    const auto half = static_cast<std::ptrdiff_t>(stencil.size() / 2);
    const bool periodic = g.domain().kind == DomainKind::torus;
    GridFunction cur = g;
    for (std::size_t axis = 0; axis < d; ++axis) {
        GridFunction next(g.domain(), m, g.channels());
        std::size_t stride = 1;
        for (std::size_t a = axis + 1; a < d; ++a) stride *= m;
        for (std::size_t node = 0; node < g.node_count(); ++node) {
            const auto k = static_cast<std::ptrdiff_t>((node / stride) % m);
            const std::size_t base = node - static_cast<std::size_t>(k) * stride;
            for (std::ptrdiff_t o = -half; o <= half; ++o) {
                std::ptrdiff_t j = k - o;
                if (periodic) {
                    j = ((j % static_cast<std::ptrdiff_t>(m)) + static_cast<std::ptrdiff_t>(m)) % static_cast<std::ptrdiff_t>(m);
                } else if (j < 0 || j >= static_cast<std::ptrdiff_t>(m)) {
                    continue;
                }
                const double w = stencil[static_cast<std::size_t>(o + half)];
                const std::size_t src = base + static_cast<std::size_t>(j) * stride;
                for (std::size_t c = 0; c < g.channels(); ++c) next.at(node, c) += w * cur.at(src, c);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

/// chi_tau = rho_tau * 1_{Omega_tau}, Omega_tau = {dist(x, boundary) > 4 tau}, on an M-node grid.
inline GridFunction interior_cutoff(const Domain& domain, std::size_t resolution, double tau,
                                    const Mollifier& rho = Mollifier()) {
    require(tau > 0.0, "tau must be positive");
    require(static_cast<double>(resolution) * tau >= 8.0 - 1e-9, "grid too coarse for tau (need M >= 8 / tau)");
    GridFunction indicator(domain, resolution, 1);
    bool any = false;
    for (std::size_t i = 0; i < indicator.node_count(); ++i) {
        const bool inside = domain.boundary_distance(indicator.node(i)) > 4.0 * tau;
        indicator.at(i, 0) = inside ? 1.0 : 0.0;
        any = any || inside;
    }
    require(any, "tau too large: the interior set {dist > 4 tau} is empty");
    return detail::convolve(indicator, detail::mollifier_stencil(rho, tau, resolution));
}

/// R_tau h = rho_tau * (h . chi_tau) by grid quadrature with zero extension. Equals h
/// convolved with rho_tau wherever dist(x, boundary) >= 6 tau.
inline GridFunction regularize_rtau(const GridFunction& h, double tau, const Mollifier& rho = Mollifier()) {
    const GridFunction cutoff = interior_cutoff(h.domain(), h.resolution(), tau, rho);
    GridFunction product = h;
    for (std::size_t i = 0; i < h.node_count(); ++i)
        for (std::size_t c = 0; c < h.channels(); ++c) product.at(i, c) *= cutoff.at(i, 0);
    return detail::convolve(product, detail::mollifier_stencil(rho, tau, h.resolution()));
}

/// M_{N,tau}(h) = M_N(R_tau h), with R_tau h interpolated off the fine grid.
inline DiscreteMeasure tokenize_regularized(const GridFunction& h, const std::vector<Point>& points, double tau,
                                            const Mollifier& rho = Mollifier()) {
    return tokenize(regularize_rtau(h, tau, rho).evaluator(), points, h.domain());
}

/// (F_eps mu)(x) = vol / eps^d * sum_j w_j rho((x_j - x) / eps) y_j. Returns one row per query.
inline std::vector<Vector> decode_feps(const DiscreteMeasure& mu, const std::vector<Point>& queries, double eps,
                                       const Domain& domain = Domain(), const Mollifier& rho = Mollifier()) {
    require(eps > 0.0, "eps must be positive");
    const std::size_t d = mu.split();
    require_dims(d == domain.dim, "measure split differs from domain dimension");
    const std::size_t n = mu.value_dim();
    const double scale = domain.volume() / std::pow(eps, static_cast<double>(d));
    std::vector<Vector> out;
    out.reserve(queries.size());
    Vector diff(d);
    for (const auto& x : queries) {
        require_dims(x.size() == d, "query has wrong dimension");
        Vector v(n, 0.0);
        for (const auto& a : mu.atoms()) {
            for (std::size_t i = 0; i < d; ++i) {
                double t = a.location[i] - x[i];
                if (domain.kind == DomainKind::torus) t -= std::round(t);
                diff[i] = t / eps;
            }
            const double k = rho(diff);
            if (k == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) v[c] += scale * a.weight * k * a.location[d + c];
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace fgt
