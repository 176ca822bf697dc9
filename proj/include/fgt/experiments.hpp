#pragma once

// Experiment drivers shared by the command-line runner and the acceptance binary. Each one
// returns a numeric table plus a verdict; the caller decides where the table goes.

#include "fgt/spectral.hpp"
#include "fgt/training.hpp"
#include "fgt/transport.hpp"

#include <chrono>

namespace fgt {

struct Table {
    std::vector<std::string> columns;
    std::vector<Vector> rows;
    bool pass = true;
    std::string summary;

    [[nodiscard]] Vector column(std::size_t c) const {
        Vector out;
        for (const auto& r : rows) out.push_back(r.at(c));
        return out;
    }
};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---- trend predicates ---------------------------------------------------------------------

inline bool strictly_decreasing(const Vector& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

/// Nonincreasing except for at most one adjacent rise of at most `slack` relative.
inline bool nonincreasing_up_to_one(const Vector& v, double slack) {
    std::size_t rises = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] <= v[i - 1]) continue;
        if (++rises > 1 || v[i] > v[i - 1] * (1.0 + slack)) return false;
    }
    return true;
}

/// Nondecreasing except for at most one adjacent drop of at most `slack` relative.
inline bool nondecreasing_up_to_one(const Vector& v, double slack) {
    Vector r(v.rbegin(), v.rend());
    return nonincreasing_up_to_one(r, slack);
}

// ---- W1 tokenization convergence -----------------------------------------------------------

struct W1ConvergenceSpec {
    std::vector<std::size_t> sizes{16, 64, 256, 1024};
    std::size_t reference = 4096;
    double constant = 3.0;
};

/// h(x) = sin(2 pi x) + cos(6 pi x) on [0,1], grid tokens; W1(M_N, M_ref).
inline Table w1_convergence(const W1ConvergenceSpec& spec = {}) {
    const Domain dom(1, DomainKind::unit_cube, 2.0);
    const FieldFn h = [](std::span<const double> x) {
        return Vector{std::sin(2.0 * kPi * x[0]) + std::cos(6.0 * kPi * x[0])};
    };
    const auto grid = SamplingScheme::parse("grid");
    const auto ref = tokenize(h, sample_points(dom, grid, spec.reference), dom);
    Table t{{"N", "w1", "N_times_w1", "bound"}, {}, true, {}};
    for (std::size_t n : spec.sizes) {
        const double w = w1_distance(tokenize(h, sample_points(dom, grid, n), dom), ref).distance;
        const double bound = spec.constant / static_cast<double>(n);
        t.rows.push_back({static_cast<double>(n), w, w * static_cast<double>(n), bound});
        t.pass = t.pass && w <= bound;
    }
    const bool dec = strictly_decreasing(t.column(1));
    t.pass = t.pass && dec;
    double worst = 0.0;
    for (const auto& r : t.rows) worst = std::max(worst, r[2]);
    t.summary = std::string(dec ? "strictly decreasing" : "NOT strictly decreasing") + ", max N*W1 = " +
                num(worst) + " (bound " + num(spec.constant) + ")";
    return t;
}

// ---- decoder convergence ------------------------------------------------------------------

struct DecodeSpec {
    std::size_t tokens = 4096;
    std::vector<double> eps{0.1, 0.05};
    std::size_t queries = 241;
    double ratio_lo = 2.5, ratio_hi = 6.0;
};

/// Interior sup error of F_eps(gamma_h) against h, on queries at distance >= 0.2 from the
/// boundary (at least 2 eps for every eps used).
inline Table decode_convergence(const DecodeSpec& spec = {}) {
    const Domain dom(1, DomainKind::unit_cube, 1.0);
    auto h = [](double x) { return 0.6 * std::sin(2.0 * kPi * x) + 0.3 * std::cos(2.0 * kPi * x); };
    const FieldFn f = [&](std::span<const double> x) { return Vector{h(x[0])}; };
    const auto mu = tokenize(f, sample_points(dom, SamplingScheme::parse("grid"), spec.tokens), dom);
    std::vector<Point> qs;
    for (std::size_t i = 0; i < spec.queries; ++i)
        qs.push_back({0.2 + 0.6 * static_cast<double>(i) / static_cast<double>(spec.queries - 1)});
    Table t{{"eps", "sup_error"}, {}, true, {}};
    for (double e : spec.eps) {
        const auto out = decode_feps(mu, qs, e, dom);
        double err = 0.0;
        for (std::size_t i = 0; i < qs.size(); ++i) err = std::max(err, std::abs(out[i][0] - h(qs[i][0])));
        t.rows.push_back({e, err});
    }
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        const double ratio = t.rows[i - 1][1] / t.rows[i][1];
        t.pass = t.pass && ratio >= spec.ratio_lo && ratio <= spec.ratio_hi;
        t.summary += (t.summary.empty() ? "" : ", ") + std::string("ratio ") + num(ratio);
    }
    return t;
}

// ---- spectral regularizer convergence -------------------------------------------------------

struct SpectralSpec {
    std::vector<double> etas{1e-1, 1e-2, 1e-3, 1e-4};
    Vector coefficients{0.5, 0.02, 2e-3, 2e-4, 2e-5};  // on psi_1..psi_5, d = 1
    int r = 2;
    std::size_t tokens = 4096;
    std::size_t quadrature = 8192;
    double final_tol = 1e-2;
};

inline Table spectral_convergence(const SpectralSpec& spec = {}) {
    const Domain dom(1, DomainKind::unit_cube, 1.0);
    const auto full = std::make_shared<const SineBasis>(1, spec.coefficients.size());
    auto h = [&](double x) {
        double v = 0.0;
        for (std::size_t k = 0; k < spec.coefficients.size(); ++k) v += spec.coefficients[k] * full->eval(k, std::span<const double>(&x, 1));
        return v;
    };
    const FieldFn f = [&](std::span<const double> x) { return Vector{h(x[0])}; };
    const auto mu = tokenize(f, sample_points(dom, SamplingScheme::parse("grid"), spec.tokens), dom);
    Table t{{"eta", "K", "l2_error"}, {}, true, {}};
    for (double eta : spec.etas) {
        SpectralConfig cfg;
        cfg.r = spec.r;
        cfg.eta = eta;
        cfg.K = k_schedule(eta, 1, spec.r);
        const auto s = s_eta_k(mu, cfg, SineBasis(1, cfg.K));
        // Midpoint quadrature of |S - h|^2.
        double acc = 0.0;
        for (std::size_t i = 0; i < spec.quadrature; ++i) {
            const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(spec.quadrature);
            const double e = s(std::span<const double>(&x, 1))[0] - h(x);
            acc += e * e;
        }
        t.rows.push_back({eta, static_cast<double>(cfg.K), std::sqrt(acc / static_cast<double>(spec.quadrature))});
    }
    const auto err = t.column(2);
    const bool dec = strictly_decreasing(err);
    t.pass = dec && err.back() < spec.final_tol;
    t.summary = std::string(dec ? "monotone" : "NOT monotone") + ", final error " + num(err.back());
    return t;
}

// ---- cross-attention identity ---------------------------------------------------------------

struct CrossAttnSpec {
    std::size_t instances = 500;
    std::size_t max_atoms = 8;
    std::uint64_t seed = 6;
    double tol = 1e-10;
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

inline DiscreteMeasure random_weighted_measure(std::mt19937_64& rng, std::size_t atoms, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.1, 1.0);
    std::vector<Atom> a;
    double total = 0.0;
    for (std::size_t i = 0; i < atoms; ++i) {
        Point p(dim);
        for (auto& v : p) v = u(rng);
        a.push_back({p, w(rng)});
        total += a.back().weight;
    }
    for (auto& x : a) x.weight /= total;
    return DiscreteMeasure(std::move(a), dim, 1);
}

}  // namespace detail

/// Product attention over mu (x) nu under cross-constrained blocks against direct
/// cross-attention of the query part over mu. Max relative error per instance.
inline Table crossattn_check(const CrossAttnSpec& spec = {}) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> size(1, spec.max_atoms), dim(1, 4);
    Table t{{"instance", "N", "K", "max_rel_error"}, {}, true, {}};
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.instances; ++i) {
        const std::size_t N = size(rng), K = size(rng), ds = dim(rng), dr = dim(rng);
        const auto mu = detail::random_weighted_measure(rng, N, ds);
        const auto nu = detail::random_weighted_measure(rng, K, dr);
        const auto S = static_cast<Eigen::Index>(ds), R = static_cast<Eigen::Index>(dr);
        BlockMatrices b{detail::gaussian_matrix(rng, 3, S), detail::gaussian_matrix(rng, 3, R),
                        detail::gaussian_matrix(rng, 3, S), detail::gaussian_matrix(rng, 3, R),
                        detail::gaussian_matrix(rng, 2, S), detail::gaussian_matrix(rng, 2, R)};
        b = constrain(std::move(b), BlockPattern::query_to_input);
        const auto prod = product_measure(mu, nu);
        double inst = 0.0;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (const auto& atom : nu.atoms()) {
            Point s(ds);
            for (auto& v : s) v = u(rng);
            const ProductToken xi{s, atom.location};
            const Vector lhs = product_attend(prod, xi, b, 3.0);
            const Vector rhs = cross_attend(xi.r, mu, b.Q_r, b.K_s, b.V_s, 3.0);
            for (std::size_t c = 0; c < lhs.size(); ++c) inst = std::max(inst, relative_error(lhs[c], rhs[c], 1e-300));
        }
        worst = std::max(worst, inst);
        t.rows.push_back({static_cast<double>(i), static_cast<double>(N), static_cast<double>(K), inst});
    }
    t.pass = worst <= spec.tol;
    t.summary = "max relative error " + num(worst);
    return t;
}

// ---- gradient checks -----------------------------------------------------------------------

struct GradCheckSpec {
    double step = 1e-5;
    double tol = 1e-4;
    std::uint64_t seed = 3;
};

/// (a) one attention layer on random tokens; (b) the desk query-mode loss on a 2-token,
/// 1-query instance.
inline Table gradcheck_experiment(const GradCheckSpec& spec = {}) {
    Table t{{"case", "entries", "max_rel_error"}, {}, true, {}};
    std::mt19937_64 rng(spec.seed);

    LayerParams layer = init_layer(rng, 3, 4, 2, 3, 3);
    const Matrix tokens = detail::gaussian_matrix(rng, 5, 3);
    const Vector w(5, 0.2);
    const Matrix probe = detail::gaussian_matrix(rng, 5, 5);
    const auto a = grad_check(
        [&] {
            std::vector<Matrix*> ps;
            layer.visit("layer", [&](const std::string&, Matrix& m) { ps.push_back(&m); });
            return ps;
        }(),
        [&](auto& ops) {
            const auto x = ops.constant(tokens);
            const auto out = layer_apply(ops, layer, x, x, w, 1);
            return ops.sum(ops.mul(out, ops.constant(probe)));
        },
        spec.step);
    t.rows.push_back({0.0, static_cast<double>(a.entries), a.max_rel_error});

    auto cfg = TrainConfig::desk(TrainMode::query);
    cfg.n_points = 2;
    cfg.k_train = 1;
    cfg.batch = 1;
    const FourierTeacher teacher(cfg.teacher);
    const auto s = make_sample(teacher, cfg.sampler(), spec.seed, SamplingScheme::parse("uniform", spec.seed), 2,
                               uniform_queries(1, cfg.model.d, spec.seed + 1), TrainMode::query);
    QueryModel m = initial_query(cfg);
    const auto b = grad_check(parameter_list(m), [&](auto& ops) { return loss_value(ops, m, {s}); }, spec.step);
    t.rows.push_back({1.0, static_cast<double>(b.entries), b.max_rel_error});

    t.pass = a.max_rel_error < spec.tol && b.max_rel_error < spec.tol;
    t.summary = "layer " + num(a.max_rel_error) + ", query loss " + num(b.max_rel_error) +
                " (worst analytic " + num(b.worst_analytic) + " vs numeric " + num(b.worst_numeric) + ")";
    return t;
}

// ---- evaluation sweeps ------------------------------------------------------------------------

/// Median (and mean, half-width) rel L2 of a trained query model over input sizes.
template <class Model>
Table resolution_transfer(const Model& m, const TrainConfig& cfg, const FourierTeacher& teacher,
                          const std::vector<std::size_t>& sizes, std::size_t n_functions, double slack = 0.05) {
    Table t{{"N", "median_rel_l2", "mean_rel_l2", "half_width"}, {}, true, {}};
    for (std::size_t n : sizes) {
        EvalSpec e;
        e.mode = cfg.mode;
        e.n_points = n;
        e.n_functions = n_functions;
        const auto r = evaluate(m, teacher, cfg.sampler(), e);
        t.rows.push_back({static_cast<double>(n), r.median_l2, r.mean_l2, r.half_width_l2});
    }
    t.pass = nonincreasing_up_to_one(t.column(1), slack);
    t.summary = std::string(t.pass ? "median nonincreasing" : "median NOT nonincreasing") + " (slack " + num(slack) + ")";
    return t;
}

inline const std::vector<std::string>& robustness_schemes() {
    static const std::vector<std::string> s{"grid", "jitter", "uniform", "gauss"};
    return s;
}

/// Median rel L2 per sampling scheme at fixed N; rows follow robustness_schemes().
template <class Model>
Table sampling_robustness(const Model& m, const TrainConfig& cfg, const FourierTeacher& teacher, std::size_t n_points,
                          std::size_t n_functions, double slack = 0.10) {
    Table t{{"scheme", "median_rel_l2", "mean_rel_l2", "half_width"}, {}, true, {}};
    for (std::size_t i = 0; i < robustness_schemes().size(); ++i) {
        EvalSpec e;
        e.mode = cfg.mode;
        e.n_points = n_points;
        e.n_functions = n_functions;
        e.scheme = robustness_schemes()[i];
        const auto r = evaluate(m, teacher, cfg.sampler(), e);
        t.rows.push_back({static_cast<double>(i), r.median_l2, r.mean_l2, r.half_width_l2});
    }
    t.pass = nondecreasing_up_to_one(t.column(1), slack);
    t.summary = std::string(t.pass ? "grid <= jitter <= uniform <= gauss" : "ordering violated") + " (slack " +
                num(slack) + ")";
    return t;
}

}  // namespace fgt
