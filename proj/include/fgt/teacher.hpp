#pragma once

// Fixed random one-layer Fourier teacher on the torus and the random periodic input fields
// it is trained against.

#include "fgt/encode.hpp"

#include "json.hpp"

#include <complex>
#include <random>

namespace fgt {

using Complex = std::complex<double>;

/// Frequency vectors k in [-(m-1), m-1]^d kept by the teacher: 0 plus one representative of
/// each pair {k, -k} (the last nonzero component positive). The partner -k carries the
/// conjugate weight.
inline std::vector<std::vector<int>> half_mode_set(std::size_t d, std::size_t modes) {
    require(d >= 1 && modes >= 1, "mode set needs d >= 1 and modes >= 1");
    const int top = static_cast<int>(modes) - 1;
    std::vector<std::vector<int>> out;
    std::vector<int> k(d, -top);
    while (true) {
        int last = 0;
        for (std::size_t a = d; a-- > 0;)
            if (k[a] != 0) {
                last = k[a];
                break;
            }
        if (last >= 0) out.push_back(k);
        std::size_t a = 0;
        while (a < d && k[a] == top) k[a++] = -top;
        if (a == d) break;
        ++k[a];
    }
    // Zero first, then by increasing |k|^2, ties lexicographic.
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        long nx = 0, ny = 0;
        for (int v : x) nx += v * v;
        for (int v : y) ny += v * v;
        return nx != ny ? nx < ny : x < y;
    });
    return out;
}

struct TeacherConfig {
    std::size_t d = 1;
    std::size_t modes = 4;        // per axis, counting frequency 0
    std::size_t width = 8;        // hidden channels
    std::size_t projection = 32;  // hidden width of the pointwise projection
    std::size_t grid = 64;        // resolution the teacher is applied at
    double output_gain = 0.5;
    std::uint64_t seed = 7;

    /// The 2-D, 64x64, 16-channel configuration.
    static TeacherConfig full_2d() {
        TeacherConfig c;
        c.d = 2;
        c.modes = 6;
        c.width = 16;
        c.projection = 128;
        return c;
    }

    void validate() const {
        require(d == 1 || d == 2, "teacher supports d = 1 or 2");
        require(modes >= 1 && width >= 1 && projection >= 1, "teacher widths must be positive");
        require(grid >= 2 * modes + 2, "teacher grid must have at least 2 * modes + 2 nodes per axis");
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"d", d}, {"modes", modes}, {"width", width}, {"projection", projection}, {"grid", grid},
                {"output_gain", output_gain}, {"seed", seed}, {"activation", "tanh"}};
    }

    static TeacherConfig from_json(const nlohmann::json& j) {
        TeacherConfig c;
        c.d = j.value("d", c.d);
        c.modes = j.value("modes", c.modes);
        c.width = j.value("width", c.width);
        c.projection = j.value("projection", c.projection);
        c.grid = j.value("grid", c.grid);
        c.output_gain = j.value("output_gain", c.output_gain);
        c.seed = j.value("seed", c.seed);
        require(j.value("activation", std::string("tanh")) == "tanh", "only the tanh teacher is supported");
        c.validate();
        return c;
    }
};

/// v = a h + b (lift) -> truncated DFT -> per-mode W x W complex weights -> inverse DFT
/// -> tanh -> P2 tanh(P1 . + c1) + c2 (projection). Immutable after construction.
class FourierTeacher {
public:
    explicit FourierTeacher(TeacherConfig cfg) : cfg_(cfg), modes_(half_mode_set(cfg.d, cfg.modes)) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.seed);
        std::normal_distribution<double> n(0.0, 1.0);
        const auto W = static_cast<Eigen::Index>(cfg_.width), P = static_cast<Eigen::Index>(cfg_.projection);
        lift_w_.resize(cfg_.width);
        lift_b_.resize(cfg_.width);
        for (auto& v : lift_w_) v = n(rng);
        for (auto& v : lift_b_) v = 0.1 * n(rng);
        const double spec_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
        weights_.assign(modes_.size(), Eigen::MatrixXcd(W, W));
        for (std::size_t k = 0; k < modes_.size(); ++k) {
            const bool zero = is_zero_mode(k);
            for (Eigen::Index i = 0; i < W; ++i)
                for (Eigen::Index j = 0; j < W; ++j) {
                    const double re = n(rng), im = zero ? 0.0 : n(rng);
                    weights_[k](i, j) = Complex(re, im) * spec_scale;
                }
        }
        P1_ = Matrix(P, W);
        c1_ = Vector(cfg_.projection);
        P2_ = Vector(cfg_.projection);
        for (Eigen::Index i = 0; i < P; ++i)
            for (Eigen::Index j = 0; j < W; ++j) P1_(i, j) = n(rng) / std::sqrt(static_cast<double>(W));
        for (auto& v : c1_) v = 0.1 * n(rng);
        for (auto& v : P2_) v = cfg_.output_gain * n(rng) / std::sqrt(static_cast<double>(P));
        c2_ = 0.0;
    }

    [[nodiscard]] const TeacherConfig& config() const { return cfg_; }
    [[nodiscard]] const std::vector<std::vector<int>>& modes() const { return modes_; }
    [[nodiscard]] const Eigen::MatrixXcd& spectral_weight(std::size_t mode) const { return weights_.at(mode); }
    [[nodiscard]] const Vector& lift_weight() const { return lift_w_; }
    [[nodiscard]] const Vector& lift_bias() const { return lift_b_; }

    /// Zeroes lift and projection biases (used by the linearity checks).
    void clear_biases() {
        std::fill(lift_b_.begin(), lift_b_.end(), 0.0);
        std::fill(c1_.begin(), c1_.end(), 0.0);
        c2_ = 0.0;
    }

    /// Real parameters: the zero mode has real weights; every other kept mode is complex.
    [[nodiscard]] std::size_t parameter_count() const {
        const std::size_t W = cfg_.width, P = cfg_.projection;
        std::size_t spectral = 0;
        for (std::size_t k = 0; k < modes_.size(); ++k) spectral += W * W * (is_zero_mode(k) ? 1 : 2);
        return 2 * W + spectral + P * W + P + P + 1;
    }

    /// Pre-activation hidden field (W channels) and the largest imaginary part produced by
    /// the complex inverse transform.
    struct Hidden {
        GridFunction field;
        double imag_residue = 0.0;
    };

    [[nodiscard]] Hidden hidden(const GridFunction& h) const {
        check_input(h);
        const std::size_t M = h.resolution(), nodes = h.node_count(), W = cfg_.width;
        const auto table = twiddles(M);
        const double inv = 1.0 / static_cast<double>(nodes);
        // Lifted channels.
        std::vector<Vector> v(W, Vector(nodes));
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t i = 0; i < nodes; ++i) v[c][i] = lift_w_[c] * h.at(i, 0) + lift_b_[c];

        Hidden out{GridFunction(h.domain(), M, W), 0.0};
        std::vector<std::vector<Complex>> acc(W, std::vector<Complex>(nodes, Complex(0.0, 0.0)));
        std::vector<Complex> basis(nodes);
        Eigen::VectorXcd coeff(static_cast<Eigen::Index>(W));
        for (std::size_t k = 0; k < modes_.size(); ++k) {
            for (std::size_t i = 0; i < nodes; ++i) basis[i] = mode_value(table, modes_[k], h.multi_index(i), M);
            for (std::size_t c = 0; c < W; ++c) {
                Complex s(0.0, 0.0);
                for (std::size_t i = 0; i < nodes; ++i) s += v[c][i] * std::conj(basis[i]);
                coeff(static_cast<Eigen::Index>(c)) = s * inv;
            }
            const Eigen::VectorXcd mixed = weights_[k] * coeff;
            const bool zero = is_zero_mode(k);
            for (std::size_t c = 0; c < W; ++c) {
                const Complex m = mixed(static_cast<Eigen::Index>(c));
                for (std::size_t i = 0; i < nodes; ++i) {
                    acc[c][i] += m * basis[i];
                    if (!zero) acc[c][i] += std::conj(m) * std::conj(basis[i]);  // the -k partner
                }
            }
        }
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t i = 0; i < nodes; ++i) {
                out.field.at(i, c) = acc[c][i].real();
                out.imag_residue = std::max(out.imag_residue, std::abs(acc[c][i].imag()));
            }
        return out;
    }

    /// A(h) on the grid of h.
    [[nodiscard]] GridFunction apply(const GridFunction& h) const {
        const Hidden hid = hidden(h);
        GridFunction out(h.domain(), h.resolution(), 1);
        const auto P = static_cast<Eigen::Index>(cfg_.projection), W = static_cast<Eigen::Index>(cfg_.width);
        Eigen::VectorXd a(W);
        for (std::size_t i = 0; i < h.node_count(); ++i) {
            for (Eigen::Index c = 0; c < W; ++c) a(c) = std::tanh(hid.field.at(i, static_cast<std::size_t>(c)));
            const Eigen::VectorXd z = P1_ * a;
            double y = c2_;
            for (Eigen::Index p = 0; p < P; ++p)
                y += P2_[static_cast<std::size_t>(p)] * std::tanh(z(p) + c1_[static_cast<std::size_t>(p)]);
            out.at(i, 0) = y;
        }
        return out;
    }

    [[nodiscard]] nlohmann::json manifest() const {
        auto j = cfg_.to_json();
        j["parameter_count"] = parameter_count();
        return j;
    }

private:
    [[nodiscard]] bool is_zero_mode(std::size_t k) const {
        return std::all_of(modes_[k].begin(), modes_[k].end(), [](int v) { return v == 0; });
    }

    void check_input(const GridFunction& h) const {
        require(h.domain().kind == DomainKind::torus, "teacher acts on torus grids");
        require_dims(h.dim() == cfg_.d && h.channels() == 1, "teacher input must be a scalar field of matching dimension");
        require(h.resolution() >= 2 * cfg_.modes + 2, "grid resolution below 2 * modes + 2");
    }

    // table[k + top][j] = exp(2 pi i k j / M)
    [[nodiscard]] std::vector<std::vector<Complex>> twiddles(std::size_t M) const {
        const int top = static_cast<int>(cfg_.modes) - 1;
        std::vector<std::vector<Complex>> t(static_cast<std::size_t>(2 * top + 1), std::vector<Complex>(M));
        for (int k = -top; k <= top; ++k)
            for (std::size_t j = 0; j < M; ++j) {
                // Reduce k j mod M first so the angle stays small and shifts are exact.
                const auto r = static_cast<double>(((static_cast<long>(k) * static_cast<long>(j)) % static_cast<long>(M) +
                                                    static_cast<long>(M)) %
                                                   static_cast<long>(M));
                const double a = 2.0 * kPi * r / static_cast<double>(M);
                t[static_cast<std::size_t>(k + top)][j] = Complex(std::cos(a), std::sin(a));
            }
        return t;
    }

    [[nodiscard]] Complex mode_value(const std::vector<std::vector<Complex>>& table, const std::vector<int>& k,
                                     const std::vector<std::size_t>& idx, std::size_t) const {
        const int top = static_cast<int>(cfg_.modes) - 1;
        Complex e(1.0, 0.0);
        for (std::size_t a = 0; a < k.size(); ++a) e *= table[static_cast<std::size_t>(k[a] + top)][idx[a]];
        return e;
    }

    TeacherConfig cfg_;
    std::vector<std::vector<int>> modes_;
    Vector lift_w_, lift_b_;
    std::vector<Eigen::MatrixXcd> weights_;
    Matrix P1_;
    Vector c1_, P2_;
    double c2_ = 0.0;
};

inline GridFunction teacher_apply(const GridFunction& h, const FourierTeacher& teacher) { return teacher.apply(h); }

// ---- random input fields ------------------------------------------------------------

/// h(x) = scale * sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x) over the nonzero half mode set
/// with max |k_l| <= max_frequency.
struct RandomField {
    std::size_t d = 1;
    std::vector<std::vector<int>> freqs;
    Vector cos_coeff, sin_coeff;
    double scale = 1.0;

    [[nodiscard]] double operator()(std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t t = 0; t < freqs.size(); ++t) {
            double phase = 0.0;
            for (std::size_t a = 0; a < d; ++a) phase += freqs[t][a] * x[a];
            phase *= 2.0 * kPi;
            s += cos_coeff[t] * std::cos(phase) + sin_coeff[t] * std::sin(phase);
        }
        return scale * s;
    }

    [[nodiscard]] GridFunction on_grid(std::size_t resolution) const {
        return GridFunction::from_function(Domain(d, DomainKind::torus, 1.0), resolution, 1,
                                           [this](std::span<const double> x) { return Vector{(*this)(x)}; });
    }

    [[nodiscard]] FieldFn evaluator() const {
        return [f = *this](std::span<const double> x) { return Vector{f(x)}; };
    }
};

struct RandomFieldSampler {
    std::size_t d = 1;
    std::size_t max_frequency = 8;
    double decay = 2.0;        // coefficient std (1 + |k|)^-decay
    double target_sup = 0.9;   // exact on the reference grid
    std::size_t grid = 64;     // reference grid for the rescale

    [[nodiscard]] RandomField sample(std::uint64_t seed) const {
        require(d >= 1 && max_frequency >= 1 && grid >= 2, "sampler needs d, max frequency and grid positive");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        RandomField f;
        f.d = d;
        for (auto& k : half_mode_set(d, max_frequency + 1)) {
            if (std::all_of(k.begin(), k.end(), [](int v) { return v == 0; })) continue;
            double norm2 = 0.0;
            for (int v : k) norm2 += v * v;
            const double sd = std::pow(1.0 + std::sqrt(norm2), -decay);
            f.freqs.push_back(k);
            f.cos_coeff.push_back(sd * n(rng));
            f.sin_coeff.push_back(sd * n(rng));
        }
        const double sup = f.on_grid(grid).sup_norm();
        if (sup > 0.0) f.scale = target_sup / sup;
        return f;
    }

    /// The field sampled on the reference grid.
    [[nodiscard]] GridFunction sample_field(std::uint64_t seed) const { return sample(seed).on_grid(grid); }
};

/// Periodic multilinear interpolation of a torus grid function, exact at nodes.
inline std::vector<Vector> interpolate_periodic(const GridFunction& g, const std::vector<Point>& points) {
    require(g.domain().kind == DomainKind::torus, "periodic interpolation needs a torus grid");
    std::vector<Vector> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(g.interpolate(p));
    return out;
}

}  // namespace fgt
