#pragma once

// Measure-theoretic multi-head attention with coordinate passthrough, pointwise MLP
// blocks and the diamond-composed stack. Batched forms are templated on an Ops policy
// (EvalOps or TapeOps); the per-token API at the bottom wraps them.

#include "fgt/diff.hpp"
#include "fgt/measure.hpp"

#include "json.hpp"

#include <map>
#include <random>
#include <string>

namespace fgt {

struct HeadParams {
    Matrix Q, K, V, W;  // k x D, k x D, head_dim x D, d'' x head_dim

    [[nodiscard]] Eigen::Index key_dim() const { return Q.rows(); }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".Q", Q);
        f(prefix + ".K", K);
        f(prefix + ".V", V);
        f(prefix + ".W", W);
    }
};

struct LayerParams {
    Matrix W_L;  // d'' x D
    std::vector<HeadParams> heads;

    [[nodiscard]] Eigen::Index in_dim() const { return W_L.cols(); }
    [[nodiscard]] Eigen::Index out_value_dim() const { return W_L.rows(); }

    void validate() const {
        for (const auto& h : heads) {
            require_dims(h.Q.cols() == in_dim() && h.K.cols() == in_dim() && h.V.cols() == in_dim(),
                         "head matrices must act on the layer input width");
            require_dims(h.K.rows() == h.Q.rows() && h.Q.rows() >= 1, "query and key widths must agree");
            require_dims(h.W.cols() == h.V.rows(), "head output matrix must match the value width");
            require_dims(h.W.rows() == out_value_dim(), "head output width differs from the layer output width");
        }
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".W_L", W_L);
        for (std::size_t h = 0; h < heads.size(); ++h) heads[h].visit(prefix + ".head" + std::to_string(h), f);
    }
};

/// H(z) = A_m tanh(... tanh(A_1 z + b_1) ...) + b_m; `residual` adds the value part of z.
struct MlpParams {
    std::vector<Matrix> weights;  // out x in
    std::vector<Matrix> biases;   // 1 x out
    bool residual = false;
    bool linear = false;          // no activation at all (identity test cases)

    [[nodiscard]] Eigen::Index in_dim() const { return weights.front().cols(); }
    [[nodiscard]] Eigen::Index out_dim() const { return weights.back().rows(); }

    void validate() const {
        require_dims(!weights.empty() && weights.size() == biases.size(), "MLP needs matching weights and biases");
        for (std::size_t i = 0; i < weights.size(); ++i) {
            require_dims(biases[i].rows() == 1 && biases[i].cols() == weights[i].rows(), "MLP bias width mismatch");
            if (i > 0) require_dims(weights[i].cols() == weights[i - 1].rows(), "MLP consecutive widths differ");
        }
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            f(prefix + ".A" + std::to_string(i), weights[i]);
            f(prefix + ".b" + std::to_string(i), biases[i]);
        }
    }
};

/// Where the constant-value warp w_{y0}(x, y) = (x, y0) is applied.
enum class WarpMode {
    none,              // plain stack
    token_only,        // pull-back on the query token; layer 1 sees the original measure
    token_and_measure  // query token and measure both warped: outputs depend on x only
};

inline WarpMode parse_warp_mode(std::string_view s) {
    if (s == "none") return WarpMode::none;
    if (s == "token") return WarpMode::token_only;
    if (s == "token_and_measure") return WarpMode::token_and_measure;
    throw DomainError("unknown warp mode '" + std::string(s) + "' (none|token|token_and_measure)");
}

struct StackConfig {
    std::size_t d = 1;              // spatial dimension
    std::size_t n = 1;              // value width of input and output
    std::size_t n_layers = 2;
    std::vector<std::size_t> value_widths;      // d_1..d_{L+1}; d_1 = d_{L+1} = n
    std::vector<std::size_t> attention_widths;  // d'_1..d'_L
    std::size_t heads = 2;
    std::size_t key_dim = 8;
    std::size_t head_dim = 8;
    std::vector<std::size_t> mlp_hidden;        // hidden widths of every F_l
    Vector y0;
    WarpMode warp = WarpMode::none;
    double clip_inner = 0.5;
    double clip_outer = 1.0;

    /// Constructive widths: interior 4d + 4n unless overridden.
    static StackConfig with_default_widths(std::size_t d, std::size_t n, std::size_t layers) {
        StackConfig c;
        c.d = d;
        c.n = n;
        c.n_layers = layers;
        const std::size_t inner = 4 * d + 4 * n;
        c.value_widths.assign(layers + 1, inner);
        c.value_widths.front() = n;
        c.value_widths.back() = n;
        c.attention_widths.assign(layers, inner);
        c.mlp_hidden = {inner};
        c.y0.assign(n, 0.0);
        return c;
    }

    void validate() const {
        require(n_layers >= 1, "stack needs at least one layer");
        require_dims(value_widths.size() == n_layers + 1, "value_widths must have n_layers + 1 entries");
        require_dims(attention_widths.size() == n_layers, "attention_widths must have n_layers entries");
        require_dims(value_widths.front() == n && value_widths.back() == n, "width schedule must start and end at n");
        require_dims(y0.size() == n, "warp constant must have n entries");
        require(key_dim >= 1, "key_dim must be positive");
        SmoothClip(clip_inner, clip_outer);
    }
};

struct StackParams {
    StackConfig config;
    std::vector<LayerParams> layers;
    std::vector<MlpParams> mlps;

    template <class F>
    void visit(F&& f) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].visit("layer" + std::to_string(l), f);
            mlps[l].visit("mlp" + std::to_string(l), f);
        }
    }
};

// ---- initialisation -------------------------------------------------------

/// Weights N(0, 1/fan_in), zero biases.
inline Matrix init_weight(std::mt19937_64& rng, Eigen::Index out, Eigen::Index in) {
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Matrix m(out, in);
    for (Eigen::Index i = 0; i < out; ++i)
        for (Eigen::Index j = 0; j < in; ++j) m(i, j) = nd(rng);
    return m;
}

inline MlpParams init_mlp(std::mt19937_64& rng, const std::vector<std::size_t>& widths, bool residual = false) {
    require(widths.size() >= 2, "MLP needs at least input and output widths");
    MlpParams p;
    p.residual = residual;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const auto in = static_cast<Eigen::Index>(widths[i]), out = static_cast<Eigen::Index>(widths[i + 1]);
        p.weights.push_back(init_weight(rng, out, in));
        p.biases.push_back(Matrix::Zero(1, out));
    }
    return p;
}

inline LayerParams init_layer(std::mt19937_64& rng, std::size_t in_dim, std::size_t out_value, std::size_t heads,
                              std::size_t key_dim, std::size_t head_dim) {
    const auto D = static_cast<Eigen::Index>(in_dim);
    LayerParams p;
    p.W_L = init_weight(rng, static_cast<Eigen::Index>(out_value), D);
    for (std::size_t h = 0; h < heads; ++h) {
        HeadParams hp;
        hp.Q = init_weight(rng, static_cast<Eigen::Index>(key_dim), D);
        hp.K = init_weight(rng, static_cast<Eigen::Index>(key_dim), D);
        hp.V = init_weight(rng, static_cast<Eigen::Index>(head_dim), D);
        hp.W = init_weight(rng, static_cast<Eigen::Index>(out_value), static_cast<Eigen::Index>(head_dim));
        p.heads.push_back(std::move(hp));
    }
    return p;
}

inline StackParams init_stack(const StackConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    StackParams s;
    s.config = cfg;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        s.layers.push_back(init_layer(rng, cfg.d + cfg.value_widths[l], cfg.attention_widths[l], cfg.heads, cfg.key_dim,
                                      cfg.head_dim));
        std::vector<std::size_t> widths{cfg.d + cfg.attention_widths[l]};
        widths.insert(widths.end(), cfg.mlp_hidden.begin(), cfg.mlp_hidden.end());
        widths.push_back(cfg.value_widths[l + 1]);
        s.mlps.push_back(init_mlp(rng, widths));
    }
    return s;
}

// ---- batched forward (Ops-generic) ------------------------------------------

namespace detail {

inline void require_positive_mass(const Vector& w) {
    double s = 0.0;
    for (double v : w) s += v;
    require(s > 0.0, "attention over a measure with zero total weight");
}

}  // namespace detail

/// Att(z) for each row z of `queries`, attending over the atoms `keys` with weights w.
template <class Ops>
typename Ops::Value head_attend(Ops& ops, const HeadParams& h, const typename Ops::Value& queries,
                                const typename Ops::Value& keys, const Vector& w) {
    detail::require_positive_mass(w);
    const auto q = ops.matmul_nt(queries, ops.param(h.Q));
    const auto k = ops.matmul_nt(keys, ops.param(h.K));
    const auto logits = ops.scale(ops.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(h.key_dim())));
    const auto p = ops.measure_softmax(logits, w);
    return ops.matmul(p, ops.matmul_nt(keys, ops.param(h.V)));
}

/// Value part W_L z + sum_h W^h Att^h(z), one row per query token.
template <class Ops>
typename Ops::Value layer_values(Ops& ops, const LayerParams& layer, const typename Ops::Value& queries,
                                 const typename Ops::Value& keys, const Vector& w) {
    layer.validate();
    require_dims(ops.value(queries).cols() == layer.in_dim() && ops.value(keys).cols() == layer.in_dim(),
                 "token width differs from the layer input width");
    auto out = ops.matmul_nt(queries, ops.param(layer.W_L));
    for (const auto& h : layer.heads)
        out = ops.add(out, ops.matmul_nt(head_attend(ops, h, queries, keys, w), ops.param(h.W)));
    return out;
}

/// (pi_d z, layer value) for each query row.
template <class Ops>
typename Ops::Value layer_apply(Ops& ops, const LayerParams& layer, const typename Ops::Value& queries,
                                const typename Ops::Value& keys, const Vector& w, std::size_t d) {
    const auto x = ops.slice_cols(queries, 0, static_cast<Eigen::Index>(d));
    return ops.concat_cols(x, layer_values(ops, layer, queries, keys, w));
}

/// H(z) row-wise (no coordinate passthrough). With `residual`, the trailing out_dim
/// columns of z are added.
template <class Ops>
typename Ops::Value mlp_values(Ops& ops, const MlpParams& mlp, const typename Ops::Value& z) {
    mlp.validate();
    require_dims(ops.value(z).cols() == mlp.in_dim(), "MLP input width mismatch");
    auto a = z;
    for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
        a = ops.add_row(ops.matmul_nt(a, ops.param(mlp.weights[i])), ops.param(mlp.biases[i]));
        if (i + 1 < mlp.weights.size() && !mlp.linear) a = ops.tanh(a);
    }
    if (mlp.residual) {
        const Eigen::Index out = mlp.out_dim(), in = mlp.in_dim();
        require_dims(out <= in, "residual MLP output wider than its input");
        a = ops.add(a, ops.slice_cols(z, in - out, out));
    }
    return a;
}

/// F(z) = (pi_d z, H(z)).
template <class Ops>
typename Ops::Value mlp_apply(Ops& ops, const MlpParams& mlp, const typename Ops::Value& z, std::size_t d) {
    return ops.concat_cols(ops.slice_cols(z, 0, static_cast<Eigen::Index>(d)), mlp_values(ops, mlp, z));
}

/// Replaces the value columns by y0.
inline Matrix warp_tokens(const Matrix& z, std::size_t d, const Vector& y0) {
    require_dims(static_cast<std::size_t>(z.cols()) == d + y0.size(), "warp constant width mismatch");
    Matrix out = z;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < y0.size(); ++c) out(i, static_cast<Eigen::Index>(d + c)) = y0[c];
    return out;
}

/// Full stack on atom rows `tokens` with weights w, diamond semantics: every (attention,
/// MLP) pair sees the pushforward of the measure through all previous pairs. Returns the
/// image of each atom after the final clip.
template <class Ops>
typename Ops::Value stack_apply(Ops& ops, const StackParams& s, const Matrix& tokens, const Vector& w) {
    const auto& cfg = s.config;
    cfg.validate();
    require_dims(s.layers.size() == cfg.n_layers && s.mlps.size() == cfg.n_layers, "parameter count differs from n_layers");
    require_dims(static_cast<std::size_t>(tokens.cols()) == cfg.d + cfg.n, "token width must be d + n");
    const SmoothClip clip(cfg.clip_inner, cfg.clip_outer);

    // `measure` carries the atoms of the current pushforward; `query` the evaluated tokens.
    // They differ only under the token-only warp.
    auto measure = ops.constant(cfg.warp == WarpMode::token_and_measure ? warp_tokens(tokens, cfg.d, cfg.y0) : tokens);
    const bool separate = cfg.warp == WarpMode::token_only;
    auto query = separate ? ops.constant(warp_tokens(tokens, cfg.d, cfg.y0)) : measure;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const auto next_measure = mlp_apply(ops, s.mlps[l], layer_apply(ops, s.layers[l], measure, measure, w, cfg.d), cfg.d);
        if (separate) query = mlp_apply(ops, s.mlps[l], layer_apply(ops, s.layers[l], query, measure, w, cfg.d), cfg.d);
        measure = next_measure;
        if (!separate) query = measure;
    }
    const auto x = ops.slice_cols(query, 0, static_cast<Eigen::Index>(cfg.d));
    const auto y = ops.slice_cols(query, static_cast<Eigen::Index>(cfg.d), static_cast<Eigen::Index>(cfg.n));
    return ops.concat_cols(x, ops.smooth_clip(y, clip));
}

// ---- per-token API ------------------------------------------------------------

inline Vector attend_head(const DiscreteMeasure& mu, std::span<const double> z, const HeadParams& head) {
    EvalOps ops;
    const Matrix q = row_matrix(z);
    return row_of(head_attend(ops, head, q, mu.locations(), mu.weights()), 0);
}

inline Vector layer_forward(const DiscreteMeasure& mu, std::span<const double> z, const LayerParams& layer) {
    EvalOps ops;
    const Matrix q = row_matrix(z);
    return row_of(layer_apply(ops, layer, q, mu.locations(), mu.weights(), mu.split()), 0);
}

inline Vector mlp_forward(std::span<const double> z, const MlpParams& mlp, std::size_t d) {
    EvalOps ops;
    return row_of(mlp_apply(ops, mlp, row_matrix(z), d), 0);
}

inline Point warp(std::span<const double> z, std::size_t d, const Vector& y0) {
    Point out(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
    out.insert(out.end(), y0.begin(), y0.end());
    return out;
}

/// G(mu) = Gamma(mu, .)_# mu.
inline DiscreteMeasure stack_forward(const DiscreteMeasure& mu, const StackParams& s) {
    require_dims(mu.split() == s.config.d, "measure split differs from the stack's spatial dimension");
    EvalOps ops;
    return DiscreteMeasure::from_matrix(stack_apply(ops, s, mu.locations(), mu.weights()), mu.weights(), mu.split());
}

// ---- parameter manifest ---------------------------------------------------------

/// Flat manifest {"params": [{"name", "shape", "values"}]} with row-major values.
template <class P>
nlohmann::json params_to_json(P& params) {
    nlohmann::json list = nlohmann::json::array();
    params.visit([&](const std::string& name, Matrix& m) {
        std::vector<double> v(m.data(), m.data() + m.size());
        list.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", v}});
    });
    return {{"params", list}};
}

template <class P>
void params_from_json(P& params, const nlohmann::json& j) {
    std::map<std::string, const nlohmann::json*> byname;
    for (const auto& e : j.at("params")) byname[e.at("name").get<std::string>()] = &e;
    params.visit([&](const std::string& name, Matrix& m) {
        const auto it = byname.find(name);
        require(it != byname.end(), "manifest lacks parameter " + name);
        const auto& e = *it->second;
        const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
        require_dims(shape.size() == 2 && shape[0] == m.rows() && shape[1] == m.cols(), "manifest shape differs for " + name);
        const auto v = e.at("values").get<std::vector<double>>();
        require_dims(static_cast<Eigen::Index>(v.size()) == m.size(), "manifest value count differs for " + name);
        std::copy(v.begin(), v.end(), m.data());
    });
}

template <class P>
std::size_t parameter_count(P& params) {
    std::size_t n = 0;
    params.visit([&](const std::string&, Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

}  // namespace fgt
