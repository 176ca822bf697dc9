#pragma once

// Product-measure tokens (s, r) = ((x, y), (x', y')), product-space attention, its
// block-constrained cross-attention reduction, and the query-mode model built on the
// fiberwise measures mu (x) delta_{(x', 0)}.

#include "fgt/attention.hpp"
#include "fgt/features.hpp"

#include <istream>
#include <sstream>

namespace fgt {

struct ProductToken {
    Point s;  // input part (x, y)
    Point r;  // query part (x', y')

    [[nodiscard]] Point joined() const {
        Point p = s;
        p.insert(p.end(), r.begin(), r.end());
        return p;
    }
};

/// Q~ = [Q_s Q_r], K~ = [K_s K_r], V~ = [V_s V_r].
struct BlockMatrices {
    Matrix Q_s, Q_r, K_s, K_r, V_s, V_r;

    [[nodiscard]] Eigen::Index s_dim() const { return Q_s.cols(); }
    [[nodiscard]] Eigen::Index r_dim() const { return Q_r.cols(); }

    [[nodiscard]] Matrix Q() const { return join(Q_s, Q_r); }
    [[nodiscard]] Matrix K() const { return join(K_s, K_r); }
    [[nodiscard]] Matrix V() const { return join(V_s, V_r); }

    void validate() const {
        require_dims(Q_s.rows() == Q_r.rows() && K_s.rows() == K_r.rows() && Q_s.rows() == K_s.rows(),
                     "query and key blocks must share the attention width");
        require_dims(V_s.rows() == V_r.rows(), "value blocks must share the output width");
        require_dims(K_s.cols() == s_dim() && V_s.cols() == s_dim(), "s-blocks must share the input width");
        require_dims(K_r.cols() == r_dim() && V_r.cols() == r_dim(), "r-blocks must share the query width");
    }

    /// Q_s = 0, K_r = 0, V_r = 0.
    [[nodiscard]] bool is_cross_constrained() const {
        return Q_s.isZero(0.0) && K_r.isZero(0.0) && V_r.isZero(0.0);
    }

private:
    static Matrix join(const Matrix& a, const Matrix& b) {
        Matrix m(a.rows(), a.cols() + b.cols());
        m << a, b;
        return m;
    }
};

/// The four module types obtained by zeroing blocks.
enum class BlockPattern { input_self, query_self, query_to_input, input_to_query };

inline BlockMatrices constrain(BlockMatrices b, BlockPattern p) {
    switch (p) {
        case BlockPattern::input_self:
            b.Q_r.setZero(), b.K_r.setZero(), b.V_r.setZero();
            break;
        case BlockPattern::query_self:
            b.Q_s.setZero(), b.K_s.setZero(), b.V_s.setZero();
            break;
        case BlockPattern::query_to_input:
            b.Q_s.setZero(), b.K_r.setZero(), b.V_r.setZero();
            break;
        case BlockPattern::input_to_query:
            b.Q_r.setZero(), b.K_s.setZero(), b.V_s.setZero();
            break;
    }
    return b;
}

/// Counts logits evaluated by the literal product-space paths.
struct LogitCounter {
    std::uint64_t logits = 0;
};

/// mu (x) delta_{(x', 0)}: one product atom per input atom, weights unchanged.
inline DiscreteMeasure fiber_lift(const DiscreteMeasure& mu, std::span<const double> query_point, std::size_t query_value_dim) {
    Point r(query_point.begin(), query_point.end());
    r.resize(query_point.size() + query_value_dim, 0.0);
    return product_measure(mu, DiscreteMeasure::dirac(std::move(r), query_point.size()));
}

/// Single product-space head: softmax over product atoms of <Q~ xi, K~ xi'> / sqrt(scale_dim),
/// measure-weighted average of V~ xi'.
inline Vector product_attend(const DiscreteMeasure& tilde_mu, const ProductToken& xi, const BlockMatrices& blocks,
                             double scale_dim, LogitCounter* counter = nullptr) {
    blocks.validate();
    require(!tilde_mu.empty(), "product attention over an empty measure");
    require_dims(static_cast<Eigen::Index>(xi.s.size()) == blocks.s_dim() &&
                     static_cast<Eigen::Index>(xi.r.size()) == blocks.r_dim(),
                 "product token does not match the block widths");
    require_dims(static_cast<Eigen::Index>(tilde_mu.ambient_dim()) == blocks.s_dim() + blocks.r_dim(),
                 "product measure does not match the block widths");
    const Point z = xi.joined();
    const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
    const Matrix Q = blocks.Q(), K = blocks.K(), V = blocks.V();
    const Eigen::VectorXd q = Q * zv;
    const Matrix atoms = tilde_mu.locations();
    Matrix logits(1, atoms.rows());
    for (Eigen::Index j = 0; j < atoms.rows(); ++j)
        logits(0, j) = q.dot(K * atoms.row(j).transpose()) / std::sqrt(scale_dim);
    if (counter) counter->logits += static_cast<std::uint64_t>(atoms.rows());
    const Vector w = tilde_mu.weights();
    detail::require_positive_mass(w);
    const Matrix p = detail::weighted_softmax(logits, w);
    return row_of(p * (atoms * V.transpose()), 0);
}

/// Standard cross-attention of query token r against the atoms s_j of mu.
inline Vector cross_attend(std::span<const double> r, const DiscreteMeasure& mu, const Matrix& Q_r, const Matrix& K_s,
                           const Matrix& V_s, double scale_dim) {
    require_dims(static_cast<Eigen::Index>(r.size()) == Q_r.cols(), "query token width mismatch");
    require_dims(static_cast<Eigen::Index>(mu.ambient_dim()) == K_s.cols(), "input atom width mismatch");
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::VectorXd q = Q_r * rv;
    const Matrix S = mu.locations();
    const Matrix logits = ((S * K_s.transpose()) * q).transpose() / std::sqrt(scale_dim);
    const Matrix p = detail::weighted_softmax(logits, mu.weights());
    return row_of(p * (S * V_s.transpose()), 0);
}

/// <mu~+, pi~_2> for a single-query fiber: the common query value of every atom.
/// `value_begin` and `value_dim` locate y' within the product coordinates.
inline Vector readout_value(const DiscreteMeasure& fiber_out, std::size_t value_begin, std::size_t value_dim) {
    require(!fiber_out.empty(), "readout of an empty fiber");
    require_dims(value_begin + value_dim <= fiber_out.ambient_dim(), "readout slice out of range");
    const auto& first = fiber_out[0].location;
    Vector y(first.begin() + static_cast<std::ptrdiff_t>(value_begin),
             first.begin() + static_cast<std::ptrdiff_t>(value_begin + value_dim));
    for (const auto& a : fiber_out.atoms())
        for (std::size_t c = 0; c < value_dim; ++c)
            if (std::abs(a.location[value_begin + c] - y[c]) > 1e-9)
                throw NumericalError("fiber atoms disagree on the query value; the stack is not query-uniform");
    return y;
}

// ---- query-mode model -----------------------------------------------------------

struct ModelConfig {
    std::size_t d = 1;
    std::size_t n = 1;
    std::size_t embed = 32;
    std::size_t heads = 2;
    std::size_t key_dim = 8;
    std::size_t head_dim = 8;
    std::size_t mlp_hidden = 64;
    std::size_t layers = 2;        // same-domain blocks, or input-branch blocks in query mode
    std::size_t product_mlps = 2;  // residual token-wise MLPs after the product attention
    double clip_inner = 0.5;
    double clip_outer = 1.0;

    [[nodiscard]] std::size_t feature_width() const { return feature_dim(d); }

    void validate() const {
        require(d >= 1 && n >= 1 && embed >= 1 && key_dim >= 1 && head_dim >= 1 && mlp_hidden >= 1,
                "model widths must be positive");
        SmoothClip(clip_inner, clip_outer);
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"d", d}, {"n", n}, {"embed", embed}, {"heads", heads}, {"key_dim", key_dim}, {"head_dim", head_dim},
                {"mlp_hidden", mlp_hidden}, {"layers", layers}, {"product_mlps", product_mlps},
                {"clip_inner", clip_inner}, {"clip_outer", clip_outer}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.d = j.value("d", c.d);
        c.n = j.value("n", c.n);
        c.embed = j.value("embed", c.embed);
        c.heads = j.value("heads", c.heads);
        c.key_dim = j.value("key_dim", c.key_dim);
        c.head_dim = j.value("head_dim", c.head_dim);
        c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
        c.layers = j.value("layers", c.layers);
        c.product_mlps = j.value("product_mlps", c.product_mlps);
        c.clip_inner = j.value("clip_inner", c.clip_inner);
        c.clip_outer = j.value("clip_outer", c.clip_outer);
        c.validate();
        return c;
    }
};

/// Graph-preserving latent block on tokens (phi(x), r): the attention layer and the MLP
/// are written with an identity skip on r, i.e. W_L = [0 I] + W (a reparametrisation
/// inside the same layer class).
struct LatentBlock {
    LayerParams attention;
    MlpParams mlp;  // residual

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        attention.visit(prefix + ".att", f);
        mlp.visit(prefix + ".mlp", f);
    }
};

inline LatentBlock init_latent_block(std::mt19937_64& rng, const ModelConfig& c) {
    const std::size_t in = c.feature_width() + c.embed;
    LatentBlock b;
    b.attention = init_layer(rng, in, c.embed, c.heads, c.key_dim, c.head_dim);
    b.mlp = init_mlp(rng, {in, c.mlp_hidden, c.embed}, true);
    return b;
}

/// New latents for every token; `phi` is N x P, `r` is N x E.
template <class Ops>
typename Ops::Value latent_block_apply(Ops& ops, const LatentBlock& b, const typename Ops::Value& phi,
                                       const typename Ops::Value& r, const Vector& w) {
    const auto z = ops.concat_cols(phi, r);
    const auto r1 = ops.add(r, layer_values(ops, b.attention, z, z, w));
    return mlp_values(ops, b.mlp, ops.concat_cols(phi, r1));
}

/// r0 = E [phi(x), y] + b.
template <class Ops>
typename Ops::Value embed_tokens(Ops& ops, const MlpParams& embed, const typename Ops::Value& phi, const Matrix& values) {
    return mlp_values(ops, embed, ops.concat_cols(phi, ops.constant(values)));
}

/// One head of the query model's product block. Q_s is fixed to zero so that every
/// atom of a fiber receives the same update. K_r is fixed to zero as well: with Q_s = 0
/// it only adds a per-fiber constant to the logits, which the softmax cancels.
struct ProductHead {
    Matrix Q_r, K_s, V_s, V_r, W;

    [[nodiscard]] BlockMatrices blocks() const {
        return {Matrix::Zero(Q_r.rows(), K_s.cols()), Q_r, K_s, Matrix::Zero(Q_r.rows(), Q_r.cols()), V_s, V_r};
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".Q_r", Q_r);
        f(prefix + ".K_s", K_s);
        f(prefix + ".V_s", V_s);
        f(prefix + ".V_r", V_r);
        f(prefix + ".W", W);
    }
};

struct QueryModel {
    ModelConfig config;
    MlpParams embed;                 // [phi, y] -> E, affine
    std::vector<LatentBlock> input_blocks;
    MlpParams query_branch;          // phi(x') -> E, two layers
    std::vector<ProductHead> product_heads;
    Matrix L_r;                      // E x E linear skip on r
    std::vector<MlpParams> product_mlps;  // residual E -> hidden -> E
    MlpParams readout;               // E -> hidden -> n

    template <class F>
    void visit(F&& f) {
        embed.visit("embed", f);
        for (std::size_t i = 0; i < input_blocks.size(); ++i) input_blocks[i].visit("input" + std::to_string(i), f);
        query_branch.visit("query", f);
        for (std::size_t h = 0; h < product_heads.size(); ++h) product_heads[h].visit("product.head" + std::to_string(h), f);
        f("product.L_r", L_r);
        for (std::size_t i = 0; i < product_mlps.size(); ++i) product_mlps[i].visit("product.mlp" + std::to_string(i), f);
        readout.visit("readout", f);
    }
};

inline QueryModel init_query_model(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    std::mt19937_64 rng(seed);
    const std::size_t P = c.feature_width(), E = c.embed;
    QueryModel m;
    m.config = c;
    m.embed = init_mlp(rng, {P + c.n, E});
    for (std::size_t l = 0; l < c.layers; ++l) m.input_blocks.push_back(init_latent_block(rng, c));
    m.query_branch = init_mlp(rng, {P, c.mlp_hidden, E});
    const auto S = static_cast<Eigen::Index>(P + E), R = static_cast<Eigen::Index>(E);
    const auto k = static_cast<Eigen::Index>(c.key_dim), v = static_cast<Eigen::Index>(c.head_dim);
    for (std::size_t h = 0; h < c.heads; ++h)
        m.product_heads.push_back({init_weight(rng, k, R), init_weight(rng, k, S), init_weight(rng, v, S), init_weight(rng, v, R), init_weight(rng, R, v)});
    m.L_r = init_weight(rng, R, R);
    for (std::size_t i = 0; i < c.product_mlps; ++i) m.product_mlps.push_back(init_mlp(rng, {E, c.mlp_hidden, E}, true));
    m.readout = init_mlp(rng, {E, c.mlp_hidden, c.n});
    return m;
}

/// Input branch: latent tokens s_j = (phi(x_j), r_j), N x (P + E).
template <class Ops>
typename Ops::Value encode_input(Ops& ops, const QueryModel& m, const Matrix& coords, const Matrix& values, const Vector& w) {
    const auto phi = ops.constant(positional_features(coords));
    auto r = embed_tokens(ops, m.embed, phi, values);
    for (const auto& b : m.input_blocks) r = latent_block_apply(ops, b, phi, r, w);
    return ops.concat_cols(phi, r);
}

/// Product block, collapsed to K x N logits: the fiber index of the attending atom does
/// not enter (Q_s = 0), so one row per query suffices.
template <class Ops>
typename Ops::Value product_block_collapsed(Ops& ops, const QueryModel& m, const typename Ops::Value& s,
                                            const typename Ops::Value& r, const Vector& w) {
    auto out = ops.add(r, ops.matmul_nt(r, ops.param(m.L_r)));
    for (const auto& h : m.product_heads) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(h.Q_r.rows()));
        const auto q = ops.matmul_nt(r, ops.param(h.Q_r));   // K x k
        const auto ks = ops.matmul_nt(s, ops.param(h.K_s));  // N x k
        const auto logits = ops.scale(ops.matmul_nt(q, ks), scale);
        const auto p = ops.measure_softmax(logits, w);
        const auto att = ops.add(ops.matmul(p, ops.matmul_nt(s, ops.param(h.V_s))), ops.matmul_nt(r, ops.param(h.V_r)));
        out = ops.add(out, ops.matmul_nt(att, ops.param(h.W)));
    }
    for (const auto& mlp : m.product_mlps) out = mlp_values(ops, mlp, out);
    return out;
}

/// Query branch, product block and readout for encoded input tokens `s`.
template <class Ops>
typename Ops::Value decode_queries(Ops& ops, const QueryModel& m, const typename Ops::Value& s, const Matrix& queries,
                                   const Vector& w) {
    const auto r0 = mlp_values(ops, m.query_branch, ops.constant(positional_features(queries)));
    const auto r = product_block_collapsed(ops, m, s, r0, w);
    return ops.smooth_clip(mlp_values(ops, m.readout, r), SmoothClip(m.config.clip_inner, m.config.clip_outer));
}

/// Predicted values at the query points (K x n), collapsed evaluation.
template <class Ops>
typename Ops::Value query_apply(Ops& ops, const QueryModel& m, const Matrix& coords, const Matrix& values, const Vector& w,
                                const Matrix& queries) {
    const auto& c = m.config;
    require_dims(static_cast<std::size_t>(coords.cols()) == c.d && static_cast<std::size_t>(queries.cols()) == c.d,
                 "coordinate width differs from the model dimension");
    require_dims(static_cast<std::size_t>(values.cols()) == c.n, "value width differs from the model");
    return decode_queries(ops, m, encode_input(ops, m, coords, values, w), queries, w);
}

/// Prediction at each query point through the literal fiberwise product measures
/// mu~ (x) delta_{(x', r0)}: every product atom (s_i, r) attends over all N atoms of its
/// fiber (K N^2 logits per head), is updated by the token-wise blocks, and the fiber is
/// read out by its common query value.
inline Matrix query_forward_literal(const QueryModel& m, const DiscreteMeasure& mu, const Matrix& queries,
                                    LogitCounter* counter = nullptr) {
    const auto& c = m.config;
    EvalOps ops;
    const Vector w = mu.weights();
    const Matrix s = encode_input(ops, m, mu.coords(), mu.values(), w);
    const Matrix r0 = mlp_values(ops, m.query_branch, positional_features(queries));
    const auto S = static_cast<std::size_t>(s.cols()), R = static_cast<std::size_t>(r0.cols());
    const SmoothClip clip(c.clip_inner, c.clip_outer);
    Matrix out(queries.rows(), static_cast<Eigen::Index>(c.n));
    for (Eigen::Index k = 0; k < queries.rows(); ++k) {
        // Fiber measure over latent product tokens (s_j, r_k).
        std::vector<Atom> atoms;
        for (Eigen::Index j = 0; j < s.rows(); ++j) {
            Point p = row_of(s, j);
            const Point rk = row_of(r0, k);
            p.insert(p.end(), rk.begin(), rk.end());
            atoms.push_back({std::move(p), w[static_cast<std::size_t>(j)]});
        }
        const DiscreteMeasure fiber(std::move(atoms), S + R, S);
        std::vector<Atom> updated;
        for (const auto& a : fiber.atoms()) {
            const ProductToken xi{Point(a.location.begin(), a.location.begin() + static_cast<std::ptrdiff_t>(S)),
                                  Point(a.location.begin() + static_cast<std::ptrdiff_t>(S), a.location.end())};
            Matrix rr = row_matrix(xi.r);
            Matrix next = rr + rr * m.L_r.transpose();
            for (const auto& h : m.product_heads) {
                const Vector att = product_attend(fiber, xi, h.blocks(), static_cast<double>(h.Q_r.rows()), counter);
                next += row_matrix(att) * h.W.transpose();
            }
            for (const auto& mlp : m.product_mlps) next = mlp_values(ops, mlp, next);
            Point p = xi.s;  // input block unchanged
            const Vector y = row_of(ops.smooth_clip(mlp_values(ops, m.readout, next), clip), 0);
            p.insert(p.end(), y.begin(), y.end());
            updated.push_back({std::move(p), a.weight});
        }
        const DiscreteMeasure fiber_out(std::move(updated), S + c.n, S);
        const Vector y = readout_value(fiber_out, S, c.n);
        for (std::size_t ch = 0; ch < c.n; ++ch) out(k, static_cast<Eigen::Index>(ch)) = y[ch];
    }
    return out;
}

/// Values at each query point (rows), collapsed evaluation.
inline Matrix query_forward(const QueryModel& m, const DiscreteMeasure& mu, const Matrix& queries) {
    require_dims(mu.split() == m.config.d, "measure split differs from the model dimension");
    require_dims(static_cast<std::size_t>(queries.cols()) == m.config.d, "query width differs from the model dimension");
    EvalOps ops;
    const Vector w = mu.weights();
    const Matrix s = encode_input(ops, m, mu.coords(), mu.values(), w);
    // One query row at a time: results do not depend on which other queries are asked.
    Matrix out(queries.rows(), static_cast<Eigen::Index>(m.config.n));
    for (Eigen::Index k = 0; k < queries.rows(); ++k) out.row(k) = decode_queries(ops, m, s, queries.row(k), w);
    return out;
}

// ---- query CSV ----------------------------------------------------------------------------

/// One query point per row, d comma-separated coordinates. A first line that does not
/// parse as numbers is taken as a header and skipped.
inline Matrix read_query_csv(std::istream& is, std::size_t d) {
    std::vector<Vector> rows;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        Vector r;
        double v = 0.0;
        while (ss >> v) r.push_back(v);
        const bool numeric = ss.eof();
        if (first && !numeric) {
            first = false;
            continue;
        }
        first = false;
        require(numeric, "query CSV row is not numeric: " + line);
        require_dims(r.size() == d, "query CSV row has " + std::to_string(r.size()) + " entries, expected " + std::to_string(d));
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), "query CSV has no rows");
    return rows_to_matrix(rows, d);
}

/// Rows (x'_1..x'_d, value_1..value_n) with a header.
inline void write_query_csv(std::ostream& os, const Matrix& queries, const Matrix& values) {
    require_dims(queries.rows() == values.rows(), "query and value row counts differ");
    for (Eigen::Index a = 0; a < queries.cols(); ++a) os << "x" << (a + 1) << ',';
    for (Eigen::Index c = 0; c < values.cols(); ++c) os << (c ? "," : "") << "value" << (c + 1);
    os << '\n';
    os.precision(17);
    for (Eigen::Index k = 0; k < queries.rows(); ++k) {
        for (Eigen::Index a = 0; a < queries.cols(); ++a) os << queries(k, a) << ',';
        for (Eigen::Index c = 0; c < values.cols(); ++c) os << (c ? "," : "") << values(k, c);
        os << '\n';
    }
}

}  // namespace fgt
