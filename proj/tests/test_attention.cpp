#include "fgt/attention.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace fgt;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n_atoms, std::size_t d, std::size_t n, bool uniform) {
    std::uniform_real_distribution<double> u(0.0, 1.0), v(-1.0, 1.0), w(0.2, 1.0);
    std::vector<Atom> atoms;
    double total = 0.0;
    for (std::size_t i = 0; i < n_atoms; ++i) {
        Point p;
        for (std::size_t a = 0; a < d; ++a) p.push_back(u(rng));
        for (std::size_t c = 0; c < n; ++c) p.push_back(v(rng));
        atoms.push_back({p, uniform ? 1.0 : w(rng)});
        total += atoms.back().weight;
    }
    for (auto& a : atoms) a.weight /= total;
    return DiscreteMeasure(std::move(atoms), d + n, d);
}

// Direct token formula: sum_j w_j exp(<Qz, K z_j>/sqrt k) V z_j / sum_l w_l exp(...).
Vector token_formula(const DiscreteMeasure& mu, const Vector& z, const HeadParams& h) {
    const auto k = static_cast<double>(h.Q.rows());
    Eigen::VectorXd zq = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    const Eigen::VectorXd q = h.Q * zq;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(h.V.rows());
    double den = 0.0;
    for (const auto& a : mu.atoms()) {
        const Eigen::VectorXd zj = Eigen::Map<const Eigen::VectorXd>(a.location.data(), static_cast<Eigen::Index>(a.location.size()));
        const double e = a.weight * std::exp(q.dot(h.K * zj) / std::sqrt(k));
        num += e * (h.V * zj);
        den += e;
    }
    num /= den;
    return Vector(num.data(), num.data() + num.size());
}

HeadParams random_head(std::mt19937_64& rng, Eigen::Index D, Eigen::Index k, Eigen::Index hd, Eigen::Index out) {
    return {random_matrix(rng, k, D), random_matrix(rng, k, D), random_matrix(rng, hd, D), random_matrix(rng, out, hd)};
}

StackParams random_stack(std::mt19937_64& rng, std::size_t d, std::size_t n, std::size_t layers, WarpMode warp) {
    auto cfg = StackConfig::with_default_widths(d, n, layers);
    cfg.value_widths = std::vector<std::size_t>(layers + 1, 5);
    cfg.value_widths.front() = n;
    cfg.value_widths.back() = n;
    cfg.attention_widths.assign(layers, 4);
    cfg.mlp_hidden = {6};
    cfg.heads = 2;
    cfg.key_dim = 3;
    cfg.head_dim = 3;
    cfg.warp = warp;
    cfg.y0.assign(n, 0.25);
    return init_stack(cfg, rng());
}

void expect_vec_near(const Vector& a, const Vector& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(AttendHead, SingleAtomGivesValueOfThatAtom) {
    std::mt19937_64 rng(1);
    const auto h = random_head(rng, 3, 2, 4, 2);
    const auto mu = DiscreteMeasure::dirac({0.3, -0.2, 0.5}, 1);
    const auto out = attend_head(mu, Vector{0.9, 0.1, -0.4}, h);
    const Eigen::VectorXd expect = h.V * Eigen::Vector3d(0.3, -0.2, 0.5);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[static_cast<std::size_t>(i)], expect(i), 1e-15);
}

TEST(AttendHead, ZeroKeyGivesWeightedMean) {
    std::mt19937_64 rng(2);
    auto h = random_head(rng, 2, 2, 3, 1);
    h.K.setZero();
    const auto mu = random_measure(rng, 5, 1, 1, false);
    const auto out = attend_head(mu, Vector{0.5, 0.5}, h);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (const auto& a : mu.atoms()) mean += a.weight * (h.V * Eigen::Vector2d(a.location[0], a.location[1]));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(out[static_cast<std::size_t>(i)], mean(i), 1e-14);
}

TEST(AttendHead, MatchesTokenFormula) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const bool uniform = trial % 2 == 0;
        const auto mu = random_measure(rng, uniform ? 3 : 6, 1, 1, uniform);
        const auto h = random_head(rng, 2, 3, 2, 2);
        const Vector z{0.2 + 0.01 * trial, -0.3};
        expect_vec_near(attend_head(mu, z, h), token_formula(mu, z, h), 1e-13);
    }
}

TEST(AttendHead, ZeroTotalWeightIsAnError) {
    std::mt19937_64 rng(4);
    const auto h = random_head(rng, 2, 2, 2, 1);
    EvalOps ops;
    EXPECT_THROW(head_attend(ops, h, random_matrix(rng, 1, 2), random_matrix(rng, 3, 2), Vector{0.0, 0.0, 0.0}), DomainError);
}

TEST(AttendHead, LargeLogitsStayFinite) {
    std::mt19937_64 rng(5);
    auto h = random_head(rng, 2, 2, 2, 1);
    h.Q *= 1e3;
    h.K *= 1e3;
    const auto mu = random_measure(rng, 4, 1, 1, true);
    for (double v : attend_head(mu, Vector{0.5, 0.9}, h)) EXPECT_TRUE(std::isfinite(v));
}

TEST(LayerForward, ZeroLayerAndPassthrough) {
    LayerParams zero{Matrix::Zero(3, 2), {}};
    const auto mu = DiscreteMeasure::dirac({0.4, 0.7}, 1);
    EXPECT_EQ(layer_forward(mu, Vector{0.123, 0.9}, zero), (Vector{0.123, 0.0, 0.0, 0.0}));

    std::mt19937_64 rng(6);
    LayerParams layer{random_matrix(rng, 3, 3), {random_head(rng, 3, 2, 2, 3), random_head(rng, 3, 2, 2, 3)}};
    const auto mu2 = random_measure(rng, 7, 2, 1, false);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Vector z{u(rng), u(rng), u(rng) - 0.5};
        const auto out = layer_forward(mu2, z, layer);
        EXPECT_EQ(out[0], z[0]);
        EXPECT_EQ(out[1], z[1]);
    }
}

TEST(LayerForward, SingleHeadSingleAtom) {
    std::mt19937_64 rng(7);
    LayerParams layer{random_matrix(rng, 2, 2), {random_head(rng, 2, 2, 3, 2)}};
    const auto mu = DiscreteMeasure::dirac({0.1, 0.6}, 1);
    const Vector z{0.8, -0.2};
    const auto out = layer_forward(mu, z, layer);
    const Eigen::Vector2d zz(0.8, -0.2), z1(0.1, 0.6);
    const Eigen::VectorXd expect = layer.W_L * zz + layer.heads[0].W * (layer.heads[0].V * z1);
    EXPECT_EQ(out[0], 0.8);
    EXPECT_NEAR(out[1], expect(0), 1e-14);
    EXPECT_NEAR(out[2], expect(1), 1e-14);
}

TEST(LayerForward, WidthMismatchThrows) {
    std::mt19937_64 rng(8);
    LayerParams layer{random_matrix(rng, 2, 3), {random_head(rng, 3, 2, 3, 2)}};
    EXPECT_THROW(layer_forward(DiscreteMeasure::dirac({0.1, 0.6}, 1), Vector{0.1, 0.2}, layer), DimensionError);
    layer.heads[0].W = random_matrix(rng, 4, 3);
    EXPECT_THROW(layer.validate(), DimensionError);
}

TEST(MlpForward, IdentityZeroAndClosedForm) {
    MlpParams id{{Matrix::Identity(3, 3)}, {Matrix::Zero(1, 3)}, false, true};
    EXPECT_EQ(mlp_forward(Vector{0.1, 0.2, 0.3}, id, 1), (Vector{0.1, 0.1, 0.2, 0.3}));

    Matrix bias(1, 2);
    bias << 0.5, -0.25;
    MlpParams zero{{Matrix::Zero(2, 3)}, {bias}};
    EXPECT_EQ(mlp_forward(Vector{0.1, 0.2, 0.3}, zero, 1), (Vector{0.1, 0.5, -0.25}));

    std::mt19937_64 rng(9);
    MlpParams two{{random_matrix(rng, 4, 2), random_matrix(rng, 1, 4)}, {random_matrix(rng, 1, 4), random_matrix(rng, 1, 1)}};
    const Vector z{0.3, -0.6};
    double expect = two.biases[1](0, 0);
    for (int i = 0; i < 4; ++i) {
        const double pre = two.weights[0](i, 0) * z[0] + two.weights[0](i, 1) * z[1] + two.biases[0](0, i);
        expect += two.weights[1](0, i) * std::tanh(pre);
    }
    const auto out = mlp_forward(z, two, 1);
    EXPECT_EQ(out[0], 0.3);
    EXPECT_NEAR(out[1], expect, 1e-15);

    two.residual = true;
    EXPECT_NEAR(mlp_forward(z, two, 1)[1], expect - 0.6, 1e-15);
    EXPECT_THROW(mlp_forward(Vector{0.1, 0.2, 0.3}, two, 1), DimensionError);
}

TEST(Warp, Basics) {
    const Vector z{0.2, 0.7, -0.1};
    EXPECT_EQ(warp(z, 1, {0.0, 0.0}), (Point{0.2, 0.0, 0.0}));
    const auto once = warp(z, 1, {0.3, 0.4});
    EXPECT_EQ(warp(once, 1, {0.3, 0.4}), once);
    EXPECT_EQ(warp(z, 1, {0.7, -0.1}), z);
    EXPECT_EQ(parse_warp_mode("token"), WarpMode::token_only);
    EXPECT_THROW(parse_warp_mode("sideways"), DomainError);
}

TEST(Stack, ZeroParametersGiveZeroValues) {
    std::mt19937_64 rng(10);
    auto s = random_stack(rng, 1, 1, 2, WarpMode::token_and_measure);
    s.config.y0 = {0.0};
    s.visit([](const std::string&, Matrix& m) { m.setZero(); });
    const auto mu = random_measure(rng, 5, 1, 1, true);
    const auto out = stack_forward(mu, s);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_EQ(out[i].location[0], mu[i].location[0]);
        EXPECT_EQ(out[i].location[1], 0.0);
        EXPECT_EQ(out[i].weight, mu[i].weight);
    }
}

TEST(Stack, MatchesLayerByLayerEvaluation) {
    std::mt19937_64 rng(11);
    const auto s = random_stack(rng, 1, 1, 2, WarpMode::none);
    const auto mu = random_measure(rng, 3, 1, 1, false);
    const SmoothClip clip(s.config.clip_inner, s.config.clip_outer);
    // Manual diamond: push every atom through (layer, MLP) and rebuild the measure.
    DiscreteMeasure cur = mu;
    for (std::size_t l = 0; l < 2; ++l) {
        std::vector<Atom> next;
        for (const auto& a : cur.atoms())
            next.push_back({mlp_forward(layer_forward(cur, a.location, s.layers[l]), s.mlps[l], 1), a.weight});
        const std::size_t dim = next.front().location.size();
        cur = DiscreteMeasure(std::move(next), dim, 1);
    }
    const auto out = stack_forward(mu, s);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_EQ(out[i].location[0], mu[i].location[0]);
        EXPECT_NEAR(out[i].location[1], clip(cur[i].location[1]), 1e-14);
    }
}

TEST(Stack, TokenOnlyWarpUsesOriginalMeasure) {
    std::mt19937_64 rng(12);
    const auto s = random_stack(rng, 1, 1, 2, WarpMode::token_only);
    const auto mu = random_measure(rng, 4, 1, 1, true);
    // Measure stream as in the unwarped stack; the query token starts at (x, y0).
    DiscreteMeasure cur = mu;
    std::vector<Vector> q;
    for (const auto& a : mu.atoms()) q.push_back(warp(a.location, 1, s.config.y0));
    for (std::size_t l = 0; l < 2; ++l) {
        for (auto& z : q) z = mlp_forward(layer_forward(cur, z, s.layers[l]), s.mlps[l], 1);
        std::vector<Atom> next;
        for (const auto& a : cur.atoms())
            next.push_back({mlp_forward(layer_forward(cur, a.location, s.layers[l]), s.mlps[l], 1), a.weight});
        const std::size_t dim = next.front().location.size();
        cur = DiscreteMeasure(std::move(next), dim, 1);
    }
    const SmoothClip clip(s.config.clip_inner, s.config.clip_outer);
    const auto out = stack_forward(mu, s);
    for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(out[i].location[1], clip(q[i][1]), 1e-14);
}

TEST(Stack, GraphPreservationAndYIndependenceUnderWarp) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_stack(rng, 2, 1, 3, WarpMode::token_and_measure);
        const auto mu = random_measure(rng, 6, 2, 1, trial % 2 == 0);
        std::vector<Atom> other = mu.atoms();
        std::uniform_real_distribution<double> v(-1.0, 1.0);
        for (auto& a : other) a.location[2] = v(rng);
        const auto nu = DiscreteMeasure(std::move(other), 3, 2);
        const auto a = stack_forward(mu, s), b = stack_forward(nu, s);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            EXPECT_EQ(a[i].location[0], mu[i].location[0]);
            EXPECT_EQ(a[i].location[1], mu[i].location[1]);
            EXPECT_NEAR(a[i].location[2], b[i].location[2], 1e-12);
            EXPECT_LE(std::abs(a[i].location[2]), s.config.clip_outer);
        }
    }
}

TEST(Stack, PermutationInvariance) {
    std::mt19937_64 rng(14);
    const auto s = random_stack(rng, 1, 1, 2, WarpMode::none);
    const auto mu = random_measure(rng, 9, 1, 1, false);
    std::vector<std::size_t> perm(mu.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Atom> shuffled;
    for (auto p : perm) shuffled.push_back(mu[p]);
    const auto a = stack_forward(mu, s);
    const auto b = stack_forward(DiscreteMeasure(std::move(shuffled), 2, 1), s);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(b[i].location[1], a[perm[i]].location[1], 1e-12);
}

TEST(Stack, WidthScheduleValidated) {
    auto cfg = StackConfig::with_default_widths(1, 1, 2);
    EXPECT_EQ(cfg.value_widths, (std::vector<std::size_t>{1, 8, 1}));
    cfg.value_widths.back() = 3;
    EXPECT_THROW(init_stack(cfg, 1), DimensionError);
}

TEST(Stack, LayerGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(15);
    auto s = random_stack(rng, 1, 1, 2, WarpMode::none);
    const auto mu = random_measure(rng, 5, 1, 1, false);
    const Matrix tokens = mu.locations();
    const Vector w = mu.weights();
    std::vector<Matrix*> params;
    s.visit([&](const std::string&, Matrix& m) { params.push_back(&m); });
    const auto res = grad_check(params, [&](auto& ops) {
        const auto out = stack_apply(ops, s, tokens, w);
        const auto y = ops.slice_cols(out, 1, 1);
        return ops.sum(ops.mul(y, y));
    });
    EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Manifest, RoundTripAndShapeCheck) {
    std::mt19937_64 rng(16);
    auto s = random_stack(rng, 1, 1, 2, WarpMode::none);
    const auto j = params_to_json(s);
    auto t = init_stack(s.config, 999);
    params_from_json(t, nlohmann::json::parse(j.dump()));
    std::vector<Matrix> a, b;
    s.visit([&](const std::string&, Matrix& m) { a.push_back(m); });
    t.visit([&](const std::string&, Matrix& m) { b.push_back(m); });
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_GT(parameter_count(s), 0u);

    auto wide = s.config;
    wide.mlp_hidden = {7};
    auto u = init_stack(wide, 1);
    EXPECT_THROW(params_from_json(u, j), DimensionError);
}
