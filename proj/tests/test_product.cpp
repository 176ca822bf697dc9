#include "fgt/product.hpp"

#include <gtest/gtest.h>

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

Point random_point(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Point p(dim);
    for (auto& v : p) v = u(rng);
    return p;
}

DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t atoms, std::size_t dim, std::size_t split) {
    std::uniform_real_distribution<double> w(0.1, 1.0);
    std::vector<Atom> a;
    double total = 0.0;
    for (std::size_t i = 0; i < atoms; ++i) {
        a.push_back({random_point(rng, dim), w(rng)});
        total += a.back().weight;
    }
    for (auto& x : a) x.weight /= total;
    return DiscreteMeasure(std::move(a), dim, split);
}

BlockMatrices random_blocks(std::mt19937_64& rng, Eigen::Index s, Eigen::Index r, Eigen::Index k, Eigen::Index v) {
    return {random_matrix(rng, k, s), random_matrix(rng, k, r), random_matrix(rng, k, s),
            random_matrix(rng, k, r), random_matrix(rng, v, s), random_matrix(rng, v, r)};
}

double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b); }

Eigen::VectorXd vec(const Point& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())); }

// Textbook double sum over mu (x) nu, written without the library's softmax.
Eigen::VectorXd brute_product(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Point& s, const Point& r,
                              const BlockMatrices& b, double scale) {
    const Eigen::VectorXd q = b.Q_s * vec(s) + b.Q_r * vec(r);
    double den = 0.0;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(b.V_s.rows());
    for (const auto& a : mu.atoms())
        for (const auto& c : nu.atoms()) {
            const Eigen::VectorXd k = b.K_s * vec(a.location) + b.K_r * vec(c.location);
            const double e = a.weight * c.weight * std::exp(dot(q, k) / std::sqrt(scale));
            den += e;
            num += e * (b.V_s * vec(a.location) + b.V_r * vec(c.location));
        }
    return num / den;
}

// Single-measure attention sum_j w_j exp(<q, K z_j>) V z_j / normaliser.
Eigen::VectorXd brute_single(const DiscreteMeasure& m, const Eigen::VectorXd& q, const Matrix& K, const Matrix& V,
                             double scale) {
    double den = 0.0;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(V.rows());
    for (const auto& a : m.atoms()) {
        const double e = a.weight * std::exp(dot(q, K * vec(a.location)) / std::sqrt(scale));
        den += e;
        num += e * (V * vec(a.location));
    }
    return num / den;
}

double max_diff(const Vector& a, const Eigen::VectorXd& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
    return m;
}

ModelConfig small_config(std::size_t d = 1) {
    ModelConfig c;
    c.d = d;
    c.n = 1;
    c.embed = 6;
    c.heads = 2;
    c.key_dim = 3;
    c.head_dim = 4;
    c.mlp_hidden = 5;
    c.layers = 1;
    return c;
}

DiscreteMeasure random_graph(std::mt19937_64& rng, std::size_t N, std::size_t d) {
    std::uniform_real_distribution<double> u(0.0, 1.0), v(-0.8, 0.8);
    std::vector<Point> pts;
    for (std::size_t i = 0; i < N; ++i) {
        Point p;
        for (std::size_t a = 0; a < d; ++a) p.push_back(u(rng));
        p.push_back(v(rng));
        pts.push_back(p);
    }
    return DiscreteMeasure::uniform(pts, d);
}

Matrix random_queries(std::mt19937_64& rng, std::size_t K, std::size_t d) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix q(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        for (Eigen::Index j = 0; j < q.cols(); ++j) q(i, j) = u(rng);
    return q;
}

}  // namespace

TEST(ProductAttention, GeneralBlocksMatchDoubleSum) {
    std::mt19937_64 rng(1);
    const auto mu = random_measure(rng, 3, 3, 1), nu = random_measure(rng, 3, 2, 1);
    const auto b = random_blocks(rng, 3, 2, 4, 2);
    const auto prod = product_measure(mu, nu);
    const ProductToken xi{random_point(rng, 3), random_point(rng, 2)};
    const Vector got = product_attend(prod, xi, b, 4.0);
    EXPECT_LT(max_diff(got, brute_product(mu, nu, xi.s, xi.r, b, 4.0)), 1e-13);
}

TEST(ProductAttention, InputSelfPatternIsSelfAttentionOverMu) {
    std::mt19937_64 rng(2);
    const auto mu = random_measure(rng, 3, 3, 1), nu = random_measure(rng, 3, 2, 1);
    const auto b = constrain(random_blocks(rng, 3, 2, 4, 2), BlockPattern::input_self);
    const ProductToken xi{random_point(rng, 3), random_point(rng, 2)};
    const Vector got = product_attend(product_measure(mu, nu), xi, b, 4.0);
    EXPECT_LT(max_diff(got, brute_single(mu, b.Q_s * vec(xi.s), b.K_s, b.V_s, 4.0)), 1e-13);
}

TEST(ProductAttention, QuerySelfPatternIsSelfAttentionOverNu) {
    std::mt19937_64 rng(3);
    const auto mu = random_measure(rng, 3, 3, 1), nu = random_measure(rng, 3, 2, 1);
    const auto b = constrain(random_blocks(rng, 3, 2, 4, 2), BlockPattern::query_self);
    const ProductToken xi{random_point(rng, 3), random_point(rng, 2)};
    const Vector got = product_attend(product_measure(mu, nu), xi, b, 4.0);
    EXPECT_LT(max_diff(got, brute_single(nu, b.Q_r * vec(xi.r), b.K_r, b.V_r, 4.0)), 1e-13);
}

TEST(ProductAttention, QueryToInputPatternIsCrossAttention) {
    std::mt19937_64 rng(4);
    const auto mu = random_measure(rng, 3, 3, 1), nu = random_measure(rng, 3, 2, 1);
    const auto b = constrain(random_blocks(rng, 3, 2, 4, 2), BlockPattern::query_to_input);
    EXPECT_TRUE(b.is_cross_constrained());
    const ProductToken xi{random_point(rng, 3), random_point(rng, 2)};
    const Vector got = product_attend(product_measure(mu, nu), xi, b, 4.0);
    EXPECT_LT(max_diff(got, brute_single(mu, b.Q_r * vec(xi.r), b.K_s, b.V_s, 4.0)), 1e-13);
}

TEST(ProductAttention, InputToQueryPatternAttendsOverNu) {
    std::mt19937_64 rng(5);
    const auto mu = random_measure(rng, 3, 3, 1), nu = random_measure(rng, 3, 2, 1);
    const auto b = constrain(random_blocks(rng, 3, 2, 4, 2), BlockPattern::input_to_query);
    const ProductToken xi{random_point(rng, 3), random_point(rng, 2)};
    const Vector got = product_attend(product_measure(mu, nu), xi, b, 4.0);
    EXPECT_LT(max_diff(got, brute_single(nu, b.Q_s * vec(xi.s), b.K_r, b.V_r, 4.0)), 1e-13);
}

TEST(ProductAttention, CrossConstrainedEqualsCrossAttentionOnRandomInstances) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> size(1, 8), dim(1, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t N = size(rng), K = size(rng), ds = dim(rng), dr = dim(rng);
        const auto mu = random_measure(rng, N, ds, 1);
        const auto nu = random_measure(rng, K, dr, 1);
        const auto b = constrain(random_blocks(rng, static_cast<Eigen::Index>(ds), static_cast<Eigen::Index>(dr), 3, 2),
                                 BlockPattern::query_to_input);
        const auto prod = product_measure(mu, nu);
        for (const auto& atom : nu.atoms()) {
            const ProductToken xi{random_point(rng, ds), atom.location};
            const Vector lhs = product_attend(prod, xi, b, 3.0);
            const Vector rhs = cross_attend(xi.r, mu, b.Q_r, b.K_s, b.V_s, 3.0);
            for (std::size_t c = 0; c < lhs.size(); ++c) worst = std::max(worst, relative_error(lhs[c], rhs[c], 1e-300));
        }
    }
    EXPECT_LE(worst, 1e-10);
}

TEST(ProductAttention, FiberLiftKeepsWeightsAndAppendsQuery) {
    std::mt19937_64 rng(7);
    const auto mu = random_measure(rng, 5, 3, 2);
    const Point xq{0.25, 0.75};
    const auto lifted = fiber_lift(mu, xq, 1);
    ASSERT_EQ(lifted.size(), mu.size());
    EXPECT_EQ(lifted.ambient_dim(), 6u);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_DOUBLE_EQ(lifted[i].weight, mu[i].weight);
        EXPECT_EQ(lifted[i].location[3], 0.25);
        EXPECT_EQ(lifted[i].location[4], 0.75);
        EXPECT_EQ(lifted[i].location[5], 0.0);
    }
}

TEST(ProductAttention, ReadoutRejectsDisagreeingFiber) {
    const DiscreteMeasure good({{{0.1, 0.5}, 0.5}, {{0.2, 0.5}, 0.5}}, 2, 1);
    EXPECT_DOUBLE_EQ(readout_value(good, 1, 1)[0], 0.5);
    const DiscreteMeasure bad({{{0.1, 0.5}, 0.5}, {{0.2, 0.6}, 0.5}}, 2, 1);
    EXPECT_THROW(readout_value(bad, 1, 1), NumericalError);
}

TEST(ProductAttention, RejectsMismatchedBlocks) {
    std::mt19937_64 rng(8);
    auto b = random_blocks(rng, 3, 2, 4, 2);
    b.K_r = random_matrix(rng, 4, 3);
    EXPECT_THROW(b.validate(), DimensionError);
}

TEST(QueryModel, LiteralFiberwiseEqualsCollapsed) {
    std::mt19937_64 rng(9);
    const auto cfg = small_config();
    const auto model = init_query_model(cfg, 11);
    const auto mu = random_graph(rng, 7, 1);
    const Matrix q = random_queries(rng, 5, 1);
    LogitCounter counter;
    const Matrix literal = query_forward_literal(model, mu, q, &counter);
    const Matrix collapsed = query_forward(model, mu, q);
    EXPECT_LT((literal - collapsed).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(counter.logits, cfg.heads * 5u * 7u * 7u);
}

TEST(QueryModel, FibersAreIndependent) {
    std::mt19937_64 rng(10);
    const auto model = init_query_model(small_config(2), 12);
    const auto mu = random_graph(rng, 9, 2);
    const Matrix q = random_queries(rng, 6, 2);
    const Matrix all = query_forward(model, mu, q);
    for (Eigen::Index k = 0; k < q.rows(); ++k) {
        const Matrix one = query_forward(model, mu, q.row(k));
        EXPECT_EQ(one(0, 0), all(k, 0));  // bit-exact
    }
}

TEST(QueryModel, ZeroParametersGiveClippedZero) {
    auto model = init_query_model(small_config(), 13);
    model.visit([](const std::string&, Matrix& m) { m.setZero(); });
    std::mt19937_64 rng(14);
    const Matrix out = query_forward(model, random_graph(rng, 5, 1), random_queries(rng, 4, 1));
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(QueryModel, OutputsStayInsideClipBound) {
    auto model = init_query_model(small_config(), 15);
    model.visit([](const std::string&, Matrix& m) { m *= 20.0; });
    std::mt19937_64 rng(16);
    const Matrix out = query_forward(model, random_graph(rng, 6, 1), random_queries(rng, 30, 1));
    EXPECT_LE(out.cwiseAbs().maxCoeff(), 1.0);
}

TEST(QueryModel, GradientsMatchFiniteDifferences) {
    auto model = init_query_model(small_config(), 17);
    std::mt19937_64 rng(18);
    const auto mu = random_graph(rng, 5, 1);
    const Matrix q = random_queries(rng, 3, 1);
    const Matrix target = random_matrix(rng, 3, 1, 0.3);
    std::vector<Matrix*> params;
    model.visit([&](const std::string&, Matrix& m) { params.push_back(&m); });
    const auto res = grad_check(params, [&](auto& ops) {
        const auto pred = query_apply(ops, model, mu.coords(), mu.values(), mu.weights(), q);
        const auto e = ops.sub(pred, ops.constant(target));
        return ops.sum(ops.mul(e, e));
    });
    EXPECT_LT(res.max_rel_error, 1e-5) << "param " << res.worst_param << " analytic " << res.worst_analytic
                                       << " numeric " << res.worst_numeric;
}

TEST(QueryModel, ManifestRoundTrip) {
    auto a = init_query_model(small_config(), 19);
    auto b = init_query_model(small_config(), 20);
    params_from_json(b, params_to_json(a));
    std::mt19937_64 rng(21);
    const auto mu = random_graph(rng, 4, 1);
    const Matrix q = random_queries(rng, 3, 1);
    EXPECT_EQ(query_forward(a, mu, q), query_forward(b, mu, q));
    EXPECT_GT(parameter_count(a), 0u);
}

TEST(ProductAttention, SingleProductAtomReturnsItsValue) {
    std::mt19937_64 rng(22);
    const auto b = random_blocks(rng, 2, 2, 3, 2);
    const Point s{0.3, -0.2}, r{0.7, 0.1};
    const DiscreteMeasure one({{{0.3, -0.2, 0.7, 0.1}, 1.0}}, 4, 1);
    const Vector got = product_attend(one, {random_point(rng, 2), random_point(rng, 2)}, b, 3.0);
    const Eigen::VectorXd want = b.V_s * vec(s) + b.V_r * vec(r);
    EXPECT_LT(max_diff(got, want), 1e-15);
}

TEST(ProductAttention, ZeroQueryGivesWeightedMean) {
    std::mt19937_64 rng(23);
    auto b = random_blocks(rng, 2, 1, 3, 2);
    b.Q_s.setZero(), b.Q_r.setZero();
    const auto mu = random_measure(rng, 4, 2, 1), nu = random_measure(rng, 2, 1, 1);
    const auto prod = product_measure(mu, nu);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (const auto& a : prod.atoms()) mean += a.weight * (b.V() * vec(a.location));
    EXPECT_LT(max_diff(product_attend(prod, {random_point(rng, 2), random_point(rng, 1)}, b, 3.0), mean), 1e-14);
}

TEST(ProductAttention, CrossAttendSingleAtom) {
    std::mt19937_64 rng(24);
    const DiscreteMeasure mu({{{0.4, -0.5}, 1.0}}, 2, 1);
    const Matrix Q = random_matrix(rng, 3, 2), K = random_matrix(rng, 3, 2), V = random_matrix(rng, 2, 2);
    const Vector got = cross_attend(random_point(rng, 2), mu, Q, K, V, 3.0);
    EXPECT_LT(max_diff(got, V * vec({0.4, -0.5})), 1e-15);
}

TEST(ProductAttention, ReadoutOfQueryOnlyUpdate) {
    std::mt19937_64 rng(25);
    const auto mu = random_measure(rng, 6, 2, 1);
    const Point xq{0.35};
    // Fiber update touching only the query value: y' <- sin(3 x') + x'^2.
    const auto lifted = fiber_lift(mu, xq, 1);
    const auto updated = pushforward(lifted, [](std::span<const double> p) {
        Point q(p.begin(), p.end());
        q[3] = std::sin(3.0 * p[2]) + p[2] * p[2];
        return q;
    }, 1);
    EXPECT_DOUBLE_EQ(readout_value(updated, 3, 1)[0], std::sin(3.0 * 0.35) + 0.35 * 0.35);
}

TEST(QueryCsv, RoundTripWithHeader) {
    Matrix q(2, 2);
    q << 0.125, 0.5, 0.75, 0.0625;
    Matrix v(2, 1);
    v << -0.25, 1.0 / 3.0;
    std::stringstream out;
    write_query_csv(out, q, v);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "x1,x2,value1");
    std::stringstream in("x1,x2\n0.125,0.5\n0.75,0.0625\n");
    EXPECT_EQ(read_query_csv(in, 2), q);
    std::stringstream bad("0.1,0.2,0.3\n");
    EXPECT_THROW(read_query_csv(bad, 2), DimensionError);
}
