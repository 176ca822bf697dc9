#include "fgt/teacher.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace fgt;

namespace {

GridFunction shifted(const GridFunction& g, std::size_t shift) {
    // Cyclic shift by `shift` nodes along every axis.
    GridFunction out(g.domain(), g.resolution(), g.channels());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        auto idx = g.multi_index(i);
        for (auto& v : idx) v = (v + shift) % g.resolution();
        for (std::size_t c = 0; c < g.channels(); ++c) out.at(g.flat(idx), c) = g.at(i, c);
    }
    return out;
}

std::size_t mode_index(const FourierTeacher& t, const std::vector<int>& k) {
    const auto& m = t.modes();
    const auto it = std::find(m.begin(), m.end(), k);
    EXPECT_NE(it, m.end());
    return static_cast<std::size_t>(it - m.begin());
}

// |DFT coefficient| of a 1-D grid at frequency k, summed by hand.
double dft_magnitude(const GridFunction& g, int k) {
    std::complex<double> s(0.0, 0.0);
    const auto M = static_cast<double>(g.resolution());
    for (std::size_t j = 0; j < g.node_count(); ++j)
        s += g.at(j, 0) * std::polar(1.0, -2.0 * kPi * k * static_cast<double>(j) / M);
    return std::abs(s) / M;
}

}  // namespace

TEST(Teacher, HalfModeSetHoldsOneOfEachPair) {
    const auto one = half_mode_set(1, 4);
    EXPECT_EQ(one, (std::vector<std::vector<int>>{{0}, {1}, {2}, {3}}));
    const auto two = half_mode_set(2, 6);
    EXPECT_EQ(two.size(), 61u);  // (11 * 11 - 1) / 2 + 1
    std::set<std::vector<int>> seen(two.begin(), two.end());
    for (const auto& k : two) {
        if (k == std::vector<int>{0, 0}) continue;
        EXPECT_FALSE(seen.count({-k[0], -k[1]})) << k[0] << "," << k[1];
    }
}

TEST(Teacher, ParameterCountsAreReported) {
    // lift 2W, spectral W^2 (zero mode real) + 2 W^2 per other mode, projection PW + 2P + 1.
    const FourierTeacher desk(TeacherConfig{});
    EXPECT_EQ(desk.parameter_count(), 16u + 64u * (1 + 3 * 2) + 32u * 8 + 64 + 1);
    const FourierTeacher full(TeacherConfig::full_2d());
    EXPECT_EQ(full.parameter_count(), 32u + 256u * (1 + 60 * 2) + 128u * 16 + 256 + 1);
}

TEST(Teacher, ZeroInputWithoutBiasesGivesZero) {
    FourierTeacher t(TeacherConfig{});
    t.clear_biases();
    const GridFunction zero(Domain(1, DomainKind::torus, 1.0), 64, 1);
    EXPECT_EQ(t.apply(zero).sup_norm(), 0.0);
}

TEST(Teacher, PureModeMatchesDirectDft1d) {
    TeacherConfig cfg;
    cfg.grid = 16;
    FourierTeacher t(cfg);
    t.clear_biases();
    const int m = 2;
    const auto h = GridFunction::from_function(Domain(1, DomainKind::torus, 1.0), 16, 1, [&](std::span<const double> x) {
        return Vector{std::cos(2.0 * kPi * m * x[0])};
    });
    const auto hid = t.hidden(h);
    const auto& R = t.spectral_weight(mode_index(t, {m}));
    double worst = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
        const double x = static_cast<double>(j) / 16.0;
        for (std::size_t c = 0; c < cfg.width; ++c) {
            // cos = (e + conj e) / 2, so the hidden field is Re(sum_c' R_cc' a_c' e^{2 pi i m x}).
            std::complex<double> s(0.0, 0.0);
            for (std::size_t c2 = 0; c2 < cfg.width; ++c2)
                s += R(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c2)) * t.lift_weight()[c2];
            const double want = (s * std::polar(1.0, 2.0 * kPi * m * x)).real();
            worst = std::max(worst, std::abs(hid.field.at(j, c) - want));
        }
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(Teacher, PureModeMatchesDirectDft2d) {
    TeacherConfig cfg = TeacherConfig::full_2d();
    cfg.grid = 16;
    cfg.width = 4;
    cfg.projection = 8;
    FourierTeacher t(cfg);
    t.clear_biases();
    const std::vector<int> m{-1, 2};
    const auto h = GridFunction::from_function(Domain(2, DomainKind::torus, 1.0), 16, 1, [&](std::span<const double> x) {
        return Vector{std::cos(2.0 * kPi * (m[0] * x[0] + m[1] * x[1]))};
    });
    const auto hid = t.hidden(h);
    const auto& R = t.spectral_weight(mode_index(t, m));
    double worst = 0.0;
    for (std::size_t i = 0; i < h.node_count(); ++i) {
        const Point x = h.node(i);
        for (std::size_t c = 0; c < cfg.width; ++c) {
            std::complex<double> s(0.0, 0.0);
            for (std::size_t c2 = 0; c2 < cfg.width; ++c2)
                s += R(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c2)) * t.lift_weight()[c2];
            const double want = (s * std::polar(1.0, 2.0 * kPi * (m[0] * x[0] + m[1] * x[1]))).real();
            worst = std::max(worst, std::abs(hid.field.at(i, c) - want));
        }
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(Teacher, DiscardedModeDoesNotReachHiddenField) {
    TeacherConfig cfg;
    cfg.grid = 16;
    FourierTeacher t(cfg);
    t.clear_biases();
    const auto h = GridFunction::from_function(Domain(1, DomainKind::torus, 1.0), 16, 1, [](std::span<const double> x) {
        return Vector{std::sin(2.0 * kPi * 5.0 * x[0])};
    });
    EXPECT_LT(t.hidden(h).field.sup_norm(), 1e-13);
}

TEST(Teacher, ShiftEquivariance) {
    const RandomFieldSampler s1{1};
    const FourierTeacher t1(TeacherConfig{});
    const auto h1 = s1.sample_field(3);
    for (std::size_t shift : {1u, 5u, 17u}) {
        const auto a = t1.apply(shifted(h1, shift)), b = shifted(t1.apply(h1), shift);
        double worst = 0.0;
        for (std::size_t i = 0; i < a.node_count(); ++i) worst = std::max(worst, std::abs(a.at(i, 0) - b.at(i, 0)));
        EXPECT_LE(worst, 1e-10) << "shift " << shift;
    }
    TeacherConfig c2 = TeacherConfig::full_2d();
    c2.grid = 32;
    const FourierTeacher t2(c2);
    RandomFieldSampler s2{2};
    s2.grid = 32;
    const auto h2 = s2.sample_field(4);
    const auto a = t2.apply(shifted(h2, 7)), b = shifted(t2.apply(h2), 7);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.node_count(); ++i) worst = std::max(worst, std::abs(a.at(i, 0) - b.at(i, 0)));
    EXPECT_LE(worst, 1e-10);
}

TEST(Teacher, OutputsAreReal) {
    const FourierTeacher t(TeacherConfig{});
    const RandomFieldSampler s{1};
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LE(t.hidden(s.sample_field(seed)).imag_residue, 1e-10);
    TeacherConfig c2 = TeacherConfig::full_2d();
    c2.grid = 32;
    RandomFieldSampler s2{2};
    s2.grid = 32;
    EXPECT_LE(FourierTeacher(c2).hidden(s2.sample_field(1)).imag_residue, 1e-10);
}

TEST(Teacher, SeedDeterminism) {
    const FourierTeacher a(TeacherConfig{}), b(TeacherConfig{});
    for (std::size_t k = 0; k < a.modes().size(); ++k) EXPECT_TRUE(a.spectral_weight(k) == b.spectral_weight(k));
    TeacherConfig other;
    other.seed = 8;
    EXPECT_FALSE(FourierTeacher(other).spectral_weight(1) == a.spectral_weight(1));
    const auto h = RandomFieldSampler{1}.sample_field(2);
    EXPECT_EQ(a.apply(h).raw(), b.apply(h).raw());
}

TEST(Teacher, RejectsCoarseGrid) {
    const FourierTeacher t(TeacherConfig{});
    const GridFunction coarse(Domain(1, DomainKind::torus, 1.0), 9, 1);
    EXPECT_THROW((void)t.apply(coarse), DomainError);
}

TEST(Teacher, ManifestRebuildsTheSameTeacher) {
    const FourierTeacher a(TeacherConfig{});
    const auto j = a.manifest();
    EXPECT_EQ(j.at("activation"), "tanh");
    EXPECT_EQ(j.at("parameter_count").get<std::size_t>(), a.parameter_count());
    const FourierTeacher b(TeacherConfig::from_json(j));
    const auto h = RandomFieldSampler{1}.sample_field(9);
    EXPECT_EQ(a.apply(h).raw(), b.apply(h).raw());
}

TEST(Sampler, SameSeedSameField) {
    const RandomFieldSampler s{1};
    EXPECT_EQ(s.sample_field(5).raw(), s.sample_field(5).raw());
    EXPECT_NE(s.sample_field(5).raw(), s.sample_field(6).raw());
}

TEST(Sampler, SupNormIsExactOnReferenceGrid) {
    for (std::size_t d : {1u, 2u}) {
        const RandomFieldSampler s{d};
        for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_NEAR(s.sample_field(seed).sup_norm(), 0.9, 1e-9);
    }
}

TEST(Sampler, SpectrumDecays) {
    const RandomFieldSampler s{1};
    std::vector<double> low, high;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = s.sample_field(seed);
        low.push_back(dft_magnitude(g, 1));
        high.push_back(dft_magnitude(g, 8));
    }
    std::nth_element(low.begin(), low.begin() + 50, low.end());
    std::nth_element(high.begin(), high.begin() + 50, high.end());
    EXPECT_LT(high[50], low[50]);
}

TEST(Sampler, TypicalTeacherOutputsStayInsideUnitBound) {
    const FourierTeacher t(TeacherConfig{});
    const RandomFieldSampler s{1};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) worst = std::max(worst, t.apply(s.sample_field(seed)).sup_norm());
    EXPECT_LT(worst, 1.0);
    EXPECT_GT(worst, 0.05);
}

TEST(PeriodicInterpolation, ExactAtNodes) {
    const auto g = RandomFieldSampler{1}.sample_field(1);
    for (std::size_t j = 0; j < g.node_count(); j += 7)
        EXPECT_EQ(interpolate_periodic(g, {g.node(j)})[0][0], g.at(j, 0));
}

TEST(PeriodicInterpolation, MidpointIsMean) {
    const auto g = RandomFieldSampler{1}.sample_field(2);
    const double x = (10.0 + 0.5) / 64.0;
    EXPECT_NEAR(interpolate_periodic(g, {{x}})[0][0], 0.5 * (g.at(10, 0) + g.at(11, 0)), 1e-15);
}

TEST(PeriodicInterpolation, WrapsAcrossTheSeam) {
    GridFunction g(Domain(1, DomainKind::torus, 1.0), 4, 1);
    g.raw() = {1.0, 2.0, 3.0, 5.0};
    // x = 1 - 0.05 sits between node 3 (x = 0.75) and node 0 (x = 1 == 0), 80% of the way.
    EXPECT_NEAR(interpolate_periodic(g, {{0.95}})[0][0], 0.2 * 5.0 + 0.8 * 1.0, 1e-14);
    EXPECT_NEAR(interpolate_periodic(g, {{-0.05}})[0][0], 0.2 * 5.0 + 0.8 * 1.0, 1e-14);
}
