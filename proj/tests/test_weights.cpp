#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bloom;

namespace {
Grid sym_grid(std::size_t n = 1024) { return Grid::box(1, -1.0, 1.0, n); }
}  // namespace

TEST(Weight, RejectsNonPositive) {
    const Grid g = Grid::box(1, 0, 1, 8);
    EXPECT_THROW(Weight(GridFunction(g, 0.0)), Error);
    EXPECT_THROW(constant_weight(g, -1), Error);
}

TEST(WeightSpec, ParsesAllForms) {
    const Grid g = Grid::box(1, 0, 1, 8);
    EXPECT_EQ(parse_weight("const:2.5", g).w[3], 2.5);
    EXPECT_DOUBLE_EQ(parse_weight("power:0.5", g).w[0], std::sqrt(g.midpoint(0)[0]));
    EXPECT_EQ(parse_weight("twolevel:1", g).w[0], 2.0);
    EXPECT_EQ(parse_weight("twolevel:1", g).w[7], 1.0);
    EXPECT_THROW(parse_weight("bogus:1", g), Error);
}

TEST(ApConstant, ConstantWeightIsOne) {
    const Grid g = sym_grid(256);
    const auto dict = build_dictionary(g);
    for (double p : {1.5, 2.0, 4.0}) EXPECT_NEAR(ap_constant(constant_weight(g, 3.0), p, dict), 1.0, 1e-12);
}

TEST(ApConstant, PowerWeightsOnUnitInterval) {
    const Grid g = sym_grid(2048);
    const auto dict = build_dictionary(g);
    // closed forms on (0,1): <x^a> <x^{-a}> = 1/((1+a)(1-a))
    EXPECT_GE(ap_constant(power_weight(g, 0.5), 2, dict), 4.0 / 3.0 - 1e-2);
    EXPECT_GE(ap_constant(power_weight(g, -0.25), 2, dict), 16.0 / 15.0 - 1e-2);
}

TEST(ApConstant, JensenLowerBoundAndEqualityCase) {
    Rng rng(5);
    const Grid g = sym_grid(128);
    const auto dict = build_dictionary(g);
    for (int t = 0; t < 20; ++t) {
        GridFunction w(g);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(rng.uniform(-2, 2));
        EXPECT_GT(ap_constant(Weight(w), 2, dict), 1.0 + 1e-9);
    }
    EXPECT_NEAR(ap_constant(constant_weight(g, 0.1), 3, dict), 1.0, 1e-9);
}

TEST(ApConstant, Duality) {
    const Grid g = sym_grid(512);
    const auto dict = build_dictionary(g);
    for (double a : {-0.4, 0.3, 0.7}) {
        const Weight w = power_weight(g, a);
        // p = 2: self-dual
        EXPECT_NEAR(ap_constant(w, 2, dict), ap_constant(Weight(w.w.pow(-1.0)), 2, dict), 1e-6);
        // p = 3, p' = 3/2: [σ]_{A_{p'}} = [w]_{A_p}^{1/(p-1)}
        const double p = 3, pp = 1.5;
        const Weight sigma(w.w.pow(1 - pp));
        EXPECT_NEAR(ap_constant(sigma, pp, dict), std::pow(ap_constant(w, p, dict), 1 / (p - 1)), 1e-6);
    }
}

TEST(ApConstant, HolderProductOfPowerWeights) {
    const Grid g = sym_grid(512);
    const auto dict = build_dictionary(g);
    const Weight lambda = power_weight(g, -0.3), mu = power_weight(g, 0.6);
    const double al = ap_constant(lambda, 2, dict), am = ap_constant(mu, 2, dict);
    for (int m = 1; m <= 3; ++m)
        for (int i = 0; i <= m; ++i) {
            const double t = static_cast<double>(i) / m;
            const Weight mix(lambda.w.pow(1 - t) * mu.w.pow(t));
            EXPECT_LE(ap_constant(mix, 2, dict), std::pow(al, 1 - t) * std::pow(am, t) * (1 + 1e-9));
        }
}

TEST(BmoEta, ConstantAndIndicator) {
    const Grid g = Grid::box(1, 0, 1, 512);
    const auto dict = build_dictionary(g);
    const Weight one = constant_weight(g, 1);
    EXPECT_EQ(bmo_eta_norm(GridFunction(g, 4.0), one, dict), 0.0);
    const GridFunction chi = GridFunction::from(g, [](const Vec2& x) { return x[0] < 0.5 ? 1.0 : 0.0; });
    EXPECT_NEAR(bmo_eta_norm(chi, one, dict), 0.5, 1e-3);
}

TEST(BmoEta, PowerExampleBoundedByTwo) {
    const Grid g = Grid::box(1, 0, 1, 2048);
    const auto dict = build_dictionary(g);
    const Weight eta = power_weight(g, 0.125);
    EXPECT_LE(bmo_eta_norm(eta.w, eta, dict), 2 + 1e-2);
}

TEST(BmoEta, ShiftInvarianceAndHomogeneity) {
    Rng rng(9);
    const Grid g = sym_grid(256);
    const auto dict = build_dictionary(g);
    const Weight eta = power_weight(g, 0.3);
    for (int t = 0; t < 10; ++t) {
        GridFunction b(g);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1);
        const double base = bmo_eta_norm(b, eta, dict);
        EXPECT_NEAR(bmo_eta_norm(b + 17.0, eta, dict), base, 1e-12 * base);
        EXPECT_NEAR(bmo_eta_norm(b * -3.0, eta, dict), 3 * base, 1e-12 * base);
    }
}

TEST(BloomSetup, EqualWeightsGiveUnweightedBmo) {
    const Grid g = sym_grid(256);
    const auto dict = build_dictionary(g);
    const Weight mu = power_weight(g, 0.4);
    const BloomSetup s(mu, mu, 2.0, 2);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(s.nu.w[i], 1.0);
        EXPECT_EQ(s.eta.w[i], 1.0);
    }
    const GridFunction b = power_weight(g, 0.25).w;
    EXPECT_EQ(bmo_eta_norm(b, s.eta, dict), bmo_eta_norm(b, constant_weight(g, 1), dict));
}

TEST(Doubling, Examples) {
    const Grid g1 = sym_grid(512);
    const auto d1 = build_dictionary(g1);
    EXPECT_NEAR(doubling_constant(constant_weight(g1, 1), 2, d1), 2.0, 1e-12);
    EXPECT_LE(doubling_constant(power_weight(g1, 0.5), 2, d1), std::pow(2.0, 1.5) + 1e-2);
    const Grid g2 = Grid::box(2, -1, 1, 48);
    EXPECT_NEAR(doubling_constant(constant_weight(g2, 1), 3, build_dictionary(g2)), 9.0, 1e-12);
}

TEST(LevelSetGamma, Examples) {
    const Grid g = sym_grid(512);
    EXPECT_NEAR(level_set_gamma(constant_weight(g, 2), build_dictionary(g)), 1.0, 1e-12);
    const Grid u = Grid::box(1, 0, 1, 512);
    // w = 2 on [0,1/2), 1 on [1/2,1): w_Q = 3/2 and w >= 2 = (4/3) w_Q on exactly half of Q
    const double gam = level_set_gamma(two_level_weight(u, 1.0), CubeDictionary::of({u.domain()}));
    EXPECT_NEAR(gam, 4.0 / 3.0, 1e-12);
}

TEST(LevelSetGamma, PowerWeightMonotoneInDictionary) {
    const Grid g = sym_grid(512);
    const Weight w = power_weight(g, 0.5);
    const auto small = CubeDictionary::of({g.domain(), Cube::interval(0, 1)});
    const auto big = build_dictionary(g);
    const double gs = level_set_gamma(w, small), gb = level_set_gamma(w, big);
    EXPECT_GT(gb, 0.0);
    EXPECT_LT(gb, 1.0);
    EXPECT_LE(gb, gs);
}

TEST(ReverseJensen, Examples) {
    const Grid g = sym_grid(512);
    const auto dict = build_dictionary(g);
    const auto flat = reverse_jensen(constant_weight(g, 5), 0.3, dict);
    EXPECT_NEAR(flat.value, 1.0, 1e-12);
    const Grid u = Grid::box(1, 0, 1, 512);
    const auto two = reverse_jensen(two_level_weight(u, 1.0), 0.5, CubeDictionary::of({u.domain()}));
    EXPECT_NEAR(two.value, 1.5 / std::pow((1 + std::sqrt(2.0)) / 2, 2), 1e-9);
    EXPECT_TRUE(two.ok);
    const auto pw = reverse_jensen(power_weight(g, 0.5), 0.5, dict);
    EXPECT_TRUE(pw.ok);
    EXPECT_NEAR(pw.bound, 4.0 / pw.gamma, 1e-12);
}

TEST(ReverseJensen, HoldsForRandomWeights) {
    Rng rng(21);
    const Grid g = sym_grid(128);
    const auto dict = build_dictionary(g);
    for (int t = 0; t < 10; ++t) {
        GridFunction w(g);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(rng.uniform(-3, 3));
        for (double d : {0.25, 0.5, 0.75}) EXPECT_TRUE(reverse_jensen(Weight(w), d, dict).ok);
    }
}

TEST(DensityBeta, Examples) {
    const Grid u = Grid::box(1, 0, 1, 512);
    EXPECT_DOUBLE_EQ(density_beta(constant_weight(u, 1), 0.5, u.domain(), 8), 0.5);
    EXPECT_NEAR(density_beta(two_level_weight(u, 1.0), 0.5, u.domain(), 8), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(density_beta(power_weight(u, 0.7), 1.0, u.domain()), 1.0);
}

TEST(Dictionary, ContainsOriginLadderAndDyadicCubes) {
    const Grid g = sym_grid(64);
    const auto d = build_dictionary(g);
    auto has = [&](const Cube& q) {
        return std::any_of(d.cubes.begin(), d.cubes.end(),
                           [&](const Cube& c) { return c.corner == q.corner && c.side == q.side; });
    };
    EXPECT_TRUE(has(Cube::interval(0, 1)));
    EXPECT_TRUE(has(Cube::interval(-1, 1)));
    EXPECT_TRUE(has(Cube::interval(-0.5, 0.5)));
    EXPECT_TRUE(has(Cube::interval(0, 0.0625)));
}
