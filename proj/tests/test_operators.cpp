#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace bloom;

namespace {
GridFunction random_poly(const Grid& g, int degree, Rng& rng) {
    std::vector<double> c(degree + 1);
    for (auto& x : c) x = rng.uniform(-1, 1);
    return GridFunction::from(g, [&](const Vec2& x) {
        double s = 0.0, p = 1.0;
        for (double a : c) s += a * p, p *= (x[0] + 0.5 * x[1]);
        return s;
    });
}
GridFunction supported_in(const Grid& g, const Cube& q, Rng& rng) {
    GridFunction f(g);
    for (auto c : oracle::cells_in(g, q)) f[c] = rng.uniform(-1, 1);
    return f;
}
}  // namespace

TEST(KernelSpec, ParsesSpecStrings) {
    EXPECT_EQ(parse_kernel("hilbert").dim(), 1);
    const auto cos = parse_kernel("s1:cos");
    EXPECT_EQ(cos.dim(), 2);
    EXPECT_EQ(cos.sample_count(), 4096u);
    EXPECT_NEAR(cos.omega_angle(0.3), std::cos(0.3), 1e-6);
    const auto patch = parse_kernel("s1:signpatch:0.5:1");
    EXPECT_EQ(patch.omega_angle(0.5), 1.0);
    EXPECT_EQ(patch.omega_angle(2.5), 0.0);
    EXPECT_THROW(parse_kernel("nope"), Error);
    const auto path = std::filesystem::temp_directory_path() / "bloom_kernel_samples.txt";
    {
        std::ofstream os(path);
        for (int j = 0; j < 16; ++j) os << (j < 8 ? 1 : -1) << '\n';
    }
    const auto file = parse_kernel("s1:file:" + path.string());
    EXPECT_EQ(file.sample_count(), 16u);
    EXPECT_TRUE(file.mean_zero());
    std::filesystem::remove(path);
}

TEST(KernelSpec, MeanZeroFlag) {
    EXPECT_TRUE(KernelSpec::hilbert().mean_zero());
    EXPECT_TRUE(KernelSpec::cosine().mean_zero());
    EXPECT_FALSE(KernelSpec::sign_patch(0, 1).mean_zero());
}

TEST(Dini, Examples) {
    const auto flat = dini_modulus(KernelSpec::circle([](double) { return 2.0; }, "const"), {});
    EXPECT_EQ(flat.integral, 0.0);
    for (double w : flat.modulus) EXPECT_EQ(w, 0.0);
    const auto cos = dini_modulus(KernelSpec::cosine(), {});
    for (std::size_t i = 0; i < cos.delta.size(); ++i) EXPECT_LE(cos.modulus[i], cos.delta[i] * (1 + 1e-9));
    EXPECT_LE(cos.integral, 1.0);
    EXPECT_FALSE(cos.divergent);
    const auto h = dini_modulus(KernelSpec::hilbert(), {0.1, 1.0, 1.9});
    for (double w : h.modulus) EXPECT_EQ(w, 0.0);
}

TEST(Dini, RoughKernelFlagged) {
    EXPECT_TRUE(dini_modulus(KernelSpec::sign_patch(0, 1), {}).divergent);
}

TEST(ApplyT, Examples) {
    const Grid g = Grid::box(1, -4, 4, 2048);
    EXPECT_EQ(apply_T(KernelSpec::hilbert(), GridFunction(g)).max_abs(), 0.0);
    const GridFunction chi = GridFunction::from(g, [](const Vec2& x) { return std::abs(x[0]) < 1 ? 1.0 : 0.0; });
    const GridFunction t = apply_T(KernelSpec::hilbert(), chi);
    const std::size_t x = g.index_of({2 + g.h() / 2, 0});
    EXPECT_NEAR(t[x], std::log(3.0), 1e-2);
    const Grid s = Grid::box(1, -1, 1, 257);
    const GridFunction even = GridFunction::from(s, [](const Vec2& p) { return std::cos(3 * p[0]); });
    EXPECT_NEAR(apply_T(KernelSpec::hilbert(), even)[128], 0.0, 1e-12);
}

TEST(ApplyT, MatchesDirectPvEverywhere) {
    Rng rng(1);
    const Grid g = Grid::box(1, -1, 1, 200);
    GridFunction f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
    const GridFunction t = apply_T(KernelSpec::hilbert(), f);
    for (std::size_t x = 0; x < g.size(); x += 7) EXPECT_NEAR(t[x], oracle::hilbert_pv(f, x), 1e-10);
    const Grid g2 = Grid::box(2, -1, 1, 20);
    GridFunction f2(g2);
    for (std::size_t i = 0; i < f2.size(); ++i) f2[i] = rng.uniform(-1, 1);
    const auto k = KernelSpec::cosine();
    const GridFunction t2 = apply_T(k, f2);
    for (std::size_t x = 0; x < g2.size(); x += 13) EXPECT_NEAR(t2[x], pv_integral(k, f2, x).value, 1e-10);
}

TEST(ApplyT, AntisymmetryOfHilbert) {
    Rng rng(3);
    const Grid g = Grid::box(1, -2, 2, 512);
    const GridFunction f = supported_in(g, Cube::interval(-2, -0.5), rng);
    const GridFunction h = supported_in(g, Cube::interval(0.5, 2), rng);
    const auto k = KernelSpec::hilbert();
    const double a = pairing(apply_T(k, f), h), b = pairing(f, apply_T(k, h));
    EXPECT_NEAR(a, -b, 1e-8 * std::max(1.0, std::abs(a)));
}

TEST(Commutator, ConstantSymbolVanishes) {
    const Grid g = Grid::box(1, -1, 1, 256);
    Rng rng(5);
    GridFunction f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
    const CommutatorSpec s{KernelSpec::hilbert(), GridFunction(g, 2.0), 1};
    const GridFunction c = commutator_recursive(s, f);
    EXPECT_LE(c.max_abs(), 1e-12 * apply_T(s.kernel, f).max_abs() * 2 + 1e-12);
}

TEST(Commutator, OrderZeroIsT) {
    const Grid g = Grid::box(1, -1, 1, 128);
    const GridFunction f = GridFunction::from(g, [](const Vec2& x) { return x[0] * x[0]; });
    const CommutatorSpec s{KernelSpec::hilbert(), GridFunction(g, 1.0), 0};
    const GridFunction a = commutator_recursive(s, f), b = apply_T(s.kernel, f);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Commutator, LinearSymbolOnIndicator) {
    const Grid g = Grid::box(1, -4, 4, 4096);
    const GridFunction chi = GridFunction::from(g, [](const Vec2& x) { return std::abs(x[0]) < 1 ? 1.0 : 0.0; });
    const CommutatorSpec s{KernelSpec::hilbert(), GridFunction::from(g, [](const Vec2& x) { return x[0]; }), 1};
    const std::size_t x = g.index_of({2 + g.h() / 2, 0});
    EXPECT_NEAR(commutator_recursive(s, chi)[x], 2.0, 2e-2);
}

TEST(Commutator, BinomialIdentity) {
    Rng rng(7);
    for (int dim : {1, 2}) {
        const Grid g = Grid::box(dim, -1, 1, dim == 1 ? 256 : 16);
        const auto k = dim == 1 ? KernelSpec::hilbert() : KernelSpec::cosine();
        for (int m = 1; m <= 3; ++m) {
            const GridFunction b = random_poly(g, 2, rng);
            GridFunction f(g);
            for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
            const CommutatorSpec s{k, b, m};
            const GridFunction r = commutator_recursive(s, f), c = commutator_binomial(s, f);
            const double scale = std::max(1e-300, r.max_abs());
            for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(r[i], c[i], 1e-10 * scale);
        }
    }
}

TEST(Commutator, KernelFormMatchesRecursiveForm) {
    Rng rng(9);
    for (int dim : {1, 2}) {
        const Grid g = Grid::box(dim, -1, 1, dim == 1 ? 256 : 24);
        const std::vector<KernelSpec> kernels =
            dim == 1 ? std::vector<KernelSpec>{KernelSpec::hilbert()}
                     : std::vector<KernelSpec>{KernelSpec::cosine(), KernelSpec::sign_patch(0.4, 1.2)};
        for (const auto& k : kernels)
            for (int m = 1; m <= 2; ++m) {
                const GridFunction b = random_poly(g, 3, rng);
                const GridFunction f = supported_in(g, Cube(dim, {-1, -1}, 0.75), rng);
                const CommutatorSpec s{k, b, m};
                const GridFunction r = commutator_recursive(s, f);
                std::size_t checked = 0;
                for (std::size_t x = 0; x < g.size(); ++x) {
                    if (cell_distance_to_support(f, x) < 2) continue;
                    const double kf = commutator_kernel_form(s, f, x);
                    EXPECT_NEAR(kf, r[x], 1e-8 * std::max(std::abs(r[x]), 1e-3 * r.max_abs()));
                    EXPECT_NEAR(kf, oracle::kernel_form(k, b, m, f, x), 1e-12 * std::max(1.0, std::abs(kf)));
                    ++checked;
                }
                EXPECT_GT(checked, 0u);
            }
    }
}

TEST(Commutator, KernelFormRejectsNearSupport) {
    const Grid g = Grid::box(1, -1, 1, 64);
    const GridFunction f = GridFunction::from(g, [](const Vec2& x) { return x[0] < 0 ? 1.0 : 0.0; });
    const CommutatorSpec s{KernelSpec::hilbert(), GridFunction(g, 1.0), 1};
    EXPECT_THROW(commutator_kernel_form(s, f, 32), Error);
    EXPECT_EQ(commutator_kernel_form(s, f, 40), 0.0);
    const CommutatorSpec s0{KernelSpec::hilbert(), GridFunction(g, 1.0), 0};
    EXPECT_NEAR(commutator_kernel_form(s0, f, 40), pv_integral(s0.kernel, f, std::size_t{40}).value, 1e-12);
}

TEST(Commutator, TransposeIsAdjoint) {
    Rng rng(11);
    const Grid g = Grid::box(2, -1, 1, 16);
    const SingularIntegral t(KernelSpec::sign_patch(0.3, 1.0), g);
    const SingularIntegral tt = t.transpose();
    const GridFunction b = random_poly(g, 2, rng);
    GridFunction f(g), h(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1), h[i] = rng.uniform(-1, 1);
    for (int m = 0; m <= 3; ++m) {
        const double a = pairing(commutator_binomial(t, b, m, f), h);
        const double c = pairing(f, commutator_transpose(tt, b, m, h));
        EXPECT_NEAR(a, c, 1e-10 * std::max(1.0, std::abs(a)));
    }
}

TEST(Commutator, FarFieldValue) {
    // [x, H]χ_E(x) = ∫_E dy = |E| for every x away from E
    const Grid g = Grid::box(1, -8, 8, 2048);
    const GridFunction chi = GridFunction::from(g, [](const Vec2& x) { return std::abs(x[0]) < 0.5 ? 1.0 : 0.0; });
    const CommutatorSpec s{KernelSpec::hilbert(), GridFunction::from(g, [](const Vec2& x) { return x[0]; }), 1};
    const GridFunction c = commutator_recursive(s, chi);
    for (double x : {2.0, 4.0, 7.0}) EXPECT_NEAR(c[g.index_of({x + g.h() / 2, 0})], 1.0, 1e-9);
}
