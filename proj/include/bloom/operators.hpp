#pragma once

#include <cstdlib>
#include <vector>

#include "bloom/grid.hpp"
#include "bloom/kernel.hpp"
#include "bloom/pv.hpp"

namespace bloom {

/// Truncated singular integral on a fixed grid. The kernel is translation
/// invariant on a uniform grid, so K(x - y) * cell volume is tabulated once per
/// offset; application is still the direct O(N^{2 dim}) sum.
class SingularIntegral {
public:
    SingularIntegral(KernelSpec k, const Grid& g) : kernel_(std::move(k)), grid_(g) {
        const double radius = kernel_.truncation_radius(g);
        const auto n = static_cast<std::ptrdiff_t>(g.n);
        width_ = 2 * n - 1;
        const double vol = g.cell_volume(), h = g.h();
        if (g.dim == 1) {
            table_.assign(width_, 0.0);
            for (std::ptrdiff_t d = -(n - 1); d <= n - 1; ++d) {
                const Vec2 v{d * h, 0.0};
                if (norm(v, 1) >= radius) table_[d + n - 1] = kernel_.at(v) * vol;
            }
        } else {
            table_.assign(width_ * width_, 0.0);
            for (std::ptrdiff_t a = -(n - 1); a <= n - 1; ++a)
                for (std::ptrdiff_t c = -(n - 1); c <= n - 1; ++c) {
                    const Vec2 v{a * h, c * h};
                    if (norm(v, 2) >= radius) table_[(a + n - 1) * width_ + (c + n - 1)] = kernel_.at(v) * vol;
                }
        }
        for (double t : table_)
            if (!std::isfinite(t)) throw Error("kernel evaluation produced a non-finite value");
    }

    const KernelSpec& kernel() const { return kernel_; }
    const Grid& grid() const { return grid_; }

    GridFunction apply(const GridFunction& f) const {
        if (!f.grid().same_as(grid_)) throw Error("function does not live on the operator grid");
        std::vector<std::size_t> support;
        for (std::size_t y = 0; y < f.size(); ++y)
            if (f[y] != 0.0) support.push_back(y);
        GridFunction out(grid_);
        const auto n = static_cast<std::ptrdiff_t>(grid_.n);
        if (grid_.dim == 1) {
            const std::size_t chunks = std::max<std::size_t>(1, threads() * 4);
            const std::size_t len = (grid_.n + chunks - 1) / chunks;
            parallel_for(chunks, [&](std::size_t c) {
                const std::ptrdiff_t lo = c * len, hi = std::min<std::ptrdiff_t>(n, lo + len);
                double* o = out.samples().data();
                for (std::size_t y : support) {
                    const double fy = f[y];
                    const double* row = table_.data() + (n - 1) - static_cast<std::ptrdiff_t>(y);
                    for (std::ptrdiff_t x = lo; x < hi; ++x) o[x] += row[x] * fy;
                }
            });
        } else {
            parallel_for(grid_.n, [&](std::size_t x0) {
                double* o = out.samples().data() + x0 * grid_.n;
                for (std::size_t y : support) {
                    const auto yi = grid_.unflat(y);
                    const double fy = f[y];
                    const double* row = table_.data() +
                                        (static_cast<std::ptrdiff_t>(x0) - static_cast<std::ptrdiff_t>(yi[0]) + n - 1) * width_ +
                                        (n - 1) - static_cast<std::ptrdiff_t>(yi[1]);
                    for (std::ptrdiff_t x1 = 0; x1 < n; ++x1) o[x1] += row[x1] * fy;
                }
            });
        }
        return out;
    }

    /// Transpose with respect to the Lebesgue pairing: kernel Ω(-θ).
    SingularIntegral transpose() const { return SingularIntegral(kernel_.reflected(), grid_); }

private:
    KernelSpec kernel_;
    Grid grid_;
    std::ptrdiff_t width_ = 0;
    std::vector<double> table_;
};

/// Pointwise principal-value sum at every sample point.
inline GridFunction apply_T(const KernelSpec& k, const GridFunction& f) {
    return SingularIntegral(k, f.grid()).apply(f);
}

struct CommutatorSpec {
    KernelSpec kernel;
    GridFunction b;
    int m = 1;
};

inline void check_commutator_spec(const CommutatorSpec& s, const GridFunction& f) {
    if (s.m < 0) throw Error("commutator order must be nonnegative");
    s.b.require_compatible(f);
}

namespace detail {
inline GridFunction commutator_rec(const SingularIntegral& t, const GridFunction& b, int m, const GridFunction& f) {
    if (m == 0) return t.apply(f);
    return b * commutator_rec(t, b, m - 1, f) - commutator_rec(t, b, m - 1, b * f);
}
}  // namespace detail

/// T_b^m f = b T_b^{m-1} f - T_b^{m-1}(b f), T_b^0 = T.
inline GridFunction commutator_recursive(const CommutatorSpec& s, const GridFunction& f) {
    check_commutator_spec(s, f);
    const SingularIntegral t(s.kernel, f.grid());
    return detail::commutator_rec(t, s.b, s.m, f);
}

/// Σ_k C(m,k) (-1)^k b^{m-k} T(b^k f): m+1 applications of T instead of 2^m.
inline GridFunction commutator_binomial(const SingularIntegral& t, const GridFunction& b, int m, const GridFunction& f) {
    GridFunction out(f.grid());
    GridFunction bk_f = f;
    for (int k = 0; k <= m; ++k) {
        const GridFunction tk = t.apply(bk_f);
        const double c = binomial(m, k) * (k % 2 == 0 ? 1.0 : -1.0);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * std::pow(b[i], m - k) * tk[i];
        bk_f = bk_f * b;
    }
    return out;
}

inline GridFunction commutator_binomial(const CommutatorSpec& s, const GridFunction& f) {
    check_commutator_spec(s, f);
    return commutator_binomial(SingularIntegral(s.kernel, f.grid()), s.b, s.m, f);
}

/// Transpose of T_b^m: (-1)^m (T^t)_b^m.
inline GridFunction commutator_transpose(const SingularIntegral& t_transposed, const GridFunction& b, int m,
                                         const GridFunction& g) {
    GridFunction r = commutator_binomial(t_transposed, b, m, g);
    return m % 2 == 0 ? r : r * -1.0;
}

/// Smallest sup-norm distance, in cells, from x to the support of f.
inline std::ptrdiff_t cell_distance_to_support(const GridFunction& f, std::size_t x) {
    const Grid& g = f.grid();
    const auto xi = g.unflat(x);
    std::ptrdiff_t best = -1;
    for (std::size_t y = 0; y < f.size(); ++y) {
        if (f[y] == 0.0) continue;
        const auto yi = g.unflat(y);
        std::ptrdiff_t d = std::abs(static_cast<std::ptrdiff_t>(xi[0]) - static_cast<std::ptrdiff_t>(yi[0]));
        if (g.dim == 2)
            d = std::max(d, std::abs(static_cast<std::ptrdiff_t>(xi[1]) - static_cast<std::ptrdiff_t>(yi[1])));
        if (best < 0 || d < best) best = d;
    }
    return best < 0 ? std::numeric_limits<std::ptrdiff_t>::max() : best;
}

/// Direct quadrature of ∫ (b(x) - b(y))^m K(x, y) f(y) dy, valid for x at
/// least two cells away from supp f.
inline double commutator_kernel_form(const CommutatorSpec& s, const GridFunction& f, std::size_t x) {
    check_commutator_spec(s, f);
    const Grid& g = f.grid();
    if (x >= g.size()) throw Error("evaluation index outside the grid");
    if (cell_distance_to_support(f, x) < 2) throw Error("representation not applicable");
    const double radius = s.kernel.truncation_radius(g);
    const Vec2 px = g.midpoint(x);
    double acc = 0.0;
    for (std::size_t y = 0; y < f.size(); ++y) {
        if (f[y] == 0.0) continue;
        const Vec2 py = g.midpoint(y);
        const Vec2 d{px[0] - py[0], px[1] - py[1]};
        if (norm(d, g.dim) < radius) continue;
        acc += std::pow(s.b[x] - s.b[y], s.m) * s.kernel.at(d) * f[y];
    }
    return acc * g.cell_volume();
}

}  // namespace bloom
