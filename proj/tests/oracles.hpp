#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bloom/bloom.hpp"

/// Independent reference computations used by the tests. None of these
/// call the library routine they are compared against.
namespace oracle {

using bloom::Cube;
using bloom::Grid;
using bloom::GridFunction;

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
    return s * h / 3;
}

/// Cells whose midpoints lie in q, by direct scan.
inline std::vector<std::size_t> cells_in(const Grid& g, const Cube& q) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.midpoint(i);
        bool in = true;
        for (int a = 0; a < g.dim; ++a) in = in && x[a] >= q.corner[a] && x[a] < q.corner[a] + q.side;
        if (in) out.push_back(i);
    }
    return out;
}

/// g*(t) with t measured in cells: the k-th largest |value|, k = floor(t).
inline double rearrangement(std::vector<double> v, double t_cells) {
    for (auto& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::floor(t_cells + 1e-9));
    return k < v.size() ? v[k] : 0.0;
}

/// inf over c of ((f - c)χ_Q)^*(λ|Q|) by scanning every sample value and every
/// pairwise midpoint.
inline double local_mean_osc(const std::vector<double>& v, double lambda) {
    std::vector<double> cand = v;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) cand.push_back(0.5 * (v[i] + v[j]));
    double best = INFINITY;
    const double t = lambda * static_cast<double>(v.size());
    for (double c : cand) {
        std::vector<double> w(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[i] - c;
        best = std::min(best, rearrangement(w, t));
    }
    return best;
}

/// Smallest sample value m with #{f > m} <= n/2 and #{f < m} <= n/2.
inline double median(const std::vector<double>& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    for (double m : s) {
        std::size_t above = 0, below = 0;
        for (double x : v) above += x > m, below += x < m;
        if (2 * above <= v.size() && 2 * below <= v.size()) return m;
    }
    return NAN;
}

/// Truncated Hilbert sum Σ f(y)/(x - y) h over |x - y| >= 1.5h, no 1/π.
inline double hilbert_pv(const GridFunction& f, std::size_t x) {
    const Grid& g = f.grid();
    const double h = g.h();
    double s = 0.0;
    for (std::size_t y = 0; y < g.size(); ++y) {
        const double d = g.midpoint(x)[0] - g.midpoint(y)[0];
        if (std::abs(d) < 1.5 * h - 1e-12) continue;
        s += f[y] / d * h;
    }
    return s;
}

/// Σ (b(x) - b(y))^m K(x, y) f(y) vol over cells y != x, by direct loop.
inline double kernel_form(const bloom::KernelSpec& k, const GridFunction& b, int m, const GridFunction& f, std::size_t x) {
    const Grid& g = f.grid();
    double s = 0.0;
    const auto px = g.midpoint(x);
    for (std::size_t y = 0; y < g.size(); ++y) {
        if (y == x || f[y] == 0.0) continue;
        const auto py = g.midpoint(y);
        bloom::Vec2 d{px[0] - py[0], px[1] - py[1]};
        const double r = g.dim == 1 ? std::abs(d[0]) : std::hypot(d[0], d[1]);
        if (r < k.truncation_cells() * g.h() - 1e-12) continue;
        s += std::pow(b[x] - b[y], m) * k.at(d) * f[y] * g.cell_volume();
    }
    return s;
}

/// Σ_Q avg(h, Q) χ_Q over the midpoint cells of each cube.
inline GridFunction sparse_average(const Grid& g, const std::vector<Cube>& cubes, const GridFunction& h) {
    GridFunction out(g);
    for (const auto& q : cubes) {
        const auto cs = cells_in(g, q);
        double a = 0.0;
        for (auto c : cs) a += h[c];
        a /= static_cast<double>(cs.size());
        for (auto c : cs) out[c] += a;
    }
    return out;
}

/// ∫_0^1 |t^s - 1/(1+s)| dt by Simpson after splitting at the crossing point;
/// t = u^8 on the first piece smooths t^s at 0 for s > -7/8.
inline double power_osc_constant(double s) {
    const double c = 1 / (1 + s);
    const double t = std::pow(c, 1 / s);
    auto f = [&](double x) { return std::abs(std::pow(x, s) - c); };
    auto g = [&](double u) { return u <= 0 ? 0.0 : f(std::pow(u, 8)) * 8 * std::pow(u, 7); };
    return simpson(g, 0.0, std::pow(t, 0.125)) + simpson(f, t, 1.0);
}

/// Random ±1 step function with `pieces` equal pieces.
inline GridFunction random_signs(const Grid& g, std::size_t pieces, bloom::Rng& rng) {
    std::vector<double> s(pieces);
    for (auto& x : s) x = rng.uniform() < 0.5 ? -1.0 : 1.0;
    GridFunction f(g);
    for (std::size_t i = 0; i < g.size(); ++i) f[i] = s[g.unflat(i)[0] * pieces / g.n];
    return f;
}

}  // namespace oracle
