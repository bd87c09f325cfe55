#pragma once

#include "bloom/grid.hpp"
#include "bloom/kernel.hpp"

namespace bloom {

struct QuadratureReport {
    double value = 0.0;
    std::size_t cells_used = 0;
    std::size_t cells_excluded = 0;  ///< cells inside the truncation radius
};

/// Truncated principal-value sum of K(x, y) f(y) over all cells y with
/// |x - y| >= truncation radius. `x` is the flat index of a sample point.
inline QuadratureReport pv_integral(const KernelSpec& k, const GridFunction& f, std::size_t x) {
    const Grid& g = f.grid();
    if (x >= g.size()) throw Error("evaluation index outside the grid");
    const double radius = k.truncation_radius(g);
    const Vec2 px = g.midpoint(x);
    QuadratureReport rep;
    double s = 0.0;
    for (std::size_t y = 0; y < g.size(); ++y) {
        const Vec2 py = g.midpoint(y);
        const Vec2 d{px[0] - py[0], px[1] - py[1]};
        if (norm(d, g.dim) < radius) {
            ++rep.cells_excluded;
            continue;
        }
        ++rep.cells_used;
        if (f[y] == 0.0) continue;
        const double kv = k.at(d);
        if (!std::isfinite(kv)) throw Error("kernel evaluation produced a non-finite value");
        s += kv * f[y];
    }
    rep.value = s * g.cell_volume();
    return rep;
}

/// Same, with x given as a point; it must coincide with a cell midpoint.
inline QuadratureReport pv_integral(const KernelSpec& k, const GridFunction& f, const Vec2& x) {
    return pv_integral(k, f, f.grid().index_of(x));
}

}  // namespace bloom
