#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bloom/common.hpp"

namespace bloom {

/// Axis-parallel cube [corner, corner + side)^dim.
struct Cube {
    int dim = 1;
    Vec2 corner{0.0, 0.0};
    double side = 1.0;

    Cube() = default;
    Cube(int d, Vec2 c, double s) : dim(d), corner(c), side(s) {
        if (d != 1 && d != 2) throw Error("cube dimension must be 1 or 2");
        if (!(s > 0.0) || !std::isfinite(s)) throw Error("cube side must be positive");
        if (d == 1) corner[1] = 0.0;
    }
    static Cube interval(double lo, double hi) { return Cube(1, {lo, 0.0}, hi - lo); }

    double volume() const { return dim == 1 ? side : side * side; }
    Vec2 center() const {
        return {corner[0] + side / 2, dim == 2 ? corner[1] + side / 2 : 0.0};
    }
    /// Same center, side scaled by `factor`.
    Cube dilate(double factor) const {
        const Vec2 c = center();
        const double s = side * factor;
        return Cube(dim, {c[0] - s / 2, dim == 2 ? c[1] - s / 2 : 0.0}, s);
    }
    bool contains(const Vec2& x) const {
        for (int a = 0; a < dim; ++a)
            if (x[a] < corner[a] || x[a] >= corner[a] + side) return false;
        return true;
    }
    bool contains(const Cube& q) const {
        constexpr double tol = 1e-12;
        for (int a = 0; a < dim; ++a) {
            const double scale = tol * std::max(1.0, std::abs(side));
            if (q.corner[a] < corner[a] - scale) return false;
            if (q.corner[a] + q.side > corner[a] + side + scale) return false;
        }
        return true;
    }
    /// Euclidean radius of the smallest ball centered at center() containing the cube.
    double circumradius() const { return side * std::sqrt(static_cast<double>(dim)) / 2; }
    bool operator==(const Cube&) const = default;
};

/// Geometry of a uniform grid over a box; samples sit at cell midpoints.
/// Cell (i0, i1) has flat index i0 * n + i1 (row-major, axis 0 slowest).
struct Grid {
    int dim = 1;
    Vec2 corner{0.0, 0.0};
    double side = 1.0;
    std::size_t n = 1;

    Grid() = default;
    Grid(int d, Vec2 c, double s, std::size_t cells) : dim(d), corner(c), side(s), n(cells) {
        if (d != 1 && d != 2) throw Error("grid dimension must be 1 or 2");
        if (!(s > 0.0)) throw Error("grid side must be positive");
        if (cells == 0) throw Error("grid needs at least one cell per axis");
        if (d == 1) corner[1] = 0.0;
    }
    /// Box [lo, hi)^dim.
    static Grid box(int d, double lo, double hi, std::size_t cells) {
        return Grid(d, {lo, d == 2 ? lo : 0.0}, hi - lo, cells);
    }

    double h() const { return side / static_cast<double>(n); }
    double cell_volume() const { return dim == 1 ? h() : h() * h(); }
    std::size_t size() const { return dim == 1 ? n : n * n; }
    Cube domain() const { return Cube(dim, corner, side); }

    std::size_t flat(std::size_t i0, std::size_t i1 = 0) const { return dim == 1 ? i0 : i0 * n + i1; }
    std::array<std::size_t, 2> unflat(std::size_t idx) const {
        return dim == 1 ? std::array<std::size_t, 2>{idx, 0} : std::array<std::size_t, 2>{idx / n, idx % n};
    }
    Vec2 midpoint(std::size_t idx) const {
        const auto ij = unflat(idx);
        const double hh = h();
        return {corner[0] + (static_cast<double>(ij[0]) + 0.5) * hh,
                dim == 2 ? corner[1] + (static_cast<double>(ij[1]) + 0.5) * hh : 0.0};
    }
    Cube cell_cube(std::size_t idx) const {
        const auto ij = unflat(idx);
        return Cube(dim, {corner[0] + ij[0] * h(), dim == 2 ? corner[1] + ij[1] * h() : 0.0}, h());
    }
    bool same_as(const Grid& o) const {
        return dim == o.dim && n == o.n && corner == o.corner && side == o.side;
    }
    /// Flat index of the cell whose midpoint is x; throws if x is not a sample point.
    std::size_t index_of(const Vec2& x) const {
        std::array<std::size_t, 2> ij{0, 0};
        for (int a = 0; a < dim; ++a) {
            const double u = (x[a] - corner[a]) / h() - 0.5;
            const double r = std::round(u);
            if (std::abs(u - r) > 1e-9 || r < 0 || r >= static_cast<double>(n))
                throw Error("point is not a sample point of the grid");
            ij[a] = static_cast<std::size_t>(r);
        }
        return flat(ij[0], ij[1]);
    }
};

/// Cube given by integer cell coordinates on a grid: cells [lo, lo + len) per axis.
struct CellBox {
    std::array<std::ptrdiff_t, 2> lo{0, 0};
    std::ptrdiff_t len = 1;
    bool operator==(const CellBox&) const = default;

    bool contains(const CellBox& o) const {
        return o.lo[0] >= lo[0] && o.lo[0] + o.len <= lo[0] + len && o.lo[1] >= lo[1] &&
               o.lo[1] + o.len <= lo[1] + len;
    }
};

inline Cube to_cube(const Grid& g, const CellBox& b) {
    const double hh = g.h();
    return Cube(g.dim, {g.corner[0] + b.lo[0] * hh, g.dim == 2 ? g.corner[1] + b.lo[1] * hh : 0.0},
                b.len * hh);
}

/// Cell coordinates of a grid-aligned cube lying inside the grid; throws otherwise.
inline CellBox to_cellbox(const Grid& g, const Cube& q) {
    if (q.dim != g.dim) throw Error("cube and grid dimensions differ");
    const double hh = g.h();
    CellBox b;
    const double len = q.side / hh;
    b.len = static_cast<std::ptrdiff_t>(std::llround(len));
    if (std::abs(len - b.len) > 1e-9 || b.len <= 0) throw Error("cube is not aligned to the grid");
    for (int a = 0; a < g.dim; ++a) {
        const double u = (q.corner[a] - g.corner[a]) / hh;
        b.lo[a] = static_cast<std::ptrdiff_t>(std::llround(u));
        if (std::abs(u - b.lo[a]) > 1e-9) throw Error("cube is not aligned to the grid");
        if (b.lo[a] < 0 || b.lo[a] + b.len > static_cast<std::ptrdiff_t>(g.n))
            throw Error("cube is not inside the grid");
    }
    if (g.dim == 1) b.lo[1] = 0;
    return b;
}

inline bool is_aligned(const Grid& g, const Cube& q) {
    try {
        to_cellbox(g, q);
        return true;
    } catch (const Error&) {
        return false;
    }
}

/// Flat indices of the cells of an in-grid cell box, in increasing order.
inline std::vector<std::size_t> box_cells(const Grid& g, const CellBox& b) {
    std::vector<std::size_t> out;
    if (g.dim == 1) {
        out.reserve(b.len);
        for (std::ptrdiff_t i = 0; i < b.len; ++i) out.push_back(static_cast<std::size_t>(b.lo[0] + i));
    } else {
        out.reserve(b.len * b.len);
        for (std::ptrdiff_t i = 0; i < b.len; ++i)
            for (std::ptrdiff_t j = 0; j < b.len; ++j)
                out.push_back(g.flat(static_cast<std::size_t>(b.lo[0] + i), static_cast<std::size_t>(b.lo[1] + j)));
    }
    return out;
}

/// A cell touched by a cube, with the covered fraction of its volume.
struct CellWeight {
    std::size_t index;
    double fraction;
};

/// Cells of the grid intersecting q, with covered volume fractions.
inline std::vector<CellWeight> covered_cells(const Grid& g, const Cube& q) {
    if (q.dim != g.dim) throw Error("cube and grid dimensions differ");
    const double hh = g.h();
    std::array<std::vector<std::pair<std::size_t, double>>, 2> axis;
    for (int a = 0; a < g.dim; ++a) {
        const double lo = (q.corner[a] - g.corner[a]) / hh;
        const double hi = lo + q.side / hh;
        const double first = std::max(0.0, std::floor(lo));
        const double last = std::min(static_cast<double>(g.n), std::ceil(hi));
        for (double c = first; c < last; c += 1.0) {
            double frac = std::min(hi, c + 1.0) - std::max(lo, c);
            if (frac > 1.0 - 1e-9) frac = 1.0;
            if (frac < 1e-9) continue;
            axis[a].emplace_back(static_cast<std::size_t>(c), frac);
        }
    }
    std::vector<CellWeight> out;
    if (g.dim == 1) {
        for (auto [i, f] : axis[0]) out.push_back({i, f});
    } else {
        for (auto [i, fi] : axis[0])
            for (auto [j, fj] : axis[1]) out.push_back({g.flat(i, j), fi * fj});
    }
    return out;
}

/// Cells whose midpoints lie in q (used for indicator functions and carve-outs).
inline std::vector<std::size_t> cells_with_midpoint_in(const Grid& g, const Cube& q) {
    std::vector<std::size_t> out;
    for (const auto& cw : covered_cells(g, q))
        if (q.contains(g.midpoint(cw.index))) out.push_back(cw.index);
    return out;
}

/// Real-valued function sampled at the cell midpoints of a grid.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(Grid g, double value = 0.0) : grid_(g), v_(g.size(), value) {}
    GridFunction(Grid g, std::vector<double> samples) : grid_(g), v_(std::move(samples)) {
        if (v_.size() != grid_.size()) throw Error("sample count does not match grid");
        for (double x : v_)
            if (!std::isfinite(x)) throw Error("grid function samples must be finite");
    }
    template <class F>
    static GridFunction from(const Grid& g, F&& fn) {
        std::vector<double> s(g.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = fn(g.midpoint(i));
        return GridFunction(g, std::move(s));
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    double& operator[](std::size_t i) { return v_[i]; }
    const std::vector<double>& samples() const { return v_; }
    std::vector<double>& samples() { return v_; }

    bool compatible(const GridFunction& o) const { return grid_.same_as(o.grid_); }

    template <class Op>
    GridFunction map(Op&& op) const {
        GridFunction r(grid_);
        for (std::size_t i = 0; i < v_.size(); ++i) r.v_[i] = op(v_[i]);
        return r;
    }
    template <class Op>
    GridFunction zip(const GridFunction& o, Op&& op) const {
        require_compatible(o);
        GridFunction r(grid_);
        for (std::size_t i = 0; i < v_.size(); ++i) r.v_[i] = op(v_[i], o.v_[i]);
        return r;
    }

    GridFunction operator+(const GridFunction& o) const { return zip(o, std::plus<>{}); }
    GridFunction operator-(const GridFunction& o) const { return zip(o, std::minus<>{}); }
    GridFunction operator*(const GridFunction& o) const { return zip(o, std::multiplies<>{}); }
    GridFunction operator*(double c) const { return map([c](double x) { return c * x; }); }
    GridFunction operator+(double c) const { return map([c](double x) { return x + c; }); }
    GridFunction abs() const { return map([](double x) { return std::abs(x); }); }
    GridFunction pow(double e) const { return map([e](double x) { return std::pow(x, e); }); }

    double max_abs() const {
        double m = 0.0;
        for (double x : v_) m = std::max(m, std::abs(x));
        return m;
    }

    void require_compatible(const GridFunction& o) const {
        if (!compatible(o)) throw Error("grid functions live on different grids");
    }

private:
    Grid grid_;
    std::vector<double> v_;
};

inline GridFunction operator*(double c, const GridFunction& f) { return f * c; }

/// Volume-weighted midpoint rule over q ∩ box.
inline double integrate(const GridFunction& f, const Cube& q) {
    const auto cells = covered_cells(f.grid(), q);
    if (cells.empty()) throw Error("cube outside domain");
    const double vol = f.grid().cell_volume();
    double s = 0.0;
    for (const auto& cw : cells) s += f[cw.index] * cw.fraction;
    return s * vol;
}

inline double integrate(const GridFunction& f) { return integrate(f, f.grid().domain()); }

inline double average(const GridFunction& f, const Cube& q) { return integrate(f, q) / q.volume(); }

/// Sum of f over an explicit cell set, times the cell volume.
inline double integrate_cells(const GridFunction& f, const std::vector<std::size_t>& cells) {
    double s = 0.0;
    for (auto i : cells) s += f[i];
    return s * f.grid().cell_volume();
}

// Text format: header "dim N corner... side" then N^dim samples, row-major.

inline void write_grid_function(std::ostream& os, const GridFunction& f) {
    const Grid& g = f.grid();
    char buf[64];
    os << g.dim << ' ' << g.n;
    for (int a = 0; a < g.dim; ++a) {
        std::snprintf(buf, sizeof buf, " %.17g", g.corner[a]);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, " %.17g\n", g.side);
    os << buf;
    for (std::size_t i = 0; i < f.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", f[i]);
        os << buf << ((g.dim == 2 && (i + 1) % g.n != 0) || (g.dim == 1 && i + 1 != f.size()) ? ' ' : '\n');
    }
}

inline GridFunction read_grid_function(std::istream& is) {
    int dim = 0;
    std::size_t n = 0;
    if (!(is >> dim >> n)) throw Error("grid function header: expected 'dim N corner... side'");
    if (dim != 1 && dim != 2) throw Error("grid function header: dim must be 1 or 2");
    Vec2 corner{0.0, 0.0};
    double side = 0.0;
    for (int a = 0; a < dim; ++a)
        if (!(is >> corner[a])) throw Error("grid function header: missing corner");
    if (!(is >> side)) throw Error("grid function header: missing side");
    Grid g(dim, corner, side, n);
    std::vector<double> s(g.size());
    for (auto& x : s)
        if (!(is >> x)) throw Error("grid function: too few samples");
    std::string extra;
    if (is >> extra) throw Error("grid function: trailing data after samples");
    return GridFunction(g, std::move(s));
}

inline void save_grid_function(const std::string& path, const GridFunction& f) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_grid_function(os, f);
}

inline GridFunction load_grid_function(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return read_grid_function(is);
}

}  // namespace bloom
