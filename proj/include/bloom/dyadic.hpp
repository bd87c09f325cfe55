#pragma once

#include <algorithm>
#include <array>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bloom/grid.hpp"

namespace bloom {

/// The 2^dim children of q, axis 0 slowest.
inline std::vector<Cube> children(const Cube& q) {
    const double s = q.side / 2;
    std::vector<Cube> out;
    if (q.dim == 1) {
        out.emplace_back(1, q.corner, s);
        out.emplace_back(1, Vec2{q.corner[0] + s, 0.0}, s);
    } else {
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) out.emplace_back(2, Vec2{q.corner[0] + i * s, q.corner[1] + j * s}, s);
    }
    return out;
}

/// Parent of q in D(root).
inline Cube parent(const Cube& q, const Cube& root) {
    const double s = 2 * q.side;
    if (s > root.side * (1 + 1e-12)) throw Error("the root has no parent");
    Vec2 c{0.0, 0.0};
    for (int a = 0; a < q.dim; ++a) {
        const double k = std::floor((q.corner[a] - root.corner[a]) / s + 1e-9);
        c[a] = root.corner[a] + k * s;
    }
    return Cube(q.dim, c, s);
}

/// D(root) truncated at max_depth, levels stored breadth first.
struct DyadicTree {
    Cube root;
    int max_depth = 0;

    DyadicTree(Cube r, int depth) : root(r), max_depth(depth) {
        if (depth < 0) throw Error("negative tree depth");
    }
    /// Tree of the grid domain down to single cells; the grid needs N = 2^k.
    static DyadicTree of_grid(const Grid& g) {
        int d = 0;
        while ((std::size_t{1} << d) < g.n) ++d;
        if ((std::size_t{1} << d) != g.n) throw Error("dyadic trees need a power-of-two resolution");
        return DyadicTree(g.domain(), d);
    }

    /// Cubes of generation k grouped by parent, corners root.corner + index·side
    /// so that parent() reproduces them bit for bit.
    std::vector<Cube> level(int k) const {
        std::vector<std::array<std::size_t, 2>> cur{{0, 0}};
        for (int i = 0; i < k; ++i) {
            std::vector<std::array<std::size_t, 2>> next;
            for (const auto& [a, b] : cur)
                for (std::size_t u = 0; u < 2; ++u)
                    for (std::size_t v = 0; v < (root.dim == 2 ? 2u : 1u); ++v) next.push_back({2 * a + u, 2 * b + v});
            cur = std::move(next);
        }
        const double s = std::ldexp(root.side, -k);
        std::vector<Cube> out;
        out.reserve(cur.size());
        for (const auto& [a, b] : cur)
            out.emplace_back(root.dim, Vec2{root.corner[0] + static_cast<double>(a) * s,
                                            root.dim == 2 ? root.corner[1] + static_cast<double>(b) * s : 0.0}, s);
        return out;
    }
    std::vector<Cube> all(int depth = -1) const {
        if (depth < 0 || depth > max_depth) depth = max_depth;
        std::vector<Cube> out;
        for (int k = 0; k <= depth; ++k) {
            auto l = level(k);
            out.insert(out.end(), l.begin(), l.end());
        }
        return out;
    }
};

/// Cubes with explicit carve-out sets given as grid cells.
struct SparseFamily {
    Grid grid;
    std::vector<Cube> cubes;
    std::vector<std::vector<std::size_t>> carve;  ///< sorted cell indices, parallel to cubes
    double alpha = 0.5;

    std::size_t size() const { return cubes.size(); }
    bool empty() const { return cubes.empty(); }
};

struct SparseCheck {
    bool ok = true;
    std::string message;
    long first = -1;   ///< offending cube
    long second = -1;  ///< second cube of an overlapping pair
};

/// Checks E_Q ⊆ Q, |E_Q| >= alpha |Q| and pairwise disjointness, cell by cell.
inline SparseCheck verify_sparse(const SparseFamily& s) {
    SparseCheck r;
    if (s.carve.size() != s.cubes.size()) {
        r.ok = false;
        r.message = "carve-out list does not match the cube list";
        return r;
    }
    const double vol = s.grid.cell_volume();
    std::vector<long> owner(s.grid.size(), -1);
    for (std::size_t i = 0; i < s.cubes.size(); ++i) {
        const Cube& q = s.cubes[i];
        for (auto c : s.carve[i]) {
            if (c >= s.grid.size() || !q.contains(s.grid.midpoint(c))) {
                r.ok = false;
                r.first = static_cast<long>(i);
                r.message = "carve-out of cube " + std::to_string(i) + " leaves the cube";
                return r;
            }
            if (owner[c] >= 0) {
                r.ok = false;
                r.first = owner[c];
                r.second = static_cast<long>(i);
                r.message = "carve-outs of cubes " + std::to_string(owner[c]) + " and " + std::to_string(i) + " overlap";
                return r;
            }
            owner[c] = static_cast<long>(i);
        }
        if (s.carve[i].size() * vol < s.alpha * q.volume() * (1 - 1e-12)) {
            r.ok = false;
            r.first = static_cast<long>(i);
            r.message = "carve-out of cube " + std::to_string(i) + " is smaller than alpha |Q|";
            return r;
        }
    }
    return r;
}

struct CarveResult {
    bool ok = false;
    SparseFamily family;
    long failed = -1;        ///< index of the cube that could not be carved
    double achieved = 1.0;   ///< smallest |E_Q|/|Q| over the family
};

/// Assigns carve-outs from the smallest cube upward; each cube keeps its
/// unclaimed cells.
inline CarveResult carve_greedy(const Grid& g, const std::vector<Cube>& cubes, double alpha) {
    CarveResult r;
    r.family.grid = g;
    r.family.cubes = cubes;
    r.family.alpha = alpha;
    r.family.carve.assign(cubes.size(), {});
    std::vector<std::size_t> order(cubes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cubes[a].side < cubes[b].side; });
    std::vector<char> taken(g.size(), 0);
    const double vol = g.cell_volume();
    r.ok = true;
    for (auto i : order) {
        auto& e = r.family.carve[i];
        for (auto c : cells_with_midpoint_in(g, cubes[i]))
            if (!taken[c]) {
                taken[c] = 1;
                e.push_back(c);
            }
        std::sort(e.begin(), e.end());
        const double frac = e.size() * vol / cubes[i].volume();
        r.achieved = std::min(r.achieved, frac);
        if (r.ok && frac < alpha * (1 - 1e-12)) {
            r.ok = false;
            r.failed = static_cast<long>(i);
        }
    }
    if (cubes.empty()) r.achieved = 1.0;
    return r;
}

/// Σ_{Q ∈ S, Q ⊆ R} |Q| / |R|.
inline double packing_ratio(const SparseFamily& s, const Cube& r) {
    double acc = 0.0;
    for (const auto& q : s.cubes)
        if (r.contains(q)) acc += q.volume();
    return acc / r.volume();
}

// Text format: "grid dim N corner... side", then per cube
// "corner... side alpha : cell cell ...".

inline void write_sparse_family(std::ostream& os, const SparseFamily& s) {
    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    const Grid& g = s.grid;
    os << "grid " << g.dim << ' ' << g.n;
    for (int a = 0; a < g.dim; ++a) os << ' ' << num(g.corner[a]);
    os << ' ' << num(g.side) << '\n';
    for (std::size_t i = 0; i < s.cubes.size(); ++i) {
        const Cube& q = s.cubes[i];
        for (int a = 0; a < q.dim; ++a) os << num(q.corner[a]) << ' ';
        os << num(q.side) << ' ' << num(s.alpha) << " :";
        for (auto c : s.carve[i]) os << ' ' << c;
        os << '\n';
    }
}

inline SparseFamily read_sparse_family(std::istream& is) {
    std::string tag;
    int dim = 0;
    std::size_t n = 0;
    if (!(is >> tag >> dim >> n) || tag != "grid") throw Error("sparse family: expected 'grid dim N corner... side'");
    Vec2 corner{0.0, 0.0};
    double side = 0.0;
    for (int a = 0; a < dim; ++a)
        if (!(is >> corner[a])) throw Error("sparse family: bad grid corner");
    if (!(is >> side)) throw Error("sparse family: bad grid side");
    SparseFamily s;
    s.grid = Grid(dim, corner, side, n);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw Error("sparse family: missing ':' in cube line");
        std::istringstream head(line.substr(0, colon)), tail(line.substr(colon + 1));
        Vec2 c{0.0, 0.0};
        double sd = 0.0, alpha = 0.0;
        for (int a = 0; a < dim; ++a) head >> c[a];
        if (!(head >> sd >> alpha)) throw Error("sparse family: bad cube line");
        s.cubes.emplace_back(dim, c, sd);
        s.alpha = alpha;
        std::vector<std::size_t> cells;
        std::size_t idx;
        while (tail >> idx) cells.push_back(idx);
        s.carve.push_back(std::move(cells));
    }
    return s;
}

}  // namespace bloom
