#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>
#include <vector>

#include "bloom/dyadic.hpp"
#include "bloom/weights.hpp"

namespace bloom {

namespace detail {
/// (value, measure) pairs of f over q, fractional cells weighted by coverage.
inline std::vector<std::pair<double, double>> value_measure(const GridFunction& f, const Cube& q) {
    const auto cells = covered_cells(f.grid(), q);
    if (cells.empty()) throw Error("cube outside domain");
    const double vol = f.grid().cell_volume();
    std::vector<std::pair<double, double>> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.emplace_back(f[c.index], c.fraction * vol);
    return out;
}

/// Merges equal values of a sorted list.
inline std::vector<std::pair<double, double>> group(std::vector<std::pair<double, double>> v) {
    std::sort(v.begin(), v.end());
    std::vector<std::pair<double, double>> out;
    for (const auto& [x, m] : v) {
        if (!out.empty() && out.back().first == x)
            out.back().second += m;
        else
            out.emplace_back(x, m);
    }
    return out;
}

inline double rearrangement(std::vector<std::pair<double, double>> vm, double t, double total) {
    for (auto& [x, m] : vm) x = std::abs(x);
    auto g = group(std::move(vm));
    double acc = 0.0;
    const double tol = 1e-12 * total;
    for (auto it = g.rbegin(); it != g.rend(); ++it) {
        acc += it->second;
        if (acc > t + tol) return it->first;
    }
    return 0.0;
}
}  // namespace detail

/// (gχ_Q)^*(t) = inf{s >= 0 : |{x ∈ Q : |g(x)| > s}| <= t}.
inline double rearrangement_value(const GridFunction& g, const Cube& q, double t) {
    if (!(t > 0.0 && t < q.volume())) throw Error("rearrangement level must lie in (0, |Q|)");
    return detail::rearrangement(detail::value_measure(g, q), t, q.volume());
}

struct OscillationValue {
    double value = 0.0;
    double argmin_c = 0.0;
};

namespace detail {
inline OscillationValue local_mean_osc_any(const GridFunction& f, const Cube& q, double lambda) {
    const auto g = detail::group(detail::value_measure(f, q));
    const double need = (1 - lambda) * q.volume() * (1 - 1e-12);
    std::vector<std::pair<double, double>> windows;  // width, midpoint
    std::size_t j = 0;
    double mass = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (j < i) {
            j = i;
            mass = 0.0;
        }
        while (j < g.size() && mass < need) mass += g[j++].second;
        if (mass < need) break;
        windows.emplace_back(g[j - 1].first - g[i].first, 0.5 * (g[j - 1].first + g[i].first));
        mass -= g[i].second;
    }
    double best = windows.front().first;
    for (const auto& w : windows) best = std::min(best, w.first);
    const double scale = g.back().first - g.front().first;
    std::vector<double> tied;
    for (const auto& w : windows)
        if (w.first <= best + 1e-12 * scale) tied.push_back(w.second);
    return {best / 2, tied[(tied.size() - 1) / 2]};
}
}  // namespace detail

/// ω_λ(f;Q) = inf_c ((f - c)χ_Q)^*(λ|Q|).
///
/// For fixed c the rearrangement is the smallest s with
/// |{|f - c| <= s}| >= (1 - λ)|Q|, so the infimum is half the shortest value
/// window carrying that much measure, attained at the window midpoint. Ties
/// between equally short windows go to the middle one.
inline OscillationValue local_mean_osc(const GridFunction& f, const Cube& q, double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error("oscillation level must lie in (0,1)");
    if (lambda * q.volume() < f.grid().cell_volume() * (1 - 1e-9))
        throw Error("λ|Q| is below one cell volume");
    return detail::local_mean_osc_any(f, q, lambda);
}

/// Smallest sample value m in E with max(|{f > m}|, |{f < m}|) <= |E|/2.
inline double median_value(const GridFunction& f, const std::vector<std::size_t>& cells) {
    if (cells.empty()) throw Error("median of an empty set");
    std::vector<double> v;
    v.reserve(cells.size());
    for (auto c : cells) v.push_back(f[c]);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n;) {
        std::size_t k = i;
        while (k < n && v[k] == v[i]) ++k;
        // i values below, n - k values above
        if (2 * i <= n && 2 * (n - k) <= n) return v[i];
        i = k;
    }
    throw Error("median not found");
}

inline double median_value(const GridFunction& f, const Cube& q) {
    return median_value(f, cells_with_midpoint_in(f.grid(), q));
}

struct JohnStromberg {
    double sup = 0.0;    ///< sup_Q ω_λ(f;Q)|Q|/η(Q)
    double bound = 0.0;  ///< ‖f‖_{BMO_η}/λ
    bool ok = false;
};

inline JohnStromberg john_stromberg_upper(const GridFunction& f, const Weight& eta, const CubeDictionary& dict,
                                          double lambda) {
    std::vector<double> val(dict.size(), 0.0);
    parallel_for(dict.size(), [&](std::size_t i) {
        const Cube& q = dict.cubes[i];
        if (lambda * q.volume() < f.grid().cell_volume()) return;
        val[i] = local_mean_osc(f, q, lambda).value * q.volume() / integrate(eta.w, q);
    });
    JohnStromberg r;
    r.sup = *std::max_element(val.begin(), val.end());
    r.bound = bmo_eta_norm(f, eta, dict) / lambda;
    r.ok = r.sup <= r.bound * (1 + 1e-12) + 1e-14;
    return r;
}

/// Level 2^{-n-2} used by the decomposition.
inline double decomposition_level(int dim) { return std::ldexp(1.0, -dim - 2); }

struct DecompositionResult {
    SparseFamily family;
    std::vector<double> coefficients;  ///< ω_{2^{-n-2}}(f;P), parallel to family.cubes
    std::vector<double> local_defect;  ///< max over the carve-out of |f - m_f(P)| - 2ω
    double root_median = 0.0;
    double pointwise_defect = 0.0;     ///< max over cells of |f - m_f(Q0)| - 2 Σ ω χ_P
    double exceptional_measure = 0.0;  ///< measure of cells where the bound fails
    int escalations = 0;
    int depth = 0;
};

/// Stopping-time decomposition realizing |f - m_f(Q0)| <= 2 Σ_P ω(f;P) χ_P.
///
/// For a cube Q with median m and level t = 2^{-n-2}|Q|, E is the set where
/// |f - m| exceeds ((f - m)χ_Q)^*(t). Children are the maximal dyadic P ⊊ Q
/// with |E ∩ P| >= |P|/2^{n+1}; their total measure is at most 2^{n+1}|E| <= |Q|/2.
inline DecompositionResult sparse_decompose(const GridFunction& f, const Cube& q0) {
    const Grid& g = f.grid();
    const CellBox root = to_cellbox(g, q0);
    if ((root.len & (root.len - 1)) != 0) throw Error("decomposition root must span a power-of-two number of cells");
    const int n = g.dim;
    const double lam = decomposition_level(n);
    const double vol = g.cell_volume();
    DecompositionResult r;
    r.family.grid = g;
    r.family.alpha = 0.5;
    std::vector<double> bound(g.size(), 0.0);
    const auto root_cells = box_cells(g, root);
    r.root_median = median_value(f, root_cells);

    struct Item {
        CellBox box;
        int depth;
    };
    std::deque<Item> queue{{root, 0}};
    std::vector<char> in_e(g.size(), 0);
    while (!queue.empty()) {
        const Item it = queue.front();
        queue.pop_front();
        r.depth = std::max(r.depth, it.depth);
        const Cube q = to_cube(g, it.box);
        const auto cells = box_cells(g, it.box);
        const double m = median_value(f, cells);
        std::vector<CellBox> kids;
        double coef = 0.0;
        if (it.box.len > 1) {
            const GridFunction dev = f.map([m](double x) { return x - m; });
            const double fstar = rearrangement_value(dev, q, lam * q.volume());
            coef = detail::local_mean_osc_any(f, q, lam).value;
            std::size_t e_count = 0;
            for (auto c : cells) {
                in_e[c] = std::abs(f[c] - m) > fstar;
                e_count += in_e[c];
            }
            // maximal subcubes, scanned top-down
            if (e_count > 0) {
                std::vector<CellBox> cur{it.box};
                while (!cur.empty()) {
                    std::vector<CellBox> next;
                    for (const auto& p : cur) {
                        if (p.len == 1) continue;
                        const std::ptrdiff_t h = p.len / 2;
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < (n == 2 ? 2 : 1); ++b) {
                                CellBox c{{p.lo[0] + a * h, p.lo[1] + b * h}, h};
                                std::size_t hits = 0;
                                const auto cc = box_cells(g, c);
                                for (auto x : cc) hits += in_e[x];
                                if (hits == 0) continue;
                                if (hits * (std::size_t{1} << (n + 1)) >= cc.size())
                                    kids.push_back(c);
                                else
                                    next.push_back(c);
                            }
                    }
                    cur = std::move(next);
                }
            }
            for (auto c : cells) in_e[c] = 0;
        }
        std::vector<char> mark(g.size(), 0);
        for (const auto& k : kids)
            for (auto x : box_cells(g, k)) mark[x] = 1;
        std::vector<std::size_t> carve;
        double local = -std::numeric_limits<double>::infinity();
        for (auto c : cells)
            if (!mark[c]) {
                carve.push_back(c);
                local = std::max(local, std::abs(f[c] - m) - 2 * coef);
            }
        if (coef > 0.0) {
            r.family.cubes.push_back(q);
            r.family.carve.push_back(carve);
            r.coefficients.push_back(coef);
            r.local_defect.push_back(carve.empty() ? 0.0 : local);
            for (auto c : cells) bound[c] += 2 * coef;
            if (carve.size() * vol < 0.5 * q.volume() * (1 - 1e-12)) ++r.escalations;
        }
        for (const auto& k : kids) queue.push_back({k, it.depth + 1});
    }
    r.pointwise_defect = -std::numeric_limits<double>::infinity();
    for (auto c : root_cells) {
        const double d = std::abs(f[c] - r.root_median) - bound[c];
        r.pointwise_defect = std::max(r.pointwise_defect, d);
        if (d > 1e-12) r.exceptional_measure += vol;
    }
    return r;
}

struct AugmentResult {
    SparseFamily family;           ///< carve-outs from greedy re-carving
    std::vector<double> osc;       ///< (1/|P|)∫_P |f - f_P|, parallel to family.cubes
    double alpha = 1.0;            ///< achieved sparseness
    double max_defect = 0.0;       ///< max over Q ∈ S̃, x ∈ Q of |f - f_Q| - 2^{n+2} Σ osc_P χ_P
    bool bound_ok = true;
};

namespace detail {
struct BoxLess {
    bool operator()(const CellBox& a, const CellBox& b) const {
        return std::tie(a.len, a.lo[0], a.lo[1]) > std::tie(b.len, b.lo[0], b.lo[1]);
    }
};
inline double box_mean(const GridFunction& f, const std::vector<std::size_t>& cells) {
    double s = 0.0;
    for (auto c : cells) s += f[c];
    return s / static_cast<double>(cells.size());
}
inline double box_osc(const GridFunction& f, const std::vector<std::size_t>& cells, double mean) {
    double s = 0.0;
    for (auto c : cells) s += std::abs(f[c] - mean);
    return s / static_cast<double>(cells.size());
}
}  // namespace detail

/// Extends S by mean-oscillation stopping trees: below each Q the children are
/// the maximal P ⊊ Q with (1/|P|)∫_P |f - f_Q| > 2 (1/|Q|)∫_Q |f - f_Q|.
/// The union is carved greedily and its sparseness reported.
inline AugmentResult augment_family(const SparseFamily& s, const GridFunction& f) {
    const Grid& g = f.grid();
    if (!s.empty() && !s.grid.same_as(g)) throw Error("family and function live on different grids");
    std::map<CellBox, double, detail::BoxLess> members;
    std::deque<CellBox> queue;
    for (const auto& q : s.cubes) queue.push_back(to_cellbox(g, q));
    while (!queue.empty()) {
        const CellBox b = queue.front();
        queue.pop_front();
        if (members.count(b)) continue;
        const auto cells = box_cells(g, b);
        const double mean = detail::box_mean(f, cells);
        const double osc = detail::box_osc(f, cells, mean);
        members[b] = osc;
        if (osc == 0.0) continue;
        std::vector<CellBox> cur{b};
        while (!cur.empty()) {
            std::vector<CellBox> next;
            for (const auto& p : cur) {
                if (p.len == 1 || (p.len & 1)) continue;
                const std::ptrdiff_t h = p.len / 2;
                for (int a = 0; a < 2; ++a)
                    for (int c = 0; c < (g.dim == 2 ? 2 : 1); ++c) {
                        const CellBox k{{p.lo[0] + a * h, p.lo[1] + c * h}, h};
                        const auto kc = box_cells(g, k);
                        if (detail::box_osc(f, kc, mean) > 2 * osc * (1 + 1e-12))
                            queue.push_back(k);
                        else
                            next.push_back(k);
                    }
            }
            cur = std::move(next);
        }
    }
    AugmentResult r;
    std::vector<Cube> cubes;
    for (const auto& [b, osc] : members) {
        cubes.push_back(to_cube(g, b));
        r.osc.push_back(osc);
    }
    auto carved = carve_greedy(g, cubes, 0.0);
    r.family = std::move(carved.family);
    r.alpha = carved.achieved;
    r.family.alpha = r.alpha;
    const double c = std::ldexp(1.0, g.dim + 2);
    std::vector<CellBox> boxes;
    for (const auto& [b, osc] : members) boxes.push_back(b);
    r.max_defect = cubes.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
    std::vector<double> sum(g.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto cells = box_cells(g, boxes[i]);
        for (auto x : cells) sum[x] = 0.0;
        for (std::size_t j = 0; j < boxes.size(); ++j)
            if (boxes[i].contains(boxes[j]))
                for (auto x : box_cells(g, boxes[j])) sum[x] += r.osc[j];
        const double mean = detail::box_mean(f, cells);
        for (auto x : cells) r.max_defect = std::max(r.max_defect, std::abs(f[x] - mean) - c * sum[x]);
    }
    r.bound_ok = r.max_defect <= 1e-12 * std::max(1.0, f.max_abs());
    return r;
}

/// CSV with columns cube, coefficient, carve_fraction, defect.
inline void write_decomposition_csv(std::ostream& os, const DecompositionResult& r) {
    os << "cube,coefficient,carve_fraction,defect\n";
    const double vol = r.family.grid.cell_volume();
    char buf[256];
    for (std::size_t i = 0; i < r.family.size(); ++i) {
        const Cube& q = r.family.cubes[i];
        std::string cube = "[" + format_double(q.corner[0]);
        if (q.dim == 2) cube += " " + format_double(q.corner[1]);
        cube += " " + format_double(q.side) + "]";
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", cube.c_str(), r.coefficients[i],
                      r.family.carve[i].size() * vol / q.volume(), r.local_defect[i]);
        os << buf;
    }
}

}  // namespace bloom
