#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <functional>
#include <optional>
#include <vector>

#include "bloom/dyadic.hpp"
#include "bloom/operators.hpp"
#include "bloom/oscillation.hpp"
#include "bloom/weights.hpp"

namespace bloom {

/// A_S h = Σ_{Q ∈ S} h_Q χ_Q, times η when present.
struct SparseOperator {
    SparseFamily family;
    std::optional<Weight> eta;
};

namespace detail {
inline std::vector<std::vector<std::size_t>> family_cells(const SparseFamily& s) {
    std::vector<std::vector<std::size_t>> out;
    out.reserve(s.size());
    for (const auto& q : s.cubes) out.push_back(box_cells(s.grid, to_cellbox(s.grid, q)));
    return out;
}
inline double cell_mean(const GridFunction& h, const std::vector<std::size_t>& cells) {
    double s = 0.0;
    for (auto c : cells) s += h[c];
    return s / static_cast<double>(cells.size());
}
inline GridFunction plain_AS(const std::vector<std::vector<std::size_t>>& cells, const GridFunction& h) {
    GridFunction out(h.grid());
    for (const auto& cs : cells) {
        const double a = cell_mean(h, cs);
        for (auto c : cs) out[c] += a;
    }
    return out;
}
}  // namespace detail

inline GridFunction apply_AS(const SparseOperator& op, const GridFunction& h) {
    if (!op.family.empty() && !op.family.grid.same_as(h.grid())) throw Error("family and function live on different grids");
    GridFunction out = detail::plain_AS(detail::family_cells(op.family), h);
    if (op.eta) out = out * op.eta->w;
    return out;
}

inline GridFunction apply_AS_iterated(const SparseOperator& op, const GridFunction& h, int l) {
    if (l < 1) throw Error("iteration count must be at least 1");
    const auto cells = detail::family_cells(op.family);
    GridFunction cur = h;
    for (int i = 0; i < l; ++i) {
        cur = detail::plain_AS(cells, cur);
        if (op.eta) cur = cur * op.eta->w;
    }
    return cur;
}

/// A_b^{m,k} f = Σ_Q |b - b_Q|^{m-k} ((1/|Q|)∫_Q |b - b_Q|^k |f|) χ_Q.
struct CommutatorSparseForm {
    SparseFamily family;
    GridFunction b;
    int m = 1;
    int k = 0;
};

inline GridFunction apply_Abmk(const CommutatorSparseForm& form, const GridFunction& f) {
    if (form.k < 0 || form.k > form.m) throw Error("sparse form needs 0 <= k <= m");
    form.b.require_compatible(f);
    GridFunction out(f.grid());
    for (const auto& cs : detail::family_cells(form.family)) {
        const double bq = detail::cell_mean(form.b, cs);
        double inner = 0.0;
        for (auto c : cs) inner += std::pow(std::abs(form.b[c] - bq), form.k) * std::abs(f[c]);
        inner /= static_cast<double>(cs.size());
        for (auto c : cs) out[c] += std::pow(std::abs(form.b[c] - bq), form.m - form.k) * inner;
    }
    return out;
}

inline double pairing(const GridFunction& f, const GridFunction& g) {
    f.require_compatible(g);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
    return s * f.grid().cell_volume();
}

/// |∫ A_S(f) g - ∫ f A_S(g)| for the unweighted operator.
inline double check_selfadjoint(const SparseOperator& op, const GridFunction& f, const GridFunction& g) {
    if (op.eta) throw Error("self-adjointness applies to the unweighted operator");
    return std::abs(pairing(apply_AS(op, f), g) - pairing(f, apply_AS(op, g)));
}

struct ChainCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool ok = false;
};

namespace detail {
struct Restricted {
    std::vector<Cube> cubes;
    std::vector<std::vector<std::size_t>> cells;
    std::vector<double> eta_avg;
};
inline Restricted restrict_family(const SparseFamily& s, const Weight& eta, const Cube& q) {
    Restricted r;
    for (const auto& p : s.cubes)
        if (q.contains(p)) {
            r.cubes.push_back(p);
            r.cells.push_back(box_cells(s.grid, to_cellbox(s.grid, p)));
            r.eta_avg.push_back(cell_mean(eta.w, r.cells.back()));
        }
    return r;
}
/// ∫_Q |h| (Σ_{P ⊆ Q} η_P χ_P)^l.
inline double chain_lhs(const Restricted& r, const GridFunction& h, const Cube& q, int l) {
    const Grid& g = h.grid();
    GridFunction s(g);
    for (std::size_t i = 0; i < r.cubes.size(); ++i)
        for (auto c : r.cells[i]) s[c] += r.eta_avg[i];
    double acc = 0.0;
    for (auto c : cells_with_midpoint_in(g, q)) acc += std::abs(h[c]) * std::pow(s[c], l);
    return acc * g.cell_volume();
}
}  // namespace detail

/// lhs = ∫_Q |h| (Σ η_P χ_P)^l, rhs = l! Σ over chains P_l ⊆ ... ⊆ P_1 ⊆ Q of
/// η_{P_1}···η_{P_l} |h|_{P_l} |P_l|; repeated cubes allowed in a chain.
inline ChainCheck check_chain_expansion(const SparseFamily& s, const Weight& eta, const Cube& q, int l,
                                        const GridFunction& h) {
    if (l < 1 || l > 3) throw Error("chain enumeration supports 1 <= l <= 3");
    const auto r = detail::restrict_family(s, eta, q);
    const std::size_t n = r.cubes.size();
    const double vol = h.grid().cell_volume();
    std::vector<double> mass(n);  // |h|_P |P|
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0;
        for (auto c : r.cells[i]) a += std::abs(h[c]);
        mass[i] = a * vol;
    }
    auto in = [&](std::size_t a, std::size_t b) { return r.cubes[b].contains(r.cubes[a]); };
    double chains = 0.0;
    for (std::size_t p1 = 0; p1 < n; ++p1) {
        if (l == 1) {
            chains += r.eta_avg[p1] * mass[p1];
            continue;
        }
        for (std::size_t p2 = 0; p2 < n; ++p2) {
            if (!in(p2, p1)) continue;
            if (l == 2) {
                chains += r.eta_avg[p1] * r.eta_avg[p2] * mass[p2];
                continue;
            }
            for (std::size_t p3 = 0; p3 < n; ++p3)
                if (in(p3, p2)) chains += r.eta_avg[p1] * r.eta_avg[p2] * r.eta_avg[p3] * mass[p3];
        }
    }
    ChainCheck c;
    c.lhs = detail::chain_lhs(r, h, q, l);
    c.rhs = factorial(l) * chains;
    c.ratio = c.rhs > 0 ? c.lhs / c.rhs : 0.0;
    c.ok = c.lhs <= c.rhs * (1 + 1e-12) + 1e-300;
    return c;
}

/// lhs as above, rhs = ∫_Q A^l_{S_Q,η}|h| with S_Q the cubes of S inside Q.
/// The ratio stays below l!.
inline ChainCheck check_iteration_bound(const SparseFamily& s, const Weight& eta, const Cube& q, int l,
                                        const GridFunction& h) {
    if (l < 1 || l > 3) throw Error("iteration bound supports 1 <= l <= 3");
    const auto r = detail::restrict_family(s, eta, q);
    GridFunction cur = h.abs();
    for (int i = 0; i < l; ++i) cur = detail::plain_AS(r.cells, cur) * eta.w;
    ChainCheck c;
    c.lhs = detail::chain_lhs(r, h, q, l);
    c.rhs = integrate_cells(cur, cells_with_midpoint_in(h.grid(), q));
    c.ratio = c.rhs > 0 ? c.lhs / c.rhs : (c.lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    c.ok = c.ratio <= factorial(l) * (1 + 1e-9);
    return c;
}

/// I(k) = ∫ A_S(A^k_{S,η}|f|) A^{m-k}_{S,η}(|g|λ) for k = 0..m; all equal.
inline std::vector<double> adjoint_shift_values(const SparseFamily& s, const Weight& eta, const GridFunction& f,
                                                const GridFunction& g_lambda, int m) {
    const auto cells = detail::family_cells(s);
    auto iterate = [&](GridFunction x, int times) {
        for (int i = 0; i < times; ++i) x = detail::plain_AS(cells, x) * eta.w;
        return x;
    };
    std::vector<double> out;
    for (int k = 0; k <= m; ++k)
        out.push_back(pairing(detail::plain_AS(cells, iterate(f.abs(), k)), iterate(g_lambda.abs(), m - k)));
    return out;
}

struct DualFormCheck {
    double lhs = 0.0;    ///< Σ_{Q∈S} (∫_Q |gλ||b - b_Q|^{m-k}) (1/|Q|)∫_Q |b - b_Q|^k |f|
    double rhs = 0.0;    ///< (2^{n+2}‖b‖)^m Σ_{Q∈S̃} <|gλ| Σ^{m-k}>_Q <Σ^k |f|>_Q |Q|
    double norm = 0.0;   ///< ‖b‖_{BMO_η} over the dictionary and S̃
    bool ok = false;
};

/// The step replacing b-oscillations by η-averages over the augmented family.
inline DualFormCheck check_dual_form_bound(const SparseFamily& s, const SparseFamily& augmented, const GridFunction& b,
                                           const Weight& eta, const CubeDictionary& dict, const GridFunction& f,
                                           const GridFunction& g_lambda, int m, int k) {
    const Grid& g = b.grid();
    DualFormCheck r;
    r.norm = bmo_eta_norm(b, eta, dict);
    const auto aug_cells = detail::family_cells(augmented);
    for (const auto& cs : aug_cells) {
        const double bq = detail::cell_mean(b, cs);
        double osc = 0.0, et = 0.0;
        for (auto c : cs) {
            osc += std::abs(b[c] - bq);
            et += eta.w[c];
        }
        r.norm = std::max(r.norm, osc / et);
    }
    const double vol = g.cell_volume();
    for (const auto& cs : detail::family_cells(s)) {
        const double bq = detail::cell_mean(b, cs);
        double a = 0.0, c2 = 0.0;
        for (auto c : cs) {
            a += std::abs(g_lambda[c]) * std::pow(std::abs(b[c] - bq), m - k);
            c2 += std::pow(std::abs(b[c] - bq), k) * std::abs(f[c]);
        }
        r.lhs += a * vol * c2 / static_cast<double>(cs.size());
    }
    std::vector<double> eta_avg;
    for (const auto& cs : aug_cells) eta_avg.push_back(detail::cell_mean(eta.w, cs));
    for (std::size_t i = 0; i < augmented.size(); ++i) {
        const Cube& q = augmented.cubes[i];
        GridFunction sum(g);
        for (std::size_t j = 0; j < augmented.size(); ++j)
            if (q.contains(augmented.cubes[j]))
                for (auto c : aug_cells[j]) sum[c] += eta_avg[j];
        double a = 0.0, c2 = 0.0;
        for (auto c : aug_cells[i]) {
            a += std::abs(g_lambda[c]) * std::pow(sum[c], m - k);
            c2 += std::pow(sum[c], k) * std::abs(f[c]);
        }
        const double cnt = static_cast<double>(aug_cells[i].size());
        r.rhs += (a / cnt) * (c2 / cnt) * q.volume();
    }
    r.rhs *= std::pow(std::ldexp(1.0, g.dim + 2) * r.norm, m);
    r.ok = r.lhs <= r.rhs * (1 + 1e-9) + 1e-300;
    return r;
}

/// (∫ w |f|^p)^{1/p}.
inline double lp_norm(const GridFunction& f, const GridFunction& w, double p) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * std::pow(std::abs(f[i]), p);
    return std::pow(s * f.grid().cell_volume(), 1.0 / p);
}

struct NormEstimate {
    double value = 0.0;
    std::size_t best_seed = 0;  ///< index of the test function that seeded the iteration
    int iterations = 0;
};

using LinearMap = std::function<GridFunction(const GridFunction&)>;

/// Lower bound for ‖A‖_{L^p(w_in) → L^p(w_out)}: best ratio over the test
/// functions, then p-power iterations f ← sgn(v)(|v|/w_in)^{1/(p-1)} with
/// v = A^t(w_out |Af|^{p-1} sgn Af), keeping the best ratio seen.
inline NormEstimate estimate_norm(const LinearMap& a, const LinearMap& a_transpose, const GridFunction& w_in,
                                  const GridFunction& w_out, double p, const std::vector<GridFunction>& tests,
                                  int iterations = 50) {
    if (!(p > 1.0)) throw Error("norm estimation needs p > 1");
    NormEstimate r;
    std::vector<double> ratio(tests.size(), -1.0);
    parallel_for(tests.size(), [&](std::size_t i) {
        const double den = lp_norm(tests[i], w_in, p);
        if (!(den > 0.0)) return;
        ratio[i] = lp_norm(a(tests[i]), w_out, p) / den;
    });
    std::size_t best = tests.size();
    for (std::size_t i = 0; i < tests.size(); ++i)
        if (ratio[i] >= 0 && (best == tests.size() || ratio[i] > ratio[best])) best = i;
    if (best == tests.size()) return r;
    r.best_seed = best;
    r.value = ratio[best];
    GridFunction f = tests[best];
    for (int it = 0; it < iterations; ++it) {
        const GridFunction u = a(f);
        const GridFunction dual = u.zip(w_out, [p](double x, double w) {
            return w * std::pow(std::abs(x), p - 1) * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
        });
        const GridFunction v = a_transpose(dual);
        GridFunction next = v.zip(w_in, [p](double x, double w) {
            return (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0)) * std::pow(std::abs(x) / w, 1.0 / (p - 1));
        });
        const double den = lp_norm(next, w_in, p);
        if (!(den > 0.0) || !std::isfinite(den)) break;
        next = next * (1.0 / den);
        const double val = lp_norm(a(next), w_out, p);
        r.iterations = it + 1;
        if (val > r.value) r.value = val;
        f = std::move(next);
    }
    return r;
}

/// Cube indicators, Haar differences on dyadic cubes, and random ±1 functions.
inline std::vector<GridFunction> default_test_functions(const Grid& g, const CubeDictionary& dict,
                                                        std::size_t max_cubes, std::size_t random_count, Rng rng) {
    std::vector<GridFunction> out;
    const std::size_t stride = std::max<std::size_t>(1, dict.size() / std::max<std::size_t>(1, max_cubes));
    for (std::size_t i = 0; i < dict.size() && out.size() < max_cubes; i += stride) {
        GridFunction f(g);
        for (auto c : cells_with_midpoint_in(g, dict.cubes[i])) f[c] = 1.0;
        out.push_back(std::move(f));
    }
    std::vector<Cube> level{g.domain()};
    for (int d = 0; d < 4; ++d) {
        std::vector<Cube> next;
        for (const auto& q : level) {
            const auto ch = children(q);
            GridFunction f(g);
            for (std::size_t j = 0; j < ch.size(); ++j)
                for (auto c : cells_with_midpoint_in(g, ch[j])) f[c] = j < ch.size() / 2 ? 1.0 : -1.0;
            out.push_back(std::move(f));
            next.insert(next.end(), ch.begin(), ch.end());
        }
        level = std::move(next);
    }
    for (std::size_t i = 0; i < random_count; ++i) {
        GridFunction f(g);
        for (std::size_t c = 0; c < f.size(); ++c) f[c] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        out.push_back(std::move(f));
    }
    return out;
}

struct NormVsAp {
    NormEstimate norm;
    double ap = 0.0;
    double constant = 0.0;  ///< norm / [w]_{A_p}^{max(1, 1/(p-1))}
};

inline NormVsAp estimate_AS_weighted_norm(const SparseOperator& op, const Weight& w, double p,
                                          const std::vector<GridFunction>& tests, const CubeDictionary& dict) {
    if (op.eta) throw Error("the weighted norm bound applies to the unweighted operator");
    const auto cells = detail::family_cells(op.family);
    const LinearMap a = [&](const GridFunction& h) { return detail::plain_AS(cells, h); };
    NormVsAp r;
    r.norm = estimate_norm(a, a, w.w, w.w, p, tests);
    r.ap = ap_constant(w, p, dict);
    r.constant = r.norm.value / std::pow(r.ap, std::max(1.0, 1.0 / (p - 1)));
    return r;
}

/// Three (dim 1) or nine (dim 2) shifted roots of side N/2 cells, offsets
/// N/6, N/4, N/3 per axis.
inline std::vector<CellBox> shifted_roots(const Grid& g) {
    if (g.n < 8 || (g.n & (g.n - 1)) != 0) throw Error("shifted lattices need a power-of-two resolution >= 8");
    const auto len = static_cast<std::ptrdiff_t>(g.n / 2);
    const std::array<std::ptrdiff_t, 3> off{static_cast<std::ptrdiff_t>(g.n / 6), static_cast<std::ptrdiff_t>(g.n / 4),
                                            static_cast<std::ptrdiff_t>(g.n / 3)};
    std::vector<CellBox> out;
    for (auto a : off) {
        if (g.dim == 1) {
            out.push_back({{a, 0}, len});
            continue;
        }
        for (auto b : off) out.push_back({{a, b}, len});
    }
    return out;
}

/// Stopping family below a root: children are the maximal P ⊊ Q with
/// <|f|>_P > 4<|f|>_Q or <|u|>_P > 4<|u|>_Q; each rule claims at most |Q|/4.
inline SparseFamily stopping_family(const GridFunction& f, const GridFunction& u, const CellBox& root) {
    const Grid& g = f.grid();
    const GridFunction af = f.abs(), au = u.abs();
    std::vector<Cube> cubes;
    std::deque<CellBox> queue{root};
    while (!queue.empty()) {
        const CellBox q = queue.front();
        queue.pop_front();
        cubes.push_back(to_cube(g, q));
        const auto qc = box_cells(g, q);
        const double fa = detail::cell_mean(af, qc), ua = detail::cell_mean(au, qc);
        std::vector<CellBox> cur{q};
        while (!cur.empty()) {
            std::vector<CellBox> next;
            for (const auto& p : cur) {
                if (p.len == 1) continue;
                const std::ptrdiff_t h = p.len / 2;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < (g.dim == 2 ? 2 : 1); ++b) {
                        const CellBox k{{p.lo[0] + a * h, p.lo[1] + b * h}, h};
                        const auto kc = box_cells(g, k);
                        if (detail::cell_mean(af, kc) > 4 * fa || detail::cell_mean(au, kc) > 4 * ua)
                            queue.push_back(k);
                        else
                            next.push_back(k);
                    }
            }
            cur = std::move(next);
        }
    }
    return carve_greedy(g, cubes, 0.5).family;
}

struct DominationResult {
    double fitted_c = 0.0;       ///< smallest c with |T_b^m f| <= c·RHS on the evaluation set
    bool pointwise_ok = true;    ///< RHS > 0 wherever the left side is nonzero
    std::vector<SparseFamily> lattices;
    double min_alpha = 1.0;      ///< sparseness achieved by the stopping families
};

/// Fits the constant of |T_b^m f| <= c Σ_j Σ_k C(m,k) A_b^{m,k} f over the
/// union of the shifted roots; f should be supported in the middle third.
inline DominationResult check_sparse_domination(const KernelSpec& kernel, const GridFunction& b, int m,
                                                const GridFunction& f) {
    const Grid& g = f.grid();
    const GridFunction lhs = commutator_binomial(CommutatorSpec{kernel, b, m}, f).abs();
    DominationResult r;
    GridFunction rhs(g);
    std::vector<char> eval(g.size(), 0);
    for (const auto& root : shifted_roots(g)) {
        SparseFamily fam = stopping_family(f, lhs, root);
        const auto chk = verify_sparse(fam);
        if (!chk.ok) r.min_alpha = std::min(r.min_alpha, 0.0);
        for (int k = 0; k <= m; ++k)
            rhs = rhs + apply_Abmk(CommutatorSparseForm{fam, b, m, k}, f) * binomial(m, k);
        for (auto c : box_cells(g, root)) eval[c] = 1;
        r.lattices.push_back(std::move(fam));
    }
    // Rounding floor: T_b^m f of size 1e-10 |Tf| |b|^m counts as zero.
    const double floor = 1e-10 * apply_T(kernel, f).max_abs() * std::pow(b.max_abs(), m);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!eval[i] || lhs[i] <= floor) continue;
        if (rhs[i] <= 0.0) {
            r.pointwise_ok = false;
            continue;
        }
        r.fitted_c = std::max(r.fitted_c, lhs[i] / rhs[i]);
    }
    return r;
}

}  // namespace bloom
