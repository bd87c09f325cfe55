#pragma once

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "bloom/dyadic.hpp"
#include "bloom/grid.hpp"

namespace bloom {

/// Strictly positive sampled weight, optionally tagged as |x|^a.
struct Weight {
    GridFunction w;
    std::optional<double> power;

    Weight() = default;
    explicit Weight(GridFunction f, std::optional<double> a = std::nullopt) : w(std::move(f)), power(a) {
        for (double x : w.samples())
            if (!(x > 0.0)) throw Error("weights must be strictly positive");
    }
    const Grid& grid() const { return w.grid(); }
};

inline Weight power_weight(const Grid& g, double a) {
    return Weight(GridFunction::from(g, [&](const Vec2& x) { return std::pow(norm(x, g.dim), a); }), a);
}
inline Weight constant_weight(const Grid& g, double c) {
    return Weight(GridFunction(g, c), c == 1.0 ? std::optional<double>(0.0) : std::nullopt);
}
/// 1 + h on the lower half of the domain along axis 0, 1 elsewhere.
inline Weight two_level_weight(const Grid& g, double h) {
    const double mid = g.corner[0] + g.side / 2;
    return Weight(GridFunction::from(g, [&](const Vec2& x) { return x[0] < mid ? 1.0 + h : 1.0; }));
}

namespace detail {
inline double spec_number(const std::string& spec, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("bad number in spec '" + spec + "'");
    }
}
inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}
}  // namespace detail

/// Piecewise constant function with random breakpoints and levels, a few
/// pieces lifted to spikes; dim 2 uses a product of two partitions.
inline GridFunction random_step_function(const Grid& g, std::size_t pieces, Rng& rng) {
    auto partition = [&] {
        std::vector<std::size_t> cuts{0, g.n};
        for (std::size_t i = 1; i < pieces; ++i) cuts.push_back(1 + rng.index(g.n - 1));
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        std::vector<std::size_t> piece_of(g.n);
        for (std::size_t p = 0; p + 1 < cuts.size(); ++p)
            for (std::size_t i = cuts[p]; i < cuts[p + 1]; ++i) piece_of[i] = p;
        return std::make_pair(piece_of, cuts.size() - 1);
    };
    const auto [pa, na] = partition();
    const auto [pb, nb] = g.dim == 2 ? partition() : std::make_pair(std::vector<std::size_t>(g.n, 0), std::size_t{1});
    std::vector<double> level(na * nb);
    for (auto& v : level) v = rng.uniform(-1.0, 1.0) * (rng.uniform() < 0.15 ? 10.0 : 1.0);
    GridFunction f(g);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto ij = g.unflat(i);
        f[i] = level[pa[ij[0]] * nb + (g.dim == 2 ? pb[ij[1]] : 0)];
    }
    return f;
}

/// Function specs: `power:a`, `const:c`, `twolevel:h`, `x`, `poly:c0,c1,...`,
/// `chi:lo:hi`, `step:k` (k equal random ±1 pieces per axis), `randstep:k` (random
/// breakpoints and levels, see random_step_function), or a grid-function file.
inline GridFunction parse_function(const std::string& spec, const Grid& g, std::uint64_t seed = 1) {
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (head == "power") return power_weight(g, detail::spec_number(spec, rest)).w;
    if (head == "const") return GridFunction(g, detail::spec_number(spec, rest));
    if (head == "twolevel") return two_level_weight(g, detail::spec_number(spec, rest)).w;
    if (spec == "x") return GridFunction::from(g, [](const Vec2& x) { return x[0]; });
    if (head == "poly") {
        std::vector<double> c;
        for (const auto& t : detail::split(rest, ',')) c.push_back(detail::spec_number(spec, t));
        return GridFunction::from(g, [&](const Vec2& x) {
            double v = 0.0;
            for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x[0] + *it;
            return v;
        });
    }
    if (head == "chi") {
        const auto parts = detail::split(rest, ':');
        if (parts.size() != 2) throw Error("expected chi:lo:hi");
        const double lo = detail::spec_number(spec, parts[0]), hi = detail::spec_number(spec, parts[1]);
        const Cube q(g.dim, {lo, lo}, hi - lo);
        return GridFunction::from(g, [&](const Vec2& x) { return q.contains(x) ? 1.0 : 0.0; });
    }
    if (head == "randstep") {
        Rng rng(seed);
        return random_step_function(g, static_cast<std::size_t>(detail::spec_number(spec, rest)), rng);
    }
    if (head == "step") {
        const auto k = static_cast<std::size_t>(detail::spec_number(spec, rest));
        if (k == 0) throw Error("step needs at least one piece");
        Rng rng(seed);
        std::vector<double> level(g.dim == 1 ? k : k * k);
        for (auto& v : level) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
        GridFunction f(g);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto ij = g.unflat(i);
            const std::size_t a = ij[0] * k / g.n, b = g.dim == 2 ? ij[1] * k / g.n : 0;
            f[i] = level[a * (g.dim == 2 ? k : 1) + b];
        }
        return f;
    }
    if (colon == std::string::npos || spec.find('/') != std::string::npos || spec.find('.') != std::string::npos) {
        GridFunction f = load_grid_function(spec);
        if (!f.grid().same_as(g)) throw Error("function file " + spec + " does not match the experiment grid");
        return f;
    }
    throw Error("unknown function spec: " + spec);
}

/// Weight specs: `power:a`, `const:c`, `twolevel:h`, or a grid-function file.
inline Weight parse_weight(const std::string& spec, const Grid& g) {
    if (spec.rfind("power:", 0) == 0) return power_weight(g, detail::spec_number(spec, spec.substr(6)));
    if (spec.rfind("const:", 0) == 0) return constant_weight(g, detail::spec_number(spec, spec.substr(6)));
    if (spec.rfind("twolevel:", 0) == 0) return two_level_weight(g, detail::spec_number(spec, spec.substr(9)));
    GridFunction f = load_grid_function(spec);
    if (!f.grid().same_as(g)) throw Error("weight file " + spec + " does not match the experiment grid");
    return Weight(std::move(f));
}

struct DictOptions {
    std::size_t min_cells = 2;  ///< smallest cube side, in cells
    bool dyadic = true;
    bool origin = true;         ///< (0,s)^d and (-s,s)^d ladders
    double ladder_ratio = 2.0;
    bool sliding = true;        ///< sides min·2^k and 3·min·2^k at stride side/4
};

/// Finite family of cubes standing in for "all cubes".
struct CubeDictionary {
    std::vector<Cube> cubes;
    std::size_t size() const { return cubes.size(); }

    void add(const Cube& q) { cubes.push_back(q); }
    static CubeDictionary of(std::vector<Cube> c) { return CubeDictionary{std::move(c)}; }
};

inline CubeDictionary build_dictionary(const Grid& g, const DictOptions& o = {}) {
    const double h = g.h();
    const Cube dom = g.domain();
    std::vector<Cube> raw;
    if (o.dyadic) {
        std::vector<Cube> cur{dom};
        while (!cur.empty() && cur.front().side >= o.min_cells * h * (1 - 1e-12)) {
            raw.insert(raw.end(), cur.begin(), cur.end());
            std::vector<Cube> next;
            for (const auto& q : cur)
                for (const auto& c : children(q)) next.push_back(c);
            cur = std::move(next);
        }
    }
    if (o.origin) {
        const Vec2 zero{0.0, 0.0};
        const bool inside = [&] {
            for (int a = 0; a < g.dim; ++a)
                if (zero[a] < g.corner[a] || zero[a] > g.corner[a] + g.side) return false;
            return true;
        }();
        if (inside)
            for (double s = o.min_cells * h; s <= 2 * g.side; s *= o.ladder_ratio) {
                const Cube anchored(g.dim, zero, s);
                const Cube centered(g.dim, {-s, g.dim == 2 ? -s : 0.0}, 2 * s);
                if (dom.contains(anchored)) raw.push_back(anchored);
                if (dom.contains(centered)) raw.push_back(centered);
            }
    }
    if (o.sliding) {
        for (std::size_t base = o.min_cells; base <= g.n; base *= 2)
            for (std::size_t len : {base, 3 * base}) {
                if (len > g.n) continue;
                const std::size_t stride = std::max<std::size_t>(1, len / 4);
                for (std::size_t i = 0; i + len <= g.n; i += stride) {
                    if (g.dim == 1) {
                        raw.push_back(to_cube(g, CellBox{{static_cast<std::ptrdiff_t>(i), 0}, static_cast<std::ptrdiff_t>(len)}));
                        continue;
                    }
                    for (std::size_t j = 0; j + len <= g.n; j += stride)
                        raw.push_back(to_cube(g, CellBox{{static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j)},
                                                         static_cast<std::ptrdiff_t>(len)}));
                }
            }
    }
    CubeDictionary d;
    std::set<std::tuple<double, double, double>> seen;
    for (const auto& q : raw)
        if (seen.insert({q.corner[0], q.corner[1], q.side}).second) d.add(q);
    if (d.cubes.empty()) throw Error("cube dictionary is empty");
    return d;
}

/// Averages over one cube with fractional coverage, reused across statistics.
class CubeView {
public:
    CubeView(const Grid& g, const Cube& q) : cells_(covered_cells(g, q)), vol_(g.cell_volume()), q_(q) {
        if (cells_.empty()) throw Error("cube outside domain");
    }
    const Cube& cube() const { return q_; }
    const std::vector<CellWeight>& cells() const { return cells_; }

    template <class F>
    double integral(F&& value_of_cell) const {
        double s = 0.0;
        for (const auto& c : cells_) s += value_of_cell(c.index) * c.fraction;
        return s * vol_;
    }
    double integral(const GridFunction& f) const {
        return integral([&](std::size_t i) { return f[i]; });
    }
    double average(const GridFunction& f) const { return integral(f) / q_.volume(); }
    /// ∫_Q |f - f_Q|.
    double oscillation(const GridFunction& f) const {
        const double m = average(f);
        return integral([&](std::size_t i) { return std::abs(f[i] - m); });
    }

private:
    std::vector<CellWeight> cells_;
    double vol_;
    Cube q_;
};

/// max over the dictionary of <w>_Q <w^{-1/(p-1)}>_Q^{p-1}.
inline double ap_constant(const Weight& w, double p, const CubeDictionary& dict) {
    if (!(p > 1.0)) throw Error("A_p needs p > 1");
    const GridFunction dual = w.w.pow(-1.0 / (p - 1.0));
    std::vector<double> val(dict.size());
    parallel_for(dict.size(), [&](std::size_t i) {
        const CubeView v(w.grid(), dict.cubes[i]);
        val[i] = v.average(w.w) * std::pow(v.average(dual), p - 1.0);
    });
    return *std::max_element(val.begin(), val.end());
}

/// max over the dictionary of (1/η(Q)) ∫_Q |b - b_Q|.
inline double bmo_eta_norm(const GridFunction& b, const Weight& eta, const CubeDictionary& dict) {
    b.require_compatible(eta.w);
    std::vector<double> val(dict.size());
    parallel_for(dict.size(), [&](std::size_t i) {
        const CubeView v(b.grid(), dict.cubes[i]);
        val[i] = v.oscillation(b) / v.integral(eta.w);
    });
    return *std::max_element(val.begin(), val.end());
}

/// max of w(λQ)/w(Q) over dictionary cubes whose dilate stays in the domain.
inline double doubling_constant(const Weight& w, double factor, const CubeDictionary& dict) {
    if (!(factor > 1.0)) throw Error("dilation factor must exceed 1");
    const Cube dom = w.grid().domain();
    double best = -1.0;
    for (const auto& q : dict.cubes) {
        const Cube big = q.dilate(factor);
        if (!dom.contains(big)) continue;
        best = std::max(best, integrate(w.w, big) / integrate(w.w, q));
    }
    if (best < 0) throw Error("no dictionary cube has its dilate inside the domain");
    return best;
}

/// Largest γ with |{x ∈ Q : w(x) >= γ w_Q}| >= |Q|/2 for the single cube q.
inline double level_set_gamma(const Weight& w, const Cube& q) {
    const CubeView v(w.grid(), q);
    std::vector<std::pair<double, double>> vals;  // value, measure
    for (const auto& c : v.cells()) vals.emplace_back(w.w[c.index], c.fraction * w.grid().cell_volume());
    std::sort(vals.begin(), vals.end(), [](auto a, auto b) { return a.first > b.first; });
    const double half = q.volume() / 2;
    double acc = 0.0;
    double level = vals.back().first;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        acc += vals[i].second;
        if (i + 1 < vals.size() && vals[i + 1].first == vals[i].first) continue;
        if (acc >= half * (1 - 1e-12)) {
            level = vals[i].first;
            break;
        }
    }
    return level / v.average(w.w);
}

/// Largest γ valid for every dictionary cube.
inline double level_set_gamma(const Weight& w, const CubeDictionary& dict) {
    std::vector<double> val(dict.size());
    parallel_for(dict.size(), [&](std::size_t i) { val[i] = level_set_gamma(w, dict.cubes[i]); });
    return *std::min_element(val.begin(), val.end());
}

struct ReverseJensen {
    double value = 0.0;  ///< max of <w>_Q / <w^δ>_Q^{1/δ}
    double gamma = 0.0;
    double bound = 0.0;  ///< 2^{1/δ}/γ
    bool ok = false;
};

inline ReverseJensen reverse_jensen(const Weight& w, double delta, const CubeDictionary& dict) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error("reverse Jensen needs δ in (0,1)");
    const GridFunction wd = w.w.pow(delta);
    std::vector<double> val(dict.size());
    parallel_for(dict.size(), [&](std::size_t i) {
        const CubeView v(w.grid(), dict.cubes[i]);
        val[i] = v.average(w.w) / std::pow(v.average(wd), 1.0 / delta);
    });
    ReverseJensen r;
    r.value = *std::max_element(val.begin(), val.end());
    r.gamma = level_set_gamma(w, dict);
    r.bound = std::pow(2.0, 1.0 / delta) / r.gamma;
    r.ok = r.value <= r.bound * (1 + 1e-12);
    return r;
}

/// Smallest w(E)/w(Q) over cell subsets E ⊆ Q with |E| >= α|Q|: the cells of
/// smallest weight, plus `trials` random subsets of the same size.
inline double density_beta(const Weight& w, double alpha, const Cube& q, int trials = 0, std::uint64_t seed = 1) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("density needs α in (0,1]");
    auto cells = cells_with_midpoint_in(w.grid(), q);
    if (cells.empty()) throw Error("cube contains no sample point");
    const auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(cells.size()) - 1e-9));
    double total = 0.0;
    for (auto c : cells) total += w.w[c];
    std::vector<double> vals;
    for (auto c : cells) vals.push_back(w.w[c]);
    std::sort(vals.begin(), vals.end());
    double worst = std::accumulate(vals.begin(), vals.begin() + k, 0.0) / total;
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        for (std::size_t i = 0; i < k; ++i) std::swap(cells[i], cells[i + rng.index(cells.size() - i)]);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += w.w[cells[i]];
        worst = std::min(worst, s / total);
    }
    return worst;
}

/// μ, λ, p, m with ν = (μ/λ)^{1/p} and η = ν^{1/m}.
struct BloomSetup {
    Weight mu, lambda;
    double p = 2.0;
    int m = 1;
    Weight nu, eta;

    BloomSetup(Weight mu_, Weight lambda_, double p_, int m_) : mu(std::move(mu_)), lambda(std::move(lambda_)), p(p_), m(m_) {
        if (!(p > 1.0)) throw Error("Bloom setup needs p > 1");
        if (m < 1) throw Error("Bloom setup needs m >= 1");
        mu.w.require_compatible(lambda.w);
        std::optional<double> a_nu, a_eta;
        if (mu.power && lambda.power) {
            a_nu = (*mu.power - *lambda.power) / p;
            a_eta = *a_nu / m;
        }
        nu = Weight(mu.w.zip(lambda.w, [&](double x, double y) { return std::pow(x / y, 1.0 / p); }), a_nu);
        eta = Weight(nu.w.pow(1.0 / m), a_eta);
    }
};

}  // namespace bloom
