#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "bloom/bloom.hpp"

using namespace bloom;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string failures_of(const RunResult& r) {
    std::string s;
    for (std::size_t i = 0; i < r.failures.size() && i < 3; ++i) s += (i ? "; " : "") + r.failures[i];
    return s;
}

GridFunction random_poly(const Grid& g, Rng& rng) {
    std::array<double, 4> c{};
    for (auto& x : c) x = rng.uniform(-1, 1);
    const double tilt = rng.uniform(-1, 1);
    return GridFunction::from(g, [&](const Vec2& x) {
        const double t = x[0] + tilt * x[1];
        return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    });
}

GridFunction random_noise(const Grid& g, Rng& rng, double lo = -1, double hi = 1) {
    GridFunction f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(lo, hi);
    return f;
}

std::vector<Cube> random_dyadic(const Grid& g, std::size_t count, Rng& rng) {
    std::vector<Cube> out;
    for (std::size_t i = 0; i < count; ++i) {
        const int level = static_cast<int>(rng.index(5));
        const double side = g.side / std::ldexp(1.0, level);
        const std::size_t slots = std::size_t{1} << level;
        const Cube q(g.dim, {g.corner[0] + side * rng.index(slots), g.dim == 2 ? g.corner[1] + side * rng.index(slots) : 0.0},
                     side);
        if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
    }
    return out;
}

/// 1: slope of the BMO_ν ratio of |x|^{1/8} and the closed-form rows.
Outcome example_slope(const std::string& out) {
    Outcome o;
    const Config c = make_config("bloom-failure");
    const RunResult r = run_experiment(c, out);
    o.require(r.ok, failures_of(r));
    const CsvData d = read_csv(out + "/bloom-failure.csv");
    const auto ci = d.column("case"), ri = d.column("ratio_nu"), ei = d.column("rel_err");
    double worst = 0.0;
    for (const auto& row : d.rows) {
        if (row[ci] == "example") worst = std::max(worst, std::stod(row[ei]));
        if (row[ci] == "example-slope") {
            const double slope = std::stod(row[ri]);
            o.detail = "slope " + fmt(slope);
            o.require(std::abs(slope + 0.125) <= 0.05 * 0.125, "slope outside -0.125 ± 5%");
        }
    }
    o.detail += ", max closed-form rel err " + fmt(worst);
    o.require(worst <= 1e-3, "closed form off by more than 1e-3");
    return o;
}

/// 2: sup of (1/ν^{1/2}(I))∫_I |b - b_I| with b = ν^{1/2} = |x|^{1/8}.
Outcome example_constant() {
    Outcome o;
    const Grid g = Grid::box(1, -1, 1, 4096);
    const CubeDictionary dict = build_dictionary(g, DictOptions{.min_cells = 2});
    const Weight half = power_weight(g, 0.125);
    const double sup = bmo_eta_norm(half.w, half, dict);
    o.detail = "sup " + fmt(sup) + " over " + std::to_string(dict.size()) + " intervals";
    o.require(dict.size() >= 10000, "fewer than 10^4 intervals");
    o.require(sup <= 2 + 1e-2, "sup above 2 + 1e-2");
    return o;
}

/// 3: kernel form against the recursive commutator at every admissible point,
/// error relative to the sup of the kernel form over those points.
Outcome representation_oracle() {
    Outcome o;
    Rng rng(3);
    double worst = 0.0;
    std::size_t points = 0, cases = 0;
    const std::vector<std::pair<Grid, KernelSpec>> setups{{Grid::box(1, -1, 1, 512), KernelSpec::hilbert()},
                                                          {Grid::box(2, -1, 1, 32), KernelSpec::sign_patch(0.7, 1.3)}};
    for (const auto& [g, k] : setups)
        for (int pair = 0; pair < 20; ++pair) {
            const GridFunction b = pair % 2 ? random_poly(g, rng) : random_step_function(g, 6, rng);
            GridFunction f(g);
            const double side = g.side * (0.25 + 0.25 * rng.uniform());
            const Cube q(g.dim,
                         {g.corner[0] + rng.uniform() * (g.side - side), g.dim == 2 ? g.corner[1] + rng.uniform() * (g.side - side) : 0.0},
                         side);
            for (auto c : cells_with_midpoint_in(g, q)) f[c] = rng.uniform(-1, 1);
            for (int m = 1; m <= 3; ++m) {
                const CommutatorSpec s{k, b, m};
                const GridFunction r = commutator_recursive(s, f);
                double diff = 0.0, scale = 0.0;
                for (std::size_t x = 0; x < g.size(); ++x) {
                    if (cell_distance_to_support(f, x) < 2) continue;
                    const double kf = commutator_kernel_form(s, f, x);
                    diff = std::max(diff, std::abs(kf - r[x]));
                    scale = std::max(scale, std::abs(kf));
                    ++points;
                }
                ++cases;
                if (scale > 0) worst = std::max(worst, diff / scale);
                else o.require(diff == 0.0, "nonzero recursive form where the kernel form vanishes");
            }
        }
    o.detail = "max rel err " + fmt(worst) + " over " + std::to_string(cases) + " cases, " + std::to_string(points) + " points";
    o.require(worst <= 1e-8, "relative error above 1e-8");
    return o;
}

/// 4: sparse decompositions of 100 random step functions at N = 2^10.
Outcome decomposition_suite(const std::string& out) {
    Outcome o;
    const RunResult r = run_experiment(make_config("decompose"), out);
    const CsvData d = read_csv(out + "/decompose.csv");
    std::size_t steps = 0, passed = 0;
    double alpha = 1.0, defect = -INFINITY;
    for (const auto& row : d.rows) {
        if (row[d.column("kind")] != "step") continue;
        ++steps;
        passed += row[d.column("pass")] == "1";
        alpha = std::min(alpha, std::stod(row[d.column("alpha")]));
        defect = std::max(defect, std::stod(row[d.column("defect")]));
    }
    o.detail = std::to_string(passed) + "/" + std::to_string(steps) + " pass, min alpha " + fmt(alpha) + ", max defect " + fmt(defect);
    o.require(steps == 100 && passed == steps, "not every trial passes");
    o.require(r.ok, failures_of(r));
    return o;
}

/// 5: the sparse-operator inequality chain.
Outcome sparse_chain() {
    Outcome o;
    Rng rng(5);
    const Grid g = Grid::box(1, 0, 1, 64);
    double sa = 0.0, shift = 0.0, iter_ratio = 0.0;
    std::size_t chain_ok = 0;
    for (int t = 0; t < 50; ++t) {
        const SparseOperator op{carve_greedy(g, random_dyadic(g, 10, rng), 0.0).family, std::nullopt};
        sa = std::max(sa, check_selfadjoint(op, random_noise(g, rng), random_noise(g, rng)));
    }
    for (int t = 0; t < 200; ++t) {
        const auto cubes = random_dyadic(g, 8, rng);
        const SparseFamily s = carve_greedy(g, cubes, 0.0).family;
        const Weight eta(random_noise(g, rng, 0.2, 3.0));
        const GridFunction h = random_noise(g, rng);
        const Cube q = cubes[rng.index(cubes.size())];
        const int l = 1 + static_cast<int>(rng.index(3));
        chain_ok += check_chain_expansion(s, eta, q, l, h).ok;
        const auto it = check_iteration_bound(s, eta, q, l, h);
        iter_ratio = std::max(iter_ratio, it.ratio / factorial(l));
        o.require(it.ratio <= factorial(l) * (1 + 1e-9), "iteration ratio above l! in trial " + std::to_string(t));
    }
    for (int t = 0; t < 30; ++t) {
        const int m = 1 + t % 3;
        const SparseFamily s = carve_greedy(g, random_dyadic(g, 10, rng), 0.0).family;
        const auto v = adjoint_shift_values(s, Weight(random_noise(g, rng, 0.2, 3.0)), random_noise(g, rng), random_noise(g, rng), m);
        for (double x : v) shift = std::max(shift, std::abs(x - v[0]) / std::abs(v[0]));
    }
    o.detail = "self-adjoint " + fmt(sa) + ", chains " + std::to_string(chain_ok) + "/200, max ratio/l! " + fmt(iter_ratio) +
               ", shift " + fmt(shift);
    o.require(sa <= 1e-12, "self-adjointness defect above 1e-12");
    o.require(chain_ok == 200, "chain expansion fails");
    o.require(shift <= 1e-10, "adjoint shift above 1e-10");
    return o;
}

/// 6: implied constants of the upper bound over the power sweep, spread taken at fixed N and m.
Outcome upper_bound_sweep(const std::string& out) {
    Outcome o;
    const RunResult r = run_experiment(make_config("bloom-upper"), out);
    o.require(r.ok, failures_of(r));
    const CsvData d = read_csv(out + "/bloom-upper.csv");
    std::map<std::string, double> by_key;  // "m a" at each N
    std::map<std::pair<double, double>, std::pair<double, double>> range;  // (N, m) -> min, max
    for (const auto& row : d.rows) {
        const double a = std::stod(row[d.column("a")]);
        if (a == 0.0) continue;  // b is constant, both sides vanish
        const double n = std::stod(row[d.column("N")]), v = std::stod(row[d.column("implied")]);
        o.require(std::isfinite(v) && v > 0, "implied constant not finite and positive");
        const double m = std::stod(row[d.column("m")]);
        auto& rg = range.try_emplace({n, m}, INFINITY, 0.0).first->second;
        rg.first = std::min(rg.first, v);
        rg.second = std::max(rg.second, v);
        by_key[row[d.column("N")] + " " + row[d.column("m")] + " " + row[d.column("a")]] = v;
    }
    double spread = 0.0, doubling = 0.0;
    for (const auto& [key, rg] : range) spread = std::max(spread, rg.second / rg.first);
    for (const auto& [key, v] : by_key) {
        const auto sp = key.find(' ');
        const double n = std::stod(key.substr(0, sp));
        const std::string tail = key.substr(sp);
        const auto finer = by_key.find(std::to_string(static_cast<long>(2 * n)) + tail);
        if (finer == by_key.end()) continue;
        doubling = std::max(doubling, std::max(finer->second / v, v / finer->second));
    }
    o.detail = "sweep spread " + fmt(spread) + ", grid doubling " + fmt(doubling);
    o.require(spread <= 4, "spread across the sweep above 4");
    o.require(doubling > 0 && doubling <= 2, "grid doubling changes the constant by more than 2");
    return o;
}

/// 7: lower-bound certificates on random cubes.
Outcome certificates() {
    Outcome o;
    Rng rng(7);
    std::size_t built = 0, total = 0;
    for (int dim : {1, 2}) {
        const Grid g = dim == 1 ? Grid::box(1, -8, 8, 2048) : Grid::box(2, -8, 8, 512);
        const std::vector<KernelSpec> kernels =
            dim == 1 ? std::vector<KernelSpec>{KernelSpec::hilbert()}
                     : std::vector<KernelSpec>{KernelSpec::cosine(), KernelSpec::sign_patch(0.3, 1.0)};
        const std::vector<std::pair<std::string, GridFunction>> bs{
            {"x", GridFunction::from(g, [](const Vec2& x) { return x[0]; })},
            {"|x|^{1/8}", power_weight(g, 0.125).w},
            {"step", random_step_function(g, 12, rng)}};
        for (const auto& k : kernels)
            for (const auto& [name, b] : bs) {
                const auto cubes = random_aligned_cubes(g, 20, dim == 1 ? 8 : 4, dim == 1 ? 64 : 8, rng);
                std::vector<std::string> errs(cubes.size());
                std::vector<char> ok(cubes.size(), 0);
                parallel_for(cubes.size(), [&](std::size_t i) {
                    try {
                        const auto c = build_certificate(k, b, cubes[i]);
                        ok[i] = c.ok();
                        if (!ok[i]) errs[i] = "checks";
                    } catch (const Error& e) {
                        errs[i] = e.what();
                    }
                });
                for (std::size_t i = 0; i < cubes.size(); ++i) {
                    ++total;
                    built += ok[i];
                    o.require(ok[i], k.name() + " b=" + name + " cube " + std::to_string(i) + ": " + errs[i]);
                }
            }
    }
    if (o.detail.size() > 300) o.detail = o.detail.substr(0, 300) + "...";
    o.detail = std::to_string(built) + "/" + std::to_string(total) + " certificates" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

/// 8: ω-supremum and BMO norm sandwich for a step symbol.
Outcome sandwich() {
    Outcome o;
    const Config c = make_config("necessity");
    const NecessityOutcome n = necessity_pipeline(c);
    const double lower = std::ldexp(1.0, 1 + 2);
    o.detail = "js sup " + fmt(n.js_sup) + ", bmo " + fmt(n.bmo) + ", C " + fmt(n.sandwich_c);
    o.require(n.js_sup > 0, "degenerate symbol");
    o.require(n.js_sup <= lower * n.bmo * (1 + 1e-12), "Chebyshev side fails");
    o.require(n.sandwich_c <= 64, "C above 64");
    return o;
}

/// 9: weight diagnostics.
Outcome weight_diagnostics() {
    Outcome o;
    const Grid g = Grid::box(1, -1, 1, 2048);
    const CubeDictionary dict = build_dictionary(g);
    const Weight w = power_weight(g, 0.5);
    const double ap = ap_constant(w, 2.0, dict);
    const double dbl = doubling_constant(w, 2.0, dict);
    Rng rng(9);
    const std::vector<Weight> tested{w, power_weight(g, -0.5), power_weight(g, 0.2), constant_weight(g, 1.0),
                                     two_level_weight(g, 1.0), Weight(random_noise(g, rng, 0.5, 2.0))};
    std::size_t rj_ok = 0;
    for (const auto& t : tested) rj_ok += reverse_jensen(t, 0.5, dict).ok;
    o.detail = "A_2 " + fmt(ap) + ", doubling " + fmt(dbl) + ", reverse Jensen " + std::to_string(rj_ok) + "/" +
               std::to_string(tested.size());
    o.require(ap >= 4.0 / 3.0 - 1e-2, "A_2 constant below 4/3 - 1e-2");
    o.require(dbl <= std::pow(2.0, 1.5) + 1e-2, "doubling above 2^{3/2} + 1e-2");
    o.require(rj_ok == tested.size(), "reverse Jensen fails");
    return o;
}

/// 10: every verb rerun with the same seed gives byte-identical CSVs.
Outcome determinism(const std::string& first, const std::string& second) {
    Outcome o;
    const std::vector<std::string> verbs{"bloom-upper", "bloom-failure", "embedding", "necessity", "decompose", "diagnose-weight"};
    const unsigned before = threads();
    std::size_t compared = 0;
    for (const auto& v : verbs) {
        const Config c = make_config(v);
        set_threads(before);
        const RunResult a = run_experiment(c, first + "/" + v);
        set_threads(std::max(1u, before / 2));
        const RunResult b = run_experiment(c, second + "/" + v);
        for (std::size_t i = 0; i < a.outputs.size(); ++i) {
            if (!a.outputs[i].ends_with(".csv")) continue;
            ++compared;
            o.require(slurp(a.outputs[i]) == slurp(b.outputs[i]), a.outputs[i] + " differs");
        }
    }
    set_threads(before);
    o.detail = std::to_string(compared) + " CSV files compared" + (o.detail.empty() ? "" : "; " + o.detail);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    set_threads(std::max(1u, std::thread::hardware_concurrency()));
    const std::string root = argc > 1 ? argv[1] : (fs::temp_directory_path() / "bloom-acceptance").string();
    fs::remove_all(root);
    fs::create_directories(root);
    struct Criterion {
        int id;
        std::string name;
        double budget_s;  ///< 0 = no separate limit
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "example slope", 10, [&] { return example_slope(root + "/c1"); }},
        {2, "example constant", 30, [] { return example_constant(); }},
        {3, "commutator representation oracle", 0, [] { return representation_oracle(); }},
        {4, "sparse decomposition suite", 0, [&] { return decomposition_suite(root + "/c4"); }},
        {5, "sparse operator inequality chain", 0, [] { return sparse_chain(); }},
        {6, "upper bound consistency", 0, [&] { return upper_bound_sweep(root + "/c6"); }},
        {7, "lower bound certificates", 0, [] { return certificates(); }},
        {8, "necessity sandwich", 0, [] { return sandwich(); }},
        {9, "weight diagnostics", 0, [] { return weight_diagnostics(); }},
        {10, "determinism", 0, [&] { return determinism(root + "/c10a", root + "/c10b"); }},
    };
    const auto start = std::chrono::steady_clock::now();
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) o.require(false, "runtime " + fmt(secs) + " s above " + fmt(c.budget_s) + " s");
        failed += !o.pass;
        std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = total < 1800;
    std::printf("total runtime %.1f s%s\n", total, in_time ? "" : " (above 30 minutes)");
    std::printf("%s: %d of %zu criteria failed\n", failed || !in_time ? "FAIL" : "PASS", failed, criteria.size());
    return failed || !in_time ? 1 : 0;
}
