#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bloom/lowerbound.hpp"
#include "bloom/oscillation.hpp"
#include "bloom/sparse_ops.hpp"
#include "bloom/weights.hpp"

namespace bloom {

/// Flat key=value configuration. Keys outside the verb's defaults are rejected.
class Config {
public:
    Config() = default;
    Config(std::string verb, std::map<std::string, std::string> defaults)
        : verb_(std::move(verb)), values_(std::move(defaults)) {}

    void merge(std::istream& is) {
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            set(key, value);
        }
    }
    void merge_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw Error("cannot open config " + path);
        merge(is);
    }
    void set(const std::string& key, const std::string& value) {
        if (!values_.count(key)) throw Error("unknown config key for " + verb_ + ": " + key);
        values_[key] = value;
    }

    const std::string& verb() const { return verb_; }
    const std::string& str(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw Error("missing config key " + key);
        return it->second;
    }
    double num(const std::string& key) const { return detail::spec_number(key + "=" + str(key), str(key)); }
    long integer(const std::string& key) const {
        const double v = num(key);
        if (v != std::floor(v)) throw Error("config key " + key + " must be an integer");
        return static_cast<long>(v);
    }
    std::vector<double> list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& t : detail::split(str(key), ',')) out.push_back(detail::spec_number(key, trim(t)));
        return out;
    }

    /// FNV-1a over the verb and the sorted effective key=value pairs.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&](const std::string& s) {
            for (unsigned char ch : s) {
                h ^= ch;
                h *= 0x100000001b3ULL;
            }
        };
        feed(verb_ + "\n");
        for (const auto& [k, v] : values_) feed(k + "=" + v + "\n");
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
    std::string verb_;
    std::map<std::string, std::string> values_;
};

inline std::map<std::string, std::string> default_config(const std::string& verb) {
    if (verb == "bloom-upper")
        return {{"dim", "1"},         {"N_list", "1024,2048"}, {"lo", "-1"},        {"hi", "1"},
                {"p", "2"},           {"m_list", "1,2"},      {"exponents", "0,0.2,0.5,0.8"},
                {"lambda", "const:1"}, {"b", "auto"},         {"kernel", "hilbert"}, {"min_cells", "2"},
                {"truncation", "1.5"}, {"tests", "64"},       {"random_tests", "8"}, {"iterations", "50"},
                {"seed", "1"}};
    if (verb == "bloom-failure")
        return {{"eps", "1,1e-1,1e-2,1e-3,1e-4,1e-5,1e-6"}, {"cells", "65536"}, {"fit_max_eps", "0.1"}, {"seed", "1"}};
    if (verb == "embedding")
        return {{"u_alpha", "0.5"}, {"r", "2"},       {"N", "2048"},      {"lo", "0"},
                {"hi", "1"},        {"min_cells", "2"}, {"eps", "1e-2,1e-1,1,10,100,1000,10000"},
                {"cells", "65536"}, {"seed", "1"}};
    if (verb == "necessity")
        return {{"dim", "1"},      {"N", "2048"},        {"lo", "-8"},      {"hi", "8"},
                {"p", "2"},        {"m", "1"},           {"mu", "const:1"}, {"lambda", "const:1"},
                {"b", "randstep:64"}, {"kernel", "hilbert"}, {"cubes", "20"},  {"sets", "20"},
                {"max_side_cells", "64"}, {"truncation", "1.5"}, {"min_cells", "2"}, {"seed", "1"}};
    if (verb == "decompose")
        return {{"dim", "1"}, {"N", "1024"}, {"trials", "100"}, {"pieces", "24"}, {"seed", "1"}};
    if (verb == "diagnose-weight")
        return {{"dim", "1"}, {"N", "2048"}, {"lo", "-1"},      {"hi", "1"}, {"w", "power:0.5"},
                {"p", "2"},   {"delta", "0.5"}, {"min_cells", "2"}, {"seed", "1"}};
    throw Error("unknown experiment: " + verb);
}

inline Config make_config(const std::string& verb) { return Config(verb, default_config(verb)); }

/// CSV table whose rows all start with the config hash.
class CsvTable {
public:
    CsvTable(std::string hash, std::vector<std::string> columns) : hash_(std::move(hash)), columns_(std::move(columns)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& operator<<(const std::string& s) {
        rows_.back().push_back(s);
        return *this;
    }
    CsvTable& operator<<(const char* s) { return *this << std::string(s); }
    CsvTable& operator<<(double x) { return *this << format_double(x); }
    CsvTable& operator<<(long x) { return *this << std::to_string(x); }
    CsvTable& operator<<(int x) { return *this << std::to_string(x); }
    CsvTable& operator<<(std::size_t x) { return *this << std::to_string(x); }
    CsvTable& operator<<(bool x) { return *this << std::string(x ? "1" : "0"); }

    void write(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write " + path);
        os << "config_hash";
        for (const auto& c : columns_) os << ',' << c;
        os << '\n';
        for (const auto& r : rows_) {
            if (r.size() != columns_.size()) throw Error("csv row width does not match the header");
            os << hash_;
            for (const auto& v : r) os << ',' << v;
            os << '\n';
        }
    }

private:
    std::string hash_;
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error("csv has no column " + name);
    }
};

inline CsvData read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    CsvData d;
    std::string line;
    if (std::getline(is, line)) d.header = detail::split(line, ',');
    while (std::getline(is, line))
        if (!line.empty()) d.rows.push_back(detail::split(line, ','));
    return d;
}

struct PlotSpec {
    std::string title;
    std::string x;
    std::vector<std::string> ys;
    std::string group;  ///< optional column splitting the rows into series
    bool log_x = false;
    bool log_y = false;
};

/// Static SVG line plot built only from a CSV file.
inline void plot_csv(const std::string& csv_path, const std::string& svg_path, const PlotSpec& spec) {
    const CsvData d = read_csv(csv_path);
    struct Series {
        std::string name;
        std::vector<std::pair<double, double>> pts;
    };
    std::vector<Series> series;
    const std::size_t xi = d.column(spec.x);
    const std::size_t gi = spec.group.empty() ? 0 : d.column(spec.group);
    for (const auto& yname : spec.ys) {
        const std::size_t yi = d.column(yname);
        std::map<std::string, std::size_t> idx;
        for (const auto& r : d.rows) {
            const std::string key = spec.group.empty() ? yname : yname + " " + spec.group + "=" + r[gi];
            if (!idx.count(key)) {
                idx[key] = series.size();
                series.push_back({key, {}});
            }
            char* end = nullptr;
            double x = std::strtod(r[xi].c_str(), &end);
            if (end == r[xi].c_str()) continue;
            double y = std::strtod(r[yi].c_str(), &end);
            if (end == r[yi].c_str() || !std::isfinite(x) || !std::isfinite(y)) continue;
            if ((spec.log_x && x <= 0) || (spec.log_y && y <= 0)) continue;
            series[idx[key]].pts.emplace_back(spec.log_x ? std::log10(x) : x, spec.log_y ? std::log10(y) : y);
        }
    }
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (auto [x, y] : s.pts) {
            x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double w = 640, h = 400, ml = 70, mr = 200, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
    std::ofstream os(svg_path, std::ios::binary);
    if (!os) throw Error("cannot write " + svg_path);
    char buf[256];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << spec.title << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", ml,
                  mt, w - ml - mr, h - mt - mb);
    os << buf;
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4, yv = y0 + (y1 - y0) * t / 4;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">%s%.3g</text>\n",
                      px(xv), h - mb + 16, spec.log_x ? "1e" : "", xv);
        os << buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">%s%.3g</text>\n",
                      ml - 6, py(yv) + 3, spec.log_y ? "1e" : "", yv);
        os << buf;
    }
    os << "<text x=\"" << (ml + (w - ml - mr) / 2) << "\" y=\"" << (h - 12)
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << spec.x << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* col = colors[i % 8];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : series[i].pts) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(y));
            os << buf;
        }
        os << "\"/>\n";
        for (auto [x, y] : series[i].pts) {
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\"/>\n", px(x), py(y), col);
            os << buf;
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" fill=\"%s\">%s</text>\n",
                      w - mr + 10, mt + 14 + 16.0 * i, col, series[i].name.c_str());
        os << buf;
    }
    os << "</svg>\n";
}

struct RunResult {
    bool ok = true;
    std::vector<std::string> failures;
    std::vector<std::string> outputs;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            failures.push_back(what);
        }
    }
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2) throw Error("slope fit needs two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a, sy += b, sxx += a * a, sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// ∫_0^1 |t^s - 1/(1+s)| dt in closed form.
inline double power_oscillation_constant(double s) {
    if (s == 0.0) return 0.0;
    const double c = 1 / (1 + s);
    const double t = std::pow(c, 1 / s);
    if (s > 0) return 2 * ((1 - std::pow(t, s + 1)) / (s + 1) - c * (1 - t));
    return 2 * (std::pow(t, s + 1) / (s + 1) - c * t);
}

/// (1/η(I))∫_I |b - b_I| over I = (0,ε) with b = x^s, η = x^e, exactly.
inline double power_ratio_closed(double s, double e, double eps) {
    return (1 + e) * power_oscillation_constant(s) * std::pow(eps, s - e);
}

/// Same quantity by midpoint quadrature on a local grid of (0,ε).
inline double power_ratio_quadrature(double s, double e, double eps, std::size_t cells) {
    const Grid g = Grid::box(1, 0.0, eps, cells);
    const GridFunction b = power_weight(g, s).w;
    const Weight eta = power_weight(g, e);
    const CubeView v(g, g.domain());
    return v.oscillation(b) / v.integral(eta.w);
}

namespace detail {
inline Grid config_grid(const Config& c, std::size_t n) {
    return Grid::box(static_cast<int>(c.integer("dim")), c.num("lo"), c.num("hi"), n);
}
inline KernelSpec config_kernel(const Config& c) {
    KernelSpec k = parse_kernel(c.str("kernel"));
    k.set_truncation_cells(c.num("truncation"));
    return k;
}
inline DictOptions config_dict(const Config& c) {
    DictOptions o;
    o.min_cells = static_cast<std::size_t>(c.integer("min_cells"));
    return o;
}
inline void ensure_dir(const std::string& out) { std::filesystem::create_directories(out); }
}  // namespace detail

/// Implied constants of the upper bound over a sweep of μ = |x|^a.
inline RunResult run_bloom_upper(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    RunResult res;
    const double p = c.num("p");
    const KernelSpec kernel = detail::config_kernel(c);
    CsvTable t(c.hash(), {"N", "m", "a", "ap_lambda", "ap_mu", "bmo_b", "measured", "rhs", "implied", "anomaly"});
    const Rng root(static_cast<std::uint64_t>(c.integer("seed")));
    std::uint64_t point = 0;
    for (double nd : c.list("N_list")) {
        const Grid g = detail::config_grid(c, static_cast<std::size_t>(nd));
        const CubeDictionary dict = build_dictionary(g, detail::config_dict(c));
        const Weight lambda = parse_weight(c.str("lambda"), g);
        const SingularIntegral op(kernel, g);
        const SingularIntegral opt = op.transpose();
        for (double md : c.list("m_list")) {
            const int m = static_cast<int>(md);
            for (double a : c.list("exponents")) {
                const Weight mu = power_weight(g, a);
                const BloomSetup s(mu, lambda, p, m);
                const GridFunction b = c.str("b") == "auto" ? power_weight(g, a / (4.0 * m)).w : parse_function(c.str("b"), g);
                const double ap_l = ap_constant(lambda, p, dict), ap_m = ap_constant(mu, p, dict);
                const double bmo = bmo_eta_norm(b, s.eta, dict);
                const auto tests = default_test_functions(g, dict, static_cast<std::size_t>(c.integer("tests")),
                                                          static_cast<std::size_t>(c.integer("random_tests")), root.split(point++));
                const LinearMap fwd = [&](const GridFunction& f) { return commutator_binomial(op, b, m, f); };
                const LinearMap bwd = [&](const GridFunction& f) { return commutator_transpose(opt, b, m, f); };
                const NormEstimate est = estimate_norm(fwd, bwd, mu.w, lambda.w, p, tests, static_cast<int>(c.integer("iterations")));
                const double rhs = std::pow(bmo, m) * std::pow(ap_l * ap_m, (m + 1) / 2.0 * std::max(1.0, 1 / (p - 1)));
                const double scale = std::pow(b.max_abs(), m) * 1e-9;
                const bool anomaly = rhs == 0.0 && est.value > scale;
                const double implied = rhs > 0 ? est.value / rhs : 0.0;
                t.row() << static_cast<std::size_t>(nd) << m << a << ap_l << ap_m << bmo << est.value << rhs << implied << anomaly;
                res.check(std::isfinite(implied), "implied constant not finite at a=" + format_double(a));
                res.check(!anomaly, "zero BMO norm with nonzero measured norm at a=" + format_double(a));
            }
        }
    }
    const std::string csv = out + "/bloom-upper.csv";
    t.write(csv);
    plot_csv(csv, out + "/bloom-upper.svg", {"implied constant vs exponent", "a", {"implied"}, "m", false, false});
    res.outputs = {csv, out + "/bloom-upper.svg"};
    return res;
}

/// BMO_ν ratios of b = x^{1/8} over (0,ε), and the mirrored companion case.
inline RunResult run_bloom_failure(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    RunResult res;
    const auto cells = static_cast<std::size_t>(c.integer("cells"));
    const double fit_max = c.num("fit_max_eps");
    CsvTable t(c.hash(), {"case", "eps", "prefactor", "ratio_nu", "ratio_nu_closed", "rel_err", "ratio_half",
                          "ratio_half_closed", "skipped"});
    struct Case {
        std::string name;
        double s, e_nu, e_half;  // b = x^s against x^{e_nu} and x^{e_half}
        std::string diverging;   // which ratio should grow like ε^{-1/8}
    };
    const std::vector<Case> cases{{"example", 0.125, 0.25, 0.125, "nu"}, {"companion", -0.25, -0.25, -0.125, "half"}};
    for (const auto& cs : cases) {
        std::vector<double> xs, ys;
        for (double eps : c.list("eps")) {
            const bool skipped = cells < 16;
            const double rq = skipped ? 0 : power_ratio_quadrature(cs.s, cs.e_nu, eps, cells);
            const double rc = power_ratio_closed(cs.s, cs.e_nu, eps);
            const double hq = skipped ? 0 : power_ratio_quadrature(cs.s, cs.e_half, eps, cells);
            const double hc = power_ratio_closed(cs.s, cs.e_half, eps);
            const double pref = (1 + cs.e_nu) / std::pow(eps, 1 + cs.e_nu);
            const double err = std::abs(rq - rc) / rc;
            t.row() << cs.name << eps << pref << rq << rc << err << hq << hc << skipped;
            if (skipped) continue;
            if (cs.name == "example") {
                res.check(err <= 1e-3, "closed form mismatch at eps=" + format_double(eps));
                res.check(hq <= 2 + 1e-2, "BMO_{nu^{1/2}} ratio above 2 at eps=" + format_double(eps));
            } else {
                res.check(rq <= 2 + 1e-2, "companion BMO_nu ratio above 2 at eps=" + format_double(eps));
            }
            if (eps <= fit_max) {
                xs.push_back(eps);
                ys.push_back(cs.diverging == "nu" ? rq : hq);
            }
        }
        const double slope = loglog_slope(xs, ys);
        t.row() << cs.name + "-slope" << 0.0 << 0.0 << slope << -0.125 << std::abs(slope + 0.125) / 0.125 << 0.0 << 0.0 << false;
        res.check(std::abs(slope + 0.125) <= 0.125 * 0.05, cs.name + " slope " + format_double(slope) + " outside -0.125 ± 5%");
    }
    const std::string csv = out + "/bloom-failure.csv";
    t.write(csv);
    plot_csv(csv, out + "/bloom-failure.svg", {"BMO ratios over (0, eps)", "eps", {"ratio_nu", "ratio_half"}, "case", true, true});
    res.outputs = {csv, out + "/bloom-failure.svg"};
    return res;
}

/// Interpolation check of BMO_u ∩ BMO ⊆ BMO_{u^{1/r}} and the strictness table.
inline RunResult run_embedding(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    RunResult res;
    const double alpha = c.num("u_alpha"), r = c.num("r");
    if (!(r > 1)) throw Error("embedding needs r > 1");
    const Grid g = Grid::box(1, c.num("lo"), c.num("hi"), static_cast<std::size_t>(c.integer("N")));
    const CubeDictionary dict = build_dictionary(g, detail::config_dict(c));
    const Weight u = power_weight(g, alpha);
    const Weight ur = power_weight(g, alpha / r);
    Rng rng(static_cast<std::uint64_t>(c.integer("seed")));
    const std::vector<std::pair<std::string, GridFunction>> bs{{"power", power_weight(g, alpha / r).w},
                                                                {"step", random_step_function(g, 12, rng)}};
    CsvTable t(c.hash(), {"table", "b", "eps", "lhs_max", "worst_ratio", "bmo", "bmo_u_r", "cubes"});
    for (const auto& [name, b] : bs) {
        double lhs_max = 0, worst = 0;
        for (const auto& q : dict.cubes) {
            const CubeView v(g, q);
            const double osc = v.oscillation(b);
            const double lhs = osc / v.integral(ur.w);
            const double bmo_u = osc / v.integral(u.w), bmo = osc / q.volume();
            const double gamma = level_set_gamma(u, q);
            const double cst = std::pow(std::pow(2.0, r) / gamma, 1 / r);
            const double rhs = cst * std::pow(bmo_u, 1 / r) * std::pow(bmo, 1 - 1 / r);
            lhs_max = std::max(lhs_max, lhs);
            if (rhs > 0) worst = std::max(worst, lhs / rhs);
            res.check(lhs <= rhs * (1 + 1e-9) + 1e-300, "interpolation inequality fails for b=" + name);
        }
        t.row() << "interpolation" << name << 0.0 << lhs_max << worst << 0.0 << 0.0 << dict.size();
    }
    std::vector<double> xs, ys;
    for (double eps : c.list("eps")) {
        const auto cells = static_cast<std::size_t>(c.integer("cells"));
        const double unweighted = power_ratio_quadrature(alpha / r, 0.0, eps, cells);
        const double weighted = power_ratio_quadrature(alpha / r, alpha / r, eps, cells);
        t.row() << "strictness" << "power" << eps << 0.0 << 0.0 << unweighted << weighted << std::size_t{1};
        res.check(weighted <= 2 + 1e-2, "BMO_{u^{1/r}} ratio above 2 at eps=" + format_double(eps));
        xs.push_back(eps);
        ys.push_back(unweighted);
    }
    const double slope = loglog_slope(xs, ys);
    t.row() << "strictness-slope" << "power" << 0.0 << 0.0 << 0.0 << slope << alpha / r << std::size_t{0};
    res.check(slope > 0, "unweighted BMO ratios do not diverge");
    const std::string csv = out + "/embedding.csv";
    t.write(csv);
    plot_csv(csv, out + "/embedding.svg", {"BMO ratios of |x|^{a/r} over (0, eps)", "eps", {"bmo", "bmo_u_r"}, "table", true, true});
    res.outputs = {csv, out + "/embedding.svg"};
    return res;
}

/// Random grid-aligned cubes of side 2^k cells inside the central half of the grid.
inline std::vector<Cube> random_aligned_cubes(const Grid& g, std::size_t count, std::size_t min_side, std::size_t max_side,
                                              Rng& rng) {
    std::vector<std::size_t> sides;
    for (std::size_t s = min_side; s <= max_side; s *= 2) sides.push_back(s);
    if (sides.empty()) throw Error("no admissible cube side");
    std::vector<Cube> out;
    const std::size_t lo = g.n * 3 / 8, hi = g.n * 5 / 8;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t side = sides[rng.index(sides.size())];
        const std::size_t span = hi > lo + side ? hi - lo - side : 1;
        CellBox b;
        b.len = static_cast<std::ptrdiff_t>(side);
        b.lo[0] = static_cast<std::ptrdiff_t>(lo + rng.index(span));
        b.lo[1] = g.dim == 2 ? static_cast<std::ptrdiff_t>(lo + rng.index(span)) : 0;
        out.push_back(to_cube(g, b));
    }
    return out;
}

struct NecessityOutcome {
    NecessityReport report;
    double restricted_c = 0.0;
    double js_sup = 0.0;     ///< sup_Q ω_{2^{-n-2}}(b;Q)|Q|/η(Q) over the dictionary
    double bmo = 0.0;        ///< ‖b‖_{BMO_η} over the dictionary
    double sandwich_c = 0.0; ///< bmo / js_sup
    std::vector<LowerBoundCertificate> certificates;
};

inline NecessityOutcome necessity_pipeline(const Config& c) {
    const Grid g = detail::config_grid(c, static_cast<std::size_t>(c.integer("N")));
    const KernelSpec kernel = detail::config_kernel(c);
    const int m = static_cast<int>(c.integer("m"));
    const BloomSetup s(parse_weight(c.str("mu"), g), parse_weight(c.str("lambda"), g), c.num("p"), m);
    Rng rng(static_cast<std::uint64_t>(c.integer("seed")));
    const GridFunction b = parse_function(c.str("b"), g, rng.next());
    const std::size_t min_side = g.dim == 1 ? 8 : 4;
    const auto cubes = random_aligned_cubes(g, static_cast<std::size_t>(c.integer("cubes")), min_side,
                                            static_cast<std::size_t>(c.integer("max_side_cells")), rng);
    NecessityOutcome o;
    // restricted constant over random cube unions, then over the certificate pairs
    const SingularIntegral op(kernel, g);
    const auto sets = static_cast<std::size_t>(c.integer("sets"));
    std::vector<double> ratios(sets, 0.0);
    std::vector<GridFunction> chis;
    for (std::size_t i = 0; i < sets; ++i) {
        GridFunction chi(g);
        const auto parts = random_aligned_cubes(g, 1 + rng.index(4), min_side, static_cast<std::size_t>(c.integer("max_side_cells")), rng);
        for (const auto& q : parts)
            for (auto x : cells_with_midpoint_in(g, q)) chi[x] = 1.0;
        chis.push_back(std::move(chi));
    }
    for (std::size_t i = 0; i < sets; ++i) {
        const GridFunction tb = commutator_binomial(op, b, m, chis[i]);
        const double mu_e = integrate(chis[i] * s.mu.w);
        if (mu_e > 0) ratios[i] = lp_norm(tb, s.lambda.w, s.p) / std::pow(mu_e, 1 / s.p);
    }
    for (double x : ratios) o.restricted_c = std::max(o.restricted_c, x);
    o.certificates.resize(cubes.size());
    std::vector<char> built(cubes.size(), 0);
    parallel_for(cubes.size(), [&](std::size_t i) {
        try {
            o.certificates[i] = build_certificate(kernel, b, cubes[i]);
            built[i] = 1;
        } catch (const Error&) {
        }
    });
    for (std::size_t i = 0; i < cubes.size(); ++i)
        if (built[i])
            o.restricted_c = std::max(o.restricted_c, certificate_restricted_ratio(kernel, b, m, s.p, s, o.certificates[i]));
    o.report = verify_oscillation_bound(s, kernel, b, cubes, o.restricted_c);
    DictOptions dopt = detail::config_dict(c);
    dopt.min_cells = std::max<std::size_t>(dopt.min_cells, g.dim == 1 ? 8 : 4);
    const CubeDictionary dict = build_dictionary(g, dopt);
    const auto js = john_stromberg_upper(b, s.eta, dict, decomposition_level(g.dim));
    o.js_sup = js.sup;
    o.bmo = bmo_eta_norm(b, s.eta, dict);
    o.sandwich_c = o.js_sup > 0 ? o.bmo / o.js_sup : 0.0;
    return o;
}

inline RunResult run_necessity(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    std::filesystem::create_directories(out + "/certificates");
    RunResult res;
    const NecessityOutcome o = necessity_pipeline(c);
    CsvTable t(c.hash(), {"cube", "side", "skipped", "omega", "eta_avg", "ratio", "link0", "link1", "link2", "link3", "link4",
                          "link5", "final_const", "chain_const", "restricted", "ok"});
    for (std::size_t i = 0; i < o.report.rows.size(); ++i) {
        const auto& r = o.report.rows[i];
        t.row() << i << r.q.side << r.skipped << r.omega << r.eta_avg << r.ratio;
        for (int l = 0; l < 6; ++l) t << (r.rhs[l] > 0 ? r.lhs[l] / r.rhs[l] : 0.0);
        t << r.final_const << r.chain_const << r.restricted << r.ok;
        res.check(r.skipped || r.ok, "necessity chain fails on cube " + std::to_string(i));
        if (!r.skipped) {
            const auto& cert = o.certificates[i];
            res.check(cert.ok(), "certificate checks fail on cube " + std::to_string(i));
            std::ofstream js(out + "/certificates/cube_" + std::to_string(i) + ".json", std::ios::binary);
            js << certificate_json(cert).dump(1) << '\n';
        }
    }
    res.check(o.report.skipped < o.report.rows.size(), "no cube admitted a certificate");
    CsvTable summary(c.hash(), {"restricted_c", "max_ratio", "js_sup", "bmo", "sandwich_c", "skipped", "failures"});
    summary.row() << o.restricted_c << o.report.max_ratio << o.js_sup << o.bmo << o.sandwich_c << o.report.skipped
                  << o.report.failures;
    const std::string csv = out + "/necessity.csv";
    t.write(csv);
    summary.write(out + "/necessity-summary.csv");
    plot_csv(csv, out + "/necessity.svg", {"omega / <nu^{1/m}>_Q per cube", "side", {"ratio"}, "", true, false});
    res.outputs = {csv, out + "/necessity-summary.csv", out + "/necessity.svg"};
    return res;
}

struct DecompositionTrial {
    std::string kind;
    std::size_t cubes = 0;
    double alpha = 0.0;  ///< smallest carve fraction
    double defect = 0.0;
    double exceptional = 0.0;
    double packing = 0.0;  ///< max over members R of Σ_{P ⊆ R} |P| / |R|
    int escalations = 0;
    bool sparse_ok = false;
    std::size_t aug_cubes = 0;
    double aug_alpha = 0.0;
    double aug_defect = 0.0;
    bool aug_ok = false;
    bool pass = false;
};

inline DecompositionTrial decomposition_trial(const GridFunction& f, std::string kind) {
    const Grid& g = f.grid();
    DecompositionTrial t;
    t.kind = std::move(kind);
    const DecompositionResult d = sparse_decompose(f, g.domain());
    t.cubes = d.family.size();
    t.alpha = 1.0;
    for (std::size_t i = 0; i < d.family.size(); ++i)
        t.alpha = std::min(t.alpha, d.family.carve[i].size() * g.cell_volume() / d.family.cubes[i].volume());
    t.defect = d.pointwise_defect;
    t.exceptional = d.exceptional_measure;
    for (const auto& q : d.family.cubes) t.packing = std::max(t.packing, packing_ratio(d.family, q));
    t.escalations = d.escalations;
    t.sparse_ok = verify_sparse(d.family).ok;
    const AugmentResult a = augment_family(d.family, f);
    t.aug_cubes = a.family.size();
    t.aug_alpha = a.alpha;
    t.aug_defect = a.max_defect;
    t.aug_ok = a.bound_ok;
    const double level_cap = decomposition_level(g.dim) * g.domain().volume() * (d.depth + 1);
    t.pass = t.sparse_ok && t.alpha >= 0.5 && t.defect <= 1e-12 && t.exceptional <= level_cap && t.packing <= 2 + 1e-12 &&
             t.aug_ok;
    return t;
}

inline RunResult run_decomposition_suite(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    RunResult res;
    const Grid g = Grid::box(static_cast<int>(c.integer("dim")), 0.0, 1.0, static_cast<std::size_t>(c.integer("N")));
    const Rng root(static_cast<std::uint64_t>(c.integer("seed")));
    const auto trials = static_cast<std::size_t>(c.integer("trials"));
    std::vector<DecompositionTrial> rows(trials + 3);
    parallel_for(trials, [&](std::size_t i) {
        Rng rng = root.split(i);
        rows[i] = decomposition_trial(random_step_function(g, static_cast<std::size_t>(c.integer("pieces")), rng), "step");
    });
    const std::array<double, 3> powers{-0.5, 0.125, 0.5};
    for (std::size_t j = 0; j < powers.size(); ++j)
        rows[trials + j] = decomposition_trial(power_weight(g, powers[j]).w, "power:" + format_double(powers[j]));
    CsvTable t(c.hash(), {"trial", "kind", "cubes", "alpha", "defect", "exceptional", "packing", "escalations", "sparse_ok",
                          "aug_cubes", "aug_alpha", "aug_defect", "aug_ok", "pass"});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        t.row() << i << r.kind << r.cubes << r.alpha << r.defect << r.exceptional << r.packing << r.escalations << r.sparse_ok
                << r.aug_cubes << r.aug_alpha << r.aug_defect << r.aug_ok << r.pass;
        res.check(r.pass, "decomposition trial " + std::to_string(i) + " fails");
    }
    const std::string csv = out + "/decompose.csv";
    t.write(csv);
    {
        Rng rng = root.split(0);
        const auto d = sparse_decompose(random_step_function(g, static_cast<std::size_t>(c.integer("pieces")), rng), g.domain());
        std::ofstream os(out + "/decompose-trial0.csv", std::ios::binary);
        write_decomposition_csv(os, d);
    }
    plot_csv(csv, out + "/decompose.svg", {"augmented family sparseness per trial", "trial", {"aug_alpha", "alpha"}, "", false, false});
    res.outputs = {csv, out + "/decompose-trial0.csv", out + "/decompose.svg"};
    return res;
}

inline RunResult run_diagnose_weight(const Config& c, const std::string& out) {
    detail::ensure_dir(out);
    RunResult res;
    const Grid g = detail::config_grid(c, static_cast<std::size_t>(c.integer("N")));
    const Weight w = parse_weight(c.str("w"), g);
    const CubeDictionary dict = build_dictionary(g, detail::config_dict(c));
    const double p = c.num("p"), delta = c.num("delta");
    const double ap = ap_constant(w, p, dict);
    const auto rj = reverse_jensen(w, delta, dict);
    const double dbl = doubling_constant(w, 2.0, dict);
    const double beta = density_beta(w, 0.5, g.domain(), 16, static_cast<std::uint64_t>(c.integer("seed")));
    CsvTable t(c.hash(), {"quantity", "value", "bound", "ok"});
    t.row() << "ap_constant" << ap << 1.0 << (ap >= 1 - 1e-12);
    t.row() << "level_set_gamma" << rj.gamma << 0.0 << (rj.gamma > 0);
    t.row() << "reverse_jensen" << rj.value << rj.bound << rj.ok;
    t.row() << "doubling_2" << dbl << 0.0 << std::isfinite(dbl);
    t.row() << "density_beta_half" << beta << 0.0 << (beta > 0 && beta <= 0.5 + 1e-12);
    t.row() << "dictionary_size" << static_cast<double>(dict.size()) << 0.0 << true;
    res.check(ap >= 1 - 1e-12, "A_p constant below 1");
    res.check(rj.ok, "reverse Jensen bound fails");
    res.check(std::isfinite(dbl), "doubling constant not finite");
    const std::string csv = out + "/diagnose-weight.csv";
    t.write(csv);
    res.outputs = {csv};
    return res;
}

inline RunResult run_experiment(const Config& c, const std::string& out) {
    const std::string& v = c.verb();
    if (v == "bloom-upper") return run_bloom_upper(c, out);
    if (v == "bloom-failure") return run_bloom_failure(c, out);
    if (v == "embedding") return run_embedding(c, out);
    if (v == "necessity") return run_necessity(c, out);
    if (v == "decompose") return run_decomposition_suite(c, out);
    if (v == "diagnose-weight") return run_diagnose_weight(c, out);
    throw Error("unknown experiment: " + v);
}

}  // namespace bloom
