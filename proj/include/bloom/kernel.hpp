#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "bloom/common.hpp"
#include "bloom/grid.hpp"

namespace bloom {

/// Homogeneous kernel K(x, y) = Ω((x-y)/|x-y|) / |x-y|^dim.
///
/// In dim 1 the sphere is {+1, -1} and Ω is a pair of numbers. In dim 2 Ω is
/// sampled at M uniform angles and linearly interpolated. No 1/π factor is
/// applied, so the Hilbert kernel is 1/(x-y).
///
/// The principal value is realized by dropping every cell whose midpoint is
/// closer than `truncation_cells` cell sides to the evaluation point.
class KernelSpec {
public:
    static constexpr std::size_t default_samples = 4096;

    static KernelSpec line(double omega_plus, double omega_minus, std::string name = "line") {
        KernelSpec k;
        k.dim_ = 1;
        k.name_ = std::move(name);
        k.samples_ = {omega_plus, omega_minus};
        return k;
    }
    static KernelSpec hilbert() { return line(1.0, -1.0, "hilbert"); }

    static KernelSpec circle_samples(std::vector<double> samples, std::string name) {
        if (samples.size() < 8) throw Error("circle kernel needs at least 8 angle samples");
        for (double s : samples)
            if (!std::isfinite(s)) throw Error("kernel samples must be finite");
        KernelSpec k;
        k.dim_ = 2;
        k.name_ = std::move(name);
        k.samples_ = std::move(samples);
        return k;
    }
    template <class F>
    static KernelSpec circle(F&& omega_of_angle, std::string name, std::size_t m = default_samples) {
        std::vector<double> s(m);
        for (std::size_t j = 0; j < m; ++j) s[j] = omega_of_angle(angle_of_sample(j, m));
        return circle_samples(std::move(s), std::move(name));
    }
    static KernelSpec cosine(std::size_t m = default_samples) {
        return circle([](double t) { return std::cos(t); }, "s1:cos", m);
    }
    /// Ω = 1 on the closed arc of the given width centered at theta0, 0 elsewhere.
    static KernelSpec sign_patch(double theta0, double width, std::size_t m = default_samples) {
        if (!(width > 0.0) || width >= 2 * std::numbers::pi) throw Error("arc width must lie in (0, 2π)");
        return circle(
            [=](double t) { return circular_gap(t, theta0) <= width / 2 + 1e-12 ? 1.0 : 0.0; },
            "s1:signpatch:" + format_double(theta0) + ":" + format_double(width), m);
    }

    int dim() const { return dim_; }
    const std::string& name() const { return name_; }
    double truncation_cells() const { return truncation_cells_; }
    KernelSpec& set_truncation_cells(double t) {
        if (!(t > 0.0)) throw Error("truncation must be positive");
        truncation_cells_ = t;
        return *this;
    }

    /// Raw sphere samples: {Ω(+1), Ω(-1)} in dim 1, Ω at uniform angles in dim 2.
    const std::vector<double>& samples() const { return samples_; }
    std::size_t sample_count() const { return samples_.size(); }
    static double angle_of_sample(std::size_t j, std::size_t m) {
        return 2 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    }
    /// Unit vector of sample j.
    Vec2 sphere_point(std::size_t j) const {
        if (dim_ == 1) return {j == 0 ? 1.0 : -1.0, 0.0};
        const double t = angle_of_sample(j, samples_.size());
        return {std::cos(t), std::sin(t)};
    }

    double omega_angle(double phi) const {
        const std::size_t m = samples_.size();
        double u = phi / (2 * std::numbers::pi);
        u -= std::floor(u);
        u *= static_cast<double>(m);
        const auto j = static_cast<std::size_t>(u) % m;
        const double t = u - std::floor(u);
        return (1 - t) * samples_[j] + t * samples_[(j + 1) % m];
    }
    /// Ω at a unit vector.
    double omega(const Vec2& unit) const {
        if (dim_ == 1) return unit[0] > 0 ? samples_[0] : samples_[1];
        return omega_angle(std::atan2(unit[1], unit[0]));
    }
    /// K at displacement d = x - y (d != 0).
    double at(const Vec2& d) const {
        const double r = norm(d, dim_);
        if (dim_ == 1) return (d[0] > 0 ? samples_[0] : samples_[1]) / r;
        return omega_angle(std::atan2(d[1], d[0])) / (r * r);
    }

    /// Integral of Ω over the sphere vanishes (numerically).
    bool mean_zero() const {
        double s = 0.0, scale = 0.0;
        for (double v : samples_) {
            s += v;
            scale += std::abs(v);
        }
        return std::abs(s) <= 1e-9 * std::max(scale, 1e-300);
    }

    /// Kernel of the transpose operator: Ω(-θ).
    KernelSpec reflected() const {
        KernelSpec k = *this;
        k.name_ = name_ + "~";
        if (dim_ == 1) {
            std::swap(k.samples_[0], k.samples_[1]);
        } else {
            const std::size_t m = samples_.size();
            if (m % 2 != 0) throw Error("reflection needs an even number of angle samples");
            for (std::size_t j = 0; j < m; ++j) k.samples_[j] = samples_[(j + m / 2) % m];
        }
        return k;
    }

    /// Truncation length on grid g; requires at least one cell diameter.
    double truncation_radius(const Grid& g) const {
        if (g.dim != dim_) throw Error("kernel and grid dimensions differ");
        const double r = truncation_cells_ * g.h();
        if (r < g.h() * std::sqrt(static_cast<double>(g.dim)) * (1 - 1e-12))
            throw Error("kernel truncation radius is below one cell diameter");
        return r;
    }

    static double circular_gap(double a, double b) {
        double d = std::fmod(std::abs(a - b), 2 * std::numbers::pi);
        return std::min(d, 2 * std::numbers::pi - d);
    }

private:
    int dim_ = 1;
    std::string name_;
    std::vector<double> samples_;
    double truncation_cells_ = 1.5;
};

/// Parses `hilbert`, `s1:cos`, `s1:file:<path>`, `s1:signpatch:<θ0>:<width>`.
inline KernelSpec parse_kernel(const std::string& spec) {
    if (spec == "hilbert") return KernelSpec::hilbert();
    if (spec == "s1:cos") return KernelSpec::cosine();
    const std::string file_tag = "s1:file:";
    if (spec.rfind(file_tag, 0) == 0) {
        const std::string path = spec.substr(file_tag.size());
        std::ifstream is(path);
        if (!is) throw Error("cannot open kernel file " + path);
        std::vector<double> s;
        double x;
        while (is >> x) s.push_back(x);
        return KernelSpec::circle_samples(std::move(s), spec);
    }
    const std::string patch_tag = "s1:signpatch:";
    if (spec.rfind(patch_tag, 0) == 0) {
        const std::string rest = spec.substr(patch_tag.size());
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw Error("expected s1:signpatch:<theta0>:<width>");
        try {
            return KernelSpec::sign_patch(std::stod(rest.substr(0, colon)), std::stod(rest.substr(colon + 1)));
        } catch (const std::invalid_argument&) {
            throw Error("bad number in kernel spec " + spec);
        }
    }
    throw Error("unknown kernel spec: " + spec);
}

struct DiniResult {
    std::vector<double> delta;
    std::vector<double> modulus;  ///< ω(δ) at each δ
    double integral = 0.0;        ///< ∫ ω(t) dt / t over [δ_min, 1]
    bool divergent = false;
};

/// Log-spaced δ grid from the sphere resolution up to 1.
inline std::vector<double> default_delta_grid(const KernelSpec& k, int per_decade = 20) {
    const double lo = k.dim() == 1 ? 1e-3 : 2 * std::sin(std::numbers::pi / static_cast<double>(k.sample_count()));
    std::vector<double> d;
    const double step = std::pow(10.0, 1.0 / per_decade);
    for (double x = lo; x < 1.0; x *= step) d.push_back(x);
    d.push_back(1.0);
    return d;
}

/// Modulus ω(δ) = sup_{|θ-θ'| <= δ} |Ω(θ) - Ω(θ')| over the sampled sphere
/// (chordal distance), and its Dini integral on a log grid.
inline DiniResult dini_modulus(const KernelSpec& k, std::vector<double> deltas) {
    if (deltas.empty()) deltas = default_delta_grid(k);
    std::sort(deltas.begin(), deltas.end());
    DiniResult r;
    r.delta = deltas;
    r.modulus.assign(deltas.size(), 0.0);
    const auto& s = k.samples();
    const std::size_t m = s.size();
    if (k.dim() == 1) {
        const double jump = std::abs(s[0] - s[1]);
        for (std::size_t i = 0; i < deltas.size(); ++i) r.modulus[i] = deltas[i] >= 2.0 ? jump : 0.0;
    } else {
        // Uniform samples: the chord depends only on the index gap d.
        std::vector<double> gap_max(m / 2 + 1, 0.0);
        for (std::size_t d = 1; d <= m / 2; ++d) {
            double mx = 0.0;
            for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, std::abs(s[j] - s[(j + d) % m]));
            gap_max[d] = std::max(mx, gap_max[d - 1]);
        }
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            double best = 0.0;
            for (std::size_t d = 1; d <= m / 2; ++d) {
                const double chord = 2 * std::sin(std::numbers::pi * static_cast<double>(d) / static_cast<double>(m));
                if (chord > deltas[i] * (1 + 1e-12)) break;
                best = gap_max[d];
            }
            r.modulus[i] = best;
        }
    }
    // Trapezoid in log t, accumulated per decade for the divergence test.
    std::vector<double> per_decade;
    double decade_start = deltas.front(), acc = 0.0;
    for (std::size_t i = 1; i < deltas.size(); ++i) {
        if (deltas[i] > 1.0) break;
        const double piece = 0.5 * (r.modulus[i] + r.modulus[i - 1]) * std::log(deltas[i] / deltas[i - 1]);
        r.integral += piece;
        acc += piece;
        if (deltas[i] >= 10 * decade_start * (1 - 1e-12) || i + 1 == deltas.size()) {
            per_decade.push_back(acc);
            acc = 0.0;
            decade_start = deltas[i];
        }
    }
    if (per_decade.size() >= 2) {
        const double smallest = per_decade[0], next = per_decade[1];
        r.divergent = smallest > 1e-6 && smallest > 0.5 * next;
    }
    return r;
}

}  // namespace bloom
