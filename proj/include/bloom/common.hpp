#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bloom {

/// Error raised for violated preconditions and unusable inputs.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vec2 = std::array<double, 2>;

inline double norm(const Vec2& v, int dim) {
    return dim == 1 ? std::abs(v[0]) : std::hypot(v[0], v[1]);
}

inline double distance(const Vec2& a, const Vec2& b, int dim) {
    return norm(Vec2{a[0] - b[0], a[1] - b[1]}, dim);
}

/// Deterministic generator: splitmix64 seeding + xoshiro256**.
/// Produces identical streams on every platform, unlike std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t z = seed;
        for (auto& s : state_) {
            z += 0x9e3779b97f4a7c15ULL;
            std::uint64_t x = z;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            s = x ^ (x >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0,1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }

    /// Child stream for sweep point `k`; independent of how many draws the parent made.
    Rng split(std::uint64_t k) const {
        return Rng(state_[0] ^ (0xd1b54a32d192ed03ULL * (k + 1)));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

namespace detail {
inline unsigned& thread_count_ref() {
    static unsigned n = 1;
    return n;
}
}  // namespace detail

inline void set_threads(unsigned n) { detail::thread_count_ref() = std::max(1u, n); }
inline unsigned threads() { return detail::thread_count_ref(); }

/// Runs body(i) for i in [0, n). Each index is independent, so the result
/// does not depend on the thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned t = std::min<std::size_t>(threads(), std::max<std::size_t>(n, 1));
    if (t <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double binomial(int m, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (m - k + i) / i;
    return c;
}

inline double factorial(int l) {
    double f = 1.0;
    for (int i = 2; i <= l; ++i) f *= i;
    return f;
}

}  // namespace bloom
