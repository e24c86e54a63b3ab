#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dce {

/// Scalar type used on the learning path. The tabular oracle always runs in
/// 64-bit regardless of this switch.
#ifdef DCE_REAL32
using real = float;
#else
using real = double;
#endif

constexpr double kPi = 3.14159265358979323846;

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Fixed-point solve did not reach tolerance within the sweep budget.
struct ConvergenceError : Error {
    double residual;
    long sweeps;
    ConvergenceError(double res, long n)
        : Error("fixed point did not converge: residual " + std::to_string(res) +
                " after " + std::to_string(n) + " sweeps"),
          residual(res), sweeps(n) {}
};

/// Malformed or unreadable file (bad magic, truncation, I/O failure).
struct IoError : Error {
    using Error::Error;
};

/// Invalid configuration or argument value.
struct ConfigError : Error {
    using Error::Error;
};

/// Non-finite value encountered where a finite one is required.
struct NumericError : Error {
    using Error::Error;
};

/// Dense row-major matrix over an arithmetic scalar. Deliberately minimal:
/// storage plus the handful of accessors the layer code needs.
template <typename T>
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), a(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    T operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    T* row(std::size_t r) { return a.data() + r * cols; }
    const T* row(std::size_t r) const { return a.data() + r * cols; }

    std::size_t size() const { return a.size(); }

    void fill(T v) { std::fill(a.begin(), a.end(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using RMat = Mat<real>;
using RVec = std::vector<real>;

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
    return all_finite(m.a);
}

/// splitmix64 step; used to derive independent seeds for named sub-streams.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic random source. Distribution code is written out here rather
/// than taken from <random> so that streams do not depend on the standard
/// library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    /// Uniform double in [0, 1).
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via the polar method; caches the spare deviate.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling to stay unbiased.
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    std::mt19937_64& raw() { return gen_; }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Formats a value with six significant digits, the width used in all CSV
/// output so that repeated runs are byte-comparable.
inline std::string fmt_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

/// Shortest decimal string that parses back to exactly the same double;
/// used where serialized values must reproduce runs bit for bit.
inline std::string fmt_exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace dce
