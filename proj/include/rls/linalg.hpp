#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rls {

using Vector = std::vector<double>;

/// Thrown for malformed inputs: dimension mismatches, out-of-range
/// parameters, non-finite values.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a solver routine cannot make progress.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_dim(std::span<const double> x, std::size_t n, const char* what) {
    if (x.size() != n) {
        throw InputError(std::string(what) + ": dimension mismatch (got " +
                         std::to_string(x.size()) + ", expected " + std::to_string(n) + ")");
    }
}

inline void require_finite(std::span<const double> x, const char* what) {
    for (double v : x) {
        if (!std::isfinite(v)) throw InputError(std::string(what) + ": non-finite input");
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// y += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

}  // namespace rls
