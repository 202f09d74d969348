#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "rls/linalg.hpp"
#include "rls/problem.hpp"

namespace rls {

// P(x; r) = max{f₀(x) − r, f₁(x), …, f_m(x)}

struct LevelValue {
    double value = 0.0;
    double objective = 0.0;       // f₀(x)
    double objective_term = 0.0;  // f₀(x) − r
    MaxConstraint constraint;     // g(x) and its achieving index
    bool objective_active() const { return !constraint.index || objective_term >= constraint.value; }
};

inline LevelValue eval_level(const ProblemInstance& inst, std::span<const double> x, double r) {
    LevelValue out;
    out.objective = eval_objective(inst, x);
    out.objective_term = out.objective - r;
    out.constraint = eval_max_constraint(inst, x);
    out.value = std::max(out.objective_term, out.constraint.value);
    return out;
}

inline double eval_P(const ProblemInstance& inst, std::span<const double> x, double r) {
    return eval_level(inst, x, r).value;
}

/// Subgradient of the active term. The objective wins ties; among
/// constraints the smallest maximizing index wins.
inline Vector subgrad_P(const ProblemInstance& inst, std::span<const double> x, double,
                        const LevelValue& at_x) {
    Vector g(inst.dimension(), 0.0);
    if (at_x.objective_active()) {
        inst.objective().add_subgradient(x, 1.0, g);
    } else {
        inst.constraints()[*at_x.constraint.index].add_subgradient(x, 1.0, g);
    }
    return g;
}

inline Vector subgrad_P(const ProblemInstance& inst, std::span<const double> x, double r) {
    return subgrad_P(inst, x, r, eval_level(inst, x, r));
}

// ---------------------------------------------------------------------------
// Exponential smoothing
// ---------------------------------------------------------------------------

struct SmoothedValue {
    double value = 0.0;
    double max_term = 0.0;  // equals P(x; r)
    double objective = 0.0;
    double max_constraint = -std::numeric_limits<double>::infinity();
    Vector gradient;
    /// Softmax weights over (objective term, constraint 1..m).
    std::vector<double> weights;
};

namespace detail {

inline void require_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("smoothing parameter must be positive");
}

/// (f₀(x) − r, f₁(x), …, f_m(x)); f₀(x) itself goes to *objective if given.
inline std::vector<double> level_terms(const ProblemInstance& inst, std::span<const double> x, double r,
                                       double* objective = nullptr) {
    check_point(inst, x);
    std::vector<double> terms;
    terms.reserve(inst.num_constraints() + 1);
    const double f = inst.objective().value(x);
    if (objective) *objective = f;
    terms.push_back(f - r);
    for (const auto& c : inst.constraints()) terms.push_back(c.value(x));
    return terms;
}

}  // namespace detail

/// P_σ(x; r) = (1/σ)·ln(exp(σ(f₀−r)) + Σᵢ exp(σfᵢ)), shifted by the max term.
inline double eval_P_sigma(const ProblemInstance& inst, std::span<const double> x, double r, double sigma) {
    detail::require_sigma(sigma);
    const auto terms = detail::level_terms(inst, x, r);
    const double top = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(sigma * (t - top));
    return top + std::log(s) / sigma;
}

/// P_σ and its gradient Σⱼ wⱼ∇termⱼ with softmax weights wⱼ.
inline SmoothedValue eval_smoothed(const ProblemInstance& inst, std::span<const double> x, double r,
                                   double sigma) {
    detail::require_sigma(sigma);
    SmoothedValue out;
    const auto terms = detail::level_terms(inst, x, r, &out.objective);
    const double top = *std::max_element(terms.begin(), terms.end());
    out.weights.resize(terms.size());
    double s = 0.0;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        out.weights[j] = std::exp(sigma * (terms[j] - top));
        s += out.weights[j];
    }
    for (double& w : out.weights) w /= s;
    out.value = top + std::log(s) / sigma;
    out.max_term = top;
    for (std::size_t j = 1; j < terms.size(); ++j) out.max_constraint = std::max(out.max_constraint, terms[j]);
    out.gradient.assign(inst.dimension(), 0.0);
    inst.objective().add_subgradient(x, out.weights[0], out.gradient);
    for (std::size_t i = 0; i < inst.num_constraints(); ++i) {
        if (out.weights[i + 1] > 0.0) inst.constraints()[i].add_subgradient(x, out.weights[i + 1], out.gradient);
    }
    return out;
}

inline Vector grad_P_sigma(const ProblemInstance& inst, std::span<const double> x, double r, double sigma) {
    return eval_smoothed(inst, x, r, sigma).gradient;
}

// ---------------------------------------------------------------------------
// Level parameters
// ---------------------------------------------------------------------------

struct LevelEntry {
    Vector x0;
    double r = 0.0;
};

/// Pairs (x_k⁽⁰⁾, r_k) with r_{k+1} = r_k + α·P(x_k⁽⁰⁾; r_k).
struct LevelSequence {
    double alpha = 0.5;
    std::vector<LevelEntry> entries;

    /// Largest |r_{k+1} − r_k − α·P(x_k⁽⁰⁾; r_k)| over the chain.
    double chain_residual(const ProblemInstance& inst) const {
        double worst = 0.0;
        for (std::size_t k = 0; k + 1 < entries.size(); ++k) {
            const double expect = entries[k].r + alpha * eval_P(inst, entries[k].x0, entries[k].r);
            worst = std::max(worst, std::abs(entries[k + 1].r - expect));
        }
        return worst;
    }
};

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
}

inline LevelSequence init_level_sequence(const ProblemInstance& inst, std::span<const double> x_ini,
                                         double r_ini, double alpha, std::size_t K) {
    require_alpha(alpha);
    check_point(inst, x_ini);
    LevelSequence seq{alpha, {}};
    seq.entries.reserve(K + 1);
    Vector x(x_ini.begin(), x_ini.end());
    double r = r_ini;
    seq.entries.push_back({x, r});
    // P(x_ini; r) is re-evaluated at each r since the point is shared.
    for (std::size_t k = 0; k < K; ++k) {
        r += alpha * eval_P(inst, x, r);
        seq.entries.push_back({x, r});
    }
    return seq;
}

/// Computable stand-ins for f*, θ and K̂ built from a strictly feasible point.
struct SurrogateBundle {
    double r_tilde = 0.0;
    double theta_tilde = 0.0;
    std::int64_t K_tilde = 1;

    bool operator==(const SurrogateBundle&) const = default;
};

inline std::int64_t ceil_to_count(double v) {
    if (!std::isfinite(v) || v > 1e15) throw InputError("iteration bound is not representable");
    return static_cast<std::int64_t>(std::ceil(v));
}

/// r̃ = f(x̃) − g(x̃), θ̃ = g(x̃)/(r_ini − r̃), K̃ = ⌈ln((r̃ − r_ini)/(αε))/(αθ̃)⌉.
inline SurrogateBundle compute_surrogates(const ProblemInstance& inst, std::span<const double> x_tilde,
                                          double r_ini, double alpha, double epsilon) {
    require_alpha(alpha);
    if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
    const double g = eval_max_constraint(inst, x_tilde).value;
    if (!(g < 0.0) || !std::isfinite(g)) throw InputError("not strictly feasible: g(x~) must be < 0");
    SurrogateBundle out;
    out.r_tilde = eval_objective(inst, x_tilde) - g;
    if (!(r_ini < out.r_tilde)) throw InputError("level parameter too large: r_ini must be < r~");
    out.theta_tilde = g / (r_ini - out.r_tilde);
    const double K = std::log((out.r_tilde - r_ini) / (alpha * epsilon)) / (alpha * out.theta_tilde);
    out.K_tilde = std::max<std::int64_t>(1, ceil_to_count(K));
    return out;
}

/// K̂ = ⌈ln((f* − r₀)/(αε))/(αθ)⌉, clamped to at least 1.
inline std::int64_t compute_hatK(double theta, double f_star, double r0, double alpha, double epsilon) {
    require_alpha(alpha);
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("theta must lie in (0, 1]");
    if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
    if (!(r0 < f_star)) throw InputError("r0 must be below f*");
    const double K = std::log((f_star - r0) / (alpha * epsilon)) / (alpha * theta);
    return std::max<std::int64_t>(1, ceil_to_count(K));
}

enum class FomMode { sgd, agm };

struct NfomParams {
    FomMode mode = FomMode::sgd;
    double M = 1.0;      // subgradient norm bound
    double G = 1.0;      // error bound growth constant
    double d = 1.0;      // error bound exponent
    double L = 0.0;      // smoothness constant (agm only)
    double alpha = 0.5;
    double B = 0.95;
    double epsilon = 1.0;
    double gamma = 2.0;  // agm only
    std::size_t m = 1;   // number of constraints (agm only)
};

/// Per-restart iteration cap of the chosen first-order method.
inline std::int64_t compute_nfom(const NfomParams& p) {
    if (!(0.0 < p.alpha && p.alpha < p.B && p.B < 1.0)) throw InputError("need 0 < alpha < B < 1");
    if (!(p.epsilon > 0.0)) throw InputError("epsilon must be positive");
    if (!(p.M > 0.0) || !(p.G > 0.0) || !(p.d >= 1.0) || !(p.L >= 0.0)) {
        throw InputError("need M > 0, G > 0, d >= 1, L >= 0");
    }
    const double gap = p.B - p.alpha;
    if (p.mode == FomMode::sgd) {
        const double v = p.M * p.M * std::pow(p.G, 2.0 / p.d) /
                         (gap * gap * std::pow(p.epsilon, 2.0 - 2.0 / p.d));
        return ceil_to_count(v) - 1;
    }
    if (!(p.gamma > 1.0)) throw InputError("gamma must exceed 1");
    const double lnm = std::log(static_cast<double>(p.m) + 1.0);
    const double first = 3.0 * std::sqrt(p.gamma * lnm) * p.M * std::pow(p.G, 1.0 / p.d) /
                         (gap * std::pow(p.epsilon, 1.0 - 1.0 / p.d));
    const double second = std::sqrt(3.0 * p.gamma * p.L * std::pow(p.G, 2.0 / p.d) /
                                     (gap * std::pow(p.epsilon, 1.0 - 2.0 / p.d)));
    return ceil_to_count(std::max(first, second));
}

}  // namespace rls
