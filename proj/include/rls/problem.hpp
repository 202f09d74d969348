#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rls/linalg.hpp"

namespace rls {

// ---------------------------------------------------------------------------
// Convex component functions
// ---------------------------------------------------------------------------

/// c·x + b
struct LinearFn {
    Vector c;
    double b = 0.0;
};

struct HingeTerm {
    double weight = 1.0;
    Vector direction;
    double offset = 0.0;
};

/// Σ wⱼ·max(0, aⱼ·x + bⱼ) with wⱼ ≥ 0.
struct HingeAggregateFn {
    std::vector<HingeTerm> terms;
};

class ConvexFunction;

/// Σ weightᵢ·partᵢ(x) with weightᵢ ≥ 0.
struct ScaledSumFn {
    std::vector<double> weights;
    std::vector<ConvexFunction> parts;
};

/// A convex real-valued function with a value and subgradient oracle.
///
/// Immutable after construction. The subgradient of max(0, z) at z = 0 is
/// taken from the zero branch.
class ConvexFunction {
public:
    using Variant = std::variant<LinearFn, HingeAggregateFn, ScaledSumFn>;

    ConvexFunction(LinearFn f) : fn_(std::move(f)) { check(); }
    ConvexFunction(HingeAggregateFn f) : fn_(std::move(f)) { check(); }
    ConvexFunction(ScaledSumFn f) : fn_(std::move(f)) { check(); }

    static ConvexFunction linear(Vector c, double b) { return LinearFn{std::move(c), b}; }
    static ConvexFunction constant(std::size_t n, double b) { return LinearFn{Vector(n, 0.0), b}; }

    std::size_t dimension() const { return dim_; }
    const Variant& variant() const { return fn_; }

    double value(std::span<const double> x) const {
        return std::visit([&](const auto& f) { return eval(f, x); }, fn_);
    }

    /// Accumulates scale·ξ(x) into out, where ξ(x) is the chosen subgradient.
    void add_subgradient(std::span<const double> x, double scale, std::span<double> out) const {
        std::visit([&](const auto& f) { accumulate(f, x, scale, out); }, fn_);
    }

    Vector subgradient(std::span<const double> x) const {
        Vector g(x.size(), 0.0);
        add_subgradient(x, 1.0, g);
        return g;
    }

    /// Largest subgradient norm over all points, when it is cheap to bound.
    double subgradient_norm_bound() const {
        return std::visit([](const auto& f) { return norm_bound(f); }, fn_);
    }

private:
    void check() {
        std::visit([this](const auto& f) { dim_ = validate(f); }, fn_);
    }

    static std::size_t validate(const LinearFn& f) {
        require_finite(f.c, "linear function coefficients");
        if (!std::isfinite(f.b)) throw InputError("linear function offset is not finite");
        return f.c.size();
    }
    static std::size_t validate(const HingeAggregateFn& f) {
        if (f.terms.empty()) throw InputError("hinge aggregate needs at least one term");
        const std::size_t n = f.terms.front().direction.size();
        for (const auto& t : f.terms) {
            if (!(t.weight >= 0.0) || !std::isfinite(t.weight)) {
                throw InputError("hinge weights must be finite and non-negative");
            }
            require_dim(t.direction, n, "hinge direction");
            require_finite(t.direction, "hinge direction");
            if (!std::isfinite(t.offset)) throw InputError("hinge offset is not finite");
        }
        return n;
    }
    static std::size_t validate(const ScaledSumFn& f) {
        if (f.parts.empty() || f.parts.size() != f.weights.size()) {
            throw InputError("scaled sum needs matching, non-empty weights and parts");
        }
        const std::size_t n = f.parts.front().dimension();
        for (std::size_t i = 0; i < f.parts.size(); ++i) {
            if (!(f.weights[i] >= 0.0) || !std::isfinite(f.weights[i])) {
                throw InputError("scaled sum weights must be finite and non-negative");
            }
            if (f.parts[i].dimension() != n) throw InputError("scaled sum parts differ in dimension");
        }
        return n;
    }

    static double eval(const LinearFn& f, std::span<const double> x) { return dot(f.c, x) + f.b; }
    static double eval(const HingeAggregateFn& f, std::span<const double> x) {
        double s = 0.0;
        for (const auto& t : f.terms) s += t.weight * std::max(0.0, dot(t.direction, x) + t.offset);
        return s;
    }
    static double eval(const ScaledSumFn& f, std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < f.parts.size(); ++i) s += f.weights[i] * f.parts[i].value(x);
        return s;
    }

    static void accumulate(const LinearFn& f, std::span<const double>, double scale,
                           std::span<double> out) {
        axpy(scale, f.c, out);
    }
    static void accumulate(const HingeAggregateFn& f, std::span<const double> x, double scale,
                           std::span<double> out) {
        for (const auto& t : f.terms) {
            if (dot(t.direction, x) + t.offset > 0.0) axpy(scale * t.weight, t.direction, out);
        }
    }
    static void accumulate(const ScaledSumFn& f, std::span<const double> x, double scale,
                           std::span<double> out) {
        for (std::size_t i = 0; i < f.parts.size(); ++i) {
            f.parts[i].add_subgradient(x, scale * f.weights[i], out);
        }
    }

    static double norm_bound(const LinearFn& f) { return norm(f.c); }
    static double norm_bound(const HingeAggregateFn& f) {
        double s = 0.0;
        for (const auto& t : f.terms) s += t.weight * norm(t.direction);
        return s;
    }
    static double norm_bound(const ScaledSumFn& f) {
        double s = 0.0;
        for (std::size_t i = 0; i < f.parts.size(); ++i) {
            s += f.weights[i] * f.parts[i].subgradient_norm_bound();
        }
        return s;
    }

    Variant fn_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Feasible sets
// ---------------------------------------------------------------------------

struct AllSpace {};

struct Box {
    Vector lower;
    Vector upper;
};

struct Ball {
    Vector center;
    double radius = 1.0;
};

/// A closed convex set with an exact Euclidean projection.
class FeasibleSet {
public:
    using Variant = std::variant<AllSpace, Box, Ball>;

    FeasibleSet() = default;
    FeasibleSet(AllSpace s) : set_(s) {}
    FeasibleSet(Box b) : set_(std::move(b)) {
        const auto& box = std::get<Box>(set_);
        if (box.lower.size() != box.upper.size()) throw InputError("box bounds differ in dimension");
        for (std::size_t i = 0; i < box.lower.size(); ++i) {
            if (!(box.lower[i] <= box.upper[i])) throw InputError("box lower bound exceeds upper bound");
        }
    }
    FeasibleSet(Ball b) : set_(std::move(b)) {
        const auto& ball = std::get<Ball>(set_);
        if (!(ball.radius > 0.0) || !std::isfinite(ball.radius)) {
            throw InputError("ball radius must be positive");
        }
        require_finite(ball.center, "ball center");
    }

    const Variant& variant() const { return set_; }

    /// Dimension fixed by the set, or nullopt for the whole space.
    std::optional<std::size_t> dimension() const {
        if (const auto* b = std::get_if<Box>(&set_)) return b->lower.size();
        if (const auto* b = std::get_if<Ball>(&set_)) return b->center.size();
        return std::nullopt;
    }

    void project_in_place(std::span<double> x) const {
        if (auto d = dimension()) require_dim(x, *d, "projection");
        if (const auto* box = std::get_if<Box>(&set_)) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = std::clamp(x[i], box->lower[i], box->upper[i]);
            }
        } else if (const auto* ball = std::get_if<Ball>(&set_)) {
            // Rounding in the radial scaling can land a hair outside, so shrink
            // until the result is inside; that makes it a fixed point.
            double shrink = 1.0;
            for (double d = dist(x, ball->center); d > ball->radius; d = dist(x, ball->center)) {
                const double s = ball->radius / d * shrink;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i] = ball->center[i] + s * (x[i] - ball->center[i]);
                }
                shrink -= 2.0 * std::numeric_limits<double>::epsilon();
            }
        }
    }

    bool contains(std::span<const double> x) const {
        if (const auto* box = std::get_if<Box>(&set_)) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] < box->lower[i] || x[i] > box->upper[i]) return false;
            }
        } else if (const auto* ball = std::get_if<Ball>(&set_)) {
            return dist(x, ball->center) <= ball->radius;
        }
        return true;
    }

private:
    Variant set_ = AllSpace{};
};

inline Vector project(const FeasibleSet& set, std::span<const double> x) {
    Vector out(x.begin(), x.end());
    set.project_in_place(out);
    return out;
}

// ---------------------------------------------------------------------------
// Problem instance
// ---------------------------------------------------------------------------

/// How evaluations translate into data passes in experiment traces.
enum class PassModel {
    per_update,  // every first-order update is one pass (tiny synthetic instances)
    per_split,   // objective split and constraint split are one pass each
};

enum class EvalEvent {
    objective_value,
    objective_subgradient,
    constraint_value,
    constraint_subgradient,
    smoothed_value_gradient,
    level_value,        // P(x; r)
    level_subgradient,  // ξ ∈ ∂P(x; r)
};

/// Data passes charged for one evaluation event.
///
/// Under per_split, a full pass over either the objective split or the
/// constraint split costs one, so anything touching both costs two. Under
/// per_update, only the oracle call that drives an update is charged.
inline int count_data_pass(PassModel model, EvalEvent event) {
    if (model == PassModel::per_update) {
        return (event == EvalEvent::level_subgradient || event == EvalEvent::smoothed_value_gradient) ? 1 : 0;
    }
    switch (event) {
        case EvalEvent::objective_value:
        case EvalEvent::objective_subgradient:
        case EvalEvent::constraint_value:
        case EvalEvent::constraint_subgradient:
            return 1;
        case EvalEvent::smoothed_value_gradient:
        case EvalEvent::level_value:
        case EvalEvent::level_subgradient:
            return 2;
    }
    return 0;
}

struct ProblemMetadata {
    std::optional<double> f_star;
    std::optional<Vector> x_star;
    std::optional<double> ebc_d;
    std::optional<double> ebc_G;
    std::optional<double> subgrad_bound_M;
    std::optional<double> smooth_L;
    std::optional<Vector> strictly_feasible_point;
};

struct MaxConstraint {
    double value = -std::numeric_limits<double>::infinity();
    /// Smallest achieving index; nullopt when there are no constraints.
    std::optional<std::size_t> index;
};

/// min f₀(x) s.t. fᵢ(x) ≤ 0 for i = 1..m, x ∈ 𝒳.
class ProblemInstance {
public:
    ProblemInstance(ConvexFunction objective, std::vector<ConvexFunction> constraints,
                    FeasibleSet set, ProblemMetadata metadata = {},
                    PassModel passes = PassModel::per_update)
        : objective_(std::move(objective)),
          constraints_(std::move(constraints)),
          set_(std::move(set)),
          meta_(std::move(metadata)),
          passes_(passes) {
        n_ = objective_.dimension();
        if (n_ == 0) throw InputError("problem dimension must be positive");
        for (const auto& c : constraints_) {
            if (c.dimension() != n_) throw InputError("constraint dimension differs from objective");
        }
        if (auto d = set_.dimension(); d && *d != n_) {
            throw InputError("feasible set dimension differs from objective");
        }
        validate_metadata();
    }

    std::size_t dimension() const { return n_; }
    std::size_t num_constraints() const { return constraints_.size(); }
    const ConvexFunction& objective() const { return objective_; }
    const std::vector<ConvexFunction>& constraints() const { return constraints_; }
    const FeasibleSet& set() const { return set_; }
    const ProblemMetadata& metadata() const { return meta_; }
    PassModel pass_model() const { return passes_; }

private:
    void validate_metadata() const {
        if (const auto& xt = meta_.strictly_feasible_point) {
            require_dim(*xt, n_, "strictly feasible point");
            if (project(set_, *xt) != *xt) throw InputError("strictly feasible point is outside the set");
            double g = -std::numeric_limits<double>::infinity();
            for (const auto& c : constraints_) g = std::max(g, c.value(*xt));
            if (!(g < 0.0)) throw InputError("strictly feasible point has g >= 0");
        }
        if (meta_.x_star && meta_.f_star) {
            require_dim(*meta_.x_star, n_, "x_star");
            if (std::abs(objective_.value(*meta_.x_star) - *meta_.f_star) > 1e-9) {
                throw InputError("f_star does not match objective at x_star");
            }
            for (const auto& c : constraints_) {
                if (c.value(*meta_.x_star) > 1e-9) throw InputError("x_star violates a constraint");
            }
        }
        if (meta_.ebc_d && !(*meta_.ebc_d >= 1.0)) throw InputError("ebc_d must be >= 1");
        if (meta_.ebc_G && !(*meta_.ebc_G > 0.0)) throw InputError("ebc_G must be > 0");
        if (meta_.subgrad_bound_M && !(*meta_.subgrad_bound_M > 0.0)) throw InputError("M must be > 0");
        if (meta_.smooth_L && !(*meta_.smooth_L >= 0.0)) throw InputError("L must be >= 0");
    }

    ConvexFunction objective_;
    std::vector<ConvexFunction> constraints_;
    FeasibleSet set_;
    ProblemMetadata meta_;
    PassModel passes_;
    std::size_t n_ = 0;
};

inline void check_point(const ProblemInstance& inst, std::span<const double> x) {
    require_dim(x, inst.dimension(), "point");
    require_finite(x, "point");
}

inline double eval_objective(const ProblemInstance& inst, std::span<const double> x) {
    check_point(inst, x);
    return inst.objective().value(x);
}

/// g(x) = maxᵢ fᵢ(x), with the smallest maximizing index. −∞ when m = 0.
inline MaxConstraint eval_max_constraint(const ProblemInstance& inst, std::span<const double> x) {
    check_point(inst, x);
    MaxConstraint out;
    const auto& cs = inst.constraints();
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const double v = cs[i].value(x);
        if (!out.index || v > out.value) {
            out.value = v;
            out.index = i;
        }
    }
    return out;
}

}  // namespace rls
