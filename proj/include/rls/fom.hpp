#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "rls/levelset.hpp"
#include "rls/linalg.hpp"
#include "rls/problem.hpp"

namespace rls {

struct FomConfig {
    double alpha = 0.5;
    double B = 0.95;
    double gamma = 2.0;    // line-search growth
    double gamma_d = 2.0;  // per-iteration shrink of L̂
    int line_search_cap = 64;
    double epsilon_floor = 1e-12;

    void validate() const {
        if (!(0.0 < alpha && alpha < B && B < 1.0)) throw InputError("need 0 < alpha < B < 1");
        if (!(gamma > 1.0)) throw InputError("gamma must exceed 1");
        if (!(gamma_d > 1.0)) throw InputError("gamma_d must exceed 1");
        if (line_search_cap < 1) throw InputError("line search cap must be positive");
        if (!(epsilon_floor > 0.0)) throw InputError("epsilon floor must be positive");
    }
};

/// f₀ and g at one point. Carrying them along lets a reset at a known point
/// skip the data pass.
struct PointValues {
    double f = 0.0;
    double g = 0.0;

    bool operator==(const PointValues&) const = default;
};

/// One restartable first-order method bound to a level parameter r.
///
/// Everything here is scoped to the current restart epoch: fom_reset
/// rebuilds it from scratch.
struct FomState {
    FomMode mode = FomMode::sgd;
    double r = 0.0;
    Vector x0;
    Vector x_cur;
    std::int64_t t = 0;
    double P0 = 0.0;
    PointValues at_x0;
    double P_cur = 0.0;
    Vector best_x;
    double best_P = 0.0;
    PointValues at_best;
    // Set when the last SGD step found a zero subgradient.
    bool stalled = false;

    // agm only
    double sigma = 0.0;
    double L_hat = 0.0;
    double A = 0.0;
    Vector v;
    Vector grad_accum;
    Vector grad_cur;  // ∇P_σ(x_cur; r)

    // Lifetime counters; they survive resets.
    std::int64_t iterations = 0;
    std::int64_t data_passes = 0;

    bool operator==(const FomState&) const = default;
};

/// σ = 3·ln(m+1)/((B−α)·max(P0, floor)).
inline double smoothing_parameter(std::size_t m, double P0, const FomConfig& cfg) {
    return 3.0 * std::log(static_cast<double>(m) + 1.0) / ((cfg.B - cfg.alpha) * std::max(P0, cfg.epsilon_floor));
}

inline PointValues eval_point(const ProblemInstance& inst, std::span<const double> x) {
    return {eval_objective(inst, x), eval_max_constraint(inst, x).value};
}

inline double level_from(const PointValues& v, double r) { return std::max(v.f - r, v.g); }

/// Starts a new epoch at new_x0 for level r. Lifetime counters are carried
/// over from prev. When `known` holds f₀ and g at new_x0, P0 costs nothing.
inline FomState fom_reset(const FomState& prev, const ProblemInstance& inst, std::span<const double> new_x0,
                          double r, const FomConfig& cfg, std::optional<PointValues> known = std::nullopt) {
    check_point(inst, new_x0);
    if (!inst.set().contains(new_x0)) throw InputError("restart point lies outside the feasible set");
    FomState s;
    s.mode = prev.mode;
    s.iterations = prev.iterations;
    s.data_passes = prev.data_passes;
    s.r = r;
    s.x0.assign(new_x0.begin(), new_x0.end());
    s.x_cur = s.x0;
    s.best_x = s.x0;
    if (known) {
        s.at_x0 = *known;
    } else {
        s.at_x0 = eval_point(inst, s.x0);
        s.data_passes += count_data_pass(inst.pass_model(), EvalEvent::level_value);
    }
    s.at_best = s.at_x0;
    s.P0 = level_from(s.at_x0, r);
    if (s.mode == FomMode::agm) {
        s.sigma = smoothing_parameter(inst.num_constraints(), s.P0, cfg);
        auto sm = eval_smoothed(inst, s.x0, r, s.sigma);
        s.data_passes += count_data_pass(inst.pass_model(), EvalEvent::smoothed_value_gradient);
        s.L_hat = s.sigma;
        s.A = 0.0;
        s.v = s.x0;
        s.grad_accum.assign(inst.dimension(), 0.0);
        s.grad_cur = std::move(sm.gradient);
    }
    s.P_cur = s.P0;
    s.best_P = s.P0;
    return s;
}

inline FomState fom_reset(FomMode mode, const ProblemInstance& inst, std::span<const double> new_x0, double r,
                          const FomConfig& cfg, std::optional<PointValues> known = std::nullopt) {
    FomState blank;
    blank.mode = mode;
    return fom_reset(blank, inst, new_x0, r, cfg, known);
}

inline void track_best(FomState& s, const PointValues& at_cur) {
    if (s.P_cur < s.best_P) {
        s.best_P = s.P_cur;
        s.best_x = s.x_cur;
        s.at_best = at_cur;
    }
}

/// Step length (B−α)·P0/‖ξ‖². A negative P0 means the level overshot and the
/// instance cannot trigger, so it holds still.
inline double sgd_step_length(double P0, double xi_norm_sq, const FomConfig& cfg) {
    return (cfg.B - cfg.alpha) * std::max(P0, 0.0) / xi_norm_sq;
}

/// x ← Proj(x − η·ξ) with ξ ∈ ∂P(x; r).
inline void sgd_iterate(FomState& s, const ProblemInstance& inst, const FomConfig& cfg) {
    if (s.mode != FomMode::sgd) throw InputError("sgd_iterate on a non-sgd state");
    const auto at = eval_level(inst, s.x_cur, s.r);
    const Vector xi = subgrad_P(inst, s.x_cur, s.r, at);
    s.data_passes += count_data_pass(inst.pass_model(), EvalEvent::level_subgradient);
    const double nsq = norm_sq(xi);
    ++s.t;
    ++s.iterations;
    s.stalled = (nsq == 0.0);
    if (s.stalled) return;
    axpy(-sgd_step_length(s.P0, nsq, cfg), xi, s.x_cur);
    inst.set().project_in_place(s.x_cur);
    const auto lv = eval_level(inst, s.x_cur, s.r);
    s.data_passes += count_data_pass(inst.pass_model(), EvalEvent::level_value);
    s.P_cur = lv.value;
    track_best(s, {lv.objective, lv.constraint.value});
}

/// Carries the last L̂ tried when the APG line search gives up.
class LineSearchDiverged : public SolverError {
public:
    explicit LineSearchDiverged(double last_L)
        : SolverError("line search diverged (last L_hat = " + std::to_string(last_L) + ")"), last_L_hat(last_L) {}
    double last_L_hat;
};

struct ApgResult {
    Vector x_hat;
    double L_hat = 0.0;
    double a = 0.0;
    Vector y;
    int trials = 0;
};

/// Positive root of a²/(A+a) = 2/L̂.
inline double apg_weight(double A, double L_hat) {
    const double inv = 1.0 / L_hat;
    return inv + std::sqrt(inv * inv + 2.0 * A * inv);
}

/// Accelerated projected gradient step with line search on L̂.
///
/// grad(y) returns ∇P_σ(y; r). grad_x is ∇P_σ at the incoming x; the exit
/// test compares it against the gradient at y.
template <class GradFn>
ApgResult apg_step(GradFn&& grad, std::span<const double> x, std::span<const double> grad_x,
                   std::span<const double> v, double L_hat, double A, double gamma, const FeasibleSet& set,
                   int cap = 64) {
    if (!(L_hat > 0.0) || !(A >= 0.0)) throw InputError("apg_step needs L_hat > 0 and A >= 0");
    constexpr double kEps = std::numeric_limits<double>::epsilon();
    const std::size_t n = x.size();
    ApgResult out;
    out.L_hat = L_hat / gamma;
    out.y.resize(n);
    out.x_hat.resize(n);
    Vector diff(n);
    for (int trial = 0; trial < cap; ++trial) {
        out.L_hat *= gamma;
        out.trials = trial + 1;
        out.a = apg_weight(A, out.L_hat);
        // Written as an offset from v so that A = 0 gives y = v exactly.
        const double w = A / (A + out.a);
        for (std::size_t i = 0; i < n; ++i) out.y[i] = v[i] + w * (x[i] - v[i]);
        const Vector gy = grad(std::span<const double>(out.y));
        for (std::size_t i = 0; i < n; ++i) out.x_hat[i] = out.y[i] - gy[i] / out.L_hat;
        set.project_in_place(out.x_hat);
        for (std::size_t i = 0; i < n; ++i) diff[i] = grad_x[i] - gy[i];
        double lhs = 0.0;
        for (std::size_t i = 0; i < n; ++i) lhs += diff[i] * (x[i] - out.y[i]);
        const double dsq = norm_sq(diff);
        if (out.L_hat * lhs >= dsq) return out;
        // Gradients equal to working precision: the difference is rounding
        // noise that no L̂ can account for.
        const double scale = std::max(norm_sq(grad_x), norm_sq(gy));
        if (dsq <= 16.0 * kEps * kEps * scale) return out;
    }
    throw LineSearchDiverged(out.L_hat);
}

/// One iteration of the accelerated gradient method on P_σ(·; r).
inline void agm_iterate(FomState& s, const ProblemInstance& inst, const FomConfig& cfg) {
    if (s.mode != FomMode::agm) throw InputError("agm_iterate on a non-agm state");
    const PassModel pm = inst.pass_model();
    auto grad = [&](std::span<const double> y) {
        s.data_passes += count_data_pass(pm, EvalEvent::smoothed_value_gradient);
        return eval_smoothed(inst, y, s.r, s.sigma).gradient;
    };
    ApgResult step = apg_step(grad, s.x_cur, s.grad_cur, s.v, s.L_hat, s.A, cfg.gamma, inst.set(),
                              cfg.line_search_cap);
    s.x_cur = std::move(step.x_hat);
    auto sm = eval_smoothed(inst, s.x_cur, s.r, s.sigma);
    s.data_passes += count_data_pass(pm, EvalEvent::smoothed_value_gradient);
    s.grad_cur = std::move(sm.gradient);
    axpy(step.a, s.grad_cur, s.grad_accum);
    s.v = sub(s.x0, s.grad_accum);
    inst.set().project_in_place(s.v);
    s.A += step.a;
    s.L_hat = step.L_hat / cfg.gamma_d;
    s.P_cur = sm.max_term;
    ++s.t;
    ++s.iterations;
    track_best(s, {sm.objective, sm.max_constraint});
}

inline void fom_iterate(FomState& s, const ProblemInstance& inst, const FomConfig& cfg) {
    if (s.mode == FomMode::sgd) {
        sgd_iterate(s, inst, cfg);
    } else {
        agm_iterate(s, inst, cfg);
    }
}

/// P0 ≥ 0 and P(x̄; r) ≤ B·P0, where x̄ is the best iterate of the epoch.
inline bool check_restart_trigger(const FomState& s, double B) {
    return s.P0 >= 0.0 && s.best_P <= B * s.P0;
}

}  // namespace rls
