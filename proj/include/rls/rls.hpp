#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "rls/fom.hpp"
#include "rls/levelset.hpp"
#include "rls/linalg.hpp"
#include "rls/problem.hpp"
#include "rls/trace.hpp"

namespace rls {

struct SolverConfig {
    FomConfig fom;
    FomMode mode = FomMode::sgd;
    double epsilon = 1.0;
    /// Total FOM iterations I summed over all instances.
    std::int64_t budget = 10'000;
    /// Optional cap on data passes; the run stops once it is reached.
    std::optional<std::int64_t> pass_budget;
    /// Stop once x_best is ε-feasible and P(x_K⁽⁰⁾; r_K) ≤ ε.
    bool early_exit = false;
    /// Worker threads for the per-instance updates (1 = sequential).
    unsigned threads = 1;
    /// Overrides K̃ when set.
    std::optional<std::int64_t> K_override;

    void validate() const {
        fom.validate();
        if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
        if (budget < 0) throw InputError("budget must be non-negative");
        if (pass_budget && *pass_budget < 0) throw InputError("pass budget must be non-negative");
        if (K_override && *K_override < 0) throw InputError("K must be non-negative");
    }
};

struct RestartEvent {
    std::int64_t outer_iter = 0;
    std::size_t k_prime = 0;
    double P0_before = 0.0;
    double P0_after = 0.0;
    /// Restarts initiated at k_prime so far, this one included.
    std::int64_t epoch = 0;
    bool improved_best = false;
};

/// K+1 lockstep FOM instances plus the best ε-feasible point seen.
struct RlsState {
    std::vector<FomState> instances;
    double alpha = 0.5;
    Vector x_best;
    double f_best = 0.0;
    double g_best = 0.0;
    std::int64_t outer_iter = 0;
    std::int64_t restarts = 0;
    std::vector<std::int64_t> restarts_per_index;
    std::optional<std::size_t> last_kprime;
    std::int64_t trigger_events = 0;
    std::int64_t extra_passes = 0;
    std::optional<SurrogateBundle> surrogates;

    std::size_t K() const { return instances.size() - 1; }
    double level(std::size_t k) const { return instances[k].r; }

    std::int64_t fom_iterations() const {
        std::int64_t s = 0;
        for (const auto& f : instances) s += f.iterations;
        return s;
    }
    std::int64_t data_passes() const {
        std::int64_t s = extra_passes;
        for (const auto& f : instances) s += f.data_passes;
        return s;
    }

    /// Current pairs (x_k⁽⁰⁾, r_k).
    LevelSequence levels() const {
        LevelSequence seq{alpha, {}};
        seq.entries.reserve(instances.size());
        for (const auto& f : instances) seq.entries.push_back({f.x0, f.r});
        return seq;
    }

    bool operator==(const RlsState&) const = default;
};

/// Smallest k with r_k < f* and α·P(x_k⁽⁰⁾; r_k) ≥ f* − r_k, if any.
inline std::optional<std::size_t> critical_index(const RlsState& s, const ProblemInstance& inst, double f_star) {
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
        const auto& f = s.instances[k];
        if (f.r < f_star && s.alpha * eval_P(inst, f.x0, f.r) >= f_star - f.r) return k;
    }
    return std::nullopt;
}

/// Initializes with an explicit instance count K+1.
inline RlsState rls_init_with_K(const ProblemInstance& inst, std::span<const double> x_ini, double r_ini,
                                const SolverConfig& cfg, std::size_t K) {
    cfg.validate();
    const auto seq = init_level_sequence(inst, x_ini, r_ini, cfg.fom.alpha, K);
    RlsState s;
    s.alpha = cfg.fom.alpha;
    s.instances.reserve(K + 1);
    const PointValues at_ini = eval_point(inst, x_ini);
    s.extra_passes += count_data_pass(inst.pass_model(), EvalEvent::level_value);
    for (const auto& e : seq.entries) s.instances.push_back(fom_reset(cfg.mode, inst, e.x0, e.r, cfg.fom, at_ini));
    s.restarts_per_index.assign(K + 1, 0);
    s.x_best.assign(x_ini.begin(), x_ini.end());
    s.f_best = at_ini.f;
    s.g_best = at_ini.g;
    return s;
}

/// Initializes with K = K̃ computed from x_ini, which must be strictly feasible.
inline RlsState rls_init(const ProblemInstance& inst, std::span<const double> x_ini, double r_ini,
                         const SolverConfig& cfg) {
    cfg.validate();
    const auto sur = compute_surrogates(inst, x_ini, r_ini, cfg.fom.alpha, cfg.epsilon);
    const auto K = static_cast<std::size_t>(cfg.K_override.value_or(sur.K_tilde));
    RlsState s = rls_init_with_K(inst, x_ini, r_ini, cfg, K);
    s.surrogates = sur;
    return s;
}

/// Restart at k′: x_{k′}⁽⁰⁾ takes the instance's output, the levels above k′
/// are rebuilt along the chain, and instances k′..K start new epochs.
inline RestartEvent execute_restart(RlsState& s, const ProblemInstance& inst, std::size_t k_prime,
                                    const SolverConfig& cfg) {
    if (k_prime >= s.instances.size()) throw InputError("restart index out of range");
    RestartEvent ev;
    ev.outer_iter = s.outer_iter;
    ev.k_prime = k_prime;
    ev.P0_before = s.instances[k_prime].P0;

    const Vector candidate = s.instances[k_prime].best_x;
    const PointValues at_cand = s.instances[k_prime].at_best;
    s.instances[k_prime] =
        fom_reset(s.instances[k_prime], inst, candidate, s.instances[k_prime].r, cfg.fom, at_cand);
    for (std::size_t k = k_prime; k + 1 < s.instances.size(); ++k) {
        // instances[k].P0 is P(x_k⁽⁰⁾; r_k) under the freshly set level.
        const double r_next = s.instances[k].r + s.alpha * s.instances[k].P0;
        auto& next = s.instances[k + 1];
        const Vector x0 = next.x0;
        next = fom_reset(next, inst, x0, r_next, cfg.fom, next.at_x0);
    }
    ev.P0_after = s.instances[k_prime].P0;

    const double f = at_cand.f, g = at_cand.g;
    if (g <= cfg.epsilon && f < s.f_best) {
        s.x_best = candidate;
        s.f_best = f;
        s.g_best = g;
        ev.improved_best = true;
    }
    ++s.restarts;
    ev.epoch = ++s.restarts_per_index[k_prime];
    s.last_kprime = k_prime;
    return ev;
}

namespace detail {

inline void step_range(std::vector<FomState>& xs, std::size_t lo, std::size_t hi, const ProblemInstance& inst,
                       const FomConfig& cfg) {
    for (std::size_t k = lo; k < hi; ++k) fom_iterate(xs[k], inst, cfg);
}

}  // namespace detail

/// Advances every instance by one FOM iteration.
inline void rls_step_instances(RlsState& s, const ProblemInstance& inst, const SolverConfig& cfg) {
    ++s.outer_iter;
    const std::size_t n = s.instances.size();
    const std::size_t workers = std::min<std::size_t>(std::max(1u, cfg.threads), n);
    if (workers <= 1) {
        detail::step_range(s.instances, 0, n, inst, cfg.fom);
        return;
    }
    // Instances share nothing mutable, so the split cannot change results.
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
        const std::size_t lo = std::min(n, w * chunk), hi = std::min(n, lo + chunk);
        try {
            detail::step_range(s.instances, lo, hi, inst, cfg.fom);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
        work(0);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Smallest triggered index, scanning from 0.
inline std::optional<std::size_t> find_restart_index(const RlsState& s, double B) {
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
        if (check_restart_trigger(s.instances[k], B)) return k;
    }
    return std::nullopt;
}

/// One step of every instance followed by at most one restart.
inline std::optional<RestartEvent> rls_outer_iteration(RlsState& s, const ProblemInstance& inst,
                                                       const SolverConfig& cfg) {
    rls_step_instances(s, inst, cfg);
    if (auto k = find_restart_index(s, cfg.fom.B)) {
        ++s.trigger_events;
        return execute_restart(s, inst, *k, cfg);
    }
    return std::nullopt;
}

struct SolverReport {
    Vector x_best;
    double f_best = 0.0;
    double g_best = 0.0;
    std::size_t K = 0;
    std::optional<SurrogateBundle> surrogates;
    std::int64_t outer_iterations = 0;
    std::int64_t fom_iterations = 0;
    std::int64_t data_passes = 0;
    std::int64_t restarts = 0;
    std::vector<RestartEvent> restart_log;
    std::vector<TraceRecord> trace;
};

inline TraceRecord make_trace_record(const RlsState& s, const ProblemInstance& inst) {
    TraceRecord rec;
    rec.outer_iter = s.outer_iter;
    rec.fom_iters = s.fom_iterations();
    rec.data_passes = s.data_passes();
    rec.f = s.f_best;
    rec.g = s.g_best;
    if (const auto& fs = inst.metadata().f_star) rec.p_at_fstar = std::max(s.f_best - *fs, s.g_best);
    rec.restarts = s.restarts;
    rec.last_kprime = s.last_kprime;
    return rec;
}

inline std::int64_t outer_iteration_count(std::int64_t budget, std::size_t K) {
    const auto per = static_cast<std::int64_t>(K) + 1;
    return (budget + per - 1) / per;
}

/// Drives an initialized state for ⌈I/(K+1)⌉ outer iterations.
inline SolverReport rls_drive(RlsState& s, const ProblemInstance& inst, const SolverConfig& cfg,
                              TraceSink* sink = nullptr) {
    SolverReport rep;
    rep.K = s.K();
    rep.surrogates = s.surrogates;
    auto emit = [&](const TraceRecord& rec) {
        rep.trace.push_back(rec);
        if (sink) sink->record(rec);
    };
    const std::int64_t outer = outer_iteration_count(cfg.budget, s.K());
    for (std::int64_t i = 0; i < outer; ++i) {
        if (cfg.pass_budget && s.data_passes() >= *cfg.pass_budget) break;
        // One row per outer iteration, plus one after each restart.
        rls_step_instances(s, inst, cfg);
        emit(make_trace_record(s, inst));
        if (auto k = find_restart_index(s, cfg.fom.B)) {
            ++s.trigger_events;
            rep.restart_log.push_back(execute_restart(s, inst, *k, cfg));
            emit(make_trace_record(s, inst));
        }
        if (cfg.early_exit && s.g_best <= cfg.epsilon && s.instances.back().P0 <= cfg.epsilon) break;
    }
    rep.x_best = s.x_best;
    rep.f_best = s.f_best;
    rep.g_best = s.g_best;
    rep.outer_iterations = s.outer_iter;
    rep.fom_iterations = s.fom_iterations();
    rep.data_passes = s.data_passes();
    rep.restarts = s.restarts;
    return rep;
}

inline SolverReport rls_run(const ProblemInstance& inst, std::span<const double> x_ini, double r_ini,
                            const SolverConfig& cfg, TraceSink* sink = nullptr) {
    RlsState s = rls_init(inst, x_ini, r_ini, cfg);
    return rls_drive(s, inst, cfg, sink);
}

// ---------------------------------------------------------------------------
// Sequential level-set method with a known optimal value (test reference)
// ---------------------------------------------------------------------------

struct ReferenceReport {
    Vector x;
    double f = 0.0;
    double g = 0.0;
    std::int64_t outer_iterations = 0;
    std::int64_t inner_iterations = 0;
    std::vector<double> levels;    // r_0, r_1, …
    std::vector<double> P_values;  // P(x_k; r_k)
};

/// Solves min P(x; r_k) by restarted SGD until α·P(x_k; r_k) < f* − r_k, then
/// sets r_{k+1} = r_k + α·P(x_k; r_k); stops once P(x_k; r_k) ≤ ε.
inline ReferenceReport reference_level_set_run(const ProblemInstance& inst, std::span<const double> x_start,
                                               double r0, double alpha, double epsilon, double f_star,
                                               const FomConfig& fom = {}, std::int64_t inner_cap = 1'000'000,
                                               std::int64_t outer_cap = 10'000) {
    require_alpha(alpha);
    if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
    if (!(r0 < f_star)) throw InputError("r0 must be below f*");
    FomConfig cfg = fom;
    cfg.alpha = alpha;
    cfg.validate();

    ReferenceReport rep;
    Vector x(x_start.begin(), x_start.end());
    double r = r0;
    for (std::int64_t k = 0; k < outer_cap; ++k) {
        FomState st = fom_reset(FomMode::sgd, inst, x, r, cfg);
        std::int64_t inner = 0;
        while (!(alpha * st.best_P < f_star - r)) {
            if (++inner > inner_cap) throw SolverError("inner iteration cap exceeded");
            sgd_iterate(st, inst, cfg);
            if (st.stalled) throw SolverError("zero subgradient before the level condition held");
            if (check_restart_trigger(st, cfg.B)) st = fom_reset(st, inst, st.best_x, r, cfg, st.at_best);
        }
        rep.inner_iterations += inner;
        x = st.best_x;
        const double P = st.best_P;
        rep.levels.push_back(r);
        rep.P_values.push_back(P);
        rep.outer_iterations = k + 1;
        if (P <= epsilon) {
            rep.x = x;
            rep.f = eval_objective(inst, x);
            rep.g = eval_max_constraint(inst, x).value;
            return rep;
        }
        r += alpha * P;
    }
    throw SolverError("outer iteration cap exceeded");
}

}  // namespace rls
