#pragma once

// File formats: JSON problem descriptions, CSV traces, JSON run summaries.
// Requires nlohmann/json.

#include <charconv>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rls/linalg.hpp"
#include "rls/problem.hpp"
#include "rls/rls.hpp"
#include "rls/trace.hpp"

namespace rls {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Problem files
//
// {
//   "objective":   <function>,
//   "constraints": [<function>, ...],
//   "set":         {"type": "all-space"} | {"type": "box", "lower": [...], "upper": [...]}
//                | {"type": "ball", "center": [...], "radius": r},
//   "metadata":    {"f_star", "x_star", "ebc_d", "ebc_G", "subgrad_bound_M",
//                   "smooth_L", "strictly_feasible_point"}        (all optional)
// }
// <function> := {"type": "linear", "c": [...], "b": b}
//             | {"type": "hinge", "terms": [{"w": w, "a": [...], "b": b}, ...]}
//             | {"type": "sum", "parts": [{"weight": w, "fn": <function>}, ...]}
// ---------------------------------------------------------------------------

namespace detail {

inline Vector vec_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw InputError(std::string(what) + " must be an array of numbers");
    Vector v;
    v.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) throw InputError(std::string(what) + " must be an array of numbers");
        v.push_back(e.get<double>());
    }
    return v;
}

inline double num_from(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw InputError(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline ConvexFunction function_from(const nlohmann::json& j) {
    const std::string type = j.value("type", "");
    if (type == "linear") return ConvexFunction::linear(vec_from(j.at("c"), "linear.c"), num_from(j, "b", 0.0));
    if (type == "hinge") {
        HingeAggregateFn h;
        for (const auto& t : j.at("terms")) {
            h.terms.push_back({num_from(t, "w", 1.0), vec_from(t.at("a"), "hinge.a"), num_from(t, "b", 0.0)});
        }
        return ConvexFunction(std::move(h));
    }
    if (type == "sum") {
        ScaledSumFn s;
        for (const auto& p : j.at("parts")) {
            s.weights.push_back(num_from(p, "weight", 1.0));
            s.parts.push_back(function_from(p.at("fn")));
        }
        return ConvexFunction(std::move(s));
    }
    throw InputError("unknown function type '" + type + "'");
}

inline nlohmann::json function_to(const ConvexFunction& f) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, LinearFn>) {
                return {{"type", "linear"}, {"c", v.c}, {"b", v.b}};
            } else if constexpr (std::is_same_v<T, HingeAggregateFn>) {
                nlohmann::json terms = nlohmann::json::array();
                for (const auto& t : v.terms) terms.push_back({{"w", t.weight}, {"a", t.direction}, {"b", t.offset}});
                return {{"type", "hinge"}, {"terms", terms}};
            } else {
                nlohmann::json parts = nlohmann::json::array();
                for (std::size_t i = 0; i < v.parts.size(); ++i) {
                    parts.push_back({{"weight", v.weights[i]}, {"fn", function_to(v.parts[i])}});
                }
                return {{"type", "sum"}, {"parts", parts}};
            }
        },
        f.variant());
}

inline FeasibleSet set_from(const nlohmann::json& j) {
    const std::string type = j.value("type", "all-space");
    if (type == "all-space") return AllSpace{};
    if (type == "box") return Box{vec_from(j.at("lower"), "box.lower"), vec_from(j.at("upper"), "box.upper")};
    if (type == "ball") return Ball{vec_from(j.at("center"), "ball.center"), num_from(j, "radius", 1.0)};
    throw InputError("unknown set type '" + type + "'");
}

}  // namespace detail

inline ProblemInstance problem_from_json(const nlohmann::json& j) {
    try {
        auto objective = detail::function_from(j.at("objective"));
        std::vector<ConvexFunction> cons;
        if (j.contains("constraints")) {
            for (const auto& c : j.at("constraints")) cons.push_back(detail::function_from(c));
        }
        FeasibleSet set = j.contains("set") ? detail::set_from(j.at("set")) : FeasibleSet{};
        ProblemMetadata meta;
        if (j.contains("metadata")) {
            const auto& m = j.at("metadata");
            auto opt_num = [&](const char* k) -> std::optional<double> {
                if (!m.contains(k)) return std::nullopt;
                return detail::num_from(m, k, 0.0);
            };
            auto opt_vec = [&](const char* k) -> std::optional<Vector> {
                if (!m.contains(k)) return std::nullopt;
                return detail::vec_from(m.at(k), k);
            };
            meta.f_star = opt_num("f_star");
            meta.x_star = opt_vec("x_star");
            meta.ebc_d = opt_num("ebc_d");
            meta.ebc_G = opt_num("ebc_G");
            meta.subgrad_bound_M = opt_num("subgrad_bound_M");
            meta.smooth_L = opt_num("smooth_L");
            meta.strictly_feasible_point = opt_vec("strictly_feasible_point");
        }
        const PassModel pm = j.value("pass_model", "per_update") == "per_split" ? PassModel::per_split
                                                                                : PassModel::per_update;
        return ProblemInstance(std::move(objective), std::move(cons), std::move(set), std::move(meta), pm);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed problem description: ") + e.what());
    }
}

inline ProblemInstance load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open problem file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("problem file '" + path + "' is not valid JSON: " + e.what());
    }
    return problem_from_json(j);
}

inline nlohmann::json problem_to_json(const ProblemInstance& inst) {
    nlohmann::json j;
    j["objective"] = detail::function_to(inst.objective());
    j["constraints"] = nlohmann::json::array();
    for (const auto& c : inst.constraints()) j["constraints"].push_back(detail::function_to(c));
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, AllSpace>) {
                j["set"] = {{"type", "all-space"}};
            } else if constexpr (std::is_same_v<T, Box>) {
                j["set"] = {{"type", "box"}, {"lower", s.lower}, {"upper", s.upper}};
            } else {
                j["set"] = {{"type", "ball"}, {"center", s.center}, {"radius", s.radius}};
            }
        },
        inst.set().variant());
    nlohmann::json m = nlohmann::json::object();
    const auto& md = inst.metadata();
    if (md.f_star) m["f_star"] = *md.f_star;
    if (md.x_star) m["x_star"] = *md.x_star;
    if (md.ebc_d) m["ebc_d"] = *md.ebc_d;
    if (md.ebc_G) m["ebc_G"] = *md.ebc_G;
    if (md.subgrad_bound_M) m["subgrad_bound_M"] = *md.subgrad_bound_M;
    if (md.smooth_L) m["smooth_L"] = *md.smooth_L;
    if (md.strictly_feasible_point) m["strictly_feasible_point"] = *md.strictly_feasible_point;
    j["metadata"] = m;
    j["pass_model"] = inst.pass_model() == PassModel::per_split ? "per_split" : "per_update";
    return j;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader = "outer_iter,fom_iters,data_passes,f,g,p_at_fstar,restarts,last_kprime";

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_trace(std::ostream& out, std::span<const TraceRecord> records) {
    out << kTraceHeader << '\n';
    for (const auto& r : records) {
        out << r.outer_iter << ',' << r.fom_iters << ',' << r.data_passes << ',' << format_double(r.f) << ','
            << format_double(r.g) << ',';
        if (r.p_at_fstar) out << format_double(*r.p_at_fstar);
        out << ',' << r.restarts << ',';
        if (r.last_kprime) out << *r.last_kprime;
        out << '\n';
    }
}

inline void emit_trace(std::span<const TraceRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open trace file '" + path + "' for writing");
    write_trace(out, records);
    out.flush();
    if (!out) throw IoError("failed writing trace file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

inline nlohmann::json summary_json(const SolverReport& rep, const std::optional<double>& f_star = std::nullopt) {
    nlohmann::json j;
    j["x_best"] = rep.x_best;
    j["f_best"] = rep.f_best;
    j["g_best"] = rep.g_best;
    j["K"] = rep.K;
    if (rep.surrogates) {
        j["r_tilde"] = rep.surrogates->r_tilde;
        j["theta_tilde"] = rep.surrogates->theta_tilde;
        j["K_tilde"] = rep.surrogates->K_tilde;
    }
    j["outer_iterations"] = rep.outer_iterations;
    j["fom_iterations"] = rep.fom_iterations;
    j["data_passes"] = rep.data_passes;
    j["restarts"] = rep.restarts;
    if (f_star) {
        j["f_star"] = *f_star;
        j["p_at_fstar"] = std::max(rep.f_best - *f_star, rep.g_best);
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : rep.restart_log) {
        log.push_back({{"outer_iter", e.outer_iter},
                       {"k_prime", e.k_prime},
                       {"P0_before", e.P0_before},
                       {"P0_after", e.P0_after},
                       {"epoch", e.epoch},
                       {"improved_best", e.improved_best}});
    }
    j["restart_log"] = log;
    return j;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace rls
