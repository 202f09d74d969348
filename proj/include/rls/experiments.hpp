#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rls/fom.hpp"
#include "rls/levelset.hpp"
#include "rls/linalg.hpp"
#include "rls/problem.hpp"
#include "rls/trace.hpp"

namespace rls {

// ---------------------------------------------------------------------------
// Ring linear program
// ---------------------------------------------------------------------------

/// min −x₁ s.t. ρ(cos(iπ/10)x₁ + sin(iπ/10)x₂) − ρ ≤ 0 for i < num_constraints.
///
/// With the full 20 constraints the feasible region is a regular 20-gon
/// around the unit circle, x* = (1, 0), f* = −1, and the error bound holds
/// with d = 1, G = 2/ρ.
inline ProblemInstance build_ring_lp(double rho, std::size_t num_constraints = 20) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InputError("rho must be positive");
    if (num_constraints == 0 || num_constraints > 20) throw InputError("ring LP has 1..20 constraints");
    std::vector<ConvexFunction> cons;
    cons.reserve(num_constraints);
    for (std::size_t i = 0; i < num_constraints; ++i) {
        const double angle = static_cast<double>(i) * std::numbers::pi / 10.0;
        cons.push_back(ConvexFunction::linear({rho * std::cos(angle), rho * std::sin(angle)}, -rho));
    }
    ProblemMetadata meta;
    meta.f_star = -1.0;
    meta.x_star = Vector{1.0, 0.0};
    meta.ebc_d = 1.0;
    meta.ebc_G = 2.0 / rho;
    meta.subgrad_bound_M = std::max(1.0, rho);
    meta.smooth_L = 0.0;
    meta.strictly_feasible_point = Vector{0.0, 0.0};
    return ProblemInstance(ConvexFunction::linear({-1.0, 0.0}, 0.0), std::move(cons), AllSpace{}, std::move(meta),
                           PassModel::per_update);
}

// ---------------------------------------------------------------------------
// Grid oracle for 2-D instances
// ---------------------------------------------------------------------------

struct GridSpec {
    std::array<double, 2> lower{-2.0, -2.0};
    std::array<double, 2> upper{2.0, 2.0};
    std::size_t resolution = 2001;  // points per axis

    double step(std::size_t axis) const {
        return (upper[axis] - lower[axis]) / static_cast<double>(resolution - 1);
    }
    double coord(std::size_t axis, std::size_t i) const {
        return lower[axis] + static_cast<double>(i) * step(axis);
    }
};

struct GridMinimum {
    double value = std::numeric_limits<double>::infinity();
    Vector x;
};

/// Exhaustive minimum of fn over the grid; ties keep the first point in
/// row-major order.
template <class Fn>
GridMinimum grid_minimize(Fn&& fn, const GridSpec& grid) {
    if (grid.resolution < 2) throw InputError("grid needs at least two points per axis");
    GridMinimum best;
    best.x.assign(2, 0.0);
    std::array<double, 2> x{};
    for (std::size_t i = 0; i < grid.resolution; ++i) {
        x[0] = grid.coord(0, i);
        for (std::size_t j = 0; j < grid.resolution; ++j) {
            x[1] = grid.coord(1, j);
            const double v = fn(std::span<const double>(x));
            if (v < best.value) {
                best.value = v;
                best.x = {x[0], x[1]};
            }
        }
    }
    return best;
}

/// H(r) = min_{x∈𝒳} P(x; r), approximated on a grid (𝒳 must cover the grid).
inline GridMinimum brute_force_H(const ProblemInstance& inst, double r, const GridSpec& grid = {}) {
    if (inst.dimension() != 2) throw InputError("grid oracle needs a 2-D instance");
    const auto& obj = inst.objective();
    const auto& cons = inst.constraints();
    return grid_minimize(
        [&](std::span<const double> x) {
            double v = obj.value(x) - r;
            for (const auto& c : cons) v = std::max(v, c.value(x));
            return v;
        },
        grid);
}

// ---------------------------------------------------------------------------
// Fairness-constrained classification
// ---------------------------------------------------------------------------

enum class Group { M, F };

struct FairnessDataset {
    std::vector<Vector> features;  // n rows of p features
    std::vector<int> labels;       // ±1
    std::vector<Group> group;

    std::size_t size() const { return labels.size(); }
    std::size_t num_features() const { return features.empty() ? 0 : features.front().size(); }
    std::size_t count(Group g) const { return static_cast<std::size_t>(std::count(group.begin(), group.end(), g)); }

    void validate() const {
        const std::size_t n = labels.size();
        if (features.size() != n || group.size() != n) throw InputError("dataset columns differ in length");
        if (n == 0) throw InputError("dataset is empty");
        for (const auto& row : features) require_dim(row, num_features(), "feature row");
        for (int b : labels) {
            if (b != 1 && b != -1) throw InputError("labels must be +1 or -1");
        }
        if (count(Group::M) == 0 || count(Group::F) == 0) throw InputError("both groups must be non-empty");
    }
};

struct FairnessOptions {
    double kappa = 0.9;
    double lambda = 10.0;  // radius of the feasible ball
    std::uint64_t split_seed = 0;
    /// Use (1 + b·aᵀx)₊ as printed instead of the standard hinge (1 − b·aᵀx)₊.
    bool literal_hinge = false;
};

struct FairnessSplit {
    std::vector<std::size_t> objective_rows;
    std::vector<std::size_t> constraint_rows;
};

namespace detail {

/// 53-bit uniform in [0, 1) from a 64-bit engine; identical on every platform.
inline double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

inline double standard_normal(std::mt19937_64& eng) {
    double u1 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Fisher–Yates with the portable uniform above.
inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(eng) * static_cast<double>(i));
        std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
}

}  // namespace detail

/// Random half/half split, stratified by group. The constraint side takes the
/// larger half of each group.
inline FairnessSplit split_fairness_rows(const FairnessDataset& data, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    FairnessSplit out;
    for (Group g : {Group::M, Group::F}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.group[i] == g) rows.push_back(i);
        }
        detail::shuffle(rows, eng);
        const std::size_t n_obj = rows.size() / 2;
        out.objective_rows.insert(out.objective_rows.end(), rows.begin(), rows.begin() + static_cast<long>(n_obj));
        out.constraint_rows.insert(out.constraint_rows.end(), rows.begin() + static_cast<long>(n_obj), rows.end());
    }
    std::sort(out.objective_rows.begin(), out.objective_rows.end());
    std::sort(out.constraint_rows.begin(), out.constraint_rows.end());
    return out;
}

/// Mean hinge loss over one split subject to the two convexified fairness
/// constraints over the other, on the ball ‖x‖ ≤ λ:
///
///   (κ/n_M)Σ_M (aᵀx + 0.5)₊ + (1/n_F)Σ_F (−aᵀx + 0.5)₊ − 1 ≤ 0
///   (κ/n_F)Σ_F (aᵀx + 0.5)₊ + (1/n_M)Σ_M (−aᵀx + 0.5)₊ − 1 ≤ 0
inline ProblemInstance build_fairness_instance(const FairnessDataset& data, const FairnessOptions& opt = {}) {
    data.validate();
    if (!(opt.kappa > 0.0 && opt.kappa <= 1.0)) throw InputError("kappa must lie in (0, 1]");
    if (!(opt.lambda > 0.0)) throw InputError("lambda must be positive");
    const std::size_t p = data.num_features();
    const auto split = split_fairness_rows(data, opt.split_seed);

    std::vector<std::size_t> cm, cf;
    for (std::size_t i : split.constraint_rows) (data.group[i] == Group::M ? cm : cf).push_back(i);
    if (split.objective_rows.empty()) throw InputError("degenerate split: the objective split is empty");
    if (cm.empty() || cf.empty()) throw InputError("degenerate split: a group is empty in the constraint split");

    HingeAggregateFn loss;
    const double w = 1.0 / static_cast<double>(split.objective_rows.size());
    for (std::size_t i : split.objective_rows) {
        Vector dir = data.features[i];
        const double s = opt.literal_hinge ? data.labels[i] : -data.labels[i];
        for (double& v : dir) v *= s;
        loss.terms.push_back({w, std::move(dir), 1.0});
    }

    auto fairness = [&](const std::vector<std::size_t>& scaled, const std::vector<std::size_t>& other) {
        HingeAggregateFn h;
        const double ws = opt.kappa / static_cast<double>(scaled.size());
        const double wo = 1.0 / static_cast<double>(other.size());
        for (std::size_t i : scaled) h.terms.push_back({ws, data.features[i], 0.5});
        for (std::size_t i : other) {
            Vector neg = data.features[i];
            for (double& v : neg) v = -v;
            h.terms.push_back({wo, std::move(neg), 0.5});
        }
        return ConvexFunction(ScaledSumFn{{1.0, 1.0}, {ConvexFunction(std::move(h)), ConvexFunction::constant(p, -1.0)}});
    };

    std::vector<ConvexFunction> cons;
    cons.push_back(fairness(cm, cf));
    cons.push_back(fairness(cf, cm));
    return ProblemInstance(ConvexFunction(std::move(loss)), std::move(cons), Ball{Vector(p, 0.0), opt.lambda}, {},
                           PassModel::per_split);
}

/// Synthetic stand-in for the public fairness datasets.
///
/// Features are Gaussian with a group-dependent shift on the first
/// coordinate; labels follow a planted linear rule with 10% label noise, so
/// group M has the higher positive rate and the fairness constraints bind.
inline FairnessDataset generate_synthetic_fairness(std::size_t n, std::size_t p, std::uint64_t seed) {
    if (n < 4) throw InputError("synthetic dataset needs n >= 4");
    if (p < 1) throw InputError("synthetic dataset needs p >= 1");
    std::mt19937_64 eng(seed);
    FairnessDataset d;
    d.features.reserve(n);
    Vector planted(p);
    for (std::size_t j = 0; j < p; ++j) planted[j] = (j % 2 == 0 ? 1.0 : -0.5) / static_cast<double>(j + 1);
    for (std::size_t i = 0; i < n; ++i) {
        // First two rows are M, next two are F; the rest are a coin flip.
        const Group g = i < 4 ? (i < 2 ? Group::M : Group::F) : (detail::uniform01(eng) < 0.5 ? Group::M : Group::F);
        Vector a(p);
        for (std::size_t j = 0; j < p; ++j) a[j] = 0.5 * detail::standard_normal(eng);
        a[0] += g == Group::M ? 0.4 : -0.4;
        const double score = dot(planted, a) + 0.1 * detail::standard_normal(eng);
        int b = score >= 0.0 ? 1 : -1;
        if (detail::uniform01(eng) < 0.1) b = -b;
        d.features.push_back(std::move(a));
        d.labels.push_back(b);
        d.group.push_back(g);
    }
    return d;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvMapping {
    std::string label_column;
    std::map<std::string, int> label_values;  // raw value → ±1
    std::string group_column;
    std::map<std::string, Group> group_values;  // raw value → M/F
};

namespace detail {

inline std::string trim(std::string s) {
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t used = 0;
    try {
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Reads a headed CSV: the mapped label and group columns plus numeric
/// feature columns (all the others).
inline FairnessDataset load_fairness_csv(std::istream& in, const CsvMapping& map) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("CSV input is empty: a header row is required");
    const auto header = detail::split_csv_line(line);
    auto find_col = [&](const std::string& name, const char* role) {
        if (name.empty()) throw InputError(std::string("no ") + role + " column configured");
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InputError(std::string(role) + " column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t label_col = find_col(map.label_column, "label");
    const std::size_t group_col = find_col(map.group_column, "group");
    if (map.label_values.empty()) throw InputError("label column '" + map.label_column + "' has no value mapping");
    if (map.group_values.empty()) throw InputError("group column '" + map.group_column + "' has no value mapping");
    for (const auto& [k, v] : map.label_values) {
        if (v != 1 && v != -1) throw InputError("label mapping for '" + k + "' must be +1 or -1");
    }

    FairnessDataset d;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw InputError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                             " fields, header has " + std::to_string(header.size()));
        }
        auto lab = map.label_values.find(cells[label_col]);
        if (lab == map.label_values.end()) {
            throw InputError("label column '" + map.label_column + "': unmapped value '" + cells[label_col] +
                             "' in row " + std::to_string(row));
        }
        auto grp = map.group_values.find(cells[group_col]);
        if (grp == map.group_values.end()) {
            throw InputError("group column '" + map.group_column + "': unmapped value '" + cells[group_col] +
                             "' in row " + std::to_string(row));
        }
        Vector a;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_col || c == group_col) continue;
            auto v = detail::parse_number(cells[c]);
            if (!v) {
                throw InputError("feature column '" + header[c] + "' is not numeric (row " + std::to_string(row) +
                                 ": '" + cells[c] + "')");
            }
            a.push_back(*v);
        }
        d.features.push_back(std::move(a));
        d.labels.push_back(lab->second);
        d.group.push_back(grp->second);
    }
    d.validate();
    return d;
}

inline FairnessDataset load_fairness_csv(const std::string& path, const CsvMapping& map) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSV file '" + path + "'");
    return load_fairness_csv(in, map);
}

// ---------------------------------------------------------------------------
// Warm start, f* estimation
// ---------------------------------------------------------------------------

struct WarmStart {
    Vector x;
    double g = 0.0;
    std::int64_t data_passes = 0;
};

/// Projected subgradient descent on g with step (B−α)·|g(x⁰)|/‖ξ‖², returning
/// the best iterate. The result is not guaranteed to be strictly feasible.
inline WarmStart warm_start_feasible(const ProblemInstance& inst, std::span<const double> start,
                                     int iterations = 40, const FomConfig& cfg = {}) {
    if (inst.num_constraints() == 0) throw InputError("warm start needs at least one constraint");
    cfg.validate();
    const PassModel pm = inst.pass_model();
    WarmStart out;
    Vector x = project(inst.set(), start);
    auto cur = eval_max_constraint(inst, x);
    out.data_passes += count_data_pass(pm, EvalEvent::constraint_value);
    const double scale = (cfg.B - cfg.alpha) * std::max(std::abs(cur.value), cfg.epsilon_floor);
    out.x = x;
    out.g = cur.value;
    for (int t = 0; t < iterations; ++t) {
        const Vector xi = inst.constraints()[*cur.index].subgradient(x);
        out.data_passes += count_data_pass(pm, EvalEvent::constraint_subgradient);
        const double nsq = norm_sq(xi);
        if (nsq == 0.0) break;
        axpy(-scale / nsq, xi, x);
        inst.set().project_in_place(x);
        cur = eval_max_constraint(inst, x);
        out.data_passes += count_data_pass(pm, EvalEvent::constraint_value);
        if (cur.value < out.g) {
            out.g = cur.value;
            out.x = x;
        }
    }
    return out;
}

struct Candidate {
    double f = 0.0;
    double g = 0.0;
};

/// Smallest f among candidates with g ≤ tol.
inline double estimate_fstar(std::span<const Candidate> candidates, double tol = 1e-5) {
    std::optional<double> best;
    for (const auto& c : candidates) {
        if (c.g <= tol && (!best || c.f < *best)) best = c.f;
    }
    if (!best) throw InputError("no feasible candidates for the f* estimate");
    return *best;
}

inline double estimate_fstar(std::span<const TraceRecord> records, double tol = 1e-5) {
    std::vector<Candidate> c;
    c.reserve(records.size());
    for (const auto& r : records) c.push_back({r.f, r.g});
    return estimate_fstar(std::span<const Candidate>(c), tol);
}

}  // namespace rls
