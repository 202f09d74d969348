#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rls/experiments.hpp"
#include "rls/io.hpp"
#include "rls/rls.hpp"

namespace {

using namespace rls;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunConfig {
    std::string command;
    std::optional<double> alpha, B, epsilon, gamma, gamma_d, r_ini;
    std::string mode = "sgd";
    std::optional<std::int64_t> budget, pass_budget;
    unsigned threads = 1;
    std::string out_trace, out_summary;

    // lp-bench
    std::vector<double> rho_list, eps_list;
    std::string out_dir = "results";

    // fairness
    bool synthetic = false;
    std::size_t n = 200, p = 5;
    std::uint64_t seed = 42;
    std::string csv, label_col, group_col;
    std::vector<std::string> label_map, group_map;
    double kappa = 0.9, lambda = 10.0;
    std::uint64_t split_seed = 0;
    int warm_start_iters = 40;
    bool literal_hinge = false;

    // solve
    std::string problem;
    std::vector<double> x_ini;
};

/// Solver settings with per-command defaults filled in for unset flags.
SolverConfig solver_config(const RunConfig& rc, double alpha, double B, double eps, std::int64_t budget) {
    SolverConfig cfg;
    cfg.fom.alpha = rc.alpha.value_or(alpha);
    cfg.fom.B = rc.B.value_or(B);
    if (rc.gamma) cfg.fom.gamma = *rc.gamma;
    if (rc.gamma_d) cfg.fom.gamma_d = *rc.gamma_d;
    cfg.epsilon = rc.epsilon.value_or(eps);
    cfg.budget = rc.budget.value_or(budget);
    cfg.pass_budget = rc.pass_budget;
    cfg.threads = rc.threads;
    if (rc.mode == "sgd") {
        cfg.mode = FomMode::sgd;
    } else if (rc.mode == "agm") {
        cfg.mode = FomMode::agm;
    } else {
        throw InputError("unknown mode '" + rc.mode + "' (expected sgd or agm)");
    }
    cfg.validate();
    return cfg;
}

void write_trace_file(const SolverReport& rep, const std::string& path) {
    if (path.empty()) return;
    emit_trace(rep.trace, path);
}

std::string cell_name(double rho, double eps) {
    return "trace_rho" + format_double(rho) + "_eps" + format_double(eps) + ".csv";
}

int run_lp_bench(const RunConfig& rc) {
    std::vector<double> rhos = rc.rho_list.empty() ? std::vector<double>{1, 2, 3, 4, 5} : rc.rho_list;
    std::vector<double> epss = rc.eps_list;
    if (epss.empty() && rc.epsilon) epss.push_back(*rc.epsilon);
    if (epss.empty()) epss = {4, 2, 1, 0.5, 0.25, 0.125, 0.1, 0.0625, 0.01};
    const bool single = rhos.size() == 1 && epss.size() == 1;
    if (!rc.out_trace.empty() && !single) throw InputError("--out-trace needs a single (rho, eps) cell");

    std::filesystem::path dir(rc.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + rc.out_dir + "': " + ec.message());

    std::ostringstream table;
    table << "rho,eps,K,outer_iter,fom_iters,data_passes,restarts,f,g,p_at_fstar\n";
    json cells = json::array();
    for (double rho : rhos) {
        const auto inst = build_ring_lp(rho);
        const double f_star = *inst.metadata().f_star;
        for (double eps : epss) {
            SolverConfig cfg = solver_config(rc, 0.5, 0.95, eps, 10'000);
            cfg.epsilon = eps;
            const double r_ini = rc.r_ini.value_or(f_star - 10.0);
            const auto rep = rls_run(inst, Vector{0.0, 0.0}, r_ini, cfg);
            const std::string trace_path =
                single && !rc.out_trace.empty() ? rc.out_trace : (dir / cell_name(rho, eps)).string();
            write_trace_file(rep, trace_path);
            const double p = std::max(rep.f_best - f_star, rep.g_best);
            table << format_double(rho) << ',' << format_double(eps) << ',' << rep.K << ','
                  << rep.outer_iterations << ',' << rep.fom_iterations << ',' << rep.data_passes << ','
                  << rep.restarts << ',' << format_double(rep.f_best) << ',' << format_double(rep.g_best) << ','
                  << format_double(p) << '\n';
            json cell = summary_json(rep, f_star);
            cell["rho"] = rho;
            cell["eps"] = eps;
            cell["trace"] = trace_path;
            cells.push_back(std::move(cell));
            std::cout << "rho=" << format_double(rho) << " eps=" << format_double(eps) << " K=" << rep.K
                      << " f=" << format_double(rep.f_best) << " g=" << format_double(rep.g_best)
                      << " P(x;f*)=" << format_double(p) << '\n';
        }
    }
    const auto table_path = (dir / "summary.csv").string();
    std::ofstream out(table_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + table_path + "' for writing");
    out << table.str();
    if (!out) throw IoError("failed writing '" + table_path + "'");
    if (!rc.out_summary.empty()) write_json(json{{"cells", cells}}, rc.out_summary);
    return 0;
}

template <class V>
std::map<std::string, V> parse_value_map(const std::vector<std::string>& entries, const char* what,
                                         V (*convert)(const std::string&)) {
    std::map<std::string, V> out;
    for (const auto& e : entries) {
        const auto eq = e.find('=');
        if (eq == std::string::npos) throw InputError(std::string(what) + " entry '" + e + "' must be raw=value");
        out[e.substr(0, eq)] = convert(e.substr(eq + 1));
    }
    return out;
}

int label_of(const std::string& s) {
    if (s == "1" || s == "+1") return 1;
    if (s == "-1") return -1;
    throw InputError("label mapping target '" + s + "' must be +1 or -1");
}

Group group_of(const std::string& s) {
    if (s == "M" || s == "m") return Group::M;
    if (s == "F" || s == "f") return Group::F;
    throw InputError("group mapping target '" + s + "' must be M or F");
}

int run_fairness(const RunConfig& rc) {
    if (rc.synthetic == !rc.csv.empty()) throw InputError("give exactly one of --synthetic or --csv");
    FairnessDataset data;
    if (rc.synthetic) {
        data = generate_synthetic_fairness(rc.n, rc.p, rc.seed);
    } else {
        CsvMapping map;
        map.label_column = rc.label_col;
        map.group_column = rc.group_col;
        map.label_values = parse_value_map<int>(rc.label_map, "--label-map", label_of);
        map.group_values = parse_value_map<Group>(rc.group_map, "--group-map", group_of);
        data = load_fairness_csv(rc.csv, map);
    }
    FairnessOptions opt;
    opt.kappa = rc.kappa;
    opt.lambda = rc.lambda;
    opt.split_seed = rc.split_seed;
    opt.literal_hinge = rc.literal_hinge;
    const auto inst = build_fairness_instance(data, opt);

    SolverConfig cfg = solver_config(rc, 0.9, 0.99, 1e-3, 1'000'000'000);
    if (!rc.pass_budget && !rc.budget) cfg.pass_budget = 20'000;

    const auto ws = warm_start_feasible(inst, Vector(inst.dimension(), 0.0), rc.warm_start_iters, cfg.fom);
    if (!(ws.g < 0.0)) {
        throw SolverError("warm start ended at g = " + format_double(ws.g) +
                          ", not strictly feasible; raise --warm-start-iters (now " +
                          std::to_string(rc.warm_start_iters) + ") or loosen --kappa");
    }
    RlsState s = rls_init(inst, ws.x, rc.r_ini.value_or(0.0), cfg);
    s.extra_passes += ws.data_passes;
    const auto rep = rls_drive(s, inst, cfg);
    write_trace_file(rep, rc.out_trace);
    if (!rc.out_summary.empty()) {
        json j = summary_json(rep);
        j["warm_start_g"] = ws.g;
        write_json(j, rc.out_summary);
    }
    std::cout << "K=" << rep.K << " f=" << format_double(rep.f_best) << " g=" << format_double(rep.g_best)
              << " passes=" << rep.data_passes << " restarts=" << rep.restarts << '\n';
    return 0;
}

int run_solve(const RunConfig& rc) {
    if (rc.problem.empty()) throw InputError("--problem is required");
    const auto inst = load_problem(rc.problem);
    if (!rc.r_ini) throw InputError("--r-ini is required (a lower bound on the optimal value)");
    Vector x;
    if (!rc.x_ini.empty()) {
        x = rc.x_ini;
    } else if (const auto& sf = inst.metadata().strictly_feasible_point) {
        x = *sf;
    } else {
        throw InputError("--x-ini is required when the problem has no strictly_feasible_point");
    }
    SolverConfig cfg = solver_config(rc, 0.5, 0.95, 1e-2, 10'000);
    const auto rep = rls_run(inst, x, *rc.r_ini, cfg);
    write_trace_file(rep, rc.out_trace);
    if (!rc.out_summary.empty()) write_json(summary_json(rep, inst.metadata().f_star), rc.out_summary);
    std::cout << "K=" << rep.K << " f=" << format_double(rep.f_best) << " g=" << format_double(rep.g_best)
              << " fom_iters=" << rep.fom_iterations << " restarts=" << rep.restarts << '\n';
    return 0;
}

void add_solver_options(CLI::App* sub, RunConfig& rc) {
    sub->add_option("--alpha", rc.alpha, "level step fraction, 0 < alpha < B");
    sub->add_option("--bigB", rc.B, "restart threshold, alpha < B < 1");
    sub->add_option("--gamma", rc.gamma, "line-search growth factor");
    sub->add_option("--gamma-d", rc.gamma_d, "per-iteration shrink of the Lipschitz estimate");
    sub->add_option("--mode", rc.mode, "first-order method: sgd or agm");
    sub->add_option("--budget", rc.budget, "total FOM iterations over all instances");
    sub->add_option("--pass-budget", rc.pass_budget, "stop once this many data passes are used");
    sub->add_option("--r-ini", rc.r_ini, "initial level, a lower bound on the optimal value");
    sub->add_option("--threads", rc.threads, "worker threads for instance updates");
    sub->add_option("--out-trace", rc.out_trace, "trace CSV path");
    sub->add_option("--out-summary", rc.out_summary, "summary JSON path");
}

/// Turns config-file entries into flags placed before the user's own, skipping
/// any flag the user passed explicitly.
std::vector<std::string> config_args(const json& cfg, const std::vector<std::string>& user) {
    auto given = [&](const std::string& flag) {
        return std::any_of(user.begin(), user.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    };
    std::vector<std::string> out;
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command") continue;
        std::string name = key;
        std::replace(name.begin(), name.end(), '_', '-');
        if (name == "B") name = "bigB";
        const std::string flag = "--" + name;
        if (given(flag)) continue;
        auto scalar = [&](const json& v) -> std::string {
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
            if (v.is_number()) return format_double(v.get<double>());
            throw InputError("config key '" + key + "' has an unsupported value");
        };
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
        } else if (value.is_array()) {
            if (value.empty()) continue;
            out.push_back(flag);
            for (const auto& v : value) out.push_back(scalar(v));
        } else if (!value.is_null()) {
            out.push_back(flag);
            out.push_back(scalar(value));
        }
    }
    return out;
}

json read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw InputError("config file '" + path + "' must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw InputError("config file '" + path + "': " + e.what());
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    // --config is resolved before parsing so its entries act as defaults.
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }

    const std::vector<std::string> commands{"lp-bench", "fairness", "solve"};
    auto is_command = [&](const std::string& a) { return std::find(commands.begin(), commands.end(), a) != commands.end(); };
    if (config_path) {
        const json cfg = read_config(*config_path);
        auto pos = std::find_if(args.begin(), args.end(), is_command);
        if (pos == args.end() && cfg.contains("command") && cfg["command"].is_string()) {
            args.insert(args.begin(), cfg["command"].get<std::string>());
            pos = args.begin();
        }
        if (pos != args.end()) {
            const std::vector<std::string> user(pos + 1, args.end());
            const auto extra = config_args(cfg, user);
            args.insert(pos + 1, extra.begin(), extra.end());
        }
    }

    RunConfig rc;
    CLI::App app{"Restarting level-set solver for constrained convex problems"};
    app.require_subcommand(1);
    std::string unused_config;
    app.add_option("--config", unused_config, "JSON file with flag defaults; flags on the command line win");

    auto* bench = app.add_subcommand("lp-bench", "ring LP sweep over rho and eps");
    add_solver_options(bench, rc);
    bench->add_option("--rho", rc.rho_list, "ring scale values (default 1..5)")->expected(1, -1);
    bench->add_option("--eps", rc.eps_list, "accuracy values (default 4 .. 0.01)")->expected(1, -1);
    bench->add_option("--out-dir", rc.out_dir, "directory for per-cell traces and summary.csv");

    auto* fair = app.add_subcommand("fairness", "fairness-constrained classification");
    add_solver_options(fair, rc);
    fair->add_option("--eps", rc.epsilon, "target accuracy");
    fair->add_flag("--synthetic", rc.synthetic, "generate a synthetic dataset");
    fair->add_option("--n", rc.n, "synthetic sample count");
    fair->add_option("--p", rc.p, "synthetic feature count");
    fair->add_option("--seed", rc.seed, "synthetic dataset seed");
    fair->add_option("--csv", rc.csv, "CSV dataset path");
    fair->add_option("--label-col", rc.label_col, "label column name");
    fair->add_option("--group-col", rc.group_col, "group column name");
    fair->add_option("--label-map", rc.label_map, "raw=+1|-1 entries for the label column");
    fair->add_option("--group-map", rc.group_map, "raw=M|F entries for the group column");
    fair->add_option("--kappa", rc.kappa, "fairness slack multiplier");
    fair->add_option("--lambda", rc.lambda, "radius of the parameter ball");
    fair->add_option("--split-seed", rc.split_seed, "seed for the objective/constraint row split");
    fair->add_option("--warm-start-iters", rc.warm_start_iters, "iterations of the feasibility warm start");
    fair->add_flag("--literal-hinge", rc.literal_hinge, "use (1 + b a'x)+ in place of the standard hinge");

    auto* solve = app.add_subcommand("solve", "solve a problem described in JSON");
    add_solver_options(solve, rc);
    solve->add_option("--eps", rc.epsilon, "target accuracy");
    solve->add_option("--problem", rc.problem, "problem JSON path");
    solve->add_option("--x-ini", rc.x_ini, "strictly feasible starting point")->delimiter(',');

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (bench->parsed()) return run_lp_bench(rc);
    if (fair->parsed()) return run_fairness(rc);
    return run_solve(rc);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const rls::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
