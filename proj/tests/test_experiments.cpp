#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "rls/experiments.hpp"
#include "rls/rls.hpp"

using namespace rls;

namespace {

// Wide enough in x₁ to contain the balance point (1 − r)/2 for r ≥ −11.
GridSpec wide_grid() {
    GridSpec g;
    g.lower = {-2.0, -2.0};
    g.upper = {8.0, 2.0};
    return g;
}

FairnessDataset four_points() {
    FairnessDataset d;
    d.features = {{1.0, 0.0}, {0.5, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
    d.labels = {1, -1, 1, -1};
    d.group = {Group::M, Group::M, Group::F, Group::F};
    return d;
}

double positive_rate(const FairnessDataset& d, Group g) {
    double pos = 0.0, n = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.group[i] != g) continue;
        n += 1.0;
        pos += d.labels[i] > 0 ? 1.0 : 0.0;
    }
    return pos / n;
}

}  // namespace

TEST(RingLp, Metadata) {
    EXPECT_EQ(*build_ring_lp(1.0).metadata().ebc_G, 2.0);
    EXPECT_EQ(*build_ring_lp(2.0).metadata().ebc_G, 1.0);
    EXPECT_DOUBLE_EQ(*build_ring_lp(5.0).metadata().ebc_G, 0.4);
    EXPECT_EQ(*build_ring_lp(0.5).metadata().subgrad_bound_M, 1.0);
    EXPECT_EQ(*build_ring_lp(3.0).metadata().subgrad_bound_M, 3.0);
    EXPECT_EQ(build_ring_lp(1.0).num_constraints(), 20u);
}

TEST(RingLp, BoundaryAndStrictFeasibility) {
    const auto inst = build_ring_lp(1.0);
    EXPECT_NEAR(inst.constraints()[5].value(Vector{0.0, 1.0}), 0.0, 1e-15);
    for (double rho : {0.5, 1.0, 4.0}) {
        EXPECT_EQ(eval_max_constraint(build_ring_lp(rho), Vector{0.0, 0.0}).value, -rho);
    }
}

TEST(RingLp, RejectsBadRho) {
    EXPECT_THROW(build_ring_lp(0.0), InputError);
    EXPECT_THROW(build_ring_lp(-1.0), InputError);
    EXPECT_THROW(build_ring_lp(NAN), InputError);
}

TEST(GridOracle, KnownValues) {
    const auto inst = build_ring_lp(1.0);
    EXPECT_LE(std::abs(brute_force_H(inst, -1.0).value), 1e-3);
    const auto h2 = brute_force_H(inst, -2.0);
    EXPECT_NEAR(h2.value, 0.5, 1e-3);
    // The minimizers form a vertical segment through x₁ = 1.5; the grid
    // keeps the first one it meets.
    EXPECT_NEAR(h2.x[0], 1.5, 1e-9);
    EXPECT_LE(std::abs(h2.x[1]), 0.25);
    EXPECT_EQ(eval_P(inst, h2.x, -2.0), h2.value);
}

TEST(GridOracle, SlopeMatchesConditionMeasure) {
    for (double rho : {1.0, 2.0}) {
        const auto inst = build_ring_lp(rho);
        const double theta = rho / (1.0 + rho);
        for (double r : {-11.0, -8.0, -5.0, -3.0, -2.0}) {
            const double ratio = brute_force_H(inst, r, wide_grid()).value / (-1.0 - r);
            EXPECT_GE(ratio, theta - 1e-3) << "rho " << rho << " r " << r;
            EXPECT_LE(ratio, 1.0);
            if (rho == 1.0) {
                EXPECT_NEAR(ratio, 0.5, 1e-3) << "r " << r;
            }
        }
    }
}

TEST(GridOracle, LevelFunctionShape) {
    const auto inst = build_ring_lp(1.0);
    GridSpec coarse;
    coarse.resolution = 401;
    std::vector<double> rs;
    for (double r = -4.0; r <= 2.0; r += 0.25) rs.push_back(r);
    std::vector<double> H;
    for (double r : rs) H.push_back(brute_force_H(inst, r, coarse).value);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (rs[i] < -1.0) {
            EXPECT_GT(H[i], 0.0);
        }
        if (rs[i] > -1.0) {
            EXPECT_LT(H[i], 0.0);
        }
        if (i + 1 < rs.size()) {
            const double delta = rs[i + 1] - rs[i];
            EXPECT_LE(H[i + 1], H[i] + 1e-3);
            EXPECT_GE(H[i + 1], H[i] - delta - 1e-3);
        }
    }
}

TEST(GridOracle, SurrogateConditionMeasureIsConservative) {
    for (double rho : {1.0, 2.0, 3.0, 4.0, 5.0}) {
        const auto inst = build_ring_lp(rho);
        const auto s = compute_surrogates(inst, Vector{0.0, 0.0}, -11.0, 0.5, 1.0);
        EXPECT_LE(s.theta_tilde, rho / (1.0 + rho) + 1e-3);
        EXPECT_GT(s.r_tilde, -1.0);
    }
}

TEST(GridOracle, RejectsWrongDimension) {
    ProblemInstance inst(ConvexFunction::linear({1.0, 0.0, 0.0}, 0.0), {}, AllSpace{});
    EXPECT_THROW(brute_force_H(inst, 0.0), InputError);
}

TEST(GridOracle, TiesKeepFirstPoint) {
    GridSpec g;
    g.resolution = 5;
    const auto m = grid_minimize([](std::span<const double>) { return 1.0; }, g);
    EXPECT_EQ(m.x, (Vector{-2.0, -2.0}));
}

TEST(Fairness, ConstraintsAtOrigin) {
    const auto inst = build_fairness_instance(four_points());
    ASSERT_EQ(inst.num_constraints(), 2u);
    const Vector zero{0.0, 0.0};
    // One M row and one F row land in the constraint split: κ·0.5 + 0.5 − 1.
    EXPECT_NEAR(inst.constraints()[0].value(zero), 0.9 * 0.5 + 0.5 - 1.0, 1e-15);
    EXPECT_NEAR(inst.constraints()[1].value(zero), 0.9 * 0.5 + 0.5 - 1.0, 1e-15);
    EXPECT_NEAR(eval_objective(inst, zero), 1.0, 1e-15);
    EXPECT_LT(eval_max_constraint(inst, zero).value, 0.0);
}

TEST(Fairness, OriginFeasibleForAnyKappa) {
    const auto data = generate_synthetic_fairness(100, 4, 3);
    for (double kappa : {0.1, 0.5, 0.9, 1.0}) {
        FairnessOptions opt;
        opt.kappa = kappa;
        const auto inst = build_fairness_instance(data, opt);
        EXPECT_LE(eval_max_constraint(inst, Vector(4, 0.0)).value, 1e-12);
    }
}

TEST(Fairness, HingeSign) {
    FairnessDataset d = four_points();
    const auto std_inst = build_fairness_instance(d);
    FairnessOptions lit;
    lit.literal_hinge = true;
    const auto lit_inst = build_fairness_instance(d, lit);
    const auto split = split_fairness_rows(d, 0);
    // A point that classifies every objective row correctly with margin ≥ 1
    // has zero standard loss.
    Vector x(2, 0.0);
    for (std::size_t i : split.objective_rows) axpy(10.0 * d.labels[i], d.features[i], x);
    bool separable = true;
    for (std::size_t i : split.objective_rows) separable &= d.labels[i] * dot(d.features[i], x) >= 1.0;
    ASSERT_TRUE(separable);
    EXPECT_EQ(eval_objective(std_inst, x), 0.0);
    EXPECT_GT(eval_objective(lit_inst, x), 1.0);
}

TEST(Fairness, BallFeasibleSet) {
    FairnessOptions opt;
    opt.lambda = 2.5;
    const auto inst = build_fairness_instance(four_points(), opt);
    EXPECT_EQ(project(inst.set(), Vector{3.0, 4.0}), (Vector{1.5, 2.0}));
    EXPECT_EQ(inst.pass_model(), PassModel::per_split);
}

TEST(Fairness, DegenerateSplit) {
    FairnessDataset d;
    d.features = {{1.0}, {2.0}};
    d.labels = {1, -1};
    d.group = {Group::M, Group::F};
    try {
        build_fairness_instance(d);
        FAIL() << "expected an error";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate split"), std::string::npos);
    }
}

TEST(Fairness, InvalidDatasets) {
    FairnessDataset d = four_points();
    d.labels[0] = 0;
    EXPECT_THROW(build_fairness_instance(d), InputError);
    d = four_points();
    d.group = {Group::M, Group::M, Group::M, Group::M};
    EXPECT_THROW(build_fairness_instance(d), InputError);
    EXPECT_THROW(build_fairness_instance(four_points(), {0.0, 10.0}), InputError);
}

TEST(Fairness, SplitIsStratifiedAndSeeded) {
    const auto d = generate_synthetic_fairness(200, 5, 42);
    const auto a = split_fairness_rows(d, 7);
    const auto b = split_fairness_rows(d, 7);
    EXPECT_EQ(a.objective_rows, b.objective_rows);
    EXPECT_EQ(a.constraint_rows, b.constraint_rows);
    EXPECT_EQ(a.objective_rows.size() + a.constraint_rows.size(), 200u);
    const auto c = split_fairness_rows(d, 8);
    EXPECT_NE(a.objective_rows, c.objective_rows);
    std::size_t m_obj = 0;
    for (std::size_t i : a.objective_rows) m_obj += d.group[i] == Group::M;
    EXPECT_EQ(m_obj, d.count(Group::M) / 2);
}

TEST(Fairness, SubgradientSpotChecks) {
    const auto inst = build_fairness_instance(generate_synthetic_fairness(120, 4, 17));
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 2000; ++i) {
        Vector x(4), y(4);
        for (auto& v : x) v = u(eng);
        for (auto& v : y) v = u(eng);
        for (const auto& c : inst.constraints()) {
            ASSERT_GE(c.value(y), c.value(x) + dot(c.subgradient(x), sub(y, x)) - 1e-12);
        }
    }
}

TEST(Synthetic, Deterministic) {
    const auto a = generate_synthetic_fairness(200, 5, 42);
    const auto b = generate_synthetic_fairness(200, 5, 42);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.group, b.group);
    const auto c = generate_synthetic_fairness(200, 5, 43);
    EXPECT_NE(a.features, c.features);
}

TEST(Synthetic, Shape) {
    for (std::size_t n : {4u, 5u, 50u, 200u}) {
        const auto d = generate_synthetic_fairness(n, 3, n);
        EXPECT_EQ(d.size(), n);
        EXPECT_EQ(d.num_features(), 3u);
        EXPECT_GE(d.count(Group::M), 1u);
        EXPECT_GE(d.count(Group::F), 1u);
        for (int b : d.labels) EXPECT_TRUE(b == 1 || b == -1);
    }
    EXPECT_THROW(generate_synthetic_fairness(3, 2, 0), InputError);
    EXPECT_THROW(generate_synthetic_fairness(10, 0, 0), InputError);
}

TEST(Synthetic, GroupsDifferInBaseRate) {
    const auto d = generate_synthetic_fairness(2000, 5, 42);
    EXPECT_GT(positive_rate(d, Group::M), positive_rate(d, Group::F) + 0.1);
}

TEST(Csv, LoadsMappedColumns) {
    std::istringstream in(
        "age,income,label,sex\n"
        "30,1.5,yes,m\n"
        "41, 2.0 ,no,f\n"
        "\"22\",0.5,yes,f\n");
    CsvMapping map{"label", {{"yes", 1}, {"no", -1}}, "sex", {{"m", Group::M}, {"f", Group::F}}};
    const auto d = load_fairness_csv(in, map);
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.features[0], (Vector{30.0, 1.5}));
    EXPECT_EQ(d.features[1], (Vector{41.0, 2.0}));
    EXPECT_EQ(d.features[2], (Vector{22.0, 0.5}));
    EXPECT_EQ(d.labels, (std::vector<int>{1, -1, 1}));
    EXPECT_EQ(d.group, (std::vector<Group>{Group::M, Group::F, Group::F}));
}

TEST(Csv, ErrorsNameTheColumn) {
    CsvMapping map{"label", {{"1", 1}, {"0", -1}}, "g", {{"a", Group::M}, {"b", Group::F}}};
    auto message = [&](const std::string& text, const CsvMapping& m) -> std::string {
        std::istringstream in(text);
        try {
            load_fairness_csv(in, m);
        } catch (const InputError& e) {
            return e.what();
        }
        return "";
    };
    EXPECT_NE(message("x,label,g\nabc,1,a\n4,0,b\n", map).find("'x'"), std::string::npos);
    EXPECT_NE(message("x,lbl,g\n1,1,a\n", map).find("'label'"), std::string::npos);
    EXPECT_NE(message("x,label,g\n1,7,a\n", map).find("'label'"), std::string::npos);
    EXPECT_NE(message("x,label,g\n1,1,c\n", map).find("'g'"), std::string::npos);
    CsvMapping no_labels = map;
    no_labels.label_values.clear();
    EXPECT_NE(message("x,label,g\n1,1,a\n", no_labels).find("'label'"), std::string::npos);
    CsvMapping no_label_col = map;
    no_label_col.label_column.clear();
    EXPECT_NE(message("x,label,g\n1,1,a\n", no_label_col).find("label"), std::string::npos);
    EXPECT_NE(message("", map).find("header"), std::string::npos);
    EXPECT_NE(message("x,label,g\n1,1\n", map).find("row 2"), std::string::npos);
}

TEST(WarmStart, RingFromOutside) {
    const auto inst = build_ring_lp(1.0);
    const auto ws = warm_start_feasible(inst, Vector{3.0, 0.0});
    EXPECT_LT(ws.g, 0.0);
    EXPECT_EQ(ws.g, eval_max_constraint(inst, ws.x).value);
}

TEST(WarmStart, NeverWorseThanStart) {
    const auto inst = build_fairness_instance(generate_synthetic_fairness(200, 5, 42));
    const Vector zero(5, 0.0);
    const auto ws = warm_start_feasible(inst, zero);
    EXPECT_LE(ws.g, eval_max_constraint(inst, zero).value);
    EXPECT_TRUE(inst.set().contains(ws.x));
    EXPECT_GT(ws.data_passes, 0);
}

TEST(WarmStart, NeedsConstraints) {
    ProblemInstance inst(ConvexFunction::linear({1.0}, 0.0), {}, AllSpace{});
    EXPECT_THROW(warm_start_feasible(inst, Vector{0.0}), InputError);
}

TEST(FstarEstimate, FilterThenMinimum) {
    const std::vector<Candidate> c{{1.0, 1e-6}, {0.9, 1e-4}, {0.95, 0.0}};
    EXPECT_EQ(estimate_fstar(std::span<const Candidate>(c)), 0.95);
    const std::vector<Candidate> none{{1.0, 1.0}, {0.5, 2e-5}};
    EXPECT_THROW(estimate_fstar(std::span<const Candidate>(none)), InputError);
}

TEST(FstarEstimate, RingLongRun) {
    const auto inst = build_ring_lp(1.0);
    SolverConfig cfg;
    cfg.epsilon = 1e-5;
    cfg.budget = 400'000;
    const auto rep = rls_run(inst, Vector{0.0, 0.0}, -11.0, cfg);
    EXPECT_NEAR(estimate_fstar(std::span<const TraceRecord>(rep.trace)), -1.0, 1e-3);
}
