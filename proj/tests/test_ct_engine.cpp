#include <catch2/catch_amalgamated.hpp>

#include "etdopt/ct_engine.hpp"
#include "etdopt/scenario.hpp"

#include <random>

using namespace etdopt;
using Catch::Approx;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

WeightedDigraph two_cycle() {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 1) = a(1, 0) = 1.0;
    return WeightedDigraph::from_adjacency(a);
}

// Balanced by construction: a symmetric part plus weighted permutation cycles.
WeightedDigraph random_balanced(std::mt19937_64& rng, int n) {
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (uniform01(rng) < 0.4) a(i, j) = a(j, i) = uniform01(rng) + 0.1;
        }
    }
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const double w = uniform01(rng) + 0.1;
    for (int i = 0; i < n; ++i) {
        const int to = perm[static_cast<std::size_t>(i)];
        if (to != i) a(to, i) += w;
    }
    return WeightedDigraph::from_adjacency(a);
}

GraphSchedule single_mode(const WeightedDigraph& g, double dwell = 1.0) {
    return GraphSchedule{{g}, {dwell}};
}

}  // namespace

TEST_CASE("coupling input", "[ct]") {
    const auto g = two_cycle();

    const std::vector<Vector> consensus = {scalar(0.3), scalar(0.3)};
    CHECK(coupling_input(consensus, g, 0.2, 0).norm() == 0.0);

    const std::vector<Vector> split = {scalar(0.0), scalar(1.0)};
    CHECK(coupling_input(split, g, 0.2, 0)[0] == Approx(0.2));
    CHECK(coupling_input(split, g, 0.2, 1)[0] == Approx(-0.2));
}

TEST_CASE("coupling inputs of a balanced graph sum to zero", "[ct][property]") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 1000; ++t) {
        const int n = 3 + static_cast<int>(uniform01(rng) * 5);
        const auto g = random_balanced(rng, n);
        REQUIRE(is_weight_balanced(g));
        std::vector<Vector> xhat;
        for (int i = 0; i < n; ++i) xhat.push_back(scalar(10.0 * uniform01(rng) - 5.0));
        Vector sum = Vector::Zero(1);
        for (int i = 0; i < n; ++i) sum += coupling_input(xhat, g, 0.37, i);
        REQUIRE(sum.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("vector field", "[ct]") {
    const auto specs = reference_catalog();
    const auto opt = solve_centralized_optimum(specs, 1.0, 1e-12);

    // equilibrium: gradients balance the multipliers and inputs vanish
    std::vector<AgentState> states;
    std::vector<Vector> zero_inputs;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        states.push_back({opt.x_star, opt.lambda_star[i]});
        zero_inputs.push_back(Vector::Zero(1));
    }
    std::vector<Vector> dx, dl;
    vector_field(states, zero_inputs, specs, 1.0, dx, dl);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        CHECK(dx[i].norm() <= 1e-10);
        CHECK(dl[i].norm() == 0.0);
    }

    // single agent: f = x^2/2, x = 2 gives xdot = -2
    const std::vector<ObjectiveSpec> single = {make_quadratic(0, 1.0, 0.0, 0.0)};
    std::vector<AgentState> s1 = {{scalar(2.0), scalar(0.0)}};
    std::vector<Vector> u1 = {scalar(0.0)};
    vector_field(s1, u1, single, 1.0, dx, dl);
    CHECK(dx[0][0] == Approx(-2.0));

    // multiplier derivatives sum to zero under balanced coupling
    std::mt19937_64 rng(41);
    for (int t = 0; t < 100; ++t) {
        const auto g = random_balanced(rng, 5);
        std::vector<Vector> xhat, u;
        std::vector<AgentState> st;
        for (int i = 0; i < 5; ++i) {
            xhat.push_back(scalar(uniform01(rng)));
            st.push_back({scalar(uniform01(rng)), scalar(uniform01(rng) - 0.5)});
        }
        for (int i = 0; i < 5; ++i) u.push_back(coupling_input(xhat, g, 0.2, i));
        vector_field(st, u, reference_catalog(), 1.0, dx, dl);
        Vector sum = Vector::Zero(1);
        for (const auto& d : dl) sum += d;
        REQUIRE(sum.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("storage value vanishes exactly at the optimum", "[ct]") {
    const auto specs = reference_catalog();
    const auto opt = solve_centralized_optimum(specs, 1.0, 1e-12);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const AgentState eq{opt.x_star, opt.lambda_star[i]};
        CHECK(std::abs(storage_value(eq, specs[i], 1.0, opt)) <= 1e-18);
        const AgentState off{opt.x_star + scalar(0.5), opt.lambda_star[i] - scalar(0.2)};
        CHECK(storage_value(off, specs[i], 1.0, opt) > 0.0);
    }
}

TEST_CASE("single agent without neighbors follows the pure gradient flow", "[ct]") {
    CtConfig config;
    config.t_final = 20.0;
    config.x0 = {scalar(0.7)};
    const std::vector<ObjectiveSpec> specs = {make_quadratic(0, 1.0, 3.0, 1.0)};
    const auto opt = solve_centralized_optimum(specs, 1.0);
    const auto schedule = single_mode(WeightedDigraph::from_adjacency(Matrix::Zero(1, 1)));

    const auto trace = run_ct(config, specs, schedule, TriggerPolicy{}, &opt);
    CHECK(trace.metrics.final_error <= 1e-6);  // argmin of x^2/2 + 3x + 1 is -3
    CHECK(trace.metrics.trigger_counts[0] == 0);
    CHECK(trace.metrics.eligible_samples == 0);
    CHECK(trace.metrics.comm_ratio == 0.0);
    CHECK(trace.records.back().agents[0].x[0] == Approx(-3.0).margin(1e-6));
}

TEST_CASE("decoupled network settles at the individual minimizers", "[ct]") {
    const auto scenario = make_reference_scenario();
    const auto specs = scenario.build_specs();
    CtConfig config;
    config.beta = 0.0;
    config.t_final = 30.0;
    config.x0 = scenario.initial_x();

    const auto trace = run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{});
    const auto& last = trace.records.back();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        CHECK(last.agents[i].lambda.norm() == 0.0);  // zero input keeps lambda at zero
        CHECK(eval_gradient(specs[i], last.agents[i].x).norm() <= 1e-6);
    }
}

TEST_CASE("short reference run: monotone storage, conservation, sound triggers", "[ct]") {
    const auto scenario = make_reference_scenario();
    const auto specs = scenario.build_specs();
    const auto opt = solve_centralized_optimum(specs, 1.0, 1e-10);

    CtConfig config;
    config.beta = 0.2;
    config.t_final = 5.0;
    config.x0 = scenario.initial_x();

    long fired_total = 0;
    bool thresholds_respected = true;
    bool storage_nonnegative = true;
    const CtObserver observer = [&](const CtStepInfo& info) {
        for (std::size_t i = 0; i < info.fired.size(); ++i) {
            if (info.fired[i]) {
                ++fired_total;
                if (!info.thresholds[i] || info.e_sq[i] < *info.thresholds[i]) {
                    thresholds_respected = false;
                }
            }
        }
        for (double v : info.v_post) {
            if (v < -1e-12) storage_nonnegative = false;
        }
    };

    const auto trace =
        run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{}, &opt, observer);
    CHECK(trace.metrics.lyapunov_violations == 0);
    CHECK(trace.metrics.lambda_sum_max <= 1e-9);
    CHECK(fired_total == trace.metrics.total_triggers());
    CHECK(fired_total > 0);
    CHECK(thresholds_respected);
    CHECK(storage_nonnegative);

    // broadcast states only move at trigger instants
    for (std::size_t r = 1; r < trace.records.size(); ++r) {
        for (int i = 0; i < trace.n_agents; ++i) {
            const auto& prev = trace.records[r - 1].agents[static_cast<std::size_t>(i)];
            const auto& cur = trace.records[r].agents[static_cast<std::size_t>(i)];
            if (!cur.triggered) {
                REQUIRE(cur.xhat == prev.xhat);
            }
        }
    }
}

TEST_CASE("configuration gates", "[ct]") {
    const auto scenario = make_reference_scenario();
    const auto specs = scenario.build_specs();

    CtConfig config;
    config.t_final = 1.0;
    config.x0 = scenario.initial_x();

    // nonzero multiplier sum is rejected outright
    config.lambda0 = {scalar(0.1), scalar(0.0), scalar(0.0), scalar(0.0), scalar(0.0)};
    CHECK_THROWS_AS(run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{}),
                    std::invalid_argument);
    config.lambda0.clear();

    // coupling gain at or above the supremum fails the gate, force overrides
    config.beta = 0.5;
    CHECK_THROWS_AS(run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{}),
                    std::invalid_argument);
    config.force = true;
    CHECK_NOTHROW(run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{}));
    config.force = false;
    config.beta = 0.2;

    // unbalanced schedule violates the standing assumption
    Matrix one_way = Matrix::Zero(5, 5);
    one_way(1, 0) = 1.0;
    GraphSchedule bad{{WeightedDigraph::from_adjacency(one_way)}, {1.0}};
    CHECK_THROWS_AS(run_ct(config, specs, bad, TriggerPolicy{}), std::invalid_argument);
}

TEST_CASE("early stop on reaching the optimum", "[ct]") {
    const auto scenario = make_reference_scenario();
    const auto specs = scenario.build_specs();
    const auto opt = solve_centralized_optimum(specs, 1.0);

    CtConfig config;
    config.beta = 0.2;
    config.t_final = 60.0;
    config.x0 = scenario.initial_x();
    config.stop_tol = 1e-2;
    config.record_every = 1000;

    const auto trace = run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{}, &opt);
    CHECK(trace.metrics.steps < 60000);
    CHECK(trace.metrics.final_error < 1e-2);
}

TEST_CASE("identical configurations give identical trajectories", "[ct]") {
    const auto scenario = make_reference_scenario();
    const auto specs = scenario.build_specs();
    CtConfig config;
    config.t_final = 2.0;
    config.x0 = scenario.initial_x();

    const auto a = run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{});
    const auto b = run_ct(config, specs, scenario.schedule_ct(), TriggerPolicy{});
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        for (int i = 0; i < a.n_agents; ++i) {
            REQUIRE(a.records[r].agents[static_cast<std::size_t>(i)].x ==
                    b.records[r].agents[static_cast<std::size_t>(i)].x);
        }
    }
}
