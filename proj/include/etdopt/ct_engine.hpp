#pragma once

// Continuous-time engine: classical fixed-step RK4 integration of the
// gradient-flow agents with diffusive coupling held constant within a step,
// an event-trigger check after every step, storage-function accounting, and
// trace recording.

#include "etdopt/common.hpp"
#include "etdopt/graph.hpp"
#include "etdopt/objective.hpp"
#include "etdopt/passivity.hpp"
#include "etdopt/trace.hpp"
#include "etdopt/trigger.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace etdopt {

struct AgentState {
    Vector x;
    Vector lambda;
};

struct CtConfig {
    double alpha = 1.0;
    double beta = 0.2;
    double h = 1e-3;        // integrator step, seconds
    double t_final = 60.0;  // horizon, seconds
    std::vector<Vector> x0;
    std::vector<Vector> lambda0;  // empty: all zeros
    int record_every = 1;
    double stop_tol = 0.0;  // 0: always run to t_final
    bool force = false;     // skip the gain-condition gate (demonstration runs)
};

/// Per-step Lyapunov tolerance used when counting violations.
inline constexpr double kCtLyapunovTol = 1e-8;

/// u_i = beta sum_j a_ij (xhat_j - xhat_i).
inline Vector coupling_input(const std::vector<Vector>& xhat, const WeightedDigraph& g,
                             double beta, int agent) {
    Vector u = Vector::Zero(xhat[static_cast<std::size_t>(agent)].size());
    for (int j = 0; j < g.n(); ++j) {
        const double a = g.adjacency(agent, j);
        if (a > 0.0) u += a * (xhat[static_cast<std::size_t>(j)] -
                               xhat[static_cast<std::size_t>(agent)]);
    }
    return beta * u;
}

/// dx_i = -alpha grad f_i(x_i) - lambda_i;  dlambda_i = -u_i.
inline void vector_field(std::span<const AgentState> states, std::span<const Vector> inputs,
                         std::span<const ObjectiveSpec> specs, double alpha,
                         std::vector<Vector>& dx, std::vector<Vector>& dlambda) {
    dx.resize(states.size());
    dlambda.resize(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        Vector grad = specs[i].gradient(states[i].x);
        if (!grad.allFinite()) {
            throw std::runtime_error("vector_field: non-finite gradient for agent " +
                                     std::to_string(specs[i].id));
        }
        dx[i] = -alpha * grad - states[i].lambda;
        dlambda[i] = -inputs[i];
    }
}

/// Storage value of one agent relative to the optimum:
///   V = (1/(alpha mu)) ||dx/dt||^2 - dx^T dlambda
///       + alpha grad f(x*)^T dx + alpha (f(x*) - f(x)),
/// with dx/dt = -(alpha grad f(x) + lambda). lambda_star is looked up by the
/// objective's id.
inline double storage_value(const AgentState& state, const ObjectiveSpec& spec, double alpha,
                            const OptimumSolution& opt) {
    const Vector dx = state.x - opt.x_star;
    const Vector dl = state.lambda - opt.lambda_star[static_cast<std::size_t>(spec.id)];
    const Vector grad = spec.gradient(state.x);
    const Vector grad_star = spec.gradient(opt.x_star);
    const Vector xdot = -(alpha * grad + state.lambda);
    return xdot.squaredNorm() / (alpha * spec.mu) - dx.dot(dl) + alpha * grad_star.dot(dx) +
           alpha * (spec.value(opt.x_star) - spec.value(state.x));
}

/// Observer payload handed out once per completed integrator step.
struct CtStepInfo {
    long step = 0;   // 0-based index of the completed step
    double t0 = 0.0; // step start
    double t1 = 0.0; // step end
    std::span<const Vector> u;          // inputs frozen during the step
    std::span<const Vector> x_pre;      // decision states at t0
    std::span<const AgentState> state;  // states at t1
    std::span<const double> v_pre;      // per-agent storage at t0 (empty without oracle)
    std::span<const double> v_post;     // per-agent storage at t1
    std::span<const double> e_sq;       // trigger errors at the post-step check
    std::span<const std::optional<double>> thresholds;
    std::span<const char> fired;
};

using CtObserver = std::function<void(const CtStepInfo&)>;

namespace detail {

inline void validate_agents(const std::vector<ObjectiveSpec>& specs,
                            const GraphSchedule& schedule, const std::vector<Vector>& x0,
                            const std::vector<Vector>& lambda0) {
    require(!specs.empty(), "run: no agents");
    schedule.validate();
    require(static_cast<std::size_t>(schedule.n_agents()) == specs.size(),
            "run: schedule size does not match agent count");
    require(x0.size() == specs.size(), "run: x0 size does not match agent count");
    require(lambda0.empty() || lambda0.size() == specs.size(),
            "run: lambda0 size does not match agent count");
    const int dim = specs.front().dim;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        specs[i].validate();
        require(specs[i].dim == dim, "run: mixed agent dimensions");
        require(x0[i].size() == dim && x0[i].allFinite(), "run: bad initial state");
        if (!lambda0.empty()) {
            require(lambda0[i].size() == dim && lambda0[i].allFinite(),
                    "run: bad initial multiplier");
        }
    }
    for (std::size_t k = 0; k < schedule.modes.size(); ++k) {
        if (!is_weight_balanced(schedule.modes[k])) {
            throw std::invalid_argument("run: schedule mode " + std::to_string(k) +
                                        " is not weight-balanced");
        }
    }
    if (!lambda0.empty()) {
        Vector sum = Vector::Zero(dim);
        for (const auto& l : lambda0) sum += l;
        require(sum.lpNorm<Eigen::Infinity>() <= 1e-12,
                "run: initial multipliers must sum to zero");
    }
}

}  // namespace detail

inline SimulationTrace run_ct(const CtConfig& config, const std::vector<ObjectiveSpec>& specs,
                              const GraphSchedule& schedule, const TriggerPolicy& policy,
                              const OptimumSolution* optimum = nullptr,
                              const CtObserver& observer = {}) {
    require(config.alpha > 0.0, "run_ct: alpha must be positive");
    require(config.beta >= 0.0, "run_ct: beta must be nonnegative");
    require(config.h > 0.0, "run_ct: h must be positive");
    require(config.t_final >= config.h, "run_ct: t_final must cover at least one step");
    require(config.record_every >= 1, "run_ct: record_every must be >= 1");
    policy.validate();
    detail::validate_agents(specs, schedule, config.x0, config.lambda0);

    const std::size_t n = specs.size();
    const int dim = specs.front().dim;

    std::vector<double> nu_mag(n);
    for (std::size_t i = 0; i < n; ++i) nu_mag[i] = -ifp_index_ct(config.alpha, specs[i].mu);
    const Vector d_max = schedule.max_in_degrees();
    if (!config.force) {
        const std::vector<double> dvec(d_max.data(), d_max.data() + d_max.size());
        if (!gain_condition(nu_mag, config.beta, dvec)) {
            throw std::invalid_argument(
                "run_ct: gain condition violated (beta supremum " +
                std::to_string(beta_supremum(nu_mag, dvec)) + "); use force to override");
        }
    }

    std::vector<AgentState> state(n);
    for (std::size_t i = 0; i < n; ++i) {
        state[i].x = config.x0[i];
        state[i].lambda = config.lambda0.empty() ? Vector::Zero(dim) : config.lambda0[i];
    }
    CommState comm = CommState::init(config.x0);

    SimulationTrace trace;
    trace.kind = SimulationTrace::Kind::Ct;
    trace.n_agents = static_cast<int>(n);
    trace.dim = dim;
    trace.has_storage = optimum != nullptr;
    trace.metrics.trigger_counts.assign(n, 0);

    auto v_agent = [&](std::size_t i) { return storage_value(state[i], specs[i], config.alpha, *optimum); };
    std::vector<double> v_pre(optimum ? n : 0), v_post(optimum ? n : 0);
    double v_total_prev = 0.0;
    if (optimum) {
        for (std::size_t i = 0; i < n; ++i) v_post[i] = v_agent(i);
        for (double v : v_post) v_total_prev += v;
    }

    auto record = [&](double t, std::span<const char> fired, double v_total) {
        TraceRecord rec;
        rec.time = t;
        rec.v_total = v_total;
        rec.agents.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rec.agents[i].x = state[i].x;
            rec.agents[i].lambda = state[i].lambda;
            rec.agents[i].xhat = comm.xhat[i];
            rec.agents[i].triggered = !fired.empty() && fired[i] != 0;
        }
        trace.records.push_back(std::move(rec));
    };
    record(0.0, {}, v_total_prev);

    const long n_steps = std::lround(config.t_final / config.h);
    std::vector<Vector> u(n), x_pre(n), dx, dl, k1x, k1l, k2x, k2l, k3x, k3l;
    std::vector<AgentState> stage(n);
    std::vector<double> e_sq(n, 0.0);
    std::vector<std::optional<double>> thresholds(n);
    std::vector<char> fired(n, 0);

    long step = 0;
    for (; step < n_steps; ++step) {
        const double t0 = static_cast<double>(step) * config.h;
        const double t1 = static_cast<double>(step + 1) * config.h;
        const WeightedDigraph& g0 = graph_at(schedule, t0);
        const Degrees deg0 = degrees(g0);
        std::fill(fired.begin(), fired.end(), 0);

        if (!policy.enabled) {
            // broadcast baseline: real-time states feed the coupling
            for (std::size_t i = 0; i < n; ++i) {
                comm.xhat[i] = state[i].x;
                if (deg0.in[static_cast<Eigen::Index>(i)] > 0.0) {
                    ++comm.trigger_counts[i];
                    ++trace.metrics.eligible_samples;
                    fired[i] = 1;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            u[i] = coupling_input(comm.xhat, g0, config.beta, static_cast<int>(i));
            x_pre[i] = state[i].x;
        }
        if (optimum) v_pre = v_post;

        // classical RK4 with u frozen
        const double h = config.h;
        vector_field(state, u, specs, config.alpha, dx, dl);
        k1x = dx; k1l = dl;
        for (std::size_t i = 0; i < n; ++i) {
            stage[i].x = state[i].x + 0.5 * h * k1x[i];
            stage[i].lambda = state[i].lambda + 0.5 * h * k1l[i];
        }
        vector_field(stage, u, specs, config.alpha, dx, dl);
        k2x = dx; k2l = dl;
        for (std::size_t i = 0; i < n; ++i) {
            stage[i].x = state[i].x + 0.5 * h * k2x[i];
            stage[i].lambda = state[i].lambda + 0.5 * h * k2l[i];
        }
        vector_field(stage, u, specs, config.alpha, dx, dl);
        k3x = dx; k3l = dl;
        for (std::size_t i = 0; i < n; ++i) {
            stage[i].x = state[i].x + h * k3x[i];
            stage[i].lambda = state[i].lambda + h * k3l[i];
        }
        vector_field(stage, u, specs, config.alpha, dx, dl);
        for (std::size_t i = 0; i < n; ++i) {
            state[i].x += (h / 6.0) * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + dx[i]);
            state[i].lambda += (h / 6.0) * (k1l[i] + 2.0 * k2l[i] + 2.0 * k3l[i] + dl[i]);
            if (!state[i].x.allFinite() || !state[i].lambda.allFinite()) {
                throw std::runtime_error("run_ct: state diverged at step " +
                                         std::to_string(step + 1));
            }
        }

        // trigger check against the graph in force from t1 on
        const WeightedDigraph& g1 = graph_at(schedule, t1);
        const Degrees deg1 = degrees(g1);
        if (policy.enabled) {
            for (std::size_t i = 0; i < n; ++i) {
                e_sq[i] = (state[i].x - comm.xhat[i]).squaredNorm();
                const double din = deg1.in[static_cast<Eigen::Index>(i)];
                const double gap = din > 0.0 ? neighbor_gap(g1, comm.xhat, static_cast<int>(i)) : 0.0;
                thresholds[i] =
                    policy.mode == TriggerMode::Practical
                        ? trigger_threshold_practical(nu_mag[i], config.beta, policy.c, din, gap)
                        : trigger_threshold(nu_mag[i], config.beta, policy.c, din, gap);
                if (din > 0.0) ++trace.metrics.eligible_samples;
                fired[i] = should_trigger(e_sq[i], thresholds[i], policy) ? 1 : 0;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (fired[i]) {
                    commit_trigger(comm, static_cast<int>(i), state[i].x);
                }
            }
        }

        double v_total = std::numeric_limits<double>::quiet_NaN();
        if (optimum) {
            v_total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                v_post[i] = v_agent(i);
                v_total += v_post[i];
            }
            if (v_total > v_total_prev + kCtLyapunovTol) ++trace.metrics.lyapunov_violations;
            v_total_prev = v_total;
        }
        Vector lambda_sum = Vector::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) lambda_sum += state[i].lambda;
        trace.metrics.lambda_sum_max =
            std::max(trace.metrics.lambda_sum_max, lambda_sum.lpNorm<Eigen::Infinity>());

        if (observer) {
            CtStepInfo info;
            info.step = step;
            info.t0 = t0;
            info.t1 = t1;
            info.u = u;
            info.x_pre = x_pre;
            info.state = state;
            info.v_pre = v_pre;
            info.v_post = v_post;
            info.e_sq = e_sq;
            info.thresholds = thresholds;
            info.fired = fired;
            observer(info);
        }

        bool stop = false;
        if (config.stop_tol > 0.0 && optimum) {
            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                err = std::max(err, (state[i].x - optimum->x_star).norm());
            }
            stop = err < config.stop_tol;
        }
        if ((step + 1) % config.record_every == 0 || step + 1 == n_steps || stop) {
            record(t1, fired, v_total);
        }
        if (stop) {
            ++step;
            break;
        }
    }

    trace.metrics.steps = step;
    trace.metrics.trigger_counts.assign(comm.trigger_counts.begin(), comm.trigger_counts.end());
    trace.metrics.comm_ratio =
        trace.metrics.eligible_samples > 0
            ? static_cast<double>(trace.metrics.total_triggers()) /
                  static_cast<double>(trace.metrics.eligible_samples)
            : 0.0;
    trace.metrics.v_final =
        optimum ? v_total_prev : std::numeric_limits<double>::quiet_NaN();
    double gap = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (optimum) err = std::max(err, (state[i].x - optimum->x_star).norm());
        for (std::size_t j = i + 1; j < n; ++j) {
            gap = std::max(gap, (state[i].x - state[j].x).norm());
        }
    }
    trace.metrics.final_error = optimum ? err : std::numeric_limits<double>::quiet_NaN();
    trace.metrics.consensus_gap = gap;
    return trace;
}

}  // namespace etdopt
