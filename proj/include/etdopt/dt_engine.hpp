#pragma once

// Discrete-time engine: the forward-Euler agents with diffusive or
// event-triggered input, the stepsize-scaled storage function, and exact
// multiplier-conservation bookkeeping.

#include "etdopt/common.hpp"
#include "etdopt/ct_engine.hpp"
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

struct DtConfig {
    double alpha = 1.0;
    double beta = 0.1;
    double delta = 0.1;  // forward-Euler stepsize
    long k_final = 2000;
    std::vector<Vector> x0;
    std::vector<Vector> lambda0;  // empty: all zeros
    int record_every = 1;
    bool force = false;  // skip stepsize and gain-condition gates
};

/// Per-step Lyapunov tolerance used when counting violations.
inline constexpr double kDtLyapunovTol = 1e-9;

/// Stepsize-scaled storage value of one agent relative to the optimum, with
/// z = alpha grad f(x) + lambda in place of the continuous-time velocity:
///   V~ = (1/delta) [ (1/(alpha mu)) ||z||^2 - dx^T dlambda
///        + alpha grad f(x*)^T dx + alpha (f(x*) - f(x)) ].
inline double dt_storage_value(const AgentState& state, const ObjectiveSpec& spec, double alpha,
                               double delta, const OptimumSolution& opt) {
    require(delta > 0.0, "dt_storage_value: delta must be positive");
    return storage_value(state, spec, alpha, opt) / delta;
}

/// One synchronous step: triggers are evaluated on the pre-commit broadcast
/// states, committed simultaneously, the coupling input is computed from the
/// post-commit broadcast states, and the forward-Euler update is applied.
/// z_i(k) = alpha grad f_i(x_i(k)) + lambda_i(k) is exposed for auditing.
inline void dt_step(std::vector<AgentState>& state, CommState& comm, const WeightedDigraph& g,
                    const DtConfig& config, const std::vector<ObjectiveSpec>& specs,
                    const TriggerPolicy& policy, std::span<const double> nu_mag,
                    std::vector<char>& fired, std::vector<Vector>& u_out,
                    std::vector<Vector>& z_out, long* eligible = nullptr) {
    const std::size_t n = state.size();
    const Degrees deg = degrees(g);
    fired.assign(n, 0);

    if (policy.enabled) {
        for (std::size_t i = 0; i < n; ++i) {
            const double din = deg.in[static_cast<Eigen::Index>(i)];
            if (din <= 0.0) continue;
            if (eligible) ++*eligible;
            const double gap = neighbor_gap(g, comm.xhat, static_cast<int>(i));
            const auto threshold =
                policy.mode == TriggerMode::Practical
                    ? trigger_threshold_practical(nu_mag[i], config.beta, policy.c, din, gap)
                    : trigger_threshold(nu_mag[i], config.beta, policy.c, din, gap);
            const double e_sq = (state[i].x - comm.xhat[i]).squaredNorm();
            fired[i] = should_trigger(e_sq, threshold, policy) ? 1 : 0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (fired[i]) commit_trigger(comm, static_cast<int>(i), state[i].x);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            comm.xhat[i] = state[i].x;
            if (deg.in[static_cast<Eigen::Index>(i)] > 0.0) {
                if (eligible) ++*eligible;
                ++comm.trigger_counts[i];
                fired[i] = 1;
            }
        }
    }

    u_out.resize(n);
    z_out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        u_out[i] = coupling_input(comm.xhat, g, config.beta, static_cast<int>(i));
        const Vector grad = specs[i].gradient(state[i].x);
        if (!grad.allFinite()) {
            throw std::runtime_error("dt_step: non-finite gradient for agent " +
                                     std::to_string(specs[i].id));
        }
        z_out[i] = config.alpha * grad + state[i].lambda;
    }
    for (std::size_t i = 0; i < n; ++i) {
        state[i].x -= config.delta * z_out[i];
        state[i].lambda -= config.delta * u_out[i];
        if (!state[i].x.allFinite() || !state[i].lambda.allFinite()) {
            throw std::runtime_error("dt_step: state diverged");
        }
    }
}

/// Observer payload handed out once per step, before the state update.
struct DtStepInfo {
    long k = 0;
    std::span<const Vector> u;
    std::span<const Vector> z;
    std::span<const char> fired;
    std::span<const AgentState> state_pre;  // states at k
    std::span<const double> v_pre;          // per-agent storage at k
    std::span<const double> v_post;         // per-agent storage at k+1
};

using DtObserver = std::function<void(const DtStepInfo&)>;

inline SimulationTrace run_dt(const DtConfig& config, const std::vector<ObjectiveSpec>& specs,
                              const GraphSchedule& schedule, const TriggerPolicy& policy,
                              const OptimumSolution* optimum = nullptr,
                              const DtObserver& observer = {}) {
    require(config.alpha > 0.0, "run_dt: alpha must be positive");
    require(config.beta >= 0.0, "run_dt: beta must be nonnegative");
    require(config.delta > 0.0, "run_dt: delta must be positive");
    require(config.k_final >= 1, "run_dt: k_final must be >= 1");
    require(config.record_every >= 1, "run_dt: record_every must be >= 1");
    policy.validate();
    detail::validate_agents(specs, schedule, config.x0, config.lambda0);

    const std::size_t n = specs.size();
    const int dim = specs.front().dim;

    if (!config.force) {
        double bound = std::numeric_limits<double>::infinity();
        for (const auto& s : specs) {
            bound = std::min(bound, max_stepsize(config.alpha, s.mu, s.lip));
        }
        if (config.delta >= bound) {
            throw std::invalid_argument("run_dt: stepsize " + std::to_string(config.delta) +
                                        " reaches the admissible bound " + std::to_string(bound) +
                                        "; use force to override");
        }
    }
    std::vector<double> nu_mag(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double bound = max_stepsize(config.alpha, specs[i].mu, specs[i].lip);
        // forced runs past the bound have no discrete-time index; thresholds
        // fall back to the continuous-time one so the demonstration stays total
        nu_mag[i] = config.delta < bound
                        ? -ifp_index_dt(config.alpha, config.delta, specs[i].mu, specs[i].lip)
                        : -ifp_index_ct(config.alpha, specs[i].mu);
    }
    if (!config.force) {
        const Vector d_max = schedule.max_in_degrees();
        const std::vector<double> dvec(d_max.data(), d_max.data() + d_max.size());
        if (!gain_condition(nu_mag, config.beta, dvec)) {
            throw std::invalid_argument(
                "run_dt: gain condition violated (beta supremum " +
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
    trace.kind = SimulationTrace::Kind::Dt;
    trace.n_agents = static_cast<int>(n);
    trace.dim = dim;
    trace.has_storage = optimum != nullptr;
    trace.metrics.trigger_counts.assign(n, 0);

    std::vector<double> v_pre(optimum ? n : 0), v_post(optimum ? n : 0);
    double v_total_prev = 0.0;
    if (optimum) {
        for (std::size_t i = 0; i < n; ++i) {
            v_post[i] = dt_storage_value(state[i], specs[i], config.alpha, config.delta, *optimum);
            v_total_prev += v_post[i];
        }
    }

    std::vector<char> fired(n, 0);
    std::vector<Vector> u(n), z(n);
    std::vector<AgentState> state_pre(n);

    auto record = [&](long k, std::span<const char> flags, double v_total) {
        TraceRecord rec;
        rec.time = static_cast<double>(k);
        rec.v_total = v_total;
        rec.agents.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rec.agents[i].x = state[i].x;
            rec.agents[i].lambda = state[i].lambda;
            rec.agents[i].xhat = comm.xhat[i];
            rec.agents[i].z = z[i];
            rec.agents[i].triggered = !flags.empty() && flags[i] != 0;
        }
        trace.records.push_back(std::move(rec));
    };

    auto compute_z = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = config.alpha * specs[i].gradient(state[i].x) + state[i].lambda;
        }
    };

    for (long k = 0; k < config.k_final; ++k) {
        const WeightedDigraph& g = graph_at(schedule, static_cast<double>(k));
        state_pre = state;
        if (optimum) v_pre = v_post;
        try {
            dt_step(state, comm, g, config, specs, policy, nu_mag, fired, u, z,
                    &trace.metrics.eligible_samples);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " at step " + std::to_string(k) +
                                     " (last good step " + std::to_string(k - 1) + ")");
        }
        // row k carries the pre-update state together with this step's events
        if (k % config.record_every == 0) {
            std::swap(state, state_pre);
            record(k, fired, v_total_prev);
            std::swap(state, state_pre);
        }

        double v_total = std::numeric_limits<double>::quiet_NaN();
        if (optimum) {
            v_total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                v_post[i] =
                    dt_storage_value(state[i], specs[i], config.alpha, config.delta, *optimum);
                v_total += v_post[i];
            }
            if (v_total > v_total_prev + kDtLyapunovTol) ++trace.metrics.lyapunov_violations;
        }
        Vector lambda_sum = Vector::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) lambda_sum += state[i].lambda;
        trace.metrics.lambda_sum_max =
            std::max(trace.metrics.lambda_sum_max, lambda_sum.lpNorm<Eigen::Infinity>());

        if (observer) {
            DtStepInfo info;
            info.k = k;
            info.u = u;
            info.z = z;
            info.fired = fired;
            info.state_pre = state_pre;
            info.v_pre = v_pre;
            info.v_post = v_post;
            observer(info);
        }
        if (optimum) v_total_prev = v_total;
    }

    compute_z();
    record(config.k_final, {}, v_total_prev);

    trace.metrics.steps = config.k_final;
    trace.metrics.trigger_counts.assign(comm.trigger_counts.begin(), comm.trigger_counts.end());
    trace.metrics.comm_ratio =
        trace.metrics.eligible_samples > 0
            ? static_cast<double>(trace.metrics.total_triggers()) /
                  static_cast<double>(trace.metrics.eligible_samples)
            : 0.0;
    trace.metrics.v_final = optimum ? v_total_prev : std::numeric_limits<double>::quiet_NaN();
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
