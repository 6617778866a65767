#pragma once

// Event-triggered communication: the local error threshold, the trigger
// decision (exact rule or the floored practical variant), and bookkeeping of
// last-broadcast states.

#include "etdopt/common.hpp"
#include "etdopt/graph.hpp"

#include <optional>
#include <vector>

namespace etdopt {

enum class TriggerMode {
    Exact,      // threshold factor (1/2 - |nu| beta d_in)^2
    Practical,  // factor (1/2 - beta |nu|)^2 with a floor zeta > 0
};

struct TriggerPolicy {
    double c = 0.99;   // threshold constant, in (0,1)
    double zeta = 0.0; // practical-mode floor; 0 means the exact rule
    TriggerMode mode = TriggerMode::Exact;
    bool enabled = true;  // false: broadcast every step (baseline input)

    void validate() const {
        require(c > 0.0 && c < 1.0, "trigger policy: c must lie in (0,1)");
        require(zeta >= 0.0, "trigger policy: zeta must be nonnegative");
        if (mode == TriggerMode::Practical) {
            require(zeta > 0.0, "trigger policy: practical mode requires zeta > 0");
        }
    }
};

/// Last-broadcast states and per-agent event tallies. xhat_i changes only at
/// trigger events; it is initialized to x_i(0).
struct CommState {
    std::vector<Vector> xhat;
    std::vector<long> trigger_counts;

    static CommState init(const std::vector<Vector>& x0) {
        return CommState{x0, std::vector<long>(x0.size(), 0)};
    }
};

/// sum_j a_ij ||xhat_j - xhat_i||^2 for one receiver.
inline double neighbor_gap(const WeightedDigraph& g, const std::vector<Vector>& xhat, int agent) {
    double gap = 0.0;
    for (int j = 0; j < g.n(); ++j) {
        const double a = g.adjacency(agent, j);
        if (a > 0.0) gap += a * (xhat[static_cast<std::size_t>(j)] -
                                 xhat[static_cast<std::size_t>(agent)]).squaredNorm();
    }
    return gap;
}

/// Threshold of the exact rule, (c/d_in) (1/2 - |nu| beta d_in)^2 * gap.
/// An agent with no in-neighbors has no threshold and never triggers.
inline std::optional<double> trigger_threshold(double nu_mag, double beta, double c, double d_in,
                                               double neighbor_gap_value) {
    if (d_in <= 0.0) return std::nullopt;
    const double factor = 0.5 - nu_mag * beta * d_in;
    return (c / d_in) * factor * factor * neighbor_gap_value;
}

/// Threshold of the practical variant: the squared factor drops the in-degree,
/// (c/d_in) (1/2 - beta |nu|)^2 * gap. The zeta floor is applied by
/// should_trigger, not here.
inline std::optional<double> trigger_threshold_practical(double nu_mag, double beta, double c,
                                                         double d_in, double neighbor_gap_value) {
    if (d_in <= 0.0) return std::nullopt;
    const double factor = 0.5 - beta * nu_mag;
    return (c / d_in) * factor * factor * neighbor_gap_value;
}

/// Trigger decision. Equality counts as a trigger; without a threshold
/// (isolated receiver) the agent never fires; practical mode floors the
/// threshold at zeta.
inline bool should_trigger(double e_norm_sq, std::optional<double> threshold,
                           const TriggerPolicy& policy) {
    if (!threshold) return false;
    double t = *threshold;
    if (policy.mode == TriggerMode::Practical) t = std::max(t, policy.zeta);
    return e_norm_sq >= t;
}

/// Broadcast commit: xhat_i <- x_i, error resets to zero, tally increments.
inline void commit_trigger(CommState& state, int agent, const Vector& x) {
    state.xhat[static_cast<std::size_t>(agent)] = x;
    ++state.trigger_counts[static_cast<std::size_t>(agent)];
}

/// A link appearing at a schedule switch hands the receiver the sender's
/// last-broadcast state. With globally maintained xhat this changes nothing;
/// the operation exists to pin down that such a hand-off is not an event and
/// must not be counted.
inline void on_link_appearance(CommState& state, int sender) {
    (void)state;
    (void)sender;
}

}  // namespace etdopt
