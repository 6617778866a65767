#pragma once

// The design calculus: input-feedforward-passivity indices for the agent
// dynamics in continuous and discretized form, the admissible stepsize and
// coupling-gain bounds they induce, and the 2x2 worst-case matrix check
// behind the discrete-time certificate.

#include "etdopt/common.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace etdopt {

/// Continuous-time IFP index nu = -1/(alpha^2 mu^2) for the gradient-flow
/// agent; always negative (a passivity shortage).
inline double ifp_index_ct(double alpha, double mu) {
    require(alpha > 0.0, "ifp_index_ct: alpha must be positive");
    require(mu > 0.0, "ifp_index_ct: mu must be positive");
    return -1.0 / (alpha * alpha * mu * mu);
}

/// Largest forward-Euler stepsize preserving the discrete-time IFP property
/// for one agent: (1/alpha) (4 lip - 2 mu) / (2 lip^2 - mu^2). The admissible
/// network stepsize is the minimum over agents.
inline double max_stepsize(double alpha, double mu, double lip) {
    require(alpha > 0.0, "max_stepsize: alpha must be positive");
    require(mu > 0.0, "max_stepsize: mu must be positive");
    require(lip >= mu, "max_stepsize: lip must be >= mu");
    return (4.0 * lip - 2.0 * mu) / (alpha * (2.0 * lip * lip - mu * mu));
}

/// Discrete-time IFP index of the forward-Euler agent at stepsize delta:
///
///   nu~ = - (1/(alpha mu) + delta (1/2 + lip/mu))^2
///         / (alpha delta (mu/2 - lip^2/mu) + 2 lip/mu - 1)
///
/// Defined for delta below max_stepsize(), where the denominator is positive.
inline double ifp_index_dt(double alpha, double delta, double mu, double lip) {
    require(alpha > 0.0, "ifp_index_dt: alpha must be positive");
    require(mu > 0.0, "ifp_index_dt: mu must be positive");
    require(lip >= mu, "ifp_index_dt: lip must be >= mu");
    require(delta > 0.0, "ifp_index_dt: delta must be positive");
    const double den = alpha * delta * (mu / 2.0 - lip * lip / mu) + 2.0 * lip / mu - 1.0;
    if (den <= 0.0) {
        throw std::invalid_argument("ifp_index_dt: stepsize too large (bound " +
                                    std::to_string(max_stepsize(alpha, mu, lip)) + ")");
    }
    const double num = 1.0 / (alpha * mu) + delta * (0.5 + lip / mu);
    return -num * num / den;
}

/// Sharp variant of ifp_index_dt: the smallest-magnitude index for which the
/// one-step dissipation inequality is guaranteed over every curvature value
/// in [mu, lip], not just the worst-case substitution used by the closed-form
/// certificate. The maximization runs over the curvature interval; the extra
/// delta/(alpha mu) accounts for the input term of the storage difference.
/// Recovers ifp_index_ct as delta -> 0 for every (mu, lip).
inline double ifp_index_dt_tight(double alpha, double delta, double mu, double lip) {
    require(alpha > 0.0, "ifp_index_dt_tight: alpha must be positive");
    require(mu > 0.0, "ifp_index_dt_tight: mu must be positive");
    require(lip >= mu, "ifp_index_dt_tight: lip must be >= mu");
    require(delta > 0.0 && delta < max_stepsize(alpha, mu, lip),
            "ifp_index_dt_tight: delta outside admissible range");
    auto ratio = [&](double b) {
        const double m11 = alpha * delta * b * b / mu - 2.0 * b / mu + 1.0 - alpha * delta * mu / 2.0;
        const double m12 = 1.0 / (alpha * mu) + delta / 2.0 - delta * b / mu;
        require(m11 < 0.0, "ifp_index_dt_tight: curvature block not negative");
        return m12 * m12 / (-m11);
    };
    // ratio of quadratics in the curvature; a fine grid with endpoints is
    // accurate to O(grid^2) which is far below the use sites' tolerances
    const int grid = 4096;
    double worst = 0.0;
    for (int k = 0; k <= grid; ++k) {
        worst = std::max(worst, ratio(mu + (lip - mu) * k / grid));
    }
    return -(worst + delta / (alpha * mu));
}

/// Gain condition: |nu_i| * beta * d_in_max_i < 1/2 for every agent.
inline bool gain_condition(std::span<const double> index_magnitudes, double beta,
                           std::span<const double> max_in_degree) {
    require(index_magnitudes.size() == max_in_degree.size(),
            "gain_condition: size mismatch");
    require(beta >= 0.0, "gain_condition: beta must be nonnegative");
    for (std::size_t i = 0; i < index_magnitudes.size(); ++i) {
        if (index_magnitudes[i] * beta * max_in_degree[i] >= 0.5) return false;
    }
    return true;
}

/// Supremum of admissible coupling gains, min_i 1/(2 |nu_i| d_i); the gain
/// condition holds strictly below it. Infinite when no agent ever has an
/// in-neighbor.
inline double beta_supremum(std::span<const double> index_magnitudes,
                            std::span<const double> max_in_degree) {
    require(index_magnitudes.size() == max_in_degree.size(), "beta_supremum: size mismatch");
    double sup = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < index_magnitudes.size(); ++i) {
        const double prod = index_magnitudes[i] * max_in_degree[i];
        if (prod > 0.0) sup = std::min(sup, 0.5 / prod);
    }
    return sup;
}

/// With beta fixed, the smallest continuous-time gradient gain that satisfies
/// the gain condition for an agent: alpha > sqrt(2 beta d) / mu.
inline double min_alpha_ct(double beta, double mu, double d_in_max) {
    require(beta >= 0.0, "min_alpha_ct: beta must be nonnegative");
    require(mu > 0.0, "min_alpha_ct: mu must be positive");
    require(d_in_max >= 0.0, "min_alpha_ct: degree must be nonnegative");
    return std::sqrt(2.0 * beta * d_in_max) / mu;
}

/// Worst-case 2x2 matrix behind the discrete-time certificate and its
/// negative-semidefiniteness verdict (trace/determinant test, tol 1e-12).
struct CertificateMatrix {
    Eigen::Matrix2d m;
    double det = 0.0;
    double trace = 0.0;
    bool negative_semidefinite = false;
};

/// Builds [[alpha delta lip^2/mu - 2 lip/mu + 1 - alpha delta mu/2,
///          1/(alpha mu) + delta/2 + delta lip/mu], [sym, nu_candidate]].
/// At nu_candidate = ifp_index_dt(...) the determinant vanishes by
/// construction; any larger candidate makes the matrix indefinite.
inline CertificateMatrix dt_passivity_certificate(double alpha, double delta, double mu,
                                                  double lip, double nu_candidate) {
    require(alpha > 0.0, "dt_passivity_certificate: alpha must be positive");
    require(mu > 0.0, "dt_passivity_certificate: mu must be positive");
    require(lip >= mu, "dt_passivity_certificate: lip must be >= mu");
    require(delta >= 0.0, "dt_passivity_certificate: delta must be nonnegative");
    CertificateMatrix c;
    c.m(0, 0) = alpha * delta * lip * lip / mu - 2.0 * lip / mu + 1.0 - alpha * delta * mu / 2.0;
    c.m(0, 1) = 1.0 / (alpha * mu) + delta / 2.0 + delta * lip / mu;
    c.m(1, 0) = c.m(0, 1);
    c.m(1, 1) = nu_candidate;
    c.det = c.m(0, 0) * c.m(1, 1) - c.m(0, 1) * c.m(1, 0);
    c.trace = c.m(0, 0) + c.m(1, 1);
    constexpr double tol = 1e-12;
    c.negative_semidefinite = c.trace <= tol && c.det >= -tol;
    return c;
}

/// Per-agent design summary: both indices, the stepsize ceiling, and the
/// coupling-gain suprema implied by the agent's worst in-degree.
struct PassivityCertificate {
    int agent = 0;
    double mu = 0.0;
    double lip = 0.0;
    double alpha = 0.0;
    std::optional<double> delta;
    double d_in_max = 0.0;
    double nu_ct = 0.0;
    std::optional<double> nu_dt;
    double delta_max = 0.0;
    double beta_max_ct = 0.0;
    std::optional<double> beta_max_dt;
};

inline PassivityCertificate certify_agent(int agent, double alpha, std::optional<double> delta,
                                          double mu, double lip, double d_in_max) {
    PassivityCertificate c;
    c.agent = agent;
    c.mu = mu;
    c.lip = lip;
    c.alpha = alpha;
    c.delta = delta;
    c.d_in_max = d_in_max;
    c.nu_ct = ifp_index_ct(alpha, mu);
    c.delta_max = max_stepsize(alpha, mu, lip);
    const double dct[1] = {d_in_max};
    const double nct[1] = {-c.nu_ct};
    c.beta_max_ct = beta_supremum(nct, dct);
    if (delta) {
        c.nu_dt = ifp_index_dt(alpha, *delta, mu, lip);
        const double ndt[1] = {-*c.nu_dt};
        c.beta_max_dt = beta_supremum(ndt, dct);
    }
    return c;
}

}  // namespace etdopt
