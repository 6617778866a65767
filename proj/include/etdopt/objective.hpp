#pragma once

// Local objective functions and their convexity metadata, the averaged
// Hessian, and a centralized solver for the aggregate optimum used as the
// reference oracle by both simulation engines.

#include "etdopt/common.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace etdopt {

enum class ObjectiveKind { Quadratic, SinQuadratic, LogExpQuadratic, Custom };

/// A local objective f_i: evaluators plus certified strong-convexity modulus
/// mu and gradient Lipschitz constant lip (lip >= mu > 0). The constants are
/// declared, not estimated; verify_objective() checks them by sampling.
struct ObjectiveSpec {
    int id = 0;
    ObjectiveKind kind = ObjectiveKind::Custom;
    int dim = 1;
    double mu = 0.0;
    double lip = 0.0;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<Matrix(const Vector&)> hessian;  // may be empty

    void validate() const {
        require(mu > 0.0, "objective " + std::to_string(id) + ": mu must be positive");
        require(lip >= mu, "objective " + std::to_string(id) + ": lip must be >= mu");
        require(dim >= 1 && dim <= 8, "objective " + std::to_string(id) + ": dim must be in [1,8]");
        require(static_cast<bool>(value) && static_cast<bool>(gradient),
                "objective " + std::to_string(id) + ": value and gradient evaluators required");
    }
};

namespace detail {

inline void check_input(const ObjectiveSpec& spec, const Vector& x) {
    require(x.size() == spec.dim, "objective " + std::to_string(spec.id) + ": dimension mismatch");
    require(x.allFinite(), "objective " + std::to_string(spec.id) + ": non-finite input");
}

// Numerically stable logistic 1/(1+exp(-t)).
inline double logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Numerically stable log(1+exp(t)).
inline double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

}  // namespace detail

inline double eval_value(const ObjectiveSpec& spec, const Vector& x) {
    detail::check_input(spec, x);
    return spec.value(x);
}

inline Vector eval_gradient(const ObjectiveSpec& spec, const Vector& x) {
    detail::check_input(spec, x);
    return spec.gradient(x);
}

// ---------------------------------------------------------------------------
// Built-in catalog (scalar objectives)
// ---------------------------------------------------------------------------

/// f(x) = a/2 x^2 + b x + c with a > 0; mu = lip = a.
inline ObjectiveSpec make_quadratic(int id, double a, double b, double c) {
    require(a > 0.0, "quad: leading coefficient must be positive");
    ObjectiveSpec s;
    s.id = id;
    s.kind = ObjectiveKind::Quadratic;
    s.mu = a;
    s.lip = a;
    s.value = [a, b, c](const Vector& x) { return 0.5 * a * x[0] * x[0] + b * x[0] + c; };
    s.gradient = [a, b](const Vector& x) { return Vector::Constant(1, a * x[0] + b); };
    s.hessian = [a](const Vector&) { return Matrix::Constant(1, 1, a); };
    return s;
}

/// f(x) = x^2 + sin x; curvature 2 - sin x ranges over [1,3].
inline ObjectiveSpec make_sin_quadratic(int id) {
    ObjectiveSpec s;
    s.id = id;
    s.kind = ObjectiveKind::SinQuadratic;
    s.mu = 1.0;
    s.lip = 3.0;
    s.value = [](const Vector& x) { return x[0] * x[0] + std::sin(x[0]); };
    s.gradient = [](const Vector& x) { return Vector::Constant(1, 2.0 * x[0] + std::cos(x[0])); };
    s.hessian = [](const Vector& x) { return Matrix::Constant(1, 1, 2.0 - std::sin(x[0])); };
    return s;
}

/// f(x) = ln(e^{2x} + 1) + 0.5 x^2; curvature in [1,2].
inline ObjectiveSpec make_log_exp_1(int id) {
    using detail::logistic;
    using detail::softplus;
    ObjectiveSpec s;
    s.id = id;
    s.kind = ObjectiveKind::LogExpQuadratic;
    s.mu = 1.0;
    s.lip = 2.0;
    s.value = [](const Vector& x) { return softplus(2.0 * x[0]) + 0.5 * x[0] * x[0]; };
    s.gradient = [](const Vector& x) {
        return Vector::Constant(1, 2.0 * logistic(2.0 * x[0]) + x[0]);
    };
    s.hessian = [](const Vector& x) {
        const double p = logistic(2.0 * x[0]);
        return Matrix::Constant(1, 1, 4.0 * p * (1.0 - p) + 1.0);
    };
    return s;
}

/// f(x) = ln(e^{2x} + e^{-0.2x}) + 0.6 x^2; curvature in [1.2, 2.41].
inline ObjectiveSpec make_log_exp_2(int id) {
    using detail::logistic;
    using detail::softplus;
    ObjectiveSpec s;
    s.id = id;
    s.kind = ObjectiveKind::LogExpQuadratic;
    s.mu = 1.2;
    s.lip = 2.41;
    // ln(e^{2x} + e^{-0.2x}) = -0.2x + ln(1 + e^{2.2x})
    s.value = [](const Vector& x) {
        return -0.2 * x[0] + softplus(2.2 * x[0]) + 0.6 * x[0] * x[0];
    };
    s.gradient = [](const Vector& x) {
        return Vector::Constant(1, -0.2 + 2.2 * logistic(2.2 * x[0]) + 1.2 * x[0]);
    };
    s.hessian = [](const Vector& x) {
        const double p = logistic(2.2 * x[0]);
        return Matrix::Constant(1, 1, 2.2 * 2.2 * p * (1.0 - p) + 1.2);
    };
    return s;
}

inline ObjectiveSpec make_custom(int id, int dim, double mu, double lip,
                                 std::function<double(const Vector&)> value,
                                 std::function<Vector(const Vector&)> gradient,
                                 std::function<Matrix(const Vector&)> hessian = {}) {
    ObjectiveSpec s;
    s.id = id;
    s.kind = ObjectiveKind::Custom;
    s.dim = dim;
    s.mu = mu;
    s.lip = lip;
    s.value = std::move(value);
    s.gradient = std::move(gradient);
    s.hessian = std::move(hessian);
    s.validate();
    return s;
}

/// Parses a catalog name: "quad(a,b,c)", "sinquad", "logexp1", "logexp2".
inline ObjectiveSpec parse_objective(const std::string& name, int id) {
    if (name == "sinquad") return make_sin_quadratic(id);
    if (name == "logexp1") return make_log_exp_1(id);
    if (name == "logexp2") return make_log_exp_2(id);
    if (name.rfind("quad(", 0) == 0 && name.back() == ')') {
        std::istringstream in(name.substr(5, name.size() - 6));
        double a, b, c;
        char c1 = 0, c2 = 0;
        if ((in >> a >> c1 >> b >> c2 >> c) && c1 == ',' && c2 == ',') {
            std::string rest;
            if (!(in >> rest)) return make_quadratic(id, a, b, c);
        }
        throw std::invalid_argument("objective '" + name + "': expected quad(a,b,c)");
    }
    throw std::invalid_argument("unknown objective '" + name +
                                "' (accepted: quad(a,b,c), sinquad, logexp1, logexp2)");
}

/// The built-in five-agent catalog used by the `reproduce-paper` scenario.
inline std::vector<ObjectiveSpec> reference_catalog() {
    std::vector<ObjectiveSpec> specs;
    specs.push_back(make_quadratic(0, 1.0, 3.0, 1.0));
    specs.push_back(make_quadratic(1, 1.0, -1.0, 0.0));
    specs.push_back(make_sin_quadratic(2));
    specs.push_back(make_log_exp_1(3));
    specs.push_back(make_log_exp_2(4));
    return specs;
}

// ---------------------------------------------------------------------------
// Sampled verification of declared (mu, lip)
// ---------------------------------------------------------------------------

/// Checks the strong-monotonicity and Lipschitz inequalities on sampled pairs
/// drawn from [-box, box]^dim. Tolerance is scaled by ||x-y||^2 (resp.
/// ||x-y||) so the test is meaningful across magnitudes.
inline bool verify_objective(const ObjectiveSpec& spec, int n_samples = 10000,
                             std::uint64_t seed = 7, double tol = 1e-9, double box = 5.0) {
    spec.validate();
    std::mt19937_64 rng(seed);
    Vector x(spec.dim), y(spec.dim);
    for (int k = 0; k < n_samples; ++k) {
        for (int i = 0; i < spec.dim; ++i) {
            x[i] = box * (2.0 * uniform01(rng) - 1.0);
            y[i] = box * (2.0 * uniform01(rng) - 1.0);
        }
        const Vector d = x - y;
        const double d2 = d.squaredNorm();
        if (d2 == 0.0) continue;
        const Vector dg = spec.gradient(x) - spec.gradient(y);
        if (dg.dot(d) < spec.mu * d2 - tol * d2) return false;
        if (dg.norm() > spec.lip * std::sqrt(d2) + tol * std::sqrt(d2)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Averaged Hessian
// ---------------------------------------------------------------------------

namespace detail {

/// Gauss-Legendre nodes/weights on [0,1], computed by Newton iteration on the
/// Legendre recurrence. Deterministic to machine precision.
inline const std::pair<std::vector<double>, std::vector<double>>& gauss_legendre_01(int n) {
    static const int cached_n = n;
    require(n == cached_n, "gauss_legendre_01: single cached order supported");
    static const auto table = [n]() {
        std::vector<double> nodes(n), weights(n);
        for (int i = 0; i < n; ++i) {
            // root of P_n, refined by Newton
            double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            nodes[i] = 0.5 * (x + 1.0);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        return std::make_pair(nodes, weights);
    }();
    return table;
}

}  // namespace detail

/// B = integral over tau in [0,1] of hessian(x_ref + tau (x - x_ref)), by
/// 64-point Gauss-Legendre quadrature. Satisfies
/// gradient(x) - gradient(x_ref) = B (x - x_ref) up to the quadrature
/// tolerance; a residual above `tol` raises an accuracy error.
inline Matrix averaged_hessian(const ObjectiveSpec& spec, const Vector& x, const Vector& x_ref,
                               double tol = 1e-8) {
    detail::check_input(spec, x);
    detail::check_input(spec, x_ref);
    require(static_cast<bool>(spec.hessian),
            "objective " + std::to_string(spec.id) + ": hessian evaluator required");
    const auto& [nodes, weights] = detail::gauss_legendre_01(64);
    Matrix b = Matrix::Zero(spec.dim, spec.dim);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        b += weights[k] * spec.hessian(x_ref + nodes[k] * (x - x_ref));
    }
    const double residual = (spec.gradient(x) - spec.gradient(x_ref) - b * (x - x_ref)).norm();
    if (residual > tol) {
        throw std::runtime_error("averaged_hessian: quadrature residual " +
                                 std::to_string(residual) + " exceeds tolerance");
    }
    return b;
}

// ---------------------------------------------------------------------------
// Centralized optimum
// ---------------------------------------------------------------------------

struct OptimumSolution {
    Vector x_star;
    std::vector<Vector> lambda_star;  // -alpha * grad f_i(x_star), per agent
    double residual = 0.0;            // || sum_i grad f_i(x_star) ||
};

namespace detail {

inline Vector aggregate_gradient(const std::vector<ObjectiveSpec>& specs, const Vector& x) {
    Vector g = Vector::Zero(x.size());
    for (const auto& s : specs) g += s.gradient(x);
    return g;
}

inline Matrix aggregate_hessian(const std::vector<ObjectiveSpec>& specs, const Vector& x) {
    Matrix h = Matrix::Zero(x.size(), x.size());
    for (const auto& s : specs) {
        if (s.hessian) {
            h += s.hessian(x);
        } else {
            // central difference on the gradient
            const double step = 1e-6;
            for (int j = 0; j < x.size(); ++j) {
                Vector xp = x, xm = x;
                xp[j] += step;
                xm[j] -= step;
                h.col(j) += (s.gradient(xp) - s.gradient(xm)) / (2.0 * step);
            }
        }
    }
    return h;
}

}  // namespace detail

/// Solves min_x sum_i f_i(x) via the aggregate gradient's root. In one
/// dimension the gradient is strictly increasing, so the root is bracketed by
/// doubling, bisected, then polished with Newton; in higher dimensions a
/// damped Newton iteration on the gradient norm is used.
inline OptimumSolution solve_centralized_optimum(const std::vector<ObjectiveSpec>& specs,
                                                 double alpha, double tol = 1e-10) {
    require(!specs.empty(), "solve_centralized_optimum: no objectives");
    require(alpha > 0.0, "solve_centralized_optimum: alpha must be positive");
    require(tol > 0.0, "solve_centralized_optimum: tol must be positive");
    const int dim = specs.front().dim;
    for (const auto& s : specs) {
        s.validate();
        require(s.dim == dim, "solve_centralized_optimum: mixed dimensions");
    }

    Vector x = Vector::Zero(dim);
    const int max_iter = 200;

    if (dim == 1) {
        auto g = [&](double v) { return detail::aggregate_gradient(specs, Vector::Constant(1, v))[0]; };
        double lo = -1.0, hi = 1.0;
        int guard = 0;
        while (g(lo) > 0.0) {
            lo *= 2.0;
            if (++guard > 200) throw std::runtime_error("optimum solver: bracket not found");
        }
        while (g(hi) < 0.0) {
            hi *= 2.0;
            if (++guard > 200) throw std::runtime_error("optimum solver: bracket not found");
        }
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? hi : lo) = mid;
        }
        x[0] = 0.5 * (lo + hi);
        // Newton polish
        for (int it = 0; it < max_iter && std::abs(g(x[0])) > tol; ++it) {
            const double slope = detail::aggregate_hessian(specs, x)(0, 0);
            if (slope <= 0.0) break;
            x[0] -= g(x[0]) / slope;
        }
        if (std::abs(g(x[0])) > tol) {
            throw std::runtime_error("optimum solver: did not reach tolerance");
        }
    } else {
        Vector g = detail::aggregate_gradient(specs, x);
        int it = 0;
        while (g.norm() > tol) {
            if (++it > max_iter) {
                throw std::runtime_error("optimum solver: iteration cap exceeded");
            }
            const Matrix h = detail::aggregate_hessian(specs, x);
            const Vector step = h.ldlt().solve(g);
            double scale = 1.0;
            const double g0 = g.norm();
            while (scale > 1e-8 &&
                   detail::aggregate_gradient(specs, x - scale * step).norm() >= g0) {
                scale *= 0.5;
            }
            x -= scale * step;
            g = detail::aggregate_gradient(specs, x);
        }
    }

    OptimumSolution sol;
    sol.x_star = x;
    sol.lambda_star.reserve(specs.size());
    for (const auto& s : specs) sol.lambda_star.push_back(-alpha * s.gradient(x));
    sol.residual = detail::aggregate_gradient(specs, x).norm();
    return sol;
}

}  // namespace etdopt
