#pragma once

// Time-indexed simulation records, run-level metrics, and their serialized
// forms (CSV trace, JSON metrics). Number formatting is fixed so identical
// runs produce byte-identical files.

#include "etdopt/common.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace etdopt {

struct AgentSample {
    Vector x;
    Vector lambda;
    Vector xhat;
    Vector z;  // alpha grad f(x) + lambda; recorded by the discrete-time engine
    bool triggered = false;
};

struct TraceRecord {
    double time = 0.0;  // seconds (ct) or step index (dt)
    std::vector<AgentSample> agents;
    double v_total = 0.0;  // NaN when no optimum oracle was supplied
};

struct RunMetrics {
    double final_error = 0.0;    // max_i ||x_i - x*|| at the last step
    double consensus_gap = 0.0;  // max_ij ||x_i - x_j|| at the last step
    std::vector<long> trigger_counts;
    long eligible_samples = 0;  // (agent, step) pairs with d_in > 0
    double comm_ratio = 0.0;    // total triggers / eligible_samples (0 if none)
    long lyapunov_violations = 0;
    double lambda_sum_max = 0.0;  // max over steps of ||sum_i lambda_i||_inf
    double v_final = 0.0;
    long steps = 0;

    long total_triggers() const {
        long total = 0;
        for (long c : trigger_counts) total += c;
        return total;
    }
};

struct SimulationTrace {
    enum class Kind { Ct, Dt };
    Kind kind = Kind::Ct;
    int n_agents = 0;
    int dim = 1;
    bool has_storage = false;  // v_total column is meaningful
    std::vector<TraceRecord> records;
    RunMetrics metrics;

    void write_csv(std::ostream& out) const;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void append_vector_header(std::string& line, const std::string& name, int dim) {
    if (dim == 1) {
        line += ',' + name;
    } else {
        for (int k = 0; k < dim; ++k) line += ',' + name + '_' + std::to_string(k);
    }
}

inline void append_vector(std::string& line, const Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) line += ',' + format_double(v[k]);
}

}  // namespace detail

inline void SimulationTrace::write_csv(std::ostream& out) const {
    std::string header = kind == Kind::Ct ? "t" : "k";
    header += ",agent";
    detail::append_vector_header(header, "x", dim);
    detail::append_vector_header(header, "lambda", dim);
    detail::append_vector_header(header, "xhat", dim);
    if (kind == Kind::Dt) detail::append_vector_header(header, "z", dim);
    header += ",triggered,V_total\n";
    out << header;

    const std::string v_nan = "nan";
    for (const auto& rec : records) {
        const std::string time = kind == Kind::Ct
                                     ? detail::format_double(rec.time)
                                     : std::to_string(static_cast<long>(rec.time));
        const std::string v = has_storage ? detail::format_double(rec.v_total) : v_nan;
        for (int i = 0; i < n_agents; ++i) {
            const auto& a = rec.agents[static_cast<std::size_t>(i)];
            std::string line = time + ',' + std::to_string(i);
            detail::append_vector(line, a.x);
            detail::append_vector(line, a.lambda);
            detail::append_vector(line, a.xhat);
            if (kind == Kind::Dt) detail::append_vector(line, a.z);
            line += ',';
            line += a.triggered ? '1' : '0';
            line += ',' + v + '\n';
            out << line;
        }
    }
}

/// Stable metrics document; key set is part of the tool's output contract.
inline nlohmann::json metrics_to_json(const SimulationTrace& trace, const Vector& x_star,
                                      long seed) {
    const RunMetrics& m = trace.metrics;
    nlohmann::json j;
    j["schema"] = "etdopt-metrics-v1";
    j["mode"] = trace.kind == SimulationTrace::Kind::Ct ? "ct" : "dt";
    j["agents"] = trace.n_agents;
    j["dimension"] = trace.dim;
    j["seed"] = seed;
    j["steps"] = m.steps;
    j["final_error"] = m.final_error;
    j["consensus_gap"] = m.consensus_gap;
    j["trigger_counts"] = m.trigger_counts;
    j["total_triggers"] = m.total_triggers();
    j["eligible_samples"] = m.eligible_samples;
    j["comm_ratio"] = m.comm_ratio;
    j["lyapunov_violations"] = m.lyapunov_violations;
    j["lambda_sum_max"] = m.lambda_sum_max;
    j["v_final"] = m.v_final;
    j["x_star"] = std::vector<double>(x_star.data(), x_star.data() + x_star.size());
    return j;
}

}  // namespace etdopt
