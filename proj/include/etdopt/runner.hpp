#pragma once

// Orchestration on top of the engines: parameter certification for a
// scenario, full simulation runs with the optimum oracle attached, and
// deterministic parameter sweeps on a small worker pool.

#include "etdopt/common.hpp"
#include "etdopt/ct_engine.hpp"
#include "etdopt/dt_engine.hpp"
#include "etdopt/scenario.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace etdopt {

enum class RunMode { Ct, Dt };

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

struct CertificateReport {
    double alpha = 0.0;
    double delta = 0.0;
    double beta = 0.0;
    std::vector<PassivityCertificate> agents;
    double delta_bound = 0.0;  // min over agents of the stepsize ceiling
    double beta_sup_ct = 0.0;  // admissible coupling-gain suprema (open)
    double beta_sup_dt = 0.0;
    bool stepsize_ok = false;  // delta strictly below the bound
    bool gain_ct_ok = false;   // beta strictly below the supremum
    bool gain_dt_ok = false;

    bool all_ok() const { return stepsize_ok && gain_ct_ok && gain_dt_ok; }
};

inline CertificateReport certify_scenario(const Scenario& scenario) {
    scenario.validate();
    const auto specs = scenario.build_specs();
    const GraphSchedule schedule = scenario.schedule_ct();
    const Vector d_max = schedule.max_in_degrees();

    CertificateReport report;
    report.alpha = scenario.alpha;
    report.delta = scenario.delta;
    report.beta = scenario.beta;
    report.delta_bound = std::numeric_limits<double>::infinity();
    report.beta_sup_ct = std::numeric_limits<double>::infinity();
    report.beta_sup_dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const bool delta_valid =
            scenario.delta < max_stepsize(scenario.alpha, specs[i].mu, specs[i].lip);
        auto cert = certify_agent(static_cast<int>(i), scenario.alpha,
                                  delta_valid ? std::optional<double>(scenario.delta)
                                              : std::nullopt,
                                  specs[i].mu, specs[i].lip,
                                  d_max[static_cast<Eigen::Index>(i)]);
        report.delta_bound = std::min(report.delta_bound, cert.delta_max);
        report.beta_sup_ct = std::min(report.beta_sup_ct, cert.beta_max_ct);
        if (cert.beta_max_dt) report.beta_sup_dt = std::min(report.beta_sup_dt, *cert.beta_max_dt);
        report.agents.push_back(std::move(cert));
    }
    report.stepsize_ok = scenario.delta < report.delta_bound;
    report.gain_ct_ok = scenario.beta < report.beta_sup_ct;
    report.gain_dt_ok = report.stepsize_ok && scenario.beta < report.beta_sup_dt;
    return report;
}

namespace detail {

inline std::string fixed(double v, int width = 10, int prec = 4) {
    char buf[64];
    if (std::isinf(v)) {
        std::snprintf(buf, sizeof(buf), "%*s", width, "inf");
    } else {
        std::snprintf(buf, sizeof(buf), "%*.*f", width, prec, v);
    }
    return buf;
}

}  // namespace detail

inline std::string format_certificate(const CertificateReport& r) {
    using detail::fixed;
    std::string out;
    out += "agent         mu          l         nu        nu~  delta_max  beta_max_ct  beta_max_dt\n";
    for (const auto& a : r.agents) {
        char head[16];
        std::snprintf(head, sizeof(head), "%5d", a.agent);
        out += head;
        out += fixed(a.mu) + fixed(a.lip, 11) + fixed(a.nu_ct, 11);
        out += a.nu_dt ? fixed(*a.nu_dt, 11) : std::string(11 - 3, ' ') + "---";
        out += fixed(a.delta_max, 11) + fixed(a.beta_max_ct, 13);
        out += a.beta_max_dt ? fixed(*a.beta_max_dt, 13) : std::string(13 - 3, ' ') + "---";
        out += '\n';
    }
    out += "\nnetwork bounds:  delta < " + detail::fixed(r.delta_bound, 0, 4);
    out += "   beta_ct < " + detail::fixed(r.beta_sup_ct, 0, 4);
    out += "   beta_dt < " + detail::fixed(r.beta_sup_dt, 0, 4) + "\n";
    char line[160];
    std::snprintf(line, sizeof(line),
                  "requested:       alpha = %g, delta = %g (%s), beta = %g (ct %s, dt %s)\n",
                  r.alpha, r.delta, r.stepsize_ok ? "ok" : "TOO LARGE", r.beta,
                  r.gain_ct_ok ? "ok" : "TOO LARGE", r.gain_dt_ok ? "ok" : "TOO LARGE");
    out += line;
    return out;
}

inline nlohmann::json certificate_to_json(const CertificateReport& r) {
    nlohmann::json j;
    j["schema"] = "etdopt-certificate-v1";
    j["alpha"] = r.alpha;
    j["delta"] = r.delta;
    j["beta"] = r.beta;
    j["delta_bound"] = r.delta_bound;
    j["beta_sup_ct"] = r.beta_sup_ct;
    j["beta_sup_dt"] = r.beta_sup_dt;
    j["stepsize_ok"] = r.stepsize_ok;
    j["gain_ct_ok"] = r.gain_ct_ok;
    j["gain_dt_ok"] = r.gain_dt_ok;
    j["ok"] = r.all_ok();
    j["agents"] = nlohmann::json::array();
    for (const auto& a : r.agents) {
        nlohmann::json row;
        row["agent"] = a.agent;
        row["mu"] = a.mu;
        row["lip"] = a.lip;
        row["d_in_max"] = a.d_in_max;
        row["nu_ct"] = a.nu_ct;
        if (a.nu_dt) row["nu_dt"] = *a.nu_dt;
        row["delta_max"] = a.delta_max;
        row["beta_max_ct"] = a.beta_max_ct;
        if (a.beta_max_dt) row["beta_max_dt"] = *a.beta_max_dt;
        j["agents"].push_back(std::move(row));
    }
    return j;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunOutput {
    SimulationTrace trace;
    OptimumSolution optimum;
    long seed = 0;
};

/// Tolerance of the optimum oracle solved before every run.
inline constexpr double kOptimumTol = 1e-10;

inline RunOutput run_scenario(const Scenario& scenario, RunMode mode, bool force = false) {
    scenario.validate();
    const auto specs = scenario.build_specs();
    RunOutput out;
    out.seed = scenario.seed;
    out.optimum = solve_centralized_optimum(specs, scenario.alpha, kOptimumTol);
    const TriggerPolicy policy = scenario.policy();
    if (mode == RunMode::Ct) {
        CtConfig config;
        config.alpha = scenario.alpha;
        config.beta = scenario.beta;
        config.h = scenario.h;
        config.t_final = scenario.t_final;
        config.x0 = scenario.initial_x();
        config.lambda0 = scenario.initial_lambda();
        config.record_every = scenario.record_every;
        config.force = force;
        out.trace = run_ct(config, specs, scenario.schedule_ct(), policy, &out.optimum);
    } else {
        DtConfig config;
        config.alpha = scenario.alpha;
        config.beta = scenario.beta;
        config.delta = scenario.delta;
        config.k_final = scenario.k_final;
        config.x0 = scenario.initial_x();
        config.lambda0 = scenario.initial_lambda();
        config.record_every = scenario.record_every;
        config.force = force;
        out.trace = run_dt(config, specs, scenario.schedule_dt(), policy, &out.optimum);
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
}

/// Writes trace.csv and metrics.json into the output directory.
inline void write_run_outputs(const std::filesystem::path& dir, const RunOutput& run) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "trace.csv", std::ios::binary);
        if (!out) throw std::runtime_error("cannot open trace.csv for writing");
        run.trace.write_csv(out);
    }
    write_text_file(dir / "metrics.json",
                    metrics_to_json(run.trace, run.optimum.x_star, run.seed).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
    std::size_t index = 0;
    RunMode mode = RunMode::Dt;
    double beta = 0.0;
    double delta = 0.0;
    std::string status;  // "ok" or "skipped"
    std::string reason;  // set when skipped
    RunMetrics metrics;
};

/// Grid = betas x deltas (an empty list stands for the scenario's own value;
/// both empty yields an empty table). Points failing certification are
/// skipped with a reason. Runs execute on `jobs` workers; results keep grid
/// order. Every point reuses the scenario seed, so initial states match
/// across the grid.
inline std::vector<SweepPoint> sweep_scenario(const Scenario& scenario, RunMode mode,
                                              std::vector<double> betas,
                                              std::vector<double> deltas, int jobs = 0) {
    scenario.validate();
    if (betas.empty() && deltas.empty()) return {};
    if (betas.empty()) betas.push_back(scenario.beta);
    if (mode == RunMode::Ct) {
        require(deltas.empty(), "sweep: delta grid applies to the discrete-time mode only");
        deltas.push_back(scenario.delta);  // placeholder, unused by ct runs
    }
    if (deltas.empty()) deltas.push_back(scenario.delta);

    std::vector<SweepPoint> points;
    for (double d : deltas) {
        for (double b : betas) {
            SweepPoint p;
            p.index = points.size();
            p.mode = mode;
            p.beta = b;
            p.delta = d;
            points.push_back(p);
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) {
            SweepPoint& p = points[i];
            Scenario local = scenario;
            local.beta = p.beta;
            local.delta = p.delta;
            const CertificateReport cert = certify_scenario(local);
            const bool ok = mode == RunMode::Ct ? cert.gain_ct_ok
                                                : cert.stepsize_ok && cert.gain_dt_ok;
            if (!ok) {
                p.status = "skipped";
                if (mode == RunMode::Dt && !cert.stepsize_ok) {
                    p.reason = "stepsize above bound " + std::to_string(cert.delta_bound);
                } else {
                    p.reason = "beta above supremum " +
                               std::to_string(mode == RunMode::Ct ? cert.beta_sup_ct
                                                                  : cert.beta_sup_dt);
                }
                continue;
            }
            try {
                p.metrics = run_scenario(local, mode).trace.metrics;
                p.status = "ok";
            } catch (const std::exception& e) {
                p.status = "skipped";
                p.reason = e.what();
            }
        }
    };

    int n_workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    n_workers = std::max(1, std::min<int>(n_workers, static_cast<int>(points.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return points;
}

inline std::string format_sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out =
        "index,mode,beta,delta,status,final_error,consensus_gap,total_triggers,comm_ratio,"
        "lyapunov_violations,lambda_sum_max,reason\n";
    for (const auto& p : points) {
        out += std::to_string(p.index) + ',' + (p.mode == RunMode::Ct ? "ct" : "dt") + ',' +
               detail::format_double(p.beta) + ',' + detail::format_double(p.delta) + ',' +
               p.status + ',';
        if (p.status == "ok") {
            out += detail::format_double(p.metrics.final_error) + ',' +
                   detail::format_double(p.metrics.consensus_gap) + ',' +
                   std::to_string(p.metrics.total_triggers()) + ',' +
                   detail::format_double(p.metrics.comm_ratio) + ',' +
                   std::to_string(p.metrics.lyapunov_violations) + ',' +
                   detail::format_double(p.metrics.lambda_sum_max) + ',';
        } else {
            out += ",,,,,,";
        }
        out += p.reason + '\n';
    }
    return out;
}

}  // namespace etdopt
