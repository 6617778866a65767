// Command-line front end: certify scenario parameters, run the
// continuous-time or discrete-time simulation, sweep parameter grids, and
// reproduce the bundled reference experiment.

#include "etdopt/etdopt.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using namespace etdopt;

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<long> seed;
    std::optional<double> beta;
    std::optional<double> delta;
    std::optional<double> zeta;
    bool no_trigger = false;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool scalar_gains = true) {
    cmd->add_option("--config", opt.config_path,
                    "Scenario config file (default: the built-in reference scenario)");
    cmd->add_option("--out", opt.out_dir, "Output directory");
    cmd->add_option("--seed", opt.seed, "Override the scenario seed");
    if (scalar_gains) {
        cmd->add_option("--beta", opt.beta, "Override the coupling gain");
        cmd->add_option("--delta", opt.delta, "Override the discrete-time stepsize");
    }
    cmd->add_option("--zeta", opt.zeta, "Trigger floor (switches the policy to practical)");
    cmd->add_flag("--no-trigger", opt.no_trigger, "Broadcast every step instead of triggering");
    cmd->add_flag("--force", opt.force, "Run even when certification fails");
}

Scenario load_scenario(const CommonOptions& opt) {
    Scenario s;
    if (opt.config_path.empty()) {
        s = make_reference_scenario();
    } else {
        std::ifstream in(opt.config_path);
        if (!in) throw std::invalid_argument("cannot open config file " + opt.config_path);
        s = parse_scenario(in);
    }
    if (opt.seed) s.seed = *opt.seed;
    if (opt.beta) s.beta = *opt.beta;
    if (opt.delta) s.delta = *opt.delta;
    if (opt.zeta) {
        s.zeta = *opt.zeta;
        if (s.zeta > 0.0) s.trigger = "practical";
    }
    if (opt.no_trigger) s.trigger = "off";
    s.validate();
    return s;
}

std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw std::invalid_argument(flag + ": expected comma-separated numbers, got '" +
                                        tok + "'");
        }
    }
    return out;
}

int do_check(const CommonOptions& opt, bool as_json) {
    const Scenario scenario = load_scenario(opt);
    const CertificateReport report = certify_scenario(scenario);
    const std::string table = format_certificate(report);
    if (as_json) {
        std::cout << certificate_to_json(report).dump(2) << "\n";
    } else {
        std::cout << table;
    }
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        write_text_file(fs::path(opt.out_dir) / "certificate.txt", table);
    }
    return report.all_ok() ? 0 : 1;
}

void print_metrics_summary(const RunOutput& run) {
    const RunMetrics& m = run.trace.metrics;
    std::cout << "steps                " << m.steps << "\n"
              << "final_error          " << m.final_error << "\n"
              << "consensus_gap        " << m.consensus_gap << "\n"
              << "total_triggers       " << m.total_triggers() << "\n"
              << "comm_ratio           " << m.comm_ratio << "\n"
              << "lyapunov_violations  " << m.lyapunov_violations << "\n"
              << "lambda_sum_max       " << m.lambda_sum_max << "\n";
}

int do_run(const CommonOptions& opt, RunMode mode) {
    const Scenario scenario = load_scenario(opt);
    const CertificateReport report = certify_scenario(scenario);
    const bool certified = mode == RunMode::Ct
                               ? report.gain_ct_ok
                               : report.stepsize_ok && report.gain_dt_ok;
    if (!certified && !opt.force) {
        std::cerr << "certification failed; rerun with --force to simulate anyway\n"
                  << format_certificate(report);
        return 1;
    }
    RunOutput run;
    try {
        run = run_scenario(scenario, mode, opt.force);
    } catch (const std::runtime_error& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
    const fs::path dir = opt.out_dir.empty() ? fs::path("out") : fs::path(opt.out_dir);
    write_run_outputs(dir, run);
    write_text_file(dir / "certificate.txt", format_certificate(report));
    std::cout << (mode == RunMode::Ct ? "continuous-time" : "discrete-time") << " run: "
              << dir.string() << "/{trace.csv, metrics.json, certificate.txt}\n";
    print_metrics_summary(run);
    return 0;
}

int do_sweep(const CommonOptions& opt, const std::string& mode_name,
             const std::string& beta_grid, const std::string& delta_grid, int jobs) {
    const Scenario scenario = load_scenario(opt);
    const RunMode mode = mode_name == "ct" ? RunMode::Ct : RunMode::Dt;
    const auto points = sweep_scenario(scenario, mode, parse_grid(beta_grid, "--beta"),
                                       parse_grid(delta_grid, "--delta"), jobs);
    for (const auto& p : points) {
        if (p.status != "ok") {
            std::cerr << "warning: point " << p.index << " (beta=" << p.beta
                      << ", delta=" << p.delta << ") skipped: " << p.reason << "\n";
        }
    }
    const std::string csv = format_sweep_csv(points);
    std::cout << csv;
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        write_text_file(fs::path(opt.out_dir) / "sweep.csv", csv);
    }
    return 0;
}

int do_reproduce(const CommonOptions& base, const std::string& which) {
    auto run_one = [&](RunMode mode, const fs::path& dir) {
        CommonOptions opt = base;
        opt.config_path.clear();  // always the built-in scenario
        opt.out_dir = dir.string();
        if (!opt.beta) opt.beta = mode == RunMode::Ct ? 0.2 : 0.1;
        return do_run(opt, mode);
    };
    const fs::path out = base.out_dir.empty() ? fs::path("out") : fs::path(base.out_dir);
    if (which == "ct") return run_one(RunMode::Ct, out);
    if (which == "dt") return run_one(RunMode::Dt, out);
    const int rc_ct = run_one(RunMode::Ct, out / "ct");
    const int rc_dt = run_one(RunMode::Dt, out / "dt");
    return rc_ct != 0 ? rc_ct : rc_dt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Passivity-certified distributed optimization with event-triggered "
                 "communication over switching weight-balanced digraphs"};
    app.require_subcommand(1);

    CommonOptions check_opt;
    bool check_json = false;
    auto* check = app.add_subcommand("check", "Certify scenario parameters");
    add_common(check, check_opt);
    check->add_flag("--json", check_json, "Emit the certificate as JSON");

    CommonOptions ct_opt;
    auto* run_ct_cmd = app.add_subcommand("run-ct", "Run the continuous-time simulation");
    add_common(run_ct_cmd, ct_opt);

    CommonOptions dt_opt;
    auto* run_dt_cmd = app.add_subcommand("run-dt", "Run the discrete-time simulation");
    add_common(run_dt_cmd, dt_opt);

    CommonOptions sweep_opt;
    std::string sweep_mode = "dt", sweep_betas, sweep_deltas;
    int sweep_jobs = 0;
    auto* sweep = app.add_subcommand("sweep", "Run a beta/delta grid and tabulate metrics");
    add_common(sweep, sweep_opt, /*scalar_gains=*/false);
    sweep->add_option("--mode", sweep_mode, "ct or dt (default dt)")
        ->check(CLI::IsMember({"ct", "dt"}));
    sweep->add_option("--beta", sweep_betas, "Comma-separated coupling gains");
    sweep->add_option("--delta", sweep_deltas, "Comma-separated stepsizes (dt only)");
    sweep->add_option("--jobs", sweep_jobs, "Worker threads (default: hardware)");

    CommonOptions repro_opt;
    std::string repro_mode = "both";
    auto* repro = app.add_subcommand(
        "reproduce-paper", "Run the bundled reference experiment end to end");
    add_common(repro, repro_opt);
    repro->add_option("mode", repro_mode, "ct, dt, or both (default both)")
        ->check(CLI::IsMember({"ct", "dt", "both"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) return do_check(check_opt, check_json);
        if (run_ct_cmd->parsed()) return do_run(ct_opt, RunMode::Ct);
        if (run_dt_cmd->parsed()) return do_run(dt_opt, RunMode::Dt);
        if (sweep->parsed()) return do_sweep(sweep_opt, sweep_mode, sweep_betas, sweep_deltas,
                                             sweep_jobs);
        if (repro->parsed()) return do_reproduce(repro_opt, repro_mode);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
