#pragma once

// Scenario description: the flat key/value config format, its parser and
// validator, and the built-in reference scenario behind `reproduce-paper`.

#include "etdopt/common.hpp"
#include "etdopt/graph.hpp"
#include "etdopt/objective.hpp"
#include "etdopt/trigger.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace etdopt {

inline constexpr const char* kScenarioSchema = "etdopt-scenario-v1";

struct Scenario {
    std::string name = "scenario";
    int dimension = 1;
    std::vector<std::string> agent_names;

    double alpha = 1.0;
    double beta = 0.2;
    double c = 0.99;
    double zeta = 0.0;
    std::string trigger = "exact";  // exact | practical | off

    double h = 1e-3;
    double t_final = 60.0;
    double delta = 0.1;
    long k_final = 2000;

    long seed = 1;
    int record_every = 1;

    std::vector<Matrix> modes;
    std::vector<double> dwell;        // seconds per mode (single value: all modes)
    std::vector<double> dwell_steps;  // steps per mode; default round(dwell/delta)

    std::vector<double> x0;       // agent-major, n*dimension values; empty: seeded U[0,1)
    std::vector<double> lambda0;  // same layout; empty: zeros

    int n_agents() const { return static_cast<int>(agent_names.size()); }

    void validate() const;
    std::vector<ObjectiveSpec> build_specs() const;
    GraphSchedule schedule_ct() const;
    GraphSchedule schedule_dt() const;
    TriggerPolicy policy() const;
    std::vector<Vector> initial_x() const;
    std::vector<Vector> initial_lambda() const;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& field, const std::string& what) {
    throw std::invalid_argument("config: field '" + field + "': " + what);
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& field, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        config_error(field, "expected a number, got '" + text + "'");
    }
    if (used != text.size()) config_error(field, "trailing characters in '" + text + "'");
    return v;
}

inline long parse_integer(const std::string& field, const std::string& text) {
    const double v = parse_number(field, text);
    const long n = std::lround(v);
    if (static_cast<double>(n) != v) config_error(field, "expected an integer");
    return n;
}

inline std::vector<double> parse_number_list(const std::string& field, const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(parse_number(field, tok));
    return out;
}

// Splits on commas that are not nested inside parentheses.
inline std::vector<std::string> split_top_level(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char ch : text) {
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        if (ch == ',' && depth == 0) {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

inline Matrix parse_mode(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string row_text;
    while (std::getline(in, row_text, ';')) {
        const auto row = parse_number_list("mode", row_text);
        if (!row.empty()) rows.push_back(row);
    }
    if (rows.empty()) config_error("mode", "empty adjacency");
    Matrix a(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) {
            config_error("mode", "ragged adjacency rows");
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return a;
}

}  // namespace detail

inline Scenario parse_scenario(std::istream& in) {
    using detail::config_error;
    Scenario s;
    bool have_schema = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "schema") {
            if (value != kScenarioSchema) {
                config_error("schema", "unsupported schema '" + value + "', expected " +
                                           std::string(kScenarioSchema));
            }
            have_schema = true;
        } else if (key == "name") {
            s.name = value;
        } else if (key == "dimension") {
            s.dimension = static_cast<int>(detail::parse_integer(key, value));
        } else if (key == "agents") {
            s.agent_names = detail::split_top_level(value);
        } else if (key == "alpha") {
            s.alpha = detail::parse_number(key, value);
        } else if (key == "beta") {
            s.beta = detail::parse_number(key, value);
        } else if (key == "c") {
            s.c = detail::parse_number(key, value);
        } else if (key == "zeta") {
            s.zeta = detail::parse_number(key, value);
        } else if (key == "trigger") {
            s.trigger = value;
        } else if (key == "h") {
            s.h = detail::parse_number(key, value);
        } else if (key == "t_final") {
            s.t_final = detail::parse_number(key, value);
        } else if (key == "delta") {
            s.delta = detail::parse_number(key, value);
        } else if (key == "k_final") {
            s.k_final = detail::parse_integer(key, value);
        } else if (key == "seed") {
            s.seed = detail::parse_integer(key, value);
        } else if (key == "record_every") {
            s.record_every = static_cast<int>(detail::parse_integer(key, value));
        } else if (key == "mode") {
            s.modes.push_back(detail::parse_mode(value));
        } else if (key == "dwell") {
            for (double v : detail::parse_number_list(key, value)) s.dwell.push_back(v);
        } else if (key == "dwell_steps") {
            for (double v : detail::parse_number_list(key, value)) s.dwell_steps.push_back(v);
        } else if (key == "x0") {
            if (value != "auto") s.x0 = detail::parse_number_list(key, value);
        } else if (key == "lambda0") {
            if (value != "auto") s.lambda0 = detail::parse_number_list(key, value);
        } else {
            config_error(key, "unknown key");
        }
    }
    if (!have_schema) config_error("schema", "missing (expected " + std::string(kScenarioSchema) + ")");
    s.validate();
    return s;
}

inline Scenario parse_scenario_string(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

inline void Scenario::validate() const {
    using detail::config_error;
    if (agent_names.empty()) config_error("agents", "at least one objective required");
    if (dimension < 1 || dimension > 8) config_error("dimension", "must lie in [1,8]");
    if (alpha <= 0.0) config_error("alpha", "must be positive");
    if (beta < 0.0) config_error("beta", "must be nonnegative");
    if (c <= 0.0 || c >= 1.0) config_error("c", "must lie in (0,1)");
    if (zeta < 0.0) config_error("zeta", "must be nonnegative");
    if (trigger != "exact" && trigger != "practical" && trigger != "off") {
        config_error("trigger", "expected exact, practical, or off");
    }
    if (trigger == "practical" && zeta <= 0.0) {
        config_error("zeta", "practical trigger requires zeta > 0");
    }
    if (h <= 0.0) config_error("h", "must be positive");
    if (t_final < h) config_error("t_final", "must cover at least one step");
    if (delta <= 0.0) config_error("delta", "must be positive");
    if (k_final < 1) config_error("k_final", "must be >= 1");
    if (record_every < 1) config_error("record_every", "must be >= 1");
    if (modes.empty()) config_error("mode", "at least one mode required");
    const int n = n_agents();
    for (const auto& m : modes) {
        if (m.rows() != n || m.cols() != n) {
            config_error("mode", "adjacency must be " + std::to_string(n) + "x" +
                                     std::to_string(n) + " to match the agent list");
        }
    }
    if (dwell.empty()) config_error("dwell", "required");
    if (dwell.size() != 1 && dwell.size() != modes.size()) {
        config_error("dwell", "one value, or one per mode");
    }
    for (double d : dwell) {
        if (d <= 0.0) config_error("dwell", "must be positive");
    }
    if (!dwell_steps.empty() && dwell_steps.size() != 1 && dwell_steps.size() != modes.size()) {
        config_error("dwell_steps", "one value, or one per mode");
    }
    for (double d : dwell_steps) {
        if (d < 1.0 || d != std::floor(d)) config_error("dwell_steps", "must be whole and >= 1");
    }
    const std::size_t state_len = static_cast<std::size_t>(n) * static_cast<std::size_t>(dimension);
    if (!x0.empty() && x0.size() != state_len) {
        config_error("x0", "expected " + std::to_string(state_len) + " values");
    }
    if (!lambda0.empty() && lambda0.size() != state_len) {
        config_error("lambda0", "expected " + std::to_string(state_len) + " values");
    }
    for (const auto& name : agent_names) parse_objective(name, 0);  // name check
}

inline std::vector<ObjectiveSpec> Scenario::build_specs() const {
    std::vector<ObjectiveSpec> specs;
    specs.reserve(agent_names.size());
    for (std::size_t i = 0; i < agent_names.size(); ++i) {
        specs.push_back(parse_objective(agent_names[i], static_cast<int>(i)));
    }
    return specs;
}

namespace detail {

inline GraphSchedule build_schedule(const std::vector<Matrix>& modes,
                                    const std::vector<double>& dwell) {
    GraphSchedule s;
    for (const auto& m : modes) s.modes.push_back(WeightedDigraph::from_adjacency(m));
    if (dwell.size() == 1) {
        s.dwell.assign(modes.size(), dwell.front());
    } else {
        s.dwell = dwell;
    }
    s.validate();
    return s;
}

}  // namespace detail

inline GraphSchedule Scenario::schedule_ct() const {
    return detail::build_schedule(modes, dwell);
}

inline GraphSchedule Scenario::schedule_dt() const {
    std::vector<double> steps = dwell_steps;
    if (steps.empty()) {
        for (double d : dwell) {
            steps.push_back(std::max(1.0, std::round(d / delta)));
        }
    }
    return detail::build_schedule(modes, steps);
}

inline TriggerPolicy Scenario::policy() const {
    TriggerPolicy p;
    p.c = c;
    p.zeta = zeta;
    p.mode = trigger == "practical" ? TriggerMode::Practical : TriggerMode::Exact;
    p.enabled = trigger != "off";
    p.validate();
    return p;
}

inline std::vector<Vector> Scenario::initial_x() const {
    const std::size_t n = agent_names.size();
    std::vector<Vector> out(n, Vector::Zero(dimension));
    if (x0.empty()) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
        for (auto& v : out) {
            for (int k = 0; k < dimension; ++k) v[k] = uniform01(rng);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < dimension; ++k) {
                out[i][k] = x0[i * static_cast<std::size_t>(dimension) + static_cast<std::size_t>(k)];
            }
        }
    }
    return out;
}

inline std::vector<Vector> Scenario::initial_lambda() const {
    const std::size_t n = agent_names.size();
    std::vector<Vector> out(n, Vector::Zero(dimension));
    for (std::size_t i = 0; i < n && !lambda0.empty(); ++i) {
        for (int k = 0; k < dimension; ++k) {
            out[i][k] = lambda0[i * static_cast<std::size_t>(dimension) + static_cast<std::size_t>(k)];
        }
    }
    return out;
}

/// The built-in five-agent scenario behind the `reproduce-paper` subcommand:
/// two unit-weight directed 5-cycles alternating every two seconds (twenty
/// steps at the default stepsize), the mixed objective catalog, alpha = 1,
/// c = 0.99, seeded initial states in [0,1).
inline Scenario make_reference_scenario() {
    Scenario s;
    s.name = "reference";
    s.agent_names = {"quad(1,3,1)", "quad(1,-1,0)", "sinquad", "logexp1", "logexp2"};
    s.alpha = 1.0;
    s.beta = 0.2;
    s.c = 0.99;
    s.h = 1e-3;
    s.t_final = 60.0;
    s.delta = 0.1;
    s.k_final = 2000;
    s.seed = 1;
    auto cycle = [](std::initializer_list<std::pair<int, int>> edges) {
        Matrix a = Matrix::Zero(5, 5);
        for (auto [from, to] : edges) a(to, from) = 1.0;  // sender -> receiver
        return a;
    };
    s.modes.push_back(cycle({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}}));
    s.modes.push_back(cycle({{0, 2}, {2, 4}, {4, 1}, {1, 3}, {3, 0}}));
    s.dwell = {2.0};
    s.dwell_steps = {20.0};
    s.validate();
    return s;
}

}  // namespace etdopt
