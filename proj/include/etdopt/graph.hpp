#pragma once

// Weighted time-varying digraphs: balance and connectivity checks plus the
// piecewise-constant, periodically repeating schedule that serves adjacency
// snapshots to the simulation engines.

#include "etdopt/common.hpp"

#include <optional>
#include <vector>

namespace etdopt {

/// Directed weighted graph on n nodes. adjacency(i, j) > 0 means node j sends
/// to node i (an edge j -> i); the diagonal is zero.
struct WeightedDigraph {
    Matrix adjacency;

    int n() const { return static_cast<int>(adjacency.rows()); }

    static WeightedDigraph from_adjacency(Matrix a) {
        require(a.rows() == a.cols(), "digraph: adjacency must be square");
        require(a.allFinite(), "digraph: non-finite weight");
        require((a.array() >= 0.0).all(), "digraph: negative weight");
        require(a.diagonal().isZero(0.0), "digraph: nonzero diagonal");
        return WeightedDigraph{std::move(a)};
    }
};

struct Degrees {
    Vector in;   // d_in[i]  = sum_j a(i, j)
    Vector out;  // d_out[i] = sum_j a(j, i)
};

inline Degrees degrees(const WeightedDigraph& g) {
    return Degrees{g.adjacency.rowwise().sum(), g.adjacency.colwise().sum().transpose()};
}

inline bool is_weight_balanced(const WeightedDigraph& g, double tol = 1e-12) {
    const Degrees d = degrees(g);
    return ((d.in - d.out).array().abs() <= tol).all();
}

/// L = diag(A 1) - A. Row sums vanish by construction; column sums vanish iff
/// the graph is weight-balanced.
inline Matrix laplacian(const WeightedDigraph& g) {
    Matrix l = -g.adjacency;
    l.diagonal() += g.adjacency.rowwise().sum();
    return l;
}

/// Strong connectivity via an iterative Tarjan SCC pass: true iff the whole
/// node set forms a single component. The empty graph on one node counts as
/// strongly connected.
inline bool is_strongly_connected(const WeightedDigraph& g) {
    const int n = g.n();
    if (n <= 1) return true;

    std::vector<std::vector<int>> out_edges(n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (g.adjacency(i, j) > 0.0) out_edges[j].push_back(i);  // j -> i
        }
    }

    std::vector<int> index(n, -1), low(n, 0), stack;
    std::vector<bool> on_stack(n, false);
    int next_index = 0, components = 0;

    struct Frame {
        int node;
        std::size_t edge;
    };
    std::vector<Frame> call_stack;

    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        call_stack.push_back({root, 0});
        while (!call_stack.empty()) {
            auto& [v, edge] = call_stack.back();
            if (edge == 0) {
                index[v] = low[v] = next_index++;
                stack.push_back(v);
                on_stack[v] = true;
            }
            bool descended = false;
            while (edge < out_edges[v].size()) {
                const int w = out_edges[v][edge++];
                if (index[w] == -1) {
                    call_stack.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[w]) low[v] = std::min(low[v], index[w]);
            }
            if (descended) continue;
            if (low[v] == index[v]) {
                ++components;
                if (components > 1) return false;
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                } while (w != v);
            }
            const int child = v;
            call_stack.pop_back();
            if (!call_stack.empty()) {
                const int parent = call_stack.back().node;
                low[parent] = std::min(low[parent], low[child]);
            }
        }
    }
    return components == 1 && stack.empty();
}

/// Piecewise-constant periodic sequence of digraphs. Dwell values are
/// durations in the engine's native unit (seconds for the continuous-time
/// engine, steps for the discrete-time one). Lookups are right-continuous:
/// the switch takes effect exactly at the boundary instant.
struct GraphSchedule {
    std::vector<WeightedDigraph> modes;
    std::vector<double> dwell;

    int n_agents() const { return modes.empty() ? 0 : modes.front().n(); }

    double period() const {
        double p = 0.0;
        for (double d : dwell) p += d;
        return p;
    }

    void validate() const {
        require(!modes.empty(), "schedule: no modes");
        require(modes.size() == dwell.size(), "schedule: one dwell per mode required");
        for (double d : dwell) require(d > 0.0, "schedule: dwell must be positive");
        for (const auto& m : modes) {
            require(m.n() == n_agents(), "schedule: inconsistent mode sizes");
        }
    }

    int mode_index_at(double t) const {
        require(t >= 0.0, "schedule: negative time");
        const double tau = std::fmod(t, period());
        double acc = 0.0;
        for (std::size_t k = 0; k < modes.size(); ++k) {
            acc += dwell[k];
            if (tau < acc) return static_cast<int>(k);
        }
        return static_cast<int>(modes.size()) - 1;
    }

    /// Per-agent supremum of the in-degree over all modes.
    Vector max_in_degrees() const {
        Vector d = Vector::Zero(n_agents());
        for (const auto& m : modes) d = d.cwiseMax(degrees(m).in);
        return d;
    }
};

inline const WeightedDigraph& graph_at(const GraphSchedule& s, double t) {
    return s.modes[static_cast<std::size_t>(s.mode_index_at(t))];
}

/// Smallest number of consecutive modes whose union is strongly connected
/// from every phase offset; nullopt when no window within one period works.
/// Any unbalanced mode violates the graph assumption and raises an error.
inline std::optional<int> check_ujsc(const GraphSchedule& s) {
    s.validate();
    for (std::size_t k = 0; k < s.modes.size(); ++k) {
        if (!is_weight_balanced(s.modes[k])) {
            throw std::invalid_argument("schedule: mode " + std::to_string(k) +
                                        " is not weight-balanced");
        }
    }
    const int m = static_cast<int>(s.modes.size());
    for (int window = 1; window <= m; ++window) {
        bool ok = true;
        for (int offset = 0; offset < m && ok; ++offset) {
            Matrix u = Matrix::Zero(s.n_agents(), s.n_agents());
            for (int k = 0; k < window; ++k) {
                u += s.modes[static_cast<std::size_t>((offset + k) % m)].adjacency;
            }
            ok = is_strongly_connected(WeightedDigraph{std::move(u)});
        }
        if (ok) return window;
    }
    return std::nullopt;
}

}  // namespace etdopt
