#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"
#include "cpdforge/data_model.hpp"

namespace cpdforge {

// Directed acyclic graph over variable indices. Node identity is positional;
// names are metadata. Acyclicity is checked at construction, so a Dag value
// is always valid.
class Dag {
public:
    Dag() = default;

    Dag(std::size_t n_nodes, std::vector<std::string> names, std::set<std::pair<int, int>> edges)
        : n_nodes_(n_nodes), names_(std::move(names)), edges_(std::move(edges)) {
        if (!names_.empty() && names_.size() != n_nodes_)
            throw DataError("dag: name count does not match node count");
        if (names_.empty())
            for (std::size_t i = 0; i < n_nodes_; ++i) names_.push_back("V" + std::to_string(i));
        for (const auto& [p, c] : edges_) {
            if (p == c) throw DataError("dag: self-loop at node " + names_[static_cast<std::size_t>(p)]);
            if (p < 0 || c < 0 || p >= static_cast<int>(n_nodes_) || c >= static_cast<int>(n_nodes_))
                throw DataError("dag: edge index out of range");
        }
        build_adjacency();
        check_acyclic();
    }

    std::size_t n_nodes() const { return n_nodes_; }
    const std::vector<std::string>& node_names() const { return names_; }
    const std::set<std::pair<int, int>>& edges() const { return edges_; }
    std::size_t n_edges() const { return edges_.size(); }

    const std::vector<int>& parents(int node) const { return parents_[static_cast<std::size_t>(node)]; }
    const std::vector<int>& children(int node) const { return children_[static_cast<std::size_t>(node)]; }

    int index_of(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) throw DataError("unknown node name: " + name);
        return static_cast<int>(it - names_.begin());
    }

private:
    void build_adjacency() {
        parents_.assign(n_nodes_, {});
        children_.assign(n_nodes_, {});
        for (const auto& [p, c] : edges_) {
            parents_[static_cast<std::size_t>(c)].push_back(p);
            children_[static_cast<std::size_t>(p)].push_back(c);
        }
        for (auto& v : parents_) std::sort(v.begin(), v.end());
        for (auto& v : children_) std::sort(v.begin(), v.end());
    }

    void check_acyclic() const {
        std::vector<int> in_degree(n_nodes_, 0);
        for (const auto& [p, c] : edges_) {
            (void)p;
            ++in_degree[static_cast<std::size_t>(c)];
        }
        std::deque<int> ready;
        for (std::size_t i = 0; i < n_nodes_; ++i)
            if (in_degree[i] == 0) ready.push_back(static_cast<int>(i));
        std::size_t removed = 0;
        while (!ready.empty()) {
            int node = ready.front();
            ready.pop_front();
            ++removed;
            for (int c : children_[static_cast<std::size_t>(node)])
                if (--in_degree[static_cast<std::size_t>(c)] == 0) ready.push_back(c);
        }
        if (removed != n_nodes_) throw DataError("dag: cycle detected: " + find_cycle(in_degree));
    }

    // Walks parents among the unresolved nodes until a node repeats; renders
    // the loop in edge direction for the error message.
    std::string find_cycle(const std::vector<int>& in_degree) const {
        int start = -1;
        for (std::size_t i = 0; i < n_nodes_; ++i)
            if (in_degree[i] > 0) {
                start = static_cast<int>(i);
                break;
            }
        std::vector<int> path;
        std::vector<char> seen(n_nodes_, 0);
        int cur = start;
        while (!seen[static_cast<std::size_t>(cur)]) {
            seen[static_cast<std::size_t>(cur)] = 1;
            path.push_back(cur);
            for (int p : parents_[static_cast<std::size_t>(cur)])
                if (in_degree[static_cast<std::size_t>(p)] > 0) {
                    cur = p;
                    break;
                }
        }
        // path[k+1] is a parent of path[k], and cur is a parent of path.back(),
        // so the edge-direction cycle is cur -> path.back() -> ... -> cur.
        auto loop_start = static_cast<std::size_t>(std::find(path.begin(), path.end(), cur) - path.begin());
        std::string msg = names_[static_cast<std::size_t>(cur)];
        for (std::size_t k = path.size(); k-- > loop_start + 1;) msg += " -> " + names_[static_cast<std::size_t>(path[k])];
        return msg + " -> " + names_[static_cast<std::size_t>(cur)];
    }

    std::size_t n_nodes_ = 0;
    std::vector<std::string> names_;
    std::set<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
};

inline Dag from_adjacency(const std::vector<std::vector<int>>& matrix, std::vector<std::string> names = {}) {
    const std::size_t n = matrix.size();
    std::set<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        if (matrix[i].size() != n) throw DataError("adjacency matrix is not square");
        for (std::size_t j = 0; j < n; ++j) {
            if (matrix[i][j] == 0) continue;
            if (matrix[i][j] != 1) throw DataError("adjacency entries must be 0 or 1");
            if (i == j) throw DataError("self-loop on adjacency diagonal at index " + std::to_string(i));
            edges.emplace(static_cast<int>(i), static_cast<int>(j));
        }
    }
    return Dag(n, std::move(names), std::move(edges));
}

inline std::vector<std::vector<int>> to_adjacency(const Dag& dag) {
    std::vector<std::vector<int>> m(dag.n_nodes(), std::vector<int>(dag.n_nodes(), 0));
    for (const auto& [p, c] : dag.edges()) m[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] = 1;
    return m;
}

namespace detail {

// BFS over one adjacency direction; excludes the start set from the result.
inline std::set<int> reach(const Dag& dag, const std::set<int>& start, bool toward_parents) {
    for (int t : start)
        if (t < 0 || t >= static_cast<int>(dag.n_nodes())) throw DataError("node index out of range");
    std::set<int> visited;
    std::deque<int> frontier(start.begin(), start.end());
    while (!frontier.empty()) {
        int node = frontier.front();
        frontier.pop_front();
        for (int m : toward_parents ? dag.parents(node) : dag.children(node))
            if (visited.insert(m).second) frontier.push_back(m);
    }
    for (int t : start) visited.erase(t);
    return visited;
}

}  // namespace detail

// All nodes with a directed path into any target; the targets themselves are
// excluded even when one target feeds another.
inline std::set<int> ancestors(const Dag& dag, const std::set<int>& targets) {
    return detail::reach(dag, targets, /*toward_parents=*/true);
}

inline std::set<int> descendants(const Dag& dag, const std::set<int>& targets) {
    return detail::reach(dag, targets, /*toward_parents=*/false);
}

inline std::set<int> resolve_nodes(const Dag& dag, const std::vector<std::string>& names) {
    std::set<int> out;
    for (const auto& n : names) out.insert(dag.index_of(n));
    return out;
}

inline std::set<int> ancestors(const Dag& dag, const std::vector<std::string>& target_names) {
    return ancestors(dag, resolve_nodes(dag, target_names));
}

inline std::set<int> descendants(const Dag& dag, const std::vector<std::string>& target_names) {
    return descendants(dag, resolve_nodes(dag, target_names));
}

// Kahn's algorithm with smallest-index-first tie-breaking, so the order is
// unique and downstream artifacts reproduce.
inline std::vector<int> topological_order(const Dag& dag) {
    std::vector<int> in_degree(dag.n_nodes(), 0);
    for (const auto& [p, c] : dag.edges()) {
        (void)p;
        ++in_degree[static_cast<std::size_t>(c)];
    }
    std::set<int> ready;
    for (std::size_t i = 0; i < dag.n_nodes(); ++i)
        if (in_degree[i] == 0) ready.insert(static_cast<int>(i));
    std::vector<int> order;
    order.reserve(dag.n_nodes());
    while (!ready.empty()) {
        int node = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(node);
        for (int c : dag.children(node))
            if (--in_degree[static_cast<std::size_t>(c)] == 0) ready.insert(c);
    }
    return order;
}

inline nlohmann::json dag_to_json(const Dag& dag) {
    nlohmann::json j;
    j["names"] = dag.node_names();
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& [p, c] : dag.edges()) edges.push_back({p, c});
    return j;
}

inline Dag dag_from_json(const nlohmann::json& j) {
    std::vector<std::string> names = j.at("names").get<std::vector<std::string>>();
    std::set<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) edges.emplace(e.at(0).get<int>(), e.at(1).get<int>());
    const std::size_t n = names.size();
    return Dag(n, std::move(names), std::move(edges));
}

// Adjacency CSV: header row of names, one row per source node with its name
// in the first column and 0/1 cells.
inline std::string dag_to_adjacency_csv(const Dag& dag) {
    auto m = to_adjacency(dag);
    std::string out;
    for (const auto& name : dag.node_names()) {
        out += ',';
        out += detail::csv_escape(name);
    }
    out += '\n';
    for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
        out += detail::csv_escape(dag.node_names()[i]);
        for (std::size_t j = 0; j < dag.n_nodes(); ++j) {
            out += ',';
            out += m[i][j] ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

inline Dag dag_from_adjacency_csv(const std::string& text) {
    auto rows = detail::parse_csv(text);
    if (rows.size() < 2) throw DataError("adjacency csv: need a header and at least one row");
    const std::size_t n = rows[0].size() - 1;
    std::vector<std::string> names(rows[0].begin() + 1, rows[0].end());
    if (rows.size() != n + 1) throw DataError("adjacency csv: row count does not match header");
    std::vector<std::vector<int>> m(n, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i + 1].size() != n + 1) throw DataError("adjacency csv: ragged row " + std::to_string(i + 2));
        if (rows[i + 1][0] != names[i]) throw DataError("adjacency csv: row name mismatch at " + names[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const std::string& cell = rows[i + 1][j + 1];
            if (cell != "0" && cell != "1") throw DataError("adjacency csv: cell must be 0 or 1");
            m[i][j] = cell == "1" ? 1 : 0;
        }
    }
    return from_adjacency(m, std::move(names));
}

}  // namespace cpdforge
