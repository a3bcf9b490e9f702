#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"
#include "cpdforge/dag_core.hpp"
#include "cpdforge/data_model.hpp"

namespace cpdforge {

// One conditional probability table: rows are parent configurations in
// mixed-radix order (first-listed parent most significant), columns are the
// variable's states.
struct Cpd {
    int variable = 0;
    std::vector<int> parents;      // ascending node index
    std::vector<int> parent_cards; // aligned with parents
    int n_states = 0;
    Matrix table;                  // n_configs x n_states
    std::vector<char> uniform_rows;  // 1 where the row fell back to uniform (no observations)

    std::size_t n_configs() const { return table.rows; }

    std::size_t config_index(const std::vector<int>& parent_states) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < parents.size(); ++i)
            idx = idx * static_cast<std::size_t>(parent_cards[i]) + static_cast<std::size_t>(parent_states[i]);
        return idx;
    }

    // Inverse of config_index.
    std::vector<int> config_states(std::size_t config) const {
        std::vector<int> out(parents.size(), 0);
        for (std::size_t i = parents.size(); i-- > 0;) {
            out[i] = static_cast<int>(config % static_cast<std::size_t>(parent_cards[i]));
            config /= static_cast<std::size_t>(parent_cards[i]);
        }
        return out;
    }

    void validate() const {
        std::size_t q = 1;
        for (int c : parent_cards) q *= static_cast<std::size_t>(c);
        if (table.rows != q || table.cols != static_cast<std::size_t>(n_states))
            throw DataError("cpd: table shape does not match parent cardinalities");
        for (std::size_t r = 0; r < table.rows; ++r) {
            double sum = 0;
            for (std::size_t s = 0; s < table.cols; ++s) {
                double p = table.at(r, s);
                if (p < 0.0 || p > 1.0) throw DataError("cpd: probability outside [0,1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw DataError("cpd: row does not sum to 1");
        }
    }
};

struct BayesNet {
    Dag dag;
    std::vector<std::vector<std::string>> states;  // per node, state labels
    std::vector<Cpd> cpds;                         // cpds[i].variable == i

    std::size_t n_nodes() const { return dag.n_nodes(); }
    int cardinality(int node) const { return static_cast<int>(states[static_cast<std::size_t>(node)].size()); }

    void validate() const {
        if (states.size() != dag.n_nodes() || cpds.size() != dag.n_nodes())
            throw DataError("bayes net: per-node containers out of sync");
        for (std::size_t i = 0; i < cpds.size(); ++i) {
            const Cpd& c = cpds[i];
            if (c.variable != static_cast<int>(i)) throw DataError("bayes net: cpd order mismatch");
            if (c.parents != dag.parents(static_cast<int>(i)))
                throw DataError("bayes net: cpd parents do not match dag for node " + dag.node_names()[i]);
            if (c.n_states != cardinality(static_cast<int>(i)))
                throw DataError("bayes net: cpd state count mismatch for node " + dag.node_names()[i]);
            c.validate();
        }
    }
};

namespace detail {

inline void check_same_variables(const CategoricalTable& t, const Dag& dag) {
    if (t.n_vars() != dag.n_nodes() || t.variables != dag.node_names())
        throw DataError("dag variables do not match table variables");
}

// Joint counts N(v = s, parent_config) for one variable, one pass over rows.
inline std::vector<double> joint_counts(const CategoricalTable& t, int var, const std::vector<int>& parents,
                                        std::size_t n_configs) {
    const int card = t.cardinality(static_cast<std::size_t>(var));
    std::vector<double> counts(n_configs * static_cast<std::size_t>(card), 0.0);
    const std::size_t n = t.n_rows();
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t cfg = 0;
        for (int p : parents)
            cfg = cfg * static_cast<std::size_t>(t.cardinality(static_cast<std::size_t>(p))) +
                  static_cast<std::size_t>(t.at(r, static_cast<std::size_t>(p)));
        counts[cfg * static_cast<std::size_t>(card) + static_cast<std::size_t>(t.at(r, static_cast<std::size_t>(var)))] += 1.0;
    }
    return counts;
}

inline Cpd make_cpd_shell(const CategoricalTable& t, const Dag& dag, int var) {
    Cpd c;
    c.variable = var;
    c.parents = dag.parents(var);
    for (int p : c.parents) c.parent_cards.push_back(t.cardinality(static_cast<std::size_t>(p)));
    c.n_states = t.cardinality(static_cast<std::size_t>(var));
    std::size_t q = 1;
    for (int pc : c.parent_cards) q *= static_cast<std::size_t>(pc);
    c.table = Matrix(q, static_cast<std::size_t>(c.n_states));
    c.uniform_rows.assign(q, 0);
    return c;
}

}  // namespace detail

// Relative-frequency estimator. Parent configurations never observed get a
// uniform row and a flag, keeping every row a valid distribution.
inline BayesNet fit_mle(const CategoricalTable& t, const Dag& dag) {
    detail::check_same_variables(t, dag);
    if (t.n_rows() == 0) throw DataError("fit_mle: empty table");
    BayesNet net;
    net.dag = dag;
    net.states = t.states;
    net.cpds.resize(t.n_vars());
    parallel_for(t.n_vars(), [&](std::size_t v) {
        Cpd c = detail::make_cpd_shell(t, dag, static_cast<int>(v));
        auto counts = detail::joint_counts(t, static_cast<int>(v), c.parents, c.n_configs());
        for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
            double total = 0;
            for (int s = 0; s < c.n_states; ++s) total += counts[cfg * static_cast<std::size_t>(c.n_states) + static_cast<std::size_t>(s)];
            if (total == 0.0) {
                for (int s = 0; s < c.n_states; ++s) c.table.at(cfg, static_cast<std::size_t>(s)) = 1.0 / c.n_states;
                c.uniform_rows[cfg] = 1;
            } else {
                for (int s = 0; s < c.n_states; ++s)
                    c.table.at(cfg, static_cast<std::size_t>(s)) =
                        counts[cfg * static_cast<std::size_t>(c.n_states) + static_cast<std::size_t>(s)] / total;
            }
        }
        net.cpds[v] = std::move(c);
    });
    net.validate();
    return net;
}

// Bayesian estimator with a symmetric Dirichlet prior: the equivalent sample
// size is spread evenly over all cells of the variable's table, so
// alpha = ess / (n_states * n_configs) per cell.
inline BayesNet fit_bayesian(const CategoricalTable& t, const Dag& dag, double ess) {
    detail::check_same_variables(t, dag);
    if (!(ess > 0)) throw ConfigError("fit_bayesian: ess must be positive");
    BayesNet net;
    net.dag = dag;
    net.states = t.states;
    net.cpds.resize(t.n_vars());
    parallel_for(t.n_vars(), [&](std::size_t v) {
        Cpd c = detail::make_cpd_shell(t, dag, static_cast<int>(v));
        auto counts = detail::joint_counts(t, static_cast<int>(v), c.parents, c.n_configs());
        const double alpha = ess / (static_cast<double>(c.n_states) * static_cast<double>(c.n_configs()));
        for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
            double total = 0;
            for (int s = 0; s < c.n_states; ++s) total += counts[cfg * static_cast<std::size_t>(c.n_states) + static_cast<std::size_t>(s)];
            for (int s = 0; s < c.n_states; ++s)
                c.table.at(cfg, static_cast<std::size_t>(s)) =
                    (counts[cfg * static_cast<std::size_t>(c.n_states) + static_cast<std::size_t>(s)] + alpha) /
                    (total + alpha * c.n_states);
        }
        net.cpds[v] = std::move(c);
    });
    net.validate();
    return net;
}

// Stored CPD row for a variable given a full parent assignment
// (node index -> state index). The assignment must cover the parents exactly.
inline std::vector<double> cpd_lookup(const BayesNet& net, int var, const std::map<int, int>& parent_assignment) {
    const Cpd& c = net.cpds[static_cast<std::size_t>(var)];
    if (parent_assignment.size() != c.parents.size())
        throw DataError("cpd_lookup: assignment must cover exactly the parents of " +
                        net.dag.node_names()[static_cast<std::size_t>(var)]);
    std::vector<int> states;
    for (std::size_t i = 0; i < c.parents.size(); ++i) {
        auto it = parent_assignment.find(c.parents[i]);
        if (it == parent_assignment.end())
            throw DataError("cpd_lookup: missing parent " +
                            net.dag.node_names()[static_cast<std::size_t>(c.parents[i])]);
        if (it->second < 0 || it->second >= c.parent_cards[i]) throw DataError("cpd_lookup: state out of range");
        states.push_back(it->second);
    }
    std::size_t cfg = c.config_index(states);
    const double* row = c.table.row(cfg);
    return std::vector<double>(row, row + c.n_states);
}

// Name-based variant, e.g. cpd_lookup(net, "N", {{"B","No"},{"C","No"},{"M","No"}}).
inline std::vector<double> cpd_lookup(const BayesNet& net, const std::string& var,
                                      const std::map<std::string, std::string>& parent_assignment) {
    int v = net.dag.index_of(var);
    std::map<int, int> resolved;
    for (const auto& [name, state] : parent_assignment) {
        int p = net.dag.index_of(name);
        const auto& labels = net.states[static_cast<std::size_t>(p)];
        auto it = std::find(labels.begin(), labels.end(), state);
        if (it == labels.end()) throw DataError("cpd_lookup: unknown state '" + state + "' for " + name);
        resolved[p] = static_cast<int>(it - labels.begin());
    }
    return cpd_lookup(net, v, resolved);
}

// Joint probability of a full assignment (state index per node), evaluated in
// log space; a 24-factor product of small probabilities underflows otherwise.
inline double joint_probability(const BayesNet& net, const std::vector<int>& assignment) {
    if (assignment.size() != net.n_nodes()) throw DataError("joint_probability: assignment must cover all nodes");
    double log_p = 0.0;
    for (std::size_t v = 0; v < net.n_nodes(); ++v) {
        const Cpd& c = net.cpds[v];
        std::vector<int> parent_states;
        parent_states.reserve(c.parents.size());
        for (int p : c.parents) parent_states.push_back(assignment[static_cast<std::size_t>(p)]);
        int s = assignment[v];
        if (s < 0 || s >= c.n_states) throw DataError("joint_probability: state out of range");
        double p = c.table.at(c.config_index(parent_states), static_cast<std::size_t>(s));
        if (p == 0.0) return 0.0;
        log_p += std::log(p);
    }
    return std::exp(log_p);
}

// Full CPD of one variable rendered in report layout: one header line per
// parent, one row per target state, columns in mixed-radix parent order.
struct SeverityReport {
    std::string target;
    std::vector<std::string> parent_names;
    std::vector<std::vector<std::string>> column_headers;  // per parent, per column: "P (state)"
    std::vector<std::string> row_labels;                   // "T (state)"
    Matrix values;                                         // n_states x n_configs
};

inline SeverityReport severity_report(const BayesNet& net, int target) {
    if (target < 0 || target >= static_cast<int>(net.n_nodes())) throw DataError("severity_report: no such node");
    const Cpd& c = net.cpds[static_cast<std::size_t>(target)];
    SeverityReport rep;
    rep.target = net.dag.node_names()[static_cast<std::size_t>(target)];
    for (int p : c.parents) rep.parent_names.push_back(net.dag.node_names()[static_cast<std::size_t>(p)]);
    rep.column_headers.assign(c.parents.size(), {});
    for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
        auto ps = c.config_states(cfg);
        for (std::size_t i = 0; i < c.parents.size(); ++i) {
            const auto& labels = net.states[static_cast<std::size_t>(c.parents[i])];
            rep.column_headers[i].push_back(rep.parent_names[i] + " (" + labels[static_cast<std::size_t>(ps[i])] + ")");
        }
    }
    const auto& own = net.states[static_cast<std::size_t>(target)];
    for (int s = 0; s < c.n_states; ++s) rep.row_labels.push_back(rep.target + " (" + own[static_cast<std::size_t>(s)] + ")");
    rep.values = Matrix(static_cast<std::size_t>(c.n_states), c.n_configs());
    for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg)
        for (int s = 0; s < c.n_states; ++s) rep.values.at(static_cast<std::size_t>(s), cfg) = c.table.at(cfg, static_cast<std::size_t>(s));
    return rep;
}

inline SeverityReport severity_report(const BayesNet& net, const std::string& target) {
    return severity_report(net, net.dag.index_of(target));
}

// Two-decimal CSV rendering of the report table.
inline std::string severity_report_csv(const SeverityReport& rep) {
    std::string out;
    for (const auto& header : rep.column_headers) {
        for (const auto& cell : header) {
            out += ',';
            out += detail::csv_escape(cell);
        }
        out += '\n';
    }
    for (std::size_t s = 0; s < rep.values.rows; ++s) {
        out += detail::csv_escape(rep.row_labels[s]);
        for (std::size_t cfg = 0; cfg < rep.values.cols; ++cfg) {
            out += ',';
            out += format_prob2(rep.values.at(s, cfg));
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json net_to_json(const BayesNet& net) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t v = 0; v < net.n_nodes(); ++v) {
        const Cpd& c = net.cpds[v];
        nlohmann::json jc;
        jc["variable"] = net.dag.node_names()[v];
        nlohmann::json parents = nlohmann::json::array();
        for (int p : c.parents) parents.push_back(net.dag.node_names()[static_cast<std::size_t>(p)]);
        jc["parents"] = parents;
        jc["parent_cards"] = c.parent_cards;
        jc["states"] = net.states[v];
        nlohmann::json table = nlohmann::json::array();
        for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
            nlohmann::json row = nlohmann::json::array();
            for (int s = 0; s < c.n_states; ++s) row.push_back(c.table.at(cfg, static_cast<std::size_t>(s)));
            table.push_back(row);
        }
        jc["table"] = table;
        nlohmann::json flags = nlohmann::json::array();
        for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg)
            if (c.uniform_rows[cfg]) flags.push_back(cfg);
        jc["flags"] = flags;
        nodes.push_back(jc);
    }
    nlohmann::json j;
    j["dag"] = dag_to_json(net.dag);
    j["nodes"] = nodes;
    return j;
}

inline BayesNet net_from_json(const nlohmann::json& j) {
    BayesNet net;
    net.dag = dag_from_json(j.at("dag"));
    net.states.resize(net.n_nodes());
    net.cpds.resize(net.n_nodes());
    for (const auto& jc : j.at("nodes")) {
        int v = net.dag.index_of(jc.at("variable").get<std::string>());
        Cpd c;
        c.variable = v;
        for (const auto& pname : jc.at("parents")) c.parents.push_back(net.dag.index_of(pname.get<std::string>()));
        c.parent_cards = jc.at("parent_cards").get<std::vector<int>>();
        net.states[static_cast<std::size_t>(v)] = jc.at("states").get<std::vector<std::string>>();
        c.n_states = static_cast<int>(net.states[static_cast<std::size_t>(v)].size());
        const auto& table = jc.at("table");
        c.table = Matrix(table.size(), static_cast<std::size_t>(c.n_states));
        for (std::size_t cfg = 0; cfg < table.size(); ++cfg)
            for (int s = 0; s < c.n_states; ++s) c.table.at(cfg, static_cast<std::size_t>(s)) = table[cfg][static_cast<std::size_t>(s)].get<double>();
        c.uniform_rows.assign(table.size(), 0);
        for (const auto& f : jc.at("flags")) c.uniform_rows[f.get<std::size_t>()] = 1;
        net.cpds[static_cast<std::size_t>(v)] = std::move(c);
    }
    net.validate();
    return net;
}

}  // namespace cpdforge
