#pragma once

#include <array>
#include <string>
#include <vector>

#include "cpdforge/common.hpp"
#include "cpdforge/cpd_estimation.hpp"
#include "cpdforge/dag_core.hpp"
#include "cpdforge/data_model.hpp"
#include "cpdforge/demographic_map.hpp"

namespace cpdforge {

struct SampleConfig {
    std::size_t n_samples = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 1) throw ConfigError("sample config: n_samples must be >= 1");
    }
};

// Forward sampling: visit nodes in topological order, draw each state from
// the CPD row selected by the already-sampled parents. Each record uses its
// own generator stream derived from (seed, record index), so the output is
// independent of evaluation order.
inline CategoricalTable forward_sample(const BayesNet& net, const SampleConfig& config) {
    config.validate();
    net.validate();
    const auto order = topological_order(net.dag);
    CategoricalTable t;
    t.variables = net.dag.node_names();
    t.states = net.states;
    t.cells.assign(config.n_samples * net.n_nodes(), 0);
    parallel_for(config.n_samples, [&](std::size_t r) {
        SplitMix64 rng(mix_seed(config.seed, r));
        int* row = t.cells.data() + r * net.n_nodes();
        for (int v : order) {
            const Cpd& c = net.cpds[static_cast<std::size_t>(v)];
            std::vector<int> parent_states;
            parent_states.reserve(c.parents.size());
            for (int p : c.parents) parent_states.push_back(row[p]);
            const double* probs = c.table.row(c.config_index(parent_states));
            double u = rng.next_double();
            double cum = 0.0;
            int state = c.n_states - 1;
            for (int s = 0; s < c.n_states; ++s) {
                cum += probs[s];
                if (u < cum) {
                    state = s;
                    break;
                }
            }
            row[v] = state;
        }
    });
    return t;
}

enum class FixtureKind { chain3, collider3, table2_dag };

namespace fixtures {

inline const std::vector<std::string>& binary_states() {
    static const std::vector<std::string> s{"No", "Yes"};
    return s;
}

inline const std::vector<std::string>& age_states() {
    static const std::vector<std::string> s{"0 - 9 Years",  "10 - 19 Years", "20 - 29 Years",
                                            "30 - 39 Years", "40 - 49 Years", "50 - 59 Years",
                                            "60 - 69 Years", "70 - 79 Years", "80+ Years"};
    return s;
}

inline const std::vector<std::string>& gender_states() {
    static const std::vector<std::string> s{"Female", "Male"};
    return s;
}

inline const std::vector<std::string>& race_states() {
    static const std::vector<std::string> s{"American Indian or Alaska Native",
                                            "Asian",
                                            "Black",
                                            "Multiple or Other",
                                            "Native Hawaiian or Pacific Islander",
                                            "White"};
    return s;
}

// 24-node adjacency over features A..X; row = source, column = target.
inline const std::array<const char*, 24>& table2_rows() {
    static const std::array<const char*, 24> rows = {
        "000000000000000000000000",  // A
        "000000010000110101100100",  // B
        "010000000000111000100000",  // C
        "000011101010000110010001",  // D
        "100001001100000010001011",  // E
        "000000001100000000001001",  // F
        "000000000000000000000000",  // G
        "100111000001000110000010",  // H
        "000000000100000000001000",  // I
        "000000000000000000000000",  // J
        "000000000000000000000000",  // K
        "100111101100000010001011",  // L
        "000100110001011101101110",  // M
        "000000000000001000100100",  // N
        "000000100000000000000000",  // O
        "000000000000000000011010",  // P
        "100001001100000000001011",  // Q
        "100010010001000110000110",  // R
        "000110011000001001000010",  // S
        "000000000010000000000000",  // T
        "000000000000000000010000",  // U
        "000110000011000000010001",  // V
        "100001000100000000000000",  // W
        "100000000100000000001000",  // X
    };
    return rows;
}

inline std::vector<std::string> table2_names() {
    std::vector<std::string> names;
    for (char c = 'A'; c <= 'X'; ++c) names.emplace_back(1, c);
    return names;
}

inline Dag table2_dag() {
    const auto& rows = table2_rows();
    std::vector<std::vector<int>> m(24, std::vector<int>(24, 0));
    for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = 0; j < 24; ++j) m[i][j] = rows[i][j] == '1' ? 1 : 0;
    return from_adjacency(m, table2_names());
}

// The adjacency fixture in its CSV wire format, for the file-loading path.
inline std::string table2_adjacency_csv() { return dag_to_adjacency_csv(table2_dag()); }

namespace detail {

inline std::vector<std::string> node_states(const std::string& name) {
    if (name == "D") return age_states();
    if (name == "T") return race_states();
    if (name == "V") return gender_states();
    return binary_states();
}

// Random CPD rows for the synthetic table2 net. Binary nodes get a
// well-spread Bernoulli parameter; multi-state nodes get a smoothed random
// distribution so no state is vanishingly rare. Demographic nodes stay
// genuinely stochastic given their parents.
inline void fill_random_cpd(Cpd& c, SplitMix64& rng) {
    for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
        if (c.n_states == 2) {
            double p = 0.08 + 0.84 * rng.next_double();
            c.table.at(cfg, 0) = 1.0 - p;
            c.table.at(cfg, 1) = p;
        } else {
            double total = 0;
            std::vector<double> w(static_cast<std::size_t>(c.n_states));
            for (auto& x : w) {
                x = 0.25 + rng.next_double();
                total += x;
            }
            for (int s = 0; s < c.n_states; ++s) c.table.at(cfg, static_cast<std::size_t>(s)) = w[static_cast<std::size_t>(s)] / total;
        }
    }
}

inline BayesNet net_from_dag_random_cpds(const Dag& dag, std::uint64_t seed) {
    BayesNet net;
    net.dag = dag;
    for (const auto& name : dag.node_names()) net.states.push_back(node_states(name));
    SplitMix64 rng(seed);
    for (std::size_t v = 0; v < dag.n_nodes(); ++v) {
        Cpd c;
        c.variable = static_cast<int>(v);
        c.parents = dag.parents(static_cast<int>(v));
        for (int p : c.parents) c.parent_cards.push_back(static_cast<int>(net.states[static_cast<std::size_t>(p)].size()));
        c.n_states = static_cast<int>(net.states[v].size());
        std::size_t q = 1;
        for (int pc : c.parent_cards) q *= static_cast<std::size_t>(pc);
        c.table = Matrix(q, static_cast<std::size_t>(c.n_states));
        c.uniform_rows.assign(q, 0);
        fill_random_cpd(c, rng);
        net.cpds.push_back(std::move(c));
    }
    net.validate();
    return net;
}

inline Cpd make_fixed_cpd(int var, std::vector<int> parents, std::vector<int> parent_cards, int n_states,
                          std::vector<std::vector<double>> rows) {
    Cpd c;
    c.variable = var;
    c.parents = std::move(parents);
    c.parent_cards = std::move(parent_cards);
    c.n_states = n_states;
    c.table = Matrix(rows.size(), static_cast<std::size_t>(n_states));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int s = 0; s < n_states; ++s) c.table.at(r, static_cast<std::size_t>(s)) = rows[r][static_cast<std::size_t>(s)];
    c.uniform_rows.assign(rows.size(), 0);
    return c;
}

}  // namespace detail

// 3-node chain A -> B -> C with strong conditional dependence (gap 0.7).
inline BayesNet chain3() {
    BayesNet net;
    net.dag = Dag(3, {"A", "B", "C"}, {{0, 1}, {1, 2}});
    net.states = {binary_states(), binary_states(), binary_states()};
    net.cpds.push_back(detail::make_fixed_cpd(0, {}, {}, 2, {{0.5, 0.5}}));
    net.cpds.push_back(detail::make_fixed_cpd(1, {0}, {2}, 2, {{0.85, 0.15}, {0.15, 0.85}}));
    net.cpds.push_back(detail::make_fixed_cpd(2, {1}, {2}, 2, {{0.85, 0.15}, {0.15, 0.85}}));
    net.validate();
    return net;
}

// 3-node common-cause structure A <- C -> B with the same dependence gap.
inline BayesNet collider3() {
    BayesNet net;
    net.dag = Dag(3, {"A", "B", "C"}, {{2, 0}, {2, 1}});
    net.states = {binary_states(), binary_states(), binary_states()};
    net.cpds.push_back(detail::make_fixed_cpd(0, {2}, {2}, 2, {{0.85, 0.15}, {0.15, 0.85}}));
    net.cpds.push_back(detail::make_fixed_cpd(1, {2}, {2}, 2, {{0.85, 0.15}, {0.15, 0.85}}));
    net.cpds.push_back(detail::make_fixed_cpd(2, {}, {}, 2, {{0.5, 0.5}}));
    net.validate();
    return net;
}

// The 24-node adjacency fixture with seeded synthetic CPDs: age (D) has 9
// states, race (T) 6, gender (V) 2, everything else is No/Yes.
inline BayesNet table2_net() {
    static const BayesNet net = detail::net_from_dag_random_cpds(table2_dag(), 0xC0FD0C5ull);
    return net;
}

// Severity CPD fixture over {B, C, M, N, O, S}: the ICU table P(N | B, C, M)
// and the mechanical-ventilation table P(O | C, M, N, S), with fixed root
// marginals.
inline BayesNet severity_net() {
    BayesNet net;
    // indices: B=0, C=1, M=2, N=3, O=4, S=5
    net.dag = Dag(6, {"B", "C", "M", "N", "O", "S"},
                  {{0, 3}, {1, 3}, {2, 3}, {1, 4}, {2, 4}, {3, 4}, {5, 4}});
    net.states.assign(6, binary_states());
    net.cpds.resize(6);
    net.cpds[0] = detail::make_fixed_cpd(0, {}, {}, 2, {{0.8, 0.2}});
    net.cpds[1] = detail::make_fixed_cpd(1, {}, {}, 2, {{0.9, 0.1}});
    net.cpds[2] = detail::make_fixed_cpd(2, {}, {}, 2, {{0.7, 0.3}});
    net.cpds[3] = detail::make_fixed_cpd(3, {0, 1, 2}, {2, 2, 2}, 2,
                                         {{1.0, 0.0},
                                          {0.91, 0.09},
                                          {0.95, 0.05},
                                          {0.61, 0.39},
                                          {0.99, 0.01},
                                          {0.8, 0.2},
                                          {0.82, 0.18},
                                          {0.46, 0.54}});
    net.cpds[4] = detail::make_fixed_cpd(4, {1, 2, 3, 5}, {2, 2, 2, 2}, 2,
                                         {{1.0, 0.0},
                                          {1.0, 0.0},
                                          {0.86, 0.14},
                                          {0.67, 0.33},
                                          {0.99, 0.01},
                                          {0.99, 0.01},
                                          {0.85, 0.15},
                                          {0.76, 0.24},
                                          {0.97, 0.03},
                                          {0.93, 0.07},
                                          {0.5, 0.5},
                                          {0.71, 0.29},
                                          {0.94, 0.06},
                                          {0.96, 0.04},
                                          {0.57, 0.43},
                                          {0.37, 0.63}});
    net.cpds[5] = detail::make_fixed_cpd(5, {}, {}, 2, {{0.85, 0.15}});
    net.validate();
    return net;
}

// 27-class demographic distribution over 18 (gender, age) categories, as a
// two-decimal report fixture. Rows below are categories, columns classes.
inline DemographicTable demographic_table27() {
    static const double rows[18][27] = {
        // Female 0 - 9 Years
        {0, 0.03, 0.01, 0, 0.03, 0, 0.01, 0, 0.03, 0.02, 0, 0, 0, 0, 0, 0, 0.01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
        // Female 10 - 19 Years
        {0.04, 0.06, 0.07, 0.03, 0.02, 0, 0.07, 0.01, 0.05, 0.04, 0, 0.02, 0, 0.01, 0, 0, 0, 0.04, 0.03, 0.02,
         0.01, 0, 0, 0.02, 0.01, 0.02, 0},
        // Female 20 - 29 Years
        {0.16, 0.11, 0.16, 0.12, 0.07, 0.01, 0.18, 0.03, 0.13, 0.09, 0.02, 0.05, 0.05, 0.02, 0, 0.02, 0.03, 0.08,
         0.07, 0.05, 0.07, 0, 0.03, 0.08, 0.04, 0.03, 0.01},
        // Female 30 - 39 Years
        {0.12, 0.07, 0.1, 0.1, 0.06, 0.01, 0.12, 0.06, 0.08, 0.07, 0.06, 0.03, 0.09, 0.03, 0.02, 0.04, 0.04, 0.08,
         0.09, 0.08, 0.09, 0.02, 0.04, 0.08, 0.09, 0.08, 0.02},
        // Female 40 - 49 Years
        {0.13, 0.06, 0.09, 0.11, 0.06, 0.04, 0.11, 0.06, 0.07, 0.08, 0.08, 0.04, 0.13, 0.02, 0.03, 0.05, 0.04, 0.06,
         0.08, 0.12, 0.09, 0.05, 0.04, 0.07, 0.08, 0.07, 0.05},
        // Female 50 - 59 Years
        {0.13, 0.07, 0.09, 0.11, 0.08, 0.07, 0.11, 0.11, 0.08, 0.11, 0.1, 0.05, 0.16, 0.06, 0.05, 0.1, 0.1, 0.12,
         0.16, 0.15, 0.13, 0.05, 0.09, 0.06, 0.13, 0.11, 0.09},
        // Female 60 - 69 Years
        {0.08, 0.05, 0.05, 0.07, 0.07, 0.08, 0.06, 0.11, 0.07, 0.09, 0.12, 0.12, 0.16, 0.12, 0.09, 0.12, 0.09, 0.09,
         0.1, 0.13, 0.11, 0.14, 0.18, 0.08, 0.12, 0.12, 0.2},
        // Female 70 - 79 Years
        {0.04, 0.04, 0.02, 0.04, 0.06, 0.11, 0.03, 0.06, 0.05, 0.07, 0.06, 0.06, 0.05, 0.09, 0.13, 0.13, 0.1, 0.04,
         0.1, 0.05, 0.07, 0.15, 0.05, 0.05, 0.03, 0.07, 0.06},
        // Female 80+ Years
        {0.01, 0.03, 0, 0.01, 0.03, 0.1, 0, 0.04, 0.03, 0.02, 0.03, 0.07, 0.01, 0.07, 0.1, 0.05, 0.07, 0.02, 0.01,
         0.02, 0.02, 0.06, 0.07, 0.07, 0.03, 0.02, 0.03},
        // Male 0 - 9 Years
        {0, 0.04, 0.01, 0.01, 0.03, 0, 0.01, 0, 0.05, 0.03, 0, 0.01, 0, 0, 0, 0, 0.01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
        // Male 10 - 19 Years
        {0.03, 0.08, 0.07, 0.03, 0.03, 0, 0.06, 0, 0.06, 0.04, 0, 0.01, 0.01, 0.01, 0, 0, 0.01, 0.01, 0.01, 0.01,
         0.01, 0, 0, 0.03, 0.02, 0, 0},
        // Male 20 - 29 Years
        {0.06, 0.07, 0.08, 0.07, 0.06, 0.01, 0.06, 0.03, 0.05, 0.05, 0.02, 0.01, 0.02, 0.02, 0.01, 0.02, 0.02, 0.04,
         0.03, 0.03, 0.01, 0, 0.03, 0.03, 0.02, 0.02, 0.01},
        // Male 30 - 39 Years
        {0.05, 0.06, 0.07, 0.08, 0.07, 0.03, 0.05, 0.04, 0.04, 0.05, 0.06, 0.03, 0.04, 0.04, 0.01, 0.04, 0.04, 0.06,
         0.05, 0.05, 0.03, 0.04, 0.01, 0.06, 0.07, 0.07, 0.03},
        // Male 40 - 49 Years
        {0.05, 0.05, 0.06, 0.07, 0.07, 0.05, 0.04, 0.08, 0.04, 0.06, 0.1, 0.05, 0.07, 0.03, 0.04, 0.07, 0.04, 0.07,
         0.06, 0.08, 0.06, 0.05, 0.03, 0.04, 0.06, 0.05, 0.07},
        // Male 50 - 59 Years
        {0.05, 0.05, 0.05, 0.06, 0.07, 0.07, 0.04, 0.11, 0.05, 0.04, 0.11, 0.06, 0.08, 0.14, 0.09, 0.05, 0.07, 0.07,
         0.06, 0.08, 0.06, 0.06, 0.09, 0.07, 0.07, 0.1, 0.1},
        // Male 60 - 69 Years
        {0.05, 0.07, 0.05, 0.06, 0.09, 0.14, 0.04, 0.16, 0.06, 0.06, 0.13, 0.13, 0.08, 0.11, 0.13, 0.13, 0.12, 0.12,
         0.09, 0.09, 0.13, 0.14, 0.08, 0.05, 0.13, 0.12, 0.12},
        // Male 70 - 79 Years
        {0.01, 0.04, 0.02, 0.02, 0.07, 0.15, 0.01, 0.05, 0.04, 0.05, 0.08, 0.16, 0.03, 0.17, 0.14, 0.11, 0.11, 0.06,
         0.02, 0.03, 0.06, 0.16, 0.13, 0.11, 0.08, 0.11, 0.16},
        // Male 80+ Years
        {0, 0.02, 0, 0.01, 0.03, 0.13, 0, 0.05, 0.02, 0.02, 0.03, 0.11, 0.01, 0.07, 0.15, 0.07, 0.1, 0.03, 0.02,
         0.01, 0.04, 0.09, 0.12, 0.1, 0.01, 0.02, 0.05},
    };
    DemographicTable t;
    t.k = 27;
    t.categories = demographic_categories(gender_states(), age_states());
    t.probs = Matrix(27, 18);
    for (std::size_t g = 0; g < 18; ++g)
        for (std::size_t c = 0; c < 27; ++c) t.probs.at(c, g) = rows[g][c];
    t.empty_classes.assign(27, 0);
    t.validate(0.05);  // two-decimal rounding leaves rows off 1.0 by up to a few hundredths
    return t;
}

}  // namespace fixtures

inline BayesNet make_fixture(FixtureKind kind) {
    switch (kind) {
        case FixtureKind::chain3: return fixtures::chain3();
        case FixtureKind::collider3: return fixtures::collider3();
        case FixtureKind::table2_dag: return fixtures::table2_net();
    }
    throw ConfigError("unknown fixture kind");
}

// Planted-cluster categorical mixture: k binary prototype records with
// pairwise Hamming separation >= min_separation, each sampled record equal to
// its prototype with at most one variable flipped. Inter-cluster gap is then
// far larger than any intra-cluster spread.
struct MixtureConfig {
    int k = 3;
    std::size_t n_vars = 16;
    std::size_t n_per_cluster = 60;
    double flip_prob = 0.35;
    std::size_t min_separation = 8;
    std::uint64_t seed = 0;
};

struct MixtureFixture {
    CategoricalTable table;
    std::vector<int> labels;                 // planted cluster per row
    std::vector<std::vector<int>> prototypes;  // k x n_vars
};

inline MixtureFixture make_mixture(const MixtureConfig& cfg) {
    if (cfg.k < 2) throw ConfigError("mixture: k must be >= 2");
    if (cfg.min_separation > cfg.n_vars) throw ConfigError("mixture: separation exceeds variable count");
    SplitMix64 rng(mix_seed(cfg.seed, 0x717));
    std::vector<std::vector<int>> protos;
    std::size_t attempts = 0;
    while (protos.size() < static_cast<std::size_t>(cfg.k)) {
        if (++attempts > 100000) throw NumericError("mixture: could not place separated prototypes");
        std::vector<int> cand(cfg.n_vars);
        for (auto& b : cand) b = rng.next_double() < 0.5 ? 0 : 1;
        bool ok = true;
        for (const auto& p : protos) {
            std::size_t ham = 0;
            for (std::size_t i = 0; i < cfg.n_vars; ++i) ham += static_cast<std::size_t>(p[i] != cand[i]);
            if (ham < cfg.min_separation) {
                ok = false;
                break;
            }
        }
        if (ok) protos.push_back(std::move(cand));
    }

    MixtureFixture fx;
    fx.prototypes = protos;
    fx.table.variables.clear();
    for (std::size_t v = 0; v < cfg.n_vars; ++v) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "S%02zu", v);
        fx.table.variables.emplace_back(buf);
        fx.table.states.push_back(fixtures::binary_states());
    }
    for (int c = 0; c < cfg.k; ++c) {
        for (std::size_t i = 0; i < cfg.n_per_cluster; ++i) {
            std::vector<int> row = protos[static_cast<std::size_t>(c)];
            if (rng.next_double() < cfg.flip_prob) {
                std::size_t pos = static_cast<std::size_t>(rng.next_below(cfg.n_vars));
                row[pos] = 1 - row[pos];
            }
            fx.labels.push_back(c);
            fx.table.cells.insert(fx.table.cells.end(), row.begin(), row.end());
        }
    }
    fx.table.validate();
    return fx;
}

}  // namespace cpdforge
