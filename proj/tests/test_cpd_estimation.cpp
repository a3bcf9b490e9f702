#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "cpdforge/cpd_estimation.hpp"
#include "cpdforge/sampling_oracle.hpp"

using namespace cpdforge;

namespace {

CategoricalTable binary_table(const std::vector<std::vector<int>>& rows, std::size_t n_vars) {
    CategoricalTable t;
    for (std::size_t v = 0; v < n_vars; ++v) {
        t.variables.push_back("v" + std::to_string(v));
        t.states.push_back({"no", "yes"});
    }
    for (const auto& r : rows) t.cells.insert(t.cells.end(), r.begin(), r.end());
    t.validate();
    return t;
}

// Independent counting oracle: map-based tallies, no shared code with the
// estimator's stride counting.
double count_ratio(const CategoricalTable& t, int var, int state, const std::map<int, int>& parent_states) {
    std::size_t num = 0, den = 0;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        bool match = true;
        for (auto [p, s] : parent_states) match &= t.at(r, static_cast<std::size_t>(p)) == s;
        if (!match) continue;
        ++den;
        if (t.at(r, static_cast<std::size_t>(var)) == state) ++num;
    }
    return den == 0 ? -1.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Enumerates all full assignments of a net (small n only).
void for_each_assignment(const BayesNet& net, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> a(net.n_nodes(), 0);
    while (true) {
        fn(a);
        std::size_t i = 0;
        while (i < a.size()) {
            if (++a[i] < net.cardinality(static_cast<int>(i))) break;
            a[i] = 0;
            ++i;
        }
        if (i == a.size()) break;
    }
}

}  // namespace

TEST_CASE("mle marginal matches relative frequency") {
    auto t = binary_table({{1}, {1}, {1}, {0}}, 1);
    auto net = fit_mle(t, Dag(1, t.variables, {}));
    auto row = cpd_lookup(net, 0, {});
    CHECK(row[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(row[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("mle uses a flagged uniform row for unseen parent configs") {
    // v0 is always yes, so config v0=no is unseen for v1
    auto t = binary_table({{1, 0}, {1, 1}}, 2);
    auto net = fit_mle(t, Dag(2, t.variables, {{0, 1}}));
    const Cpd& c = net.cpds[1];
    CHECK(c.uniform_rows[0] == 1);
    CHECK(c.table.at(0, 0) == doctest::Approx(0.5));
    CHECK(c.uniform_rows[1] == 0);
}

TEST_CASE("mle conditional matches a hand-counted constructed table") {
    // 100 rows: 40 with v0=yes of which 30 have v1=yes; 60 with v0=no of which 12 have v1=yes
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 30; ++i) rows.push_back({1, 1});
    for (int i = 0; i < 10; ++i) rows.push_back({1, 0});
    for (int i = 0; i < 12; ++i) rows.push_back({0, 1});
    for (int i = 0; i < 48; ++i) rows.push_back({0, 0});
    auto t = binary_table(rows, 2);
    auto net = fit_mle(t, Dag(2, t.variables, {{0, 1}}));
    CHECK(cpd_lookup(net, 1, {{0, 1}})[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(cpd_lookup(net, 1, {{0, 0}})[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("mle equals a counting oracle on random tables") {
    SplitMix64 rng(6001);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<int>> rows;
        std::size_t n = 20 + rng.next_below(60);
        for (std::size_t r = 0; r < n; ++r)
            rows.push_back({static_cast<int>(rng.next_below(2)), static_cast<int>(rng.next_below(2)),
                            static_cast<int>(rng.next_below(2))});
        auto t = binary_table(rows, 3);
        Dag dag(3, t.variables, {{0, 2}, {1, 2}});
        auto net = fit_mle(t, dag);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                double oracle = count_ratio(t, 2, 1, {{0, a}, {1, b}});
                auto row = cpd_lookup(net, 2, {{0, a}, {1, b}});
                if (oracle < 0) {
                    CHECK(row[1] == doctest::Approx(0.5));
                } else {
                    CHECK(row[1] == doctest::Approx(oracle).epsilon(1e-12));
                }
            }
    }
}

TEST_CASE("bayesian estimator follows the pseudo-count formula") {
    // no data: symmetric prior only
    CategoricalTable empty;
    empty.variables = {"v"};
    empty.states = {{"no", "yes"}};
    CHECK_THROWS_AS(fit_mle(empty, Dag(1, empty.variables, {})), DataError);

    auto t = binary_table({{1}, {1}, {1}, {0}}, 1);
    auto net = fit_bayesian(t, Dag(1, t.variables, {}), 2.0);  // alpha = 1 per cell
    CHECK(cpd_lookup(net, 0, {})[1] == doctest::Approx(4.0 / 6.0).epsilon(1e-12));

    CHECK_THROWS_AS(fit_bayesian(t, Dag(1, t.variables, {}), 0.0), ConfigError);
    CHECK_THROWS_AS(fit_bayesian(t, Dag(1, t.variables, {}), -1.0), ConfigError);
}

TEST_CASE("bayesian estimator converges to mle as ess vanishes") {
    auto data = forward_sample(fixtures::chain3(), {2000, 77});
    auto dag = fixtures::chain3().dag;
    auto mle = fit_mle(data, dag);
    auto bayes = fit_bayesian(data, dag, 1e-6);
    for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t cfg = 0; cfg < mle.cpds[v].n_configs(); ++cfg) {
            if (mle.cpds[v].uniform_rows[cfg]) continue;
            for (int s = 0; s < 2; ++s)
                CHECK(bayes.cpds[v].table.at(cfg, static_cast<std::size_t>(s)) ==
                      doctest::Approx(mle.cpds[v].table.at(cfg, static_cast<std::size_t>(s))).epsilon(1e-5));
        }
}

TEST_CASE("every cpd row sums to one for both estimators") {
    SplitMix64 rng(88);
    for (int trial = 0; trial < 10; ++trial) {
        auto data = forward_sample(fixtures::table2_net(), {50 + rng.next_below(100), rng.next_u64()});
        auto dag = fixtures::table2_dag();
        for (const BayesNet& net : {fit_mle(data, dag), fit_bayesian(data, dag, 1.0)}) {
            for (const Cpd& c : net.cpds)
                for (std::size_t cfg = 0; cfg < c.n_configs(); ++cfg) {
                    double sum = 0;
                    for (int s = 0; s < c.n_states; ++s) sum += c.table.at(cfg, static_cast<std::size_t>(s));
                    CHECK(std::abs(sum - 1.0) <= 1e-9);
                }
        }
    }
}

TEST_CASE("cpd_lookup validates the assignment") {
    auto sev = fixtures::severity_net();
    CHECK_THROWS_AS(cpd_lookup(sev, "N", {{"B", "No"}}), DataError);  // missing parents
    CHECK_THROWS_AS(cpd_lookup(sev, "N", {{"B", "No"}, {"C", "No"}, {"M", "No"}, {"S", "No"}}), DataError);
    CHECK_THROWS_AS(cpd_lookup(sev, "N", {{"B", "maybe"}, {"C", "No"}, {"M", "No"}}), DataError);
    CHECK_THROWS_AS(cpd_lookup(sev, "Z", {}), DataError);
    // parentless node returns its marginal
    auto marginal = cpd_lookup(sev, "B", {});
    CHECK(marginal == std::vector<double>{0.8, 0.2});
}

TEST_CASE("severity fixture reproduces the published icu and ventilation entries") {
    auto sev = fixtures::severity_net();
    auto icu_all_yes = cpd_lookup(sev, "N", {{"B", "Yes"}, {"C", "Yes"}, {"M", "Yes"}});
    CHECK(icu_all_yes[1] == doctest::Approx(0.54));
    auto icu_all_no = cpd_lookup(sev, "N", {{"B", "No"}, {"C", "No"}, {"M", "No"}});
    CHECK(icu_all_no[0] == doctest::Approx(1.0));
    CHECK(icu_all_no[1] == doctest::Approx(0.0));
    auto vent = cpd_lookup(sev, "O", {{"C", "Yes"}, {"M", "Yes"}, {"N", "Yes"}, {"S", "Yes"}});
    CHECK(vent[1] == doctest::Approx(0.63));
    auto vent_none = cpd_lookup(sev, "O", {{"C", "No"}, {"M", "No"}, {"N", "No"}, {"S", "No"}});
    CHECK(vent_none[0] == doctest::Approx(1.0));
}

TEST_CASE("joint probability multiplies the factors") {
    auto t = binary_table({{1}, {1}, {1}, {0}}, 1);
    auto net = fit_mle(t, Dag(1, t.variables, {}));
    CHECK(joint_probability(net, {1}) == doctest::Approx(0.75).epsilon(1e-12));

    // chain with known cpds: P(A=y, B=y) = 0.5 * 0.8
    BayesNet chain;
    chain.dag = Dag(2, {"A", "B"}, {{0, 1}});
    chain.states.assign(2, {"no", "yes"});
    Cpd a;
    a.variable = 0;
    a.n_states = 2;
    a.table = Matrix(1, 2, 0.5);
    a.uniform_rows.assign(1, 0);
    Cpd b;
    b.variable = 1;
    b.parents = {0};
    b.parent_cards = {2};
    b.n_states = 2;
    b.table = Matrix(2, 2);
    b.table.at(0, 0) = 0.7;
    b.table.at(0, 1) = 0.3;
    b.table.at(1, 0) = 0.2;
    b.table.at(1, 1) = 0.8;
    b.uniform_rows.assign(2, 0);
    chain.cpds = {std::move(a), std::move(b)};
    chain.validate();
    CHECK(joint_probability(chain, {1, 1}) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK_THROWS_AS(joint_probability(chain, {1}), DataError);
}

TEST_CASE("joint probabilities sum to one over all assignments") {
    for (auto kind : {FixtureKind::chain3, FixtureKind::collider3}) {
        auto net = make_fixture(kind);
        double total = 0;
        for_each_assignment(net, [&](const std::vector<int>& a) { total += joint_probability(net, a); });
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    // and for a fitted 4-node net
    auto data = forward_sample(fixtures::severity_net(), {300, 5});
    auto net = fit_bayesian(data, fixtures::severity_net().dag, 1.0);
    double total = 0;
    for_each_assignment(net, [&](const std::vector<int>& a) { total += joint_probability(net, a); });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("markov factorization holds empirically for the common-cause net") {
    auto net = fixtures::collider3();
    auto data = forward_sample(net, {100000, 31});
    // empirical P(A,B|C) vs P(A|C) P(B|C)
    for (int cstate = 0; cstate < 2; ++cstate) {
        double n_c = 0, n_ab = 0, n_a = 0, n_b = 0;
        for (std::size_t r = 0; r < data.n_rows(); ++r) {
            if (data.at(r, 2) != cstate) continue;
            ++n_c;
            if (data.at(r, 0) == 1) ++n_a;
            if (data.at(r, 1) == 1) ++n_b;
            if (data.at(r, 0) == 1 && data.at(r, 1) == 1) ++n_ab;
        }
        REQUIRE(n_c > 1000);
        double lhs = n_ab / n_c;
        double rhs = (n_a / n_c) * (n_b / n_c);
        CHECK(lhs == doctest::Approx(rhs).epsilon(0.05));
    }
}

TEST_CASE("mle converges to the generating cpds at n=100000") {
    auto truth = fixtures::chain3();
    auto data = forward_sample(truth, {100000, 3});
    auto fitted = fit_mle(data, truth.dag);
    for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t cfg = 0; cfg < truth.cpds[v].n_configs(); ++cfg)
            for (int s = 0; s < 2; ++s)
                CHECK(std::abs(fitted.cpds[v].table.at(cfg, static_cast<std::size_t>(s)) -
                               truth.cpds[v].table.at(cfg, static_cast<std::size_t>(s))) < 0.02);
}

TEST_CASE("severity report renders the table layout") {
    auto sev = fixtures::severity_net();
    auto rep = severity_report(sev, "N");
    CHECK(rep.parent_names == std::vector<std::string>{"B", "C", "M"});
    CHECK(rep.values.rows == 2);
    CHECK(rep.values.cols == 8);
    CHECK(rep.values.at(1, 7) == doctest::Approx(0.54));

    auto csv = severity_report_csv(rep);
    // three parent header lines + two value rows
    CHECK(csv.find(",B (No)") == 0);
    CHECK(csv.find("N (No),1.0,0.91,0.95,0.61,0.99,0.8,0.82,0.46") != std::string::npos);
    CHECK(csv.find("N (Yes),0.0,0.09,0.05,0.39,0.01,0.2,0.18,0.54") != std::string::npos);

    // parentless target: single column
    auto marginal_rep = severity_report(sev, "B");
    CHECK(marginal_rep.values.cols == 1);
    CHECK(marginal_rep.column_headers.empty());
}

TEST_CASE("net json round-trips") {
    auto data = forward_sample(fixtures::severity_net(), {200, 9});
    auto net = fit_bayesian(data, fixtures::severity_net().dag, 1.0);
    auto back = net_from_json(net_to_json(net));
    for (std::size_t v = 0; v < net.n_nodes(); ++v) {
        CHECK(back.cpds[v].parents == net.cpds[v].parents);
        CHECK(back.cpds[v].table.data == net.cpds[v].table.data);
        CHECK(back.cpds[v].uniform_rows == net.cpds[v].uniform_rows);
    }
}
