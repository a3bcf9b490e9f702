// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cpdforge/pipeline.hpp"
#include "cpdforge/sampling_oracle.hpp"

using namespace cpdforge;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& why) {
        if (!cond && ok) {
            ok = false;
            detail = why;
        }
    }
};

BayesNet random_small_net(SplitMix64& rng, std::size_t n_nodes) {
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i < static_cast<int>(n_nodes); ++i)
        for (int j = i + 1; j < static_cast<int>(n_nodes); ++j)
            if (rng.next_double() < 0.4) edges.emplace(i, j);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n_nodes; ++i) names.push_back("v" + std::to_string(i));
    BayesNet net;
    net.dag = Dag(n_nodes, names, std::move(edges));
    for (std::size_t v = 0; v < n_nodes; ++v) {
        int card = 2 + static_cast<int>(rng.next_below(2));
        std::vector<std::string> states;
        for (int s = 0; s < card; ++s) states.push_back("s" + std::to_string(s));
        net.states.push_back(states);
    }
    for (std::size_t v = 0; v < n_nodes; ++v) {
        Cpd c;
        c.variable = static_cast<int>(v);
        c.parents = net.dag.parents(static_cast<int>(v));
        for (int p : c.parents) c.parent_cards.push_back(net.cardinality(p));
        c.n_states = net.cardinality(static_cast<int>(v));
        std::size_t q = 1;
        for (int pc : c.parent_cards) q *= static_cast<std::size_t>(pc);
        c.table = Matrix(q, static_cast<std::size_t>(c.n_states));
        c.uniform_rows.assign(q, 0);
        for (std::size_t cfg = 0; cfg < q; ++cfg) {
            double total = 0;
            std::vector<double> w(static_cast<std::size_t>(c.n_states));
            for (auto& x : w) {
                x = 0.1 + rng.next_double();
                total += x;
            }
            for (int s = 0; s < c.n_states; ++s) c.table.at(cfg, static_cast<std::size_t>(s)) = w[static_cast<std::size_t>(s)] / total;
        }
        net.cpds.push_back(std::move(c));
    }
    net.validate();
    return net;
}

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

std::set<std::pair<int, int>> skeleton(const Dag& dag) {
    std::set<std::pair<int, int>> out;
    for (auto [p, c] : dag.edges()) out.emplace(std::min(p, c), std::max(p, c));
    return out;
}

// criterion 1: every CPD row from both estimators sums to 1 +- 1e-9 across
// 100 randomized fit runs
Check criterion_cpd_normalization() {
    Check c;
    SplitMix64 rng(101);
    for (int run = 0; run < 100; ++run) {
        auto net = random_small_net(rng, 2 + rng.next_below(5));
        auto data = forward_sample(net, {20 + rng.next_below(300), rng.next_u64()});
        for (const BayesNet& fitted :
             {fit_mle(data, net.dag), fit_bayesian(data, net.dag, 0.1 + rng.next_double() * 4)}) {
            for (const Cpd& cpd : fitted.cpds)
                for (std::size_t cfg = 0; cfg < cpd.n_configs(); ++cfg) {
                    double sum = 0;
                    for (int s = 0; s < cpd.n_states; ++s) sum += cpd.table.at(cfg, static_cast<std::size_t>(s));
                    c.require(std::abs(sum - 1.0) <= 1e-9, "row sum off by " + std::to_string(sum - 1.0));
                }
        }
    }
    return c;
}

// criterion 2: brute-force sum of joint_probability over all assignments
// equals 1 +- 1e-9 on every <=4-node fixture
Check criterion_factorization() {
    Check c;
    std::vector<BayesNet> nets = {fixtures::chain3(), fixtures::collider3()};
    {
        // 4-node diamond with fitted cpds
        SplitMix64 rng(202);
        auto truth = random_small_net(rng, 4);
        auto data = forward_sample(truth, {500, 7});
        nets.push_back(fit_mle(data, truth.dag));
        nets.push_back(fit_bayesian(data, truth.dag, 1.0));
    }
    for (const auto& net : nets) {
        double total = 0;
        for_each_assignment(net, [&](const std::vector<int>& a) { total += joint_probability(net, a); });
        c.require(std::abs(total - 1.0) <= 1e-9, "joint sums to " + std::to_string(total));
    }
    return c;
}

// criterion 3: fit_mle equals hand-count ratios exactly on 20 constructed
// tables; fit_bayesian at ess=1e-6 matches within 1e-5 on observed configs
Check criterion_estimator_oracle() {
    Check c;
    SplitMix64 rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng.next_below(90);
        CategoricalTable t;
        t.variables = {"a", "b"};
        t.states = {{"n", "y"}, {"n", "y"}};
        for (std::size_t r = 0; r < n; ++r) {
            t.cells.push_back(static_cast<int>(rng.next_below(2)));
            t.cells.push_back(static_cast<int>(rng.next_below(2)));
        }
        Dag dag(2, t.variables, {{0, 1}});
        auto mle = fit_mle(t, dag);
        auto bayes = fit_bayesian(t, dag, 1e-6);
        // independent counting oracle
        for (int a = 0; a < 2; ++a) {
            std::size_t n_a = 0, n_ab = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (t.at(r, 0) != a) continue;
                ++n_a;
                if (t.at(r, 1) == 1) ++n_ab;
            }
            if (n_a == 0) continue;
            double expect = static_cast<double>(n_ab) / static_cast<double>(n_a);
            double got = mle.cpds[1].table.at(static_cast<std::size_t>(a), 1);
            c.require(std::abs(got - expect) <= 1e-12, "mle mismatch vs hand count");
            double got_b = bayes.cpds[1].table.at(static_cast<std::size_t>(a), 1);
            c.require(std::abs(got_b - expect) <= 1e-5, "bayesian(ess=1e-6) mismatch vs mle");
        }
    }
    return c;
}

// criterion 4: structure recovery on chain3 / collider3 at n=50000 in >= 95
// of 100 seeded runs
Check criterion_structure_recovery() {
    Check c;
    int good = 0;
    int runs = 0;
    for (auto kind : {FixtureKind::chain3, FixtureKind::collider3}) {
        auto truth = make_fixture(kind);
        auto true_skeleton = skeleton(truth.dag);
        for (int i = 0; i < 50; ++i) {
            ++runs;
            auto data = forward_sample(truth, {50000, 40000 + static_cast<std::uint64_t>(runs)});
            SearchConfig cfg;
            cfg.seed = static_cast<std::uint64_t>(runs);
            auto hc = hill_climb(data, cfg);
            auto ex = exhaustive_search(data, cfg);
            double tol = 1e-9 * std::max(1.0, std::abs(ex.score));
            if (std::abs(hc.score - ex.score) <= tol && skeleton(hc.dag) == true_skeleton) ++good;
        }
    }
    c.require(good >= 95, "only " + std::to_string(good) + "/100 runs recovered score+skeleton");
    return c;
}

// criterion 5: strictly increasing hill-climb score per iteration; score <=
// exhaustive on 3-variable instances with equality on >= 80% of 50 instances
Check criterion_hill_climb_bound() {
    Check c;
    SplitMix64 rng(505);
    int equal = 0;
    for (int i = 0; i < 50; ++i) {
        auto net = random_small_net(rng, 3);
        auto data = forward_sample(net, {200 + rng.next_below(800), rng.next_u64()});
        SearchConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(i);
        auto hc = hill_climb(data, cfg);
        for (std::size_t s = 1; s < hc.score_trace.size(); ++s)
            c.require(hc.score_trace[s] > hc.score_trace[s - 1], "score trace not strictly increasing");
        auto ex = exhaustive_search(data, cfg);
        double tol = 1e-9 * std::max(1.0, std::abs(ex.score));
        c.require(hc.score <= ex.score + tol, "hill climb exceeded the exhaustive optimum");
        if (hc.score >= ex.score - tol) ++equal;
    }
    c.require(equal >= 40, "global optimum reached only " + std::to_string(equal) + "/50 times");
    return c;
}

// criterion 6: lloyd monotonicity on 100 random instances; dunn == brute
// force exactly (n <= 200); select_k recovers planted K in {3,4,5} on >= 95%
// of seeds
Check criterion_kmeans() {
    Check c;
    SplitMix64 rng(606);
    for (int i = 0; i < 100; ++i) {
        std::size_t n = 20 + rng.next_below(150);
        std::size_t d = 1 + rng.next_below(5);
        Matrix data(n, d);
        for (auto& x : data.data) x = rng.next_double() * 8;
        int k = 2 + static_cast<int>(rng.next_below(5));
        auto model = lloyd(data, kmeanspp_init(data, k, rng.next_u64()));
        for (std::size_t s = 1; s < model.sse_trace.size(); ++s)
            c.require(model.sse_trace[s] <= model.sse_trace[s - 1] + 1e-9, "sse increased during lloyd");

        // brute-force dunn comparison on the same instance when clusters are non-empty
        std::vector<std::size_t> sizes(static_cast<std::size_t>(model.k), 0);
        for (int a : model.assignments) ++sizes[static_cast<std::size_t>(a)];
        bool empty = false;
        for (auto s : sizes) empty |= s == 0;
        if (!empty) {
            double got = dunn_index(data, model);
            double min_inter = std::numeric_limits<double>::infinity(), max_diam = 0;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) {
                    double dist = 0;
                    for (std::size_t dd = 0; dd < d; ++dd) {
                        double diff = data.at(a, dd) - data.at(b, dd);
                        dist += diff * diff;
                    }
                    dist = std::sqrt(dist);
                    if (model.assignments[a] == model.assignments[b])
                        max_diam = std::max(max_diam, dist);
                    else
                        min_inter = std::min(min_inter, dist);
                }
            double expect = max_diam == 0 ? std::numeric_limits<double>::infinity() : min_inter / max_diam;
            c.require(got == expect, "dunn mismatch vs brute force");
        }
    }

    int recovered = 0, total = 0;
    for (int planted : {3, 4, 5}) {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            ++total;
            MixtureConfig mc;
            mc.k = planted;
            mc.seed = seed * 7919 + static_cast<std::uint64_t>(planted);
            auto fx = make_mixture(mc);
            auto fm = encode(fx.table, Encoding::one_hot);
            auto sel = select_k(fm.data, 2, planted + 2, seed);
            if (sel.chosen_k == planted) ++recovered;
        }
    }
    c.require(recovered * 100 >= total * 95,
              "planted K recovered in " + std::to_string(recovered) + "/" + std::to_string(total) + " runs");
    return c;
}

// criterion 7: analytic gradients vs central differences, relative error
// < 1e-4 over 50 random small models
Check criterion_gradients() {
    Check c;
    SplitMix64 rng(707);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> dims = {1 + rng.next_below(5), 1 + rng.next_below(7), 2 + rng.next_below(3)};
        auto m = init_model(dims, rng.next_u64());
        std::size_t batch = 1 + rng.next_below(4);
        Matrix X(batch, dims[0]);
        for (auto& v : X.data) v = rng.next_double() * 2 - 1;
        std::vector<int> y;
        for (std::size_t r = 0; r < batch; ++r) y.push_back(static_cast<int>(rng.next_below(dims.back())));

        detail::Gradients g(m);
        detail::ForwardTrace trace;
        for (std::size_t r = 0; r < batch; ++r) {
            std::vector<double> x(X.row(r), X.row(r) + X.cols);
            auto probs = detail::forward_trace(m, x, &trace);
            detail::backward_accumulate(m, trace, probs, y[r], 1.0 / static_cast<double>(batch), g);
        }
        auto loss_at = [&]() {
            Matrix probs(batch, dims.back());
            for (std::size_t r = 0; r < batch; ++r) {
                auto p = forward(m, std::vector<double>(X.row(r), X.row(r) + X.cols));
                std::copy(p.begin(), p.end(), probs.row(r));
            }
            return loss(probs, y);
        };
        const double h = 1e-5;
        auto check_param = [&](double* p, double analytic) {
            double orig = *p;
            *p = orig + h;
            double up = loss_at();
            *p = orig - h;
            double down = loss_at();
            *p = orig;
            double numeric = (up - down) / (2 * h);
            double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
            c.require(rel < 1e-4, "gradient relative error " + std::to_string(rel));
        };
        for (std::size_t l = 0; l < m.n_layers(); ++l) {
            for (std::size_t i = 0; i < m.weights[l].data.size(); ++i) check_param(&m.weights[l].data[i], g.dW[l].data[i]);
            for (std::size_t i = 0; i < m.biases[l].size(); ++i) check_param(&m.biases[l][i], g.db[l][i]);
        }
    }
    return c;
}

// criterion 8: end-to-end desk-scale analog on 20,000 synthetic rows; DSID
// test accuracy >= 0.99 and strictly above the two-head heuristic baseline
Check criterion_end_to_end() {
    Check c;
    fs::path dir = fs::temp_directory_path() / "cpdforge_acceptance_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto table = forward_sample(fixtures::table2_net(), {20000, 808});
    write_file((dir / "data.csv").string(), to_csv(table));

    PipelineConfig cfg;
    cfg.input_path = (dir / "data.csv").string();
    cfg.out_dir = (dir / "artifacts").string();
    cfg.targets = {"V", "D"};
    cfg.severity_nodes = {"G", "N", "O", "P"};
    cfg.structure.seed = 1;
    cfg.structure.max_iterations = 600;
    cfg.k = 12;
    cfg.cluster_seed = 2;
    cfg.training.epochs = 16;
    cfg.training.batch_size = 50;
    cfg.training.learning_rate = 0.003;
    cfg.training.seed = 3;
    cfg.hidden_dims = {64, 32};
    cfg.split.seed = 4;
    cfg.heuristic_baseline = true;

    auto res = run_all(cfg);
    double dsid = res.stage3.report.at("test_accuracy").get<double>();
    double baseline = res.stage3.report.at("baseline_avg_accuracy").get<double>();
    c.require(dsid >= 0.99, "dsid test accuracy " + std::to_string(dsid));
    c.require(baseline < dsid, "baseline " + std::to_string(baseline) + " not below dsid " + std::to_string(dsid));
    fs::remove_all(dir);
    return c;
}

// criterion 9: published table fixtures load and reproduce the cited values
Check criterion_fixtures() {
    Check c;
    auto dag = dag_from_adjacency_csv(fixtures::table2_adjacency_csv());
    c.require(dag.n_nodes() == 24, "table2 node count");
    c.require(dag.n_edges() == 109, "table2 edge count");

    auto sev = fixtures::severity_net();
    auto icu = cpd_lookup(sev, "N", {{"B", "Yes"}, {"C", "Yes"}, {"M", "Yes"}});
    c.require(icu[1] == 0.54, "icu entry not 0.54 exactly");
    auto icu_none = cpd_lookup(sev, "N", {{"B", "No"}, {"C", "No"}, {"M", "No"}});
    c.require(icu_none[0] == 1.0 && icu_none[1] == 0.0, "icu all-no row not [1, 0]");

    auto demo = fixtures::demographic_table27();
    auto [cat, p] = argmax_demographic(demo, 6);
    c.require(demo.categories[cat] == "Female 20 - 29 Years", "class 6 argmax category");
    c.require(p == 0.18, "class 6 argmax probability not 0.18 exactly");
    return c;
}

// criterion 10: demographic row stochasticity and argmax consistency on 1000
// random tables
Check criterion_demographic_random() {
    Check c;
    SplitMix64 rng(1010);
    for (int trial = 0; trial < 1000; ++trial) {
        int k = 1 + static_cast<int>(rng.next_below(8));
        int n_cat = 2 + static_cast<int>(rng.next_below(16));
        std::size_t n = 1 + rng.next_below(300);
        std::vector<int> labels, cats;
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k))));
            cats.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_cat))));
        }
        std::vector<std::string> names;
        for (int g = 0; g < n_cat; ++g) names.push_back("c" + std::to_string(g));
        auto t = fit_demographic_table(labels, cats, k, names);
        for (int cls = 0; cls < k; ++cls) {
            double sum = 0, mx = 0;
            for (int g = 0; g < n_cat; ++g) {
                double v = t.probs.at(static_cast<std::size_t>(cls), static_cast<std::size_t>(g));
                sum += v;
                mx = std::max(mx, v);
            }
            c.require(std::abs(sum - 1.0) <= 1e-9, "row not stochastic");
            auto [cat, p] = argmax_demographic(t, cls);
            c.require(p == mx, "argmax probability is not the row max");
            c.require(t.probs.at(static_cast<std::size_t>(cls), cat) == p, "argmax category inconsistent");
        }
    }
    return c;
}

// criterion 11: reruns with identical seed/config produce byte-identical
// artifacts, verified twice
Check criterion_determinism() {
    Check c;
    fs::path dir = fs::temp_directory_path() / "cpdforge_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto table = forward_sample(fixtures::table2_net(), {800, 909});
    write_file((dir / "data.csv").string(), to_csv(table));

    PipelineConfig cfg;
    cfg.input_path = (dir / "data.csv").string();
    cfg.targets = {"V", "D"};
    cfg.severity_nodes = {"G", "N"};
    cfg.structure.seed = 5;
    cfg.structure.max_iterations = 400;
    cfg.k = 0;
    cfg.k_min = 2;
    cfg.k_max = 4;
    cfg.cluster_seed = 6;
    cfg.training.epochs = 3;
    cfg.training.seed = 7;
    cfg.hidden_dims = {24};
    cfg.split.seed = 8;

    auto read_tree = [](const fs::path& root) {
        std::map<std::string, std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(root))
            if (entry.is_regular_file())
                files[fs::relative(entry.path(), root).string()] = read_file(entry.path().string());
        return files;
    };

    cfg.out_dir = (dir / "run1").string();
    run_all(cfg);
    auto base = read_tree(dir / "run1");
    c.require(!base.empty(), "no artifacts produced");
    for (int verify = 2; verify <= 3; ++verify) {
        cfg.out_dir = (dir / ("run" + std::to_string(verify))).string();
        run_all(cfg);
        auto rerun = read_tree(dir / ("run" + std::to_string(verify)));
        c.require(rerun.size() == base.size(), "artifact file sets differ");
        for (const auto& [rel, contents] : base) {
            auto it = rerun.find(rel);
            c.require(it != rerun.end() && it->second == contents, "artifact differs: " + rel);
        }
    }
    fs::remove_all(dir);
    return c;
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Check()> run;
};

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "CPD normalization across randomized fits", 10.0, criterion_cpd_normalization},
        {2, "factorization soundness on small fixtures", 5.0, criterion_factorization},
        {3, "estimator agreement with counting oracle", 10.0, criterion_estimator_oracle},
        {4, "structure recovery on chain/fork fixtures", 120.0, criterion_structure_recovery},
        {5, "hill-climb monotonicity and exhaustive bound", 60.0, criterion_hill_climb_bound},
        {6, "kmeans monotonicity, dunn oracle, planted-K recovery", 60.0, criterion_kmeans},
        {7, "gradient check vs central differences", 30.0, criterion_gradients},
        {8, "end-to-end pipeline accuracy vs heuristic baseline", 300.0, criterion_end_to_end},
        {9, "published table fixtures reproduce cited values", 5.0, criterion_fixtures},
        {10, "demographic tables: stochasticity and argmax", 10.0, criterion_demographic_random},
        {11, "byte-identical artifacts across reruns", 120.0, criterion_determinism},
    };

    int failures = 0;
    for (const auto& crit : criteria) {
        auto start = std::chrono::steady_clock::now();
        Check result;
        try {
            result = crit.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > crit.limit_seconds) {
            result.ok = false;
            result.detail = "runtime " + std::to_string(elapsed) + "s exceeds " +
                            std::to_string(crit.limit_seconds) + "s";
        }
        if (result.ok) {
            std::printf("[PASS] criterion %2d: %s (%.1fs)\n", crit.id, crit.name, elapsed);
        } else {
            std::printf("[FAIL] criterion %2d: %s (%.1fs): %s\n", crit.id, crit.name, elapsed,
                        result.detail.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures;
}
