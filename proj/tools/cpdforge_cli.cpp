// cpdforge: three-stage pipeline for categorical tabular data.
// Stage 1 learns a Bayesian-network structure and its CPDs, stage 2 clusters
// records on the ancestor features of the demographic targets, stage 3 trains
// a softmax classifier on the cluster labels and builds the per-class
// demographic probability table.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpdforge/pipeline.hpp"
#include "cpdforge/sampling_oracle.hpp"

namespace {

using namespace cpdforge;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
    std::string config_path;
    std::string input;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int k = 0;
    std::string targets;
    std::string score;
    double ess = 0.0;
    bool ess_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "pipeline config JSON");
    cmd->add_option("--input", f.input, "input CSV path");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "seed override for the relevant stage")->each([&](const std::string&) {
        f.seed_set = true;
    });
    cmd->add_option("--k", f.k, "fixed cluster count");
    cmd->add_option("--targets", f.targets, "comma-separated demographic variables (outer key first)");
    cmd->add_option("--score", f.score, "structure score: bic or bdeu")->check(CLI::IsMember({"bic", "bdeu"}));
    cmd->add_option("--ess", f.ess, "equivalent sample size (bdeu / bayesian estimator)")->each([&](const std::string&) {
        f.ess_set = true;
    });
}

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

PipelineConfig resolve_config(const CommonFlags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = load_config(f.config_path);
    if (!f.input.empty()) cfg.input_path = f.input;
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.k > 0) cfg.k = f.k;
    if (!f.targets.empty()) cfg.targets = split_names(f.targets);
    if (!f.score.empty()) cfg.structure.score = f.score == "bdeu" ? ScoreType::bdeu : ScoreType::bic;
    if (f.ess_set) {
        cfg.structure.ess = f.ess;
        cfg.ess = f.ess;
    }
    if (f.seed_set) {
        cfg.structure.seed = f.seed;
        cfg.cluster_seed = f.seed;
        cfg.training.seed = f.seed;
        cfg.split.seed = f.seed;
    }
    if (cfg.input_path.empty()) throw ConfigError("no input file given (use --input or the config)");
    return cfg;
}

Dag load_stage1_dag(const PipelineConfig& cfg, const std::string& dag_path) {
    std::string path = dag_path.empty() ? cfg.out_dir + "/stage1/dag.json" : dag_path;
    return dag_from_json(nlohmann::json::parse(read_file(path)));
}

int cmd_sample(const std::string& fixture, std::size_t n, std::uint64_t seed, int mixture_k,
               const std::string& out_path) {
    if (fixture == "mixture") {
        MixtureConfig mc;
        mc.k = mixture_k;
        mc.seed = seed;
        mc.n_per_cluster = (n + static_cast<std::size_t>(mixture_k) - 1) / static_cast<std::size_t>(mixture_k);
        auto fx = make_mixture(mc);
        write_file(out_path, to_csv(fx.table));
        std::string labels;
        for (int l : fx.labels) {
            labels += std::to_string(l);
            labels += '\n';
        }
        write_file(out_path + ".labels.csv", labels);
        std::printf("wrote %zu rows (%d planted clusters) to %s\n", fx.table.n_rows(), mc.k, out_path.c_str());
        return 0;
    }
    BayesNet net;
    if (fixture == "chain3")
        net = make_fixture(FixtureKind::chain3);
    else if (fixture == "collider3")
        net = make_fixture(FixtureKind::collider3);
    else if (fixture == "table2_dag")
        net = make_fixture(FixtureKind::table2_dag);
    else if (fixture == "severity")
        net = fixtures::severity_net();
    else
        throw ConfigError("unknown fixture: " + fixture);
    auto table = forward_sample(net, {n, seed});
    write_file(out_path, to_csv(table));
    write_file(out_path + ".meta.json", table_metadata_json(table).dump(2) + "\n");
    std::printf("wrote %zu rows of %s to %s\n", table.n_rows(), fixture.c_str(), out_path.c_str());
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& demo_path, const std::string& input,
                const std::string& out_path) {
    nlohmann::json mj = nlohmann::json::parse(read_file(model_path));
    MlpModel model = model_from_json(mj);
    FeatureSchema schema;
    schema.variables = mj.at("feature_schema").at("variables").get<std::vector<std::string>>();
    schema.states = mj.at("feature_schema").at("states").get<std::vector<std::vector<std::string>>>();
    schema.encoding = encoding_from_string(mj.at("feature_schema").at("encoding").get<std::string>());

    DemographicTable demo = demographic_table_from_json(nlohmann::json::parse(read_file(demo_path)));

    Matrix X = encode_csv_with_schema(read_file(input), schema);

    std::string out = "row,class,score,top_category,top_probability\n";
    for (std::size_t r = 0; r < X.rows; ++r) {
        std::vector<double> x(X.row(r), X.row(r) + X.cols);
        auto [cls, score] = predict_class(model, x);
        auto [cat, p] = argmax_demographic(demo, cls);
        out += std::to_string(r) + ",C" + std::to_string(cls) + "," + format_double(score) + "," +
               detail::csv_escape(demo.categories[cat]) + "," + format_double(p) + "\n";
    }
    if (out_path.empty()) {
        std::fputs(out.c_str(), stdout);
    } else {
        write_file(out_path, out);
        std::printf("wrote %zu predictions to %s\n", X.rows, out_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cpdforge: Bayesian-network structure learning, clustering, and demographic classification"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* learn = app.add_subcommand("learn-structure", "learn a DAG from a categorical CSV");
    add_common(learn, flags);

    auto* fit = app.add_subcommand("fit-cpds", "estimate CPDs for a fixed DAG");
    add_common(fit, flags);
    std::string fit_dag_path, fit_estimator;
    fit->add_option("--dag", fit_dag_path, "dag.json path (default <out>/stage1/dag.json)");
    fit->add_option("--estimator", fit_estimator, "mle or bayesian")->check(CLI::IsMember({"mle", "bayesian"}));

    auto* report = app.add_subcommand("report-severity", "emit CPD report tables for selected nodes");
    add_common(report, flags);
    std::string report_nodes, report_cpds;
    report->add_option("--nodes", report_nodes, "comma-separated node names");
    report->add_option("--cpds", report_cpds, "cpds.json path (default <out>/stage1/cpds.json)");

    auto* selectk = app.add_subcommand("select-k", "Dunn-index scan over a k range");
    add_common(selectk, flags);
    int sk_min = 2, sk_max = 8;
    std::string sk_dag_path;
    selectk->add_option("--k-min", sk_min, "scan lower bound");
    selectk->add_option("--k-max", sk_max, "scan upper bound");
    selectk->add_option("--dag", sk_dag_path, "dag.json path");

    auto* cluster = app.add_subcommand("cluster", "cluster records on the targets' ancestor features");
    add_common(cluster, flags);
    std::string cl_dag_path;
    cluster->add_option("--dag", cl_dag_path, "dag.json path");

    auto* train_cmd = app.add_subcommand("train-dsid", "train the classifier on cluster labels");
    add_common(train_cmd, flags);
    std::string labels_path;
    train_cmd->add_option("--labels", labels_path, "labels.csv path (default <out>/stage2/labels.csv)");

    auto* predict = app.add_subcommand("predict", "classify records and report top demographics");
    std::string p_model, p_demo, p_input, p_out;
    predict->add_option("--model", p_model, "model.json path")->required();
    predict->add_option("--demographics", p_demo, "demographics.json path")->required();
    predict->add_option("--input", p_input, "CSV of records to classify")->required();
    predict->add_option("--out", p_out, "output CSV (stdout when omitted)");

    auto* sample = app.add_subcommand("sample", "generate synthetic data from a fixture network");
    std::string s_fixture = "table2_dag", s_out = "sample.csv";
    std::size_t s_n = 1000;
    std::uint64_t s_seed = 0;
    int s_mixk = 3;
    sample->add_option("--fixture", s_fixture, "chain3, collider3, table2_dag, severity, or mixture");
    sample->add_option("-n,--n", s_n, "number of records");
    sample->add_option("--seed", s_seed, "sampling seed");
    sample->add_option("--mixture-k", s_mixk, "planted cluster count for the mixture fixture");
    sample->add_option("--out", s_out, "output CSV path");

    auto* runall = app.add_subcommand("run-all", "run all three stages");
    add_common(runall, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (sample->parsed()) return cmd_sample(s_fixture, s_n, s_seed, s_mixk, s_out);
        if (predict->parsed()) return cmd_predict(p_model, p_demo, p_input, p_out);

        PipelineConfig cfg = resolve_config(flags);

        if (learn->parsed()) {
            auto res = run_stage1(cfg);
            std::printf("learned %zu edges over %zu nodes, score %.4f (%zu moves)\n", res.scored.dag.n_edges(),
                        res.scored.dag.n_nodes(), res.scored.score, res.scored.iterations_used);
            return 0;
        }
        if (fit->parsed()) {
            if (!fit_estimator.empty()) cfg.estimator = fit_estimator;
            CategoricalTable table = load_csv(cfg.input_path);
            Dag dag = load_stage1_dag(cfg, fit_dag_path);
            BayesNet net = cfg.estimator == "mle" ? fit_mle(table, dag) : fit_bayesian(table, dag, cfg.ess);
            detail::ensure_dir(cfg.out_dir + "/stage1");
            write_file(cfg.out_dir + "/stage1/cpds.json", net_to_json(net).dump(2) + "\n");
            std::printf("fitted CPDs for %zu nodes (%s)\n", net.n_nodes(), cfg.estimator.c_str());
            return 0;
        }
        if (report->parsed()) {
            std::string cpds_path = report_cpds.empty() ? cfg.out_dir + "/stage1/cpds.json" : report_cpds;
            BayesNet net = net_from_json(nlohmann::json::parse(read_file(cpds_path)));
            auto nodes = report_nodes.empty() ? cfg.severity_nodes : split_names(report_nodes);
            if (nodes.empty()) throw ConfigError("no report nodes given (use --nodes)");
            detail::ensure_dir(cfg.out_dir + "/stage1/reports");
            for (const auto& node : nodes) {
                write_file(cfg.out_dir + "/stage1/reports/" + node + ".csv",
                           severity_report_csv(severity_report(net, node)));
            }
            std::printf("wrote %zu report(s) to %s/stage1/reports\n", nodes.size(), cfg.out_dir.c_str());
            return 0;
        }
        if (selectk->parsed()) {
            CategoricalTable table = load_csv(cfg.input_path);
            Dag dag = load_stage1_dag(cfg, sk_dag_path);
            PipelineConfig scan_cfg = cfg;
            scan_cfg.k = 0;
            scan_cfg.k_min = sk_min;
            scan_cfg.k_max = sk_max;
            auto res = run_stage2_on(table, dag, scan_cfg);
            write_stage2(res, scan_cfg);
            std::printf("chosen k = %d (dunn scan %d..%d)\n", res.selection.chosen_k, sk_min, sk_max);
            return 0;
        }
        if (cluster->parsed()) {
            CategoricalTable table = load_csv(cfg.input_path);
            Dag dag = load_stage1_dag(cfg, cl_dag_path);
            auto res = run_stage2_on(table, dag, cfg);
            write_stage2(res, cfg);
            std::printf("clustered %zu rows into k=%d (sse %.4f)\n", table.n_rows(), res.model.k, res.model.sse);
            return 0;
        }
        if (train_cmd->parsed()) {
            CategoricalTable table = load_csv(cfg.input_path);
            std::string lp = labels_path.empty() ? cfg.out_dir + "/stage2/labels.csv" : labels_path;
            std::vector<int> labels;
            for (const auto& line : detail::parse_csv(read_file(lp)))
                if (!line.empty() && !line[0].empty()) labels.push_back(std::stoi(line[0]));
            int n_classes = 0;
            for (int l : labels) n_classes = std::max(n_classes, l + 1);
            nlohmann::json cj = nlohmann::json::parse(read_file(cfg.out_dir + "/stage2/clusters.json"));
            auto feature_names = cj.at("features").get<std::vector<std::string>>();
            auto res = run_stage3(cfg, labels, n_classes, feature_names);
            std::printf("test accuracy %.4f (scores %.2f..%.2f)\n", res.report.at("test_accuracy").get<double>(),
                        res.report.at("score_min").get<double>(), res.report.at("score_max").get<double>());
            return 0;
        }
        if (runall->parsed()) {
            auto res = run_all(cfg);
            std::printf("stage1: %zu edges; stage2: k=%d sse=%.2f; stage3: test accuracy %.4f\n",
                        res.stage1.scored.dag.n_edges(), res.stage2.model.k, res.stage2.model.sse,
                        res.stage3.report.at("test_accuracy").get<double>());
            if (res.stage3.report.contains("baseline_avg_accuracy"))
                std::printf("heuristic baseline average accuracy %.4f\n",
                            res.stage3.report.at("baseline_avg_accuracy").get<double>());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
