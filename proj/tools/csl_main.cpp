// csl: data generation, experiment runs, reports, fits and TCP workers.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csl/dataset_io.hpp"
#include "csl/estimators.hpp"
#include "csl/experiment.hpp"
#include "csl/inference.hpp"
#include "csl/rng.hpp"
#include "csl/tcp.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

nlohmann::json to_json(const csl::Vector& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
}

nlohmann::json to_json(const csl::CommLedger& l) {
    return {{"vectors_sent", l.vectors_sent}, {"scalars_sent", l.scalars_sent}, {"rounds", l.rounds},
            {"samples_moved", l.samples_moved}, {"bits", l.bits()}};
}

int cmd_gen(const std::string& kind, Eigen::Index d, Eigen::Index total, Eigen::Index k, Eigen::Index s, double sigma,
            std::uint64_t seed, const std::string& out, const std::string& theta_out) {
    csl::Vector theta;
    csl::DataShard data = [&] {
        if (kind == "logistic") {
            auto g = csl::gen_logistic(d, total, seed);
            theta = g.theta_star;
            return std::move(g.data);
        }
        if (total % k != 0) throw csl::ConfigError("N must be divisible by k");
        auto g = csl::gen_sparse_linear(d, total / k, k, s, sigma, seed);
        theta = g.theta_star;
        return csl::concatenate(g.shards);
    }();
    csl::write_dataset_file(out, data);
    if (!theta_out.empty()) {
        std::ofstream f(theta_out);
        f << "theta\n";
        for (Eigen::Index i = 0; i < theta.size(); ++i) f << csl::format_double(theta[i]) << '\n';
    }
    std::cerr << "wrote " << data.n() << " rows, d=" << data.d() << " to " << out << '\n';
    return 0;
}

int cmd_run(csl::ExperimentConfig config, const std::string& timings_path) {
    csl::validate(config);
    std::ofstream results(config.output);
    if (!results) throw csl::Error("cannot write " + config.output);
    std::optional<std::ofstream> timings;
    if (!timings_path.empty()) timings.emplace(timings_path);
    const auto summary = csl::run_experiment(config, results, timings ? &*timings : nullptr);
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(summary.results_hash));
    std::cerr << csl::to_string(config.experiment) << ": " << summary.trials << " trials, " << summary.rows
              << " rows -> " << config.output << " (hash " << hash << ")\n";
    if (summary.flagged_trials > 0) {
        std::cerr << summary.flagged_trials << " trial(s) recorded estimator failures\n";
        return kExitPartial;
    }
    return 0;
}

int cmd_report(const std::string& results_path, const std::string& prefix) {
    std::ifstream in(results_path);
    if (!in) throw csl::Error("cannot open " + results_path);
    const auto rows = csl::read_results(in);
    const auto summary = csl::summarize(rows);
    std::cout << csl::kSummaryHeader << '\n';
    for (const auto& s : summary) std::cout << csl::format_summary_row(s) << '\n';
    if (!prefix.empty()) {
        for (const auto& p : csl::write_report(summary, prefix)) std::cerr << "wrote " << p << '\n';
    }
    return 0;
}

struct FitOptions {
    std::string data;
    std::string model = "logistic";
    std::size_t k = 1;
    std::size_t rounds = 2;
    std::string mode = "one_step";
    std::string init = "averaging";
    std::vector<std::string> workers;
    double level = 0.95;
    std::size_t threads = 1;
};

int cmd_fit(const FitOptions& o) {
    const auto model = csl::LossModel::parse(o.model);
    const auto data = csl::read_dataset_file(o.data);
    if (o.k < 1 || data.n() % static_cast<Eigen::Index>(o.k) != 0) {
        throw csl::ConfigError("k must divide the number of rows");
    }
    std::vector<csl::DataShard> shards;
    const Eigen::Index n = data.n() / static_cast<Eigen::Index>(o.k);
    for (std::size_t j = 0; j < o.k; ++j) shards.push_back(data.rows(static_cast<Eigen::Index>(j) * n, n));
    csl::Cluster cluster = o.workers.empty()
                               ? csl::Cluster(std::move(shards), model, csl::ClusterOptions{o.threads})
                               : csl::Cluster::connect_tcp(std::move(shards), model, o.workers);

    csl::IleaMode mode;
    if (o.mode == "one_step") mode = csl::IleaMode::OneStep;
    else if (o.mode == "exact") mode = csl::IleaMode::ExactSurrogate;
    else throw csl::ConfigError("--mode must be one_step or exact");
    csl::Initializer init;
    if (o.init == "averaging") init = csl::Initializer::Averaging;
    else if (o.init == "subsample") init = csl::Initializer::Subsample;
    else throw csl::ConfigError("--init must be averaging or subsample");

    const csl::Vector start = csl::initial_estimate(cluster, init);
    const auto traj = csl::ilea(cluster, start, o.rounds, mode);
    nlohmann::json out;
    out["model"] = model.name();
    out["k"] = o.k;
    out["n"] = cluster.n();
    out["d"] = cluster.d();
    out["initial"] = to_json(start);
    out["estimate"] = to_json(traj.final());
    if (traj.last_surrogate) {
        const auto cov = csl::sigma_local(*traj.last_surrogate, traj.final());
        const auto ci = csl::confidence_intervals(traj.final(), cov, cluster.total_samples(), o.level);
        out["interval"] = {{"level", o.level}, {"lower", to_json(ci.lower)}, {"upper", to_json(ci.upper)}};
    }
    out["communication"] = to_json(cluster.comm_report());
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_worker(const std::string& model_name, std::uint16_t port, const std::string& host) {
    csl::WorkerServer server(csl::LossModel::parse(model_name), port, host);
    std::cout << "listening on " << host << ':' << server.port() << std::endl;
    server.serve();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Communication-efficient surrogate likelihood: simulations and fits"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Simulate a dataset");
    std::string gen_kind = "logistic", gen_out, gen_theta;
    Eigen::Index gen_d = 2, gen_total = 1024, gen_k = 1, gen_s = 10;
    double gen_sigma = 1.0;
    std::uint64_t gen_seed = 1;
    gen->add_option("--kind", gen_kind, "logistic or sparse-linear")->check(CLI::IsMember({"logistic", "sparse-linear"}));
    gen->add_option("-d,--dim", gen_d, "Dimension")->check(CLI::PositiveNumber);
    gen->add_option("-N,--total", gen_total, "Number of rows")->check(CLI::PositiveNumber);
    gen->add_option("-k,--machines", gen_k, "Shards (sparse-linear draws per shard)")->check(CLI::PositiveNumber);
    gen->add_option("-s,--sparsity", gen_s, "Nonzeros of theta* (sparse-linear)");
    gen->add_option("--sigma", gen_sigma, "Noise level (sparse-linear)");
    gen->add_option("--seed", gen_seed, "Seed");
    gen->add_option("-o,--out", gen_out, "Dataset CSV")->required();
    gen->add_option("--theta-out", gen_theta, "Write theta* here");

    // run
    auto* run = app.add_subcommand("run", "Run a simulation sweep");
    std::string run_config, run_preset, run_timings;
    std::vector<std::string> run_sets;
    std::optional<std::string> run_output;
    std::optional<int> run_trials;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::size_t> run_threads;
    auto* config_opt = run->add_option("-c,--config", run_config, "Config file (key = value)")->check(CLI::ExistingFile);
    run->add_option("-p,--preset", run_preset, "Built-in configuration")->excludes(config_opt);
    run->add_option("--set", run_sets, "Override a config key: key=value (repeatable)");
    run->add_option("-o,--output", run_output, "Results CSV");
    run->add_option("--trials", run_trials, "Trials per sweep point");
    run->add_option("--seed", run_seed, "Master seed");
    run->add_option("--threads", run_threads, "Concurrent trials");
    run->add_option("--timings", run_timings, "Write runtime rows here");
    bool list_presets = false;
    run->add_flag("--list-presets", list_presets, "Print preset names and exit");

    // report
    auto* report = app.add_subcommand("report", "Median/MAD summary of a results CSV");
    std::string report_in, report_prefix;
    report->add_option("results", report_in, "Results CSV")->required();
    report->add_option("--prefix", report_prefix, "Write <prefix>summary.csv and per-experiment CSVs");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a dataset with ILEA across k shards");
    FitOptions fo;
    fit->add_option("data", fo.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fo.model, "logistic, linear, glm-logistic or glm-poisson");
    fit->add_option("-k,--machines", fo.k, "Number of shards");
    fit->add_option("-T,--rounds", fo.rounds, "ILEA rounds");
    fit->add_option("--mode", fo.mode, "one_step or exact");
    fit->add_option("--init", fo.init, "averaging or subsample");
    fit->add_option("--workers", fo.workers, "host:port of workers 2..k")->delimiter(',');
    fit->add_option("--level", fo.level, "Confidence level");
    fit->add_option("--threads", fo.threads, "In-process worker threads");

    // worker
    auto* worker = app.add_subcommand("worker", "Serve one remote worker over TCP");
    std::string worker_model = "logistic", worker_host = "127.0.0.1";
    std::uint16_t worker_port = 0;
    worker->add_option("--model", worker_model, "Loss model");
    worker->add_option("--port", worker_port, "Port (0 = ephemeral)");
    worker->add_option("--host", worker_host, "Bind address");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(gen_kind, gen_d, gen_total, gen_k, gen_s, gen_sigma, gen_seed, gen_out, gen_theta);
        if (*run) {
            if (list_presets) {
                for (const auto& p : csl::preset_names()) std::cout << p << '\n';
                return 0;
            }
            csl::ExperimentConfig config;
            if (!run_preset.empty()) config = csl::preset(run_preset);
            else if (!run_config.empty()) config = csl::load_config_file(run_config);
            else throw csl::ConfigError("run needs --config or --preset");
            if (const char* env = std::getenv("CSL_SEED")) csl::apply_setting(config, "seed", env);
            for (const auto& kv : run_sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw csl::ConfigError("--set expects key=value, got '" + kv + "'");
                csl::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (run_output) config.output = *run_output;
            if (run_trials) config.trials = *run_trials;
            if (run_seed) config.seed = *run_seed;
            if (run_threads) config.threads = *run_threads;
            return cmd_run(config, run_timings);
        }
        if (*report) return cmd_report(report_in, report_prefix);
        if (*fit) return cmd_fit(fo);
        if (*worker) return cmd_worker(worker_model, worker_port, worker_host);
    } catch (const csl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
