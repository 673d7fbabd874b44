#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csl/bayes.hpp"
#include "csl/estimators.hpp"
#include "csl/model.hpp"

namespace csl {

enum class ExperimentKind { MestSweepN, MestSweepK, Coverage, LassoFixedN, LassoFixedn, Bayes };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Everything a simulation run needs. Populated from a flat "key = value"
/// file; see apply_setting() for the recognised keys.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::MestSweepK;
    Eigen::Index d = 2;
    /// Total sample size for the fixed-N designs (MestSweepN, LassoFixedN).
    Eigen::Index total = 0;
    std::vector<Eigen::Index> n_values;
    std::vector<Eigen::Index> k_values;
    int trials = 1;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string output = "results.csv";

    // M-estimation and coverage
    std::size_t steps = 3;
    IleaMode mode = IleaMode::OneStep;
    SolverSettings solver{};
    double level = 0.95;
    Eigen::Index coverage_coordinate = 0;  ///< 0-based; the config key is 1-based
    bool zero_theta = false;               ///< debug: theta* = 0 for logistic data

    // sparse linear regression
    Eigen::Index sparsity = 10;
    double noise_sigma = 1.0;
    /// Weight scale of the surrogate lasso, lambda = scale * sigma_hat * sqrt(log d / N).
    double lambda_scale = 3.0;
    /// Weight scale of the per-machine lassos (anchor and averaging), with n in place of N.
    double anchor_lambda_scale = 2.0;
    double lasso_tol = 1e-8;
    int lasso_max_iters = 20000;
    std::size_t lasso_rounds = 1;
    bool lasso_global = false;

    // Bayesian
    Eigen::Index mcmc_iters = 20000;
    double proposal_scale = 0.0;
    int bins = 60;
    /// Compare surrogate and full posteriors with coupled_metropolis();
    /// false runs two independently seeded chains.
    bool coupled_chains = true;
    std::string chain_dir;
};

/// Applies one key. Throws ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Parses "key = value" lines; '#' starts a comment.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {});
/// Throws ConfigError when the sweep cannot be run.
void validate(const ExperimentConfig& config);

struct SweepPoint {
    Eigen::Index n;
    Eigen::Index k;
};
std::vector<SweepPoint> sweep_points(const ExperimentConfig& config);

/// Built-in configurations: desk-scale sweeps sized for a laptop and larger
/// designs. Names: mest-d2-k, mest-d10-n, mest-d10-k, coverage, lasso-fixed-N,
/// lasso-fixed-n, bayes, plus "large-" prefixed full-size variants.
ExperimentConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Simulated data

struct LogisticData {
    DataShard data;
    Vector theta_star;
};
/// theta* ~ U[0,1]^d (or 0 when zero_theta), x ~ N(0, I_d), y ~ Ber(sigmoid(x'theta*)).
/// Rows are generated in order, so a smaller N yields a prefix.
LogisticData gen_logistic(Eigen::Index d, Eigen::Index total, std::uint64_t seed, bool zero_theta = false);

struct SparseLinearData {
    std::vector<DataShard> shards;
    Vector theta_star;
};
/// s-sparse theta* with entries +-5 sigma on a uniformly drawn support,
/// x ~ N(0, I_d), y = x'theta* + sigma eps. `noiseless` drops eps but keeps
/// the 5 sigma signal.
SparseLinearData gen_sparse_linear(Eigen::Index d, Eigen::Index n, Eigen::Index k, Eigen::Index s, double sigma,
                                   std::uint64_t seed, bool noiseless = false);

// Results

struct ResultsRow {
    std::string experiment;
    Eigen::Index d = 0;
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    int trial = 0;
    std::string estimator;
    std::string metric;
    double value = 0.0;
};

inline constexpr std::string_view kResultsHeader = "experiment,d,n,k,trial,estimator,metric,value";
std::string format_row(const ResultsRow& row);
/// Throws DomainError naming the problem; `line` is used in the message.
ResultsRow parse_row(std::string_view text, std::size_t line);

/// Rows of one trial: results plus wall-clock timings kept apart so the
/// results file stays byte-for-byte reproducible.
struct TrialOutput {
    std::vector<ResultsRow> rows;
    std::vector<ResultsRow> timings;
    bool flagged = false;
};
TrialOutput run_trial(const ExperimentConfig& config, const SweepPoint& point, int trial);

struct RunSummary {
    std::size_t rows = 0;
    std::size_t trials = 0;
    std::size_t flagged_trials = 0;
    std::uint64_t results_hash = 0;  ///< FNV-1a of the results bytes
};

/// Runs every (sweep point, trial) and streams rows to `results` as soon as
/// all earlier trials of the sweep point have been written. Timings go to
/// `timings` when given, with the same schema.
RunSummary run_experiment(const ExperimentConfig& config, std::ostream& results, std::ostream* timings = nullptr);

// Reports

struct SummaryRow {
    std::string experiment;
    Eigen::Index d = 0;
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    std::string estimator;
    std::string metric;
    std::size_t count = 0;
    double median = 0.0;
    double mad = 0.0;  ///< median absolute deviation from the median, unscaled
};

inline constexpr std::string_view kSummaryHeader = "experiment,d,n,k,estimator,metric,count,median,mad";

std::vector<ResultsRow> read_results(std::istream& in);
/// One row per (experiment, d, n, k, estimator, metric), in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<ResultsRow>& rows);
std::string format_summary_row(const SummaryRow& row);
/// Writes `<prefix>summary.csv` and one `<prefix><experiment>.csv` per
/// experiment present. Returns the paths written.
std::vector<std::string> write_report(const std::vector<SummaryRow>& summary, const std::string& prefix);

double median(std::vector<double> values);

}  // namespace csl
