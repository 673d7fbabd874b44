#include "csl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "csl/bayes.hpp"
#include "csl/cluster.hpp"
#include "csl/dataset_io.hpp"
#include "csl/highdim.hpp"
#include "csl/inference.hpp"
#include "csl/rng.hpp"

namespace csl {

// ---------------------------------------------------------------- config

std::string to_string(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::MestSweepN: return "MestSweepN";
    case ExperimentKind::MestSweepK: return "MestSweepK";
    case ExperimentKind::Coverage: return "Coverage";
    case ExperimentKind::LassoFixedN: return "LassoFixedN";
    case ExperimentKind::LassoFixedn: return "LassoFixedn";
    case ExperimentKind::Bayes: return "Bayes";
    }
    return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
    for (auto k : {ExperimentKind::MestSweepN, ExperimentKind::MestSweepK, ExperimentKind::Coverage,
                   ExperimentKind::LassoFixedN, ExperimentKind::LassoFixedn, ExperimentKind::Bayes}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double to_real(std::string_view key, std::string_view value) {
    try {
        return parse_double(value);
    } catch (const DomainError&) {
        throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not a number");
    }
}

// Integers accept "2^k" shorthand.
long long to_integer(std::string_view key, std::string_view value) {
    value = trim(value);
    if (auto caret = value.find('^'); caret != std::string_view::npos) {
        const double base = to_real(key, value.substr(0, caret));
        const double exponent = to_real(key, value.substr(caret + 1));
        const double v = std::pow(base, exponent);
        if (v != std::floor(v) || v > 9e15) throw ConfigError("config key '" + std::string(key) + "': bad power");
        return static_cast<long long>(v);
    }
    const double v = to_real(key, value);
    if (v != std::floor(v)) throw ConfigError("config key '" + std::string(key) + "': expected an integer");
    return static_cast<long long>(v);
}

std::vector<Eigen::Index> to_list(std::string_view key, std::string_view value) {
    std::vector<Eigen::Index> out;
    std::string token;
    auto flush = [&] {
        if (!token.empty()) out.push_back(static_cast<Eigen::Index>(to_integer(key, token)));
        token.clear();
    };
    for (char c : value) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            token.push_back(c);
        }
    }
    flush();
    if (out.empty()) throw ConfigError("config key '" + std::string(key) + "': empty list");
    return out;
}

bool to_bool(std::string_view key, std::string_view value) {
    value = trim(value);
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected true/false");
}

}  // namespace

void apply_setting(ExperimentConfig& c, std::string_view key, std::string_view raw) {
    key = trim(key);
    const std::string_view value = trim(raw);
    if (key == "experiment") c.experiment = parse_experiment_kind(value);
    else if (key == "d") c.d = static_cast<Eigen::Index>(to_integer(key, value));
    else if (key == "N") c.total = static_cast<Eigen::Index>(to_integer(key, value));
    else if (key == "n") c.n_values = to_list(key, value);
    else if (key == "k") c.k_values = to_list(key, value);
    else if (key == "trials") c.trials = static_cast<int>(to_integer(key, value));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, value));
    else if (key == "threads") c.threads = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "output") c.output = std::string(value);
    else if (key == "steps") c.steps = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "mode") {
        if (value == "one_step") c.mode = IleaMode::OneStep;
        else if (value == "exact") c.mode = IleaMode::ExactSurrogate;
        else throw ConfigError("config key 'mode': expected one_step or exact");
    }
    else if (key == "grad_tol") c.solver.grad_tol = to_real(key, value);
    else if (key == "max_iters") c.solver.max_iters = static_cast<int>(to_integer(key, value));
    else if (key == "level") c.level = to_real(key, value);
    else if (key == "coverage_coordinate") c.coverage_coordinate = static_cast<Eigen::Index>(to_integer(key, value)) - 1;
    else if (key == "zero_theta") c.zero_theta = to_bool(key, value);
    else if (key == "s") c.sparsity = static_cast<Eigen::Index>(to_integer(key, value));
    else if (key == "sigma") c.noise_sigma = to_real(key, value);
    else if (key == "lambda_scale") c.lambda_scale = to_real(key, value);
    else if (key == "anchor_lambda_scale") c.anchor_lambda_scale = to_real(key, value);
    else if (key == "lasso_tol") c.lasso_tol = to_real(key, value);
    else if (key == "lasso_max_iters") c.lasso_max_iters = static_cast<int>(to_integer(key, value));
    else if (key == "lasso_rounds") c.lasso_rounds = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "lasso_global") c.lasso_global = to_bool(key, value);
    else if (key == "mcmc_iters") c.mcmc_iters = static_cast<Eigen::Index>(to_integer(key, value));
    else if (key == "proposal_scale") c.proposal_scale = to_real(key, value);
    else if (key == "bins") c.bins = static_cast<int>(to_integer(key, value));
    else if (key == "coupled_chains") c.coupled_chains = to_bool(key, value);
    else if (key == "chain_dir") c.chain_dir = std::string(value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        std::string_view line = text.substr(start, end - start);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            }
            try {
                apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        start = end + 1;
    }
    return base;
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
    std::vector<SweepPoint> pts;
    const bool fixed_total = c.experiment == ExperimentKind::MestSweepN || c.experiment == ExperimentKind::LassoFixedN;
    if (fixed_total) {
        if (!c.n_values.empty()) {
            for (auto n : c.n_values) pts.push_back({n, n > 0 ? c.total / n : 0});
        } else {
            for (auto k : c.k_values) pts.push_back({k > 0 ? c.total / k : 0, k});
        }
    } else {
        for (auto n : c.n_values) {
            for (auto k : c.k_values) pts.push_back({n, k});
        }
    }
    return pts;
}

void validate(const ExperimentConfig& c) {
    if (c.d < 1) throw ConfigError("d must be positive");
    if (c.trials < 1) throw ConfigError("trials must be at least 1");
    const bool fixed_total = c.experiment == ExperimentKind::MestSweepN || c.experiment == ExperimentKind::LassoFixedN;
    if (fixed_total) {
        if (c.total < 1) throw ConfigError(to_string(c.experiment) + " needs N");
        if (c.n_values.empty() == c.k_values.empty()) {
            throw ConfigError(to_string(c.experiment) + " needs exactly one of the n or k lists");
        }
        for (auto v : c.n_values.empty() ? c.k_values : c.n_values) {
            if (v < 1 || c.total % v != 0) throw ConfigError("sweep value " + std::to_string(v) + " does not divide N");
        }
    } else if (c.n_values.empty() || c.k_values.empty()) {
        throw ConfigError(to_string(c.experiment) + " needs n and k lists");
    }
    for (const auto& p : sweep_points(c)) {
        if (p.n < 1 || p.k < 1) throw ConfigError("sweep values must be positive");
    }
    if (c.experiment == ExperimentKind::LassoFixedN || c.experiment == ExperimentKind::LassoFixedn) {
        if (c.sparsity < 0 || c.sparsity > c.d) throw ConfigError("s must lie in [0, d]");
        if (!(c.noise_sigma >= 0)) throw ConfigError("sigma must be non-negative");
        if (c.lasso_rounds < 1) throw ConfigError("lasso_rounds must be at least 1");
        if (!(c.lambda_scale > 0) || !(c.anchor_lambda_scale > 0)) throw ConfigError("lambda scales must be positive");
    }
    if (c.experiment == ExperimentKind::Coverage) {
        if (c.coverage_coordinate < 0 || c.coverage_coordinate >= c.d) throw ConfigError("coverage_coordinate out of range");
        if (!(c.level > 0 && c.level < 1)) throw ConfigError("level must lie in (0,1)");
    }
    if (c.experiment == ExperimentKind::Bayes) {
        if (c.mcmc_iters < 2) throw ConfigError("mcmc_iters must be at least 2");
        if (c.bins < 10) throw ConfigError("bins must be at least 10");
    }
    try {
        c.solver.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig preset(std::string_view name) {
    ExperimentConfig c;
    auto pow2 = [](int lo, int hi) {
        std::vector<Eigen::Index> v;
        for (int e = lo; e <= hi; ++e) v.push_back(Eigen::Index{1} << e);
        return v;
    };
    if (name == "mest-d2-k") {
        c.experiment = ExperimentKind::MestSweepK;
        c.d = 2;
        c.n_values = {64};
        c.k_values = {16, 64, 256, 1024};
        c.trials = 20;
    } else if (name == "mest-d10-n") {
        c.experiment = ExperimentKind::MestSweepN;
        c.d = 10;
        c.total = Eigen::Index{1} << 16;
        c.n_values = pow2(8, 12);
        c.trials = 20;
    } else if (name == "mest-d10-k") {
        c.experiment = ExperimentKind::MestSweepK;
        c.d = 10;
        c.n_values = {256};
        c.k_values = {16, 64, 256};
        c.trials = 20;
    } else if (name == "coverage") {
        c.experiment = ExperimentKind::Coverage;
        c.d = 5;
        c.n_values = {2048};
        c.k_values = {16, 64};
        c.trials = 200;
    } else if (name == "lasso-fixed-N") {
        c.experiment = ExperimentKind::LassoFixedN;
        c.d = 1000;
        c.total = 6400;
        c.k_values = {1, 2, 4, 8, 16};
        c.sparsity = 10;
        c.trials = 10;
    } else if (name == "lasso-fixed-n") {
        c.experiment = ExperimentKind::LassoFixedn;
        c.d = 1000;
        c.n_values = {400};
        c.k_values = {1, 2, 4, 8, 16};
        c.sparsity = 10;
        c.trials = 10;
    } else if (name == "bayes") {
        c.experiment = ExperimentKind::Bayes;
        c.d = 2;
        c.n_values = {256};
        c.k_values = {16};
        c.trials = 10;
    } else if (name == "large-mest-d10-n") {
        c.experiment = ExperimentKind::MestSweepN;
        c.d = 10;
        c.total = Eigen::Index{1} << 19;
        c.n_values = pow2(7, 13);
        c.trials = 100;
    } else if (name == "large-mest-d10-k") {
        c.experiment = ExperimentKind::MestSweepK;
        c.d = 10;
        c.n_values = {256};
        c.k_values = {128, 512, 2048, 8192};
        c.trials = 100;
    } else if (name == "large-coverage") {
        c.experiment = ExperimentKind::Coverage;
        c.d = 10;
        c.n_values = {256};
        c.k_values = {128, 512, 2048};
        c.trials = 100;
    } else if (name == "large-lasso-fixed-n") {
        c.experiment = ExperimentKind::LassoFixedn;
        c.d = 1000;
        c.n_values = {800};
        c.k_values = {1, 2, 4, 8, 16, 32, 64};
        c.sparsity = 20;
        c.trials = 20;
    } else if (name == "large-bayes") {
        c.experiment = ExperimentKind::Bayes;
        c.d = 2;
        c.n_values = {64};
        c.k_values = {64, 256};
        c.trials = 20;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    }
    c.output = std::string(name) + ".csv";
    return c;
}

std::vector<std::string> preset_names() {
    return {"mest-d2-k", "mest-d10-n", "mest-d10-k", "coverage", "lasso-fixed-N", "lasso-fixed-n", "bayes",
            "large-mest-d10-n", "large-mest-d10-k", "large-coverage", "large-lasso-fixed-n", "large-bayes"};
}

// ---------------------------------------------------------------- data

LogisticData gen_logistic(Eigen::Index d, Eigen::Index total, std::uint64_t seed, bool zero_theta) {
    if (d < 1 || total < 1) throw DomainError("gen_logistic: d and N must be positive");
    Rng rng(seed);
    Vector theta(d);
    for (Eigen::Index j = 0; j < d; ++j) theta[j] = rng.uniform();
    if (zero_theta) theta.setZero();
    Matrix x(total, d);
    Vector y(total);
    for (Eigen::Index i = 0; i < total; ++i) {
        double u = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = rng.normal();
            u += x(i, j) * theta[j];
        }
        y[i] = rng.bernoulli(sigmoid(u)) ? 1.0 : 0.0;
    }
    return {DataShard(std::move(x), std::move(y)), std::move(theta)};
}

SparseLinearData gen_sparse_linear(Eigen::Index d, Eigen::Index n, Eigen::Index k, Eigen::Index s, double sigma,
                                   std::uint64_t seed, bool noiseless) {
    if (s > d) throw DomainError("gen_sparse_linear: sparsity exceeds dimension");
    if (d < 1 || n < 1 || k < 1 || s < 0) throw DomainError("gen_sparse_linear: sizes must be positive");
    Rng rng(seed);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) idx[static_cast<std::size_t>(j)] = j;
    Vector theta = Vector::Zero(d);
    for (Eigen::Index j = 0; j < s; ++j) {
        const auto pick = j + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d - j)));
        std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
        theta[idx[static_cast<std::size_t>(j)]] = (rng.uniform() < 0.5 ? -5.0 : 5.0) * sigma;
    }
    SparseLinearData out;
    out.theta_star = theta;
    out.shards.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index m = 0; m < k; ++m) {
        Matrix x(n, d);
        Vector y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
            const double noise = rng.normal();
            y[i] = x.row(i).dot(theta) + (noiseless ? 0.0 : sigma * noise);
        }
        out.shards.emplace_back(std::move(x), std::move(y));
    }
    return out;
}

// ---------------------------------------------------------------- results

std::string format_row(const ResultsRow& r) {
    std::string s = r.experiment;
    s += ',' + std::to_string(r.d) + ',' + std::to_string(r.n) + ',' + std::to_string(r.k) + ',' +
         std::to_string(r.trial) + ',' + r.estimator + ',' + r.metric + ',' + format_double(r.value);
    return s;
}

ResultsRow parse_row(std::string_view text, std::size_t line) {
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (;;) {
        auto pos = text.find(',', start);
        if (pos == std::string_view::npos) {
            f.push_back(text.substr(start));
            break;
        }
        f.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    const std::string where = "results line " + std::to_string(line) + ": ";
    if (f.size() != 8) throw DomainError(where + "expected 8 fields, found " + std::to_string(f.size()));
    ResultsRow r;
    r.experiment = std::string(f[0]);
    try {
        parse_experiment_kind(r.experiment);
    } catch (const ConfigError&) {
        throw DomainError(where + "unknown experiment '" + r.experiment + "'");
    }
    auto integer = [&](std::string_view s, const char* name) {
        double v;
        try {
            v = parse_double(s);
        } catch (const DomainError&) {
            throw DomainError(where + name + " is not a number");
        }
        if (v != std::floor(v) || v < 0) throw DomainError(where + name + " must be a non-negative integer");
        return static_cast<long long>(v);
    };
    r.d = static_cast<Eigen::Index>(integer(f[1], "d"));
    r.n = static_cast<Eigen::Index>(integer(f[2], "n"));
    r.k = static_cast<Eigen::Index>(integer(f[3], "k"));
    r.trial = static_cast<int>(integer(f[4], "trial"));
    r.estimator = std::string(f[5]);
    r.metric = std::string(f[6]);
    if (r.estimator.empty() || r.metric.empty()) throw DomainError(where + "empty label");
    try {
        r.value = parse_double(f[7]);
    } catch (const DomainError&) {
        throw DomainError(where + "value is not a number");
    }
    if (!std::isfinite(r.value)) throw DomainError(where + "value is not finite");
    return r;
}

// ---------------------------------------------------------------- trials

namespace {

using Clock = std::chrono::steady_clock;

class TrialRecorder {
public:
    TrialRecorder(const ExperimentConfig& c, const SweepPoint& p, int trial) : c_(c), p_(p), trial_(trial) {}

    void add(const std::string& estimator, const std::string& metric, double value) {
        if (!std::isfinite(value)) {
            flag(estimator);
            return;
        }
        out_.rows.push_back(row(estimator, metric, value));
    }
    void flag(const std::string& estimator) {
        out_.rows.push_back(row(estimator, "error_flag", 1.0));
        out_.flagged = true;
    }
    /// Runs fn, timing it under `estimator`; failures become an error_flag row.
    template <typename Fn>
    bool attempt(const std::string& estimator, Fn&& fn) {
        const auto t0 = Clock::now();
        try {
            fn();
        } catch (const std::exception&) {
            flag(estimator);
            return false;
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        out_.timings.push_back(row(estimator, "runtime_seconds", secs));
        return true;
    }
    TrialOutput take() { return std::move(out_); }

private:
    ResultsRow row(const std::string& estimator, const std::string& metric, double value) const {
        return {to_string(c_.experiment), c_.d, p_.n, p_.k, trial_, estimator, metric, value};
    }
    const ExperimentConfig& c_;
    SweepPoint p_;
    int trial_;
    TrialOutput out_;
};

std::string point_tag(const char* purpose, const SweepPoint& p) {
    return std::string(purpose) + ":n=" + std::to_string(p.n) + ":k=" + std::to_string(p.k);
}

double sq_error(const Vector& a, const Vector& b) { return (a - b).squaredNorm(); }

void mest_trial(const ExperimentConfig& c, const SweepPoint& p, int trial, TrialRecorder& rec) {
    // Same data stream for every sweep point of a trial: a fixed-N sweep
    // re-shards one dataset, a fixed-n sweep grows it by appending rows.
    const auto data = gen_logistic(c.d, p.n * p.k, derive_seed(c.seed, static_cast<std::uint64_t>(trial), "logistic-data"),
                                   c.zero_theta);
    Cluster cluster = Cluster::partition(data.data, static_cast<std::size_t>(p.k), LossModel::logistic());
    const auto& truth = data.theta_star;
    const double km1 = static_cast<double>(p.k - 1);

    rec.attempt("global", [&] {
        const auto before = cluster.comm_report();
        const Vector g = global_estimator(cluster, c.solver);
        rec.add("global", "sq_error", sq_error(g, truth));
        rec.add("global", "samples_moved", static_cast<double>(cluster.comm_report().since(before).samples_moved));
    });
    rec.attempt("subsample", [&] {
        rec.add("subsample", "sq_error", sq_error(subsample_estimator(cluster, c.solver), truth));
        rec.add("subsample", "vectors_sent", 0.0);
    });
    Vector avg;
    const bool have_avg = rec.attempt("averaging", [&] {
        avg = averaging_estimator(cluster, c.solver);
        rec.add("averaging", "sq_error", sq_error(avg, truth));
        rec.add("averaging", "vectors_sent", km1);
    });
    std::vector<Vector> iterates;
    bool ilea_ok = false;
    if (have_avg) {
        ilea_ok = rec.attempt("csl", [&] { iterates = ilea(cluster, avg, c.steps, c.mode, c.solver).iterates; });
    }
    for (std::size_t t = 1; t <= c.steps; ++t) {
        const std::string label = "csl_" + std::to_string(t);
        if (!ilea_ok) {
            rec.flag(label);
            continue;
        }
        rec.add(label, "sq_error", sq_error(iterates[t], truth));
        rec.add(label, "vectors_sent", km1 + 2.0 * static_cast<double>(t) * km1);
    }
}

void coverage_trial(const ExperimentConfig& c, const SweepPoint& p, int trial, TrialRecorder& rec) {
    const auto data = gen_logistic(c.d, p.n * p.k, derive_seed(c.seed, static_cast<std::uint64_t>(trial), "logistic-data"),
                                   c.zero_theta);
    Cluster cluster = Cluster::partition(data.data, static_cast<std::size_t>(p.k), LossModel::logistic());
    const Eigen::Index coord = c.coverage_coordinate;
    const double truth = data.theta_star[coord];
    const Eigen::Index total = cluster.total_samples();
    const std::string label = "csl_" + std::to_string(c.steps);

    auto record = [&](const std::string& name, const Vector& center, const CovarianceEstimate& cov) {
        const auto ci = confidence_intervals(center, cov, total, c.level);
        rec.add(name, "covered", ci.covers(coord, truth) ? 1.0 : 0.0);
        rec.add(name, "halfwidth", 0.5 * (ci.upper[coord] - ci.lower[coord]));
    };

    std::optional<IleaTrajectory> traj;
    const bool ok = rec.attempt(label, [&] {
        const Vector avg = averaging_estimator(cluster, c.solver);
        traj = ilea(cluster, avg, std::max<std::size_t>(c.steps, 1), c.mode, c.solver);
        rec.add(label, "sq_error", sq_error(traj->final(), data.theta_star));
    });
    if (ok) {
        rec.attempt(label + "_sigma_local", [&] {
            record(label + "_sigma_local", traj->final(), sigma_local(*traj->last_surrogate, traj->final()));
        });
        rec.attempt(label + "_sigma_cross", [&] {
            record(label + "_sigma_cross", traj->final(), sigma_cross(*traj->last_surrogate, cluster, traj->final()));
        });
    } else {
        rec.flag(label + "_sigma_local");
        rec.flag(label + "_sigma_cross");
    }
    rec.attempt("global_sigma_hat", [&] {
        const Vector g = global_estimator(cluster, c.solver);
        record("global_sigma_hat", g, sigma_global(cluster, g));
    });
}

void lasso_trial(const ExperimentConfig& c, const SweepPoint& p, int trial, TrialRecorder& rec) {
    const auto data = gen_sparse_linear(c.d, p.n, p.k, c.sparsity, c.noise_sigma,
                                        derive_seed(c.seed, static_cast<std::uint64_t>(trial), "sparse-linear-data"));
    Cluster cluster(data.shards, LossModel::linear());
    const auto& truth = data.theta_star;
    L1Settings l1;
    l1.tol = c.lasso_tol;
    l1.max_iters = c.lasso_max_iters;
    const double km1 = static_cast<double>(p.k - 1);

    Vector anchor;
    const bool have_anchor = rec.attempt("local_lasso", [&] {
        const auto local = self_tuned_local_lasso(cluster.model(), cluster.shard(0), c.anchor_lambda_scale, 50, l1);
        anchor = local.theta;
        rec.add("local_lasso", "sq_error", sq_error(anchor, truth));
        rec.add("local_lasso", "support_size", static_cast<double>(local.support.size()));
    });
    if (!have_anchor) {
        rec.flag("csl_lasso");
        rec.flag("averaging_lasso");
        return;
    }
    const double sigma_hat = residual_scale(cluster.shard(0), anchor);
    const double lambda = default_lambda(sigma_hat, c.d, cluster.total_samples(), c.lambda_scale);
    const double lambda_local = default_lambda(sigma_hat, c.d, cluster.n(), c.anchor_lambda_scale);

    std::vector<SparseEstimate> rounds;
    if (rec.attempt("csl_lasso", [&] { rounds = iterative_csl_lasso(cluster, anchor, {lambda}, c.lasso_rounds, l1); })) {
        for (std::size_t r = 0; r < rounds.size(); ++r) {
            const std::string label = r == 0 ? "csl_lasso" : "csl_lasso_" + std::to_string(r + 1);
            rec.add(label, "sq_error", sq_error(rounds[r].theta, truth));
            rec.add(label, "support_size", static_cast<double>(rounds[r].support.size()));
            rec.add(label, "vectors_sent", 2.0 * static_cast<double>(r + 1) * km1);
        }
    }
    rec.attempt("averaging_lasso", [&] {
        const auto avg = averaging_lasso(cluster, lambda_local, l1);
        rec.add("averaging_lasso", "sq_error", sq_error(avg.theta, truth));
        rec.add("averaging_lasso", "support_size", static_cast<double>(avg.support.size()));
        rec.add("averaging_lasso", "vectors_sent", km1);
    });
    if (c.lasso_global) {
        rec.attempt("global_lasso", [&] {
            const auto g = global_lasso(cluster, lambda, l1);
            rec.add("global_lasso", "sq_error", sq_error(g.theta, truth));
            rec.add("global_lasso", "support_size", static_cast<double>(g.support.size()));
        });
    }
}

void bayes_trial(const ExperimentConfig& c, const SweepPoint& p, int trial, TrialRecorder& rec) {
    const auto data = gen_logistic(c.d, p.n * p.k, derive_seed(c.seed, static_cast<std::uint64_t>(trial), "logistic-data"),
                                   c.zero_theta);
    Cluster cluster = Cluster::partition(data.data, static_cast<std::size_t>(p.k), LossModel::logistic());
    const Prior prior = Prior::flat();
    const auto t = static_cast<std::uint64_t>(trial);

    BayesInit init;
    init.solver = c.solver;
    init.ilea_rounds = c.steps;
    init.mode = c.mode;
    McmcSettings mcmc;
    mcmc.iters = c.mcmc_iters;
    mcmc.proposal_scale = c.proposal_scale;
    mcmc.seed = derive_seed(c.seed, t, point_tag("mcmc-surrogate", p));

    std::optional<BayesRun> run;
    if (!rec.attempt("surrogate_chain", [&] { run = run_csl_bayes(cluster, prior, init, mcmc); })) {
        rec.flag("full_chain");
        return;
    }
    rec.add("surrogate_chain", "vectors_sent", static_cast<double>(run->ledger.vectors_sent));
    rec.add("surrogate_chain", "anchor_sq_error", sq_error(run->anchor, data.theta_star));

    const Eigen::Index total = cluster.total_samples();
    const SurrogateLoss& s = run->surrogate;
    const LogTarget surrogate_target = [&](const Vector& x) { return surrogate_log_posterior(s, prior, x, total); };
    const LogTarget full_target = [&](const Vector& x) { return full_log_posterior(cluster, prior, x); };
    const double scale = run->chain.proposal_scale;

    // The comparison pair. Coupled chains share randomness so the histogram
    // difference reflects the targets rather than sampling noise.
    std::optional<Chain> sur;
    std::optional<Chain> full;
    const bool full_ok = rec.attempt("full_chain", [&] {
        if (c.coupled_chains) {
            auto pair = coupled_metropolis(surrogate_target, full_target, run->anchor, scale, c.mcmc_iters,
                                           derive_seed(c.seed, t, point_tag("mcmc-coupled", p)));
            rec.add("surrogate_vs_full", "met_fraction", pair.met_fraction);
            sur = std::move(pair.first);
            full = std::move(pair.second);
        } else {
            sur = run->chain;
            full = metropolis(full_target, run->anchor, scale, c.mcmc_iters, derive_seed(c.seed, t, point_tag("mcmc-full", p)));
        }
    });
    if (!full_ok) return;
    rec.add("surrogate_chain", "acceptance_rate", sur->acceptance_rate());
    rec.add("surrogate_chain", "posterior_mean_1", sur->posterior_mean()[0]);
    rec.add("full_chain", "acceptance_rate", full->acceptance_rate());
    rec.add("full_chain", "posterior_mean_1", full->posterior_mean()[0]);
    rec.add("surrogate_vs_full", "marginal_l1", marginal_l1(*sur, *full, 0, c.bins));

    if (!c.chain_dir.empty()) {
        std::filesystem::create_directories(c.chain_dir);
        const std::string stem = c.chain_dir + "/n" + std::to_string(p.n) + "_k" + std::to_string(p.k) + "_t" +
                                 std::to_string(trial);
        std::ofstream a(stem + "_surrogate.csv");
        write_chain_csv(a, *sur);
        std::ofstream b(stem + "_full.csv");
        write_chain_csv(b, *full);
    }
}

}  // namespace

TrialOutput run_trial(const ExperimentConfig& c, const SweepPoint& p, int trial) {
    TrialRecorder rec(c, p, trial);
    switch (c.experiment) {
    case ExperimentKind::MestSweepN:
    case ExperimentKind::MestSweepK: mest_trial(c, p, trial, rec); break;
    case ExperimentKind::Coverage: coverage_trial(c, p, trial, rec); break;
    case ExperimentKind::LassoFixedN:
    case ExperimentKind::LassoFixedn: lasso_trial(c, p, trial, rec); break;
    case ExperimentKind::Bayes: bayes_trial(c, p, trial, rec); break;
    }
    return rec.take();
}

RunSummary run_experiment(const ExperimentConfig& c, std::ostream& results, std::ostream* timings) {
    validate(c);
    RunSummary summary;
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto emit = [&](std::string_view text) {
        results << text;
        for (unsigned char ch : text) {
            hash ^= ch;
            hash *= 0x100000001b3ULL;
        }
    };
    emit(std::string(kResultsHeader) + "\n");
    if (timings) *timings << kResultsHeader << '\n';

    for (const auto& point : sweep_points(c)) {
        const auto trials = static_cast<std::size_t>(c.trials);
        std::vector<std::optional<TrialOutput>> done(trials);
        std::mutex mu;
        std::condition_variable cv;
        std::size_t next_to_flush = 0;

        auto flush_ready = [&] {
            // Caller holds mu.
            while (next_to_flush < trials && done[next_to_flush]) {
                auto& out = *done[next_to_flush];
                for (const auto& r : out.rows) emit(format_row(r) + "\n");
                if (timings) {
                    for (const auto& r : out.timings) *timings << format_row(r) << '\n';
                }
                results.flush();
                summary.rows += out.rows.size();
                summary.trials += 1;
                summary.flagged_trials += out.flagged ? 1 : 0;
                done[next_to_flush].reset();
                ++next_to_flush;
            }
        };

        parallel_for(trials, std::max<std::size_t>(c.threads, 1), [&](std::size_t t) {
            TrialOutput out = run_trial(c, point, static_cast<int>(t) + 1);
            std::lock_guard lock(mu);
            done[t] = std::move(out);
            flush_ready();
            cv.notify_all();
        });
    }
    summary.results_hash = hash;
    return summary;
}

}  // namespace csl
