#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <tuple>

#include "csl/dataset_io.hpp"
#include "csl/experiment.hpp"

namespace csl {

double median(std::vector<double> values) {
    if (values.empty()) throw DomainError("median of an empty set");
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<ResultsRow> read_results(std::istream& in) {
    std::vector<ResultsRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line == kResultsHeader) continue;
            throw DomainError("results line " + std::to_string(line_no) + ": expected header '" +
                              std::string(kResultsHeader) + "'");
        }
        rows.push_back(parse_row(line, line_no));
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultsRow>& rows) {
    using Key = std::tuple<std::string, Eigen::Index, Eigen::Index, Eigen::Index, std::string, std::string>;
    std::map<Key, std::size_t> index;
    std::vector<SummaryRow> out;
    std::vector<std::vector<double>> values;
    for (const auto& r : rows) {
        Key key{r.experiment, r.d, r.n, r.k, r.estimator, r.metric};
        auto [it, inserted] = index.emplace(key, out.size());
        if (inserted) {
            SummaryRow s;
            s.experiment = r.experiment;
            s.d = r.d;
            s.n = r.n;
            s.k = r.k;
            s.estimator = r.estimator;
            s.metric = r.metric;
            out.push_back(std::move(s));
            values.emplace_back();
        }
        values[it->second].push_back(r.value);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& v = values[i];
        out[i].count = v.size();
        out[i].median = median(v);
        for (auto& x : v) x = std::abs(x - out[i].median);
        out[i].mad = median(v);
    }
    return out;
}

std::string format_summary_row(const SummaryRow& s) {
    return s.experiment + ',' + std::to_string(s.d) + ',' + std::to_string(s.n) + ',' + std::to_string(s.k) + ',' +
           s.estimator + ',' + s.metric + ',' + std::to_string(s.count) + ',' + format_double(s.median) + ',' +
           format_double(s.mad);
}

std::vector<std::string> write_report(const std::vector<SummaryRow>& summary, const std::string& prefix) {
    std::vector<std::string> paths;
    auto open = [&](const std::string& path) {
        std::ofstream f(path);
        if (!f) throw Error("cannot write " + path);
        f << kSummaryHeader << '\n';
        paths.push_back(path);
        return f;
    };
    {
        auto all = open(prefix + "summary.csv");
        for (const auto& s : summary) all << format_summary_row(s) << '\n';
    }
    // Tidy per-experiment files: one line per (sweep point, estimator, metric).
    std::vector<std::string> experiments;
    for (const auto& s : summary) {
        if (std::find(experiments.begin(), experiments.end(), s.experiment) == experiments.end()) {
            experiments.push_back(s.experiment);
        }
    }
    for (const auto& e : experiments) {
        auto f = open(prefix + e + ".csv");
        std::vector<const SummaryRow*> rows;
        for (const auto& s : summary) {
            if (s.experiment == e) rows.push_back(&s);
        }
        std::stable_sort(rows.begin(), rows.end(), [](const SummaryRow* a, const SummaryRow* b) {
            return std::tie(a->metric, a->estimator, a->d, a->n, a->k) < std::tie(b->metric, b->estimator, b->d, b->n, b->k);
        });
        for (const auto* s : rows) f << format_summary_row(*s) << '\n';
    }
    return paths;
}

}  // namespace csl
