#include "csl/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace csl {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw DomainError("not a number: '" + std::string(text) + "'");
    }
    return v;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

DataShard parse_dataset_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        auto line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        start = pos + 1;
    }
    if (lines.empty()) throw DomainError("dataset CSV: missing header");
    const auto header = split_commas(lines[0]);
    if (header.size() < 2 || header[0] != "y") throw DomainError("dataset CSV: header must be y,x1,...,xd");
    const auto d = static_cast<Eigen::Index>(header.size() - 1);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (header[j + 1] != "x" + std::to_string(j + 1)) {
            throw DomainError("dataset CSV: header column " + std::to_string(j + 2) + " must be x" +
                              std::to_string(j + 1));
        }
    }
    const auto n = static_cast<Eigen::Index>(lines.size() - 1);
    if (n < 1) throw DomainError("dataset CSV: no samples");
    Matrix x(n, d);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto fields = split_commas(lines[i + 1]);
        if (static_cast<Eigen::Index>(fields.size()) != d + 1) {
            throw DomainError("dataset CSV: line " + std::to_string(i + 2) + " has " +
                              std::to_string(fields.size()) + " fields, expected " + std::to_string(d + 1));
        }
        try {
            y[i] = parse_double(fields[0]);
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = parse_double(fields[j + 1]);
        } catch (const DomainError& e) {
            throw DomainError("dataset CSV: line " + std::to_string(i + 2) + ": " + e.what());
        }
    }
    return DataShard(std::move(x), std::move(y));
}

DataShard read_dataset_csv(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset_csv(ss.str());
}

DataShard read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open dataset file " + path);
    return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const DataShard& shard) { out << dataset_to_csv(shard); }

std::string dataset_to_csv(const DataShard& shard) {
    std::string s = "y";
    for (Eigen::Index j = 0; j < shard.d(); ++j) s += ",x" + std::to_string(j + 1);
    s += '\n';
    for (Eigen::Index i = 0; i < shard.n(); ++i) {
        s += format_double(shard.y()[i]);
        for (Eigen::Index j = 0; j < shard.d(); ++j) {
            s += ',';
            s += format_double(shard.x()(i, j));
        }
        s += '\n';
    }
    return s;
}

void write_dataset_file(const std::string& path, const DataShard& shard) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write dataset file " + path);
    write_dataset_csv(out, shard);
}

}  // namespace csl
