#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "csl/model.hpp"

namespace csl {

// Dataset CSV: header "y,x1,...,xd", one row per sample. Values are written
// with 17 significant digits so a write/read cycle reproduces every double
// bit for bit.

DataShard read_dataset_csv(std::istream& in);
DataShard parse_dataset_csv(std::string_view text);
DataShard read_dataset_file(const std::string& path);

void write_dataset_csv(std::ostream& out, const DataShard& shard);
std::string dataset_to_csv(const DataShard& shard);
void write_dataset_file(const std::string& path, const DataShard& shard);

/// Shortest-exact ("%.17g") rendering of a double.
std::string format_double(double v);
/// Strict full-string parse; throws DomainError on trailing junk.
double parse_double(std::string_view text);

}  // namespace csl
