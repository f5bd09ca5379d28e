#pragma once

#include <string>
#include <vector>

namespace ddopt {

/// Minimal CSV table with double payload; values are serialized with 17
/// significant digits so re-reading reproduces them exactly.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::string format_double(double x);

void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

}  // namespace ddopt
