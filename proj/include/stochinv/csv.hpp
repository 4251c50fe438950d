#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stochinv::csv {

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;  // one row per data line, columns match header
};

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

// Header line followed by one line per matrix row. rows.cols() must equal
// header.size().
void write(const std::string& path, const std::vector<std::string>& header,
           const Eigen::MatrixXd& rows);

// Strict numeric parse: every field must be a complete floating literal and
// every line must have the header's width.
Table read(const std::string& path);

}  // namespace stochinv::csv
