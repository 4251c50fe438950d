#include "stochinv/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stochinv/error.hpp"

namespace stochinv::csv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write(const std::string& path, const std::vector<std::string>& header,
           const Eigen::MatrixXd& rows) {
  if (rows.size() > 0 &&
      static_cast<std::size_t>(rows.cols()) != header.size()) {
    throw DataError("csv::write: header width does not match the matrix");
  }
  std::ofstream out(path);
  if (!out) throw IoError("csv::write: cannot open '" + path + "'");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ',';
      out << format_double(rows(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("csv::write: write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("csv::read: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("csv::read: '" + path + "' is empty");
  }
  Table t;
  t.header = split_line(line);
  const std::size_t width = t.header.size();
  std::vector<double> values;
  std::size_t nrows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != width) {
      throw DataError("csv::read: '" + path + "' line " +
                      std::to_string(lineno) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(width));
    }
    for (const auto& f : fields) {
      const char* s = f.c_str();
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (end == s || *end != '\0' || v != v) {
        throw DataError("csv::read: '" + path + "' line " +
                        std::to_string(lineno) + ": bad numeric field '" + f +
                        "'");
      }
      values.push_back(v);
    }
    ++nrows;
  }
  t.rows.resize(static_cast<Eigen::Index>(nrows),
                static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < nrows; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      t.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * width + j];
    }
  }
  return t;
}

}  // namespace stochinv::csv
