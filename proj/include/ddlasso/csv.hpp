#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddlasso::csv {

/// Numeric table with a mandatory header row.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd data;

  /// Column position of name; -1 if absent.
  Eigen::Index column(const std::string& name) const;
};

/// Comma-separated, '.' decimal point, header row required. Throws
/// InvalidArgument naming the offending line on malformed input.
Table read(std::istream& in);
Table read_file(const std::string& path);

/// 15 significant digits, shortest of fixed or exponent notation.
std::string format_number(double v);

/// Quote a field if it contains a comma, quote or newline.
std::string escape(const std::string& field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace ddlasso::csv
