#include "otf/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "otf/errors.hpp"

namespace otf {

Eigen::VectorXd DataSet::column_variances() const {
  Eigen::VectorXd mu = column_means();
  Eigen::MatrixXd centered = values.rowwise() - mu.transpose();
  return centered.array().square().colwise().mean();
}

void DataSet::validate() const {
  if (values.rows() == 0 || values.cols() == 0) {
    throw InsufficientData("empty data set");
  }
  if (!values.allFinite()) {
    throw InvalidMatrix("data contains non-finite values");
  }
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != values.cols()) {
    throw ShapeError("number of column names does not match data width");
  }
}

DataSet make_dataset(const Eigen::MatrixXd& values, std::vector<std::string> names) {
  DataSet ds;
  ds.values = values;
  if (names.empty()) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      names.push_back("y" + std::to_string(j + 1));
    }
  }
  ds.names = std::move(names);
  ds.validate();
  return ds;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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

DataSet read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InsufficientData("cannot open data file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InsufficientData("empty data file: " + path);
  std::vector<std::string> names = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != names.size()) {
      throw InsufficientData("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(names.size()) + " fields, got " +
                             std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      try {
        std::size_t used = 0;
        double v = std::stod(f, &used);
        if (used != f.size()) throw std::invalid_argument(f);
        row.push_back(v);
      } catch (const std::exception&) {
        throw InsufficientData("line " + std::to_string(lineno) +
                               ": cannot parse value '" + f + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InsufficientData("no data rows in " + path);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return make_dataset(values, names);
}

void write_csv(const std::string& path, const DataSet& data) {
  std::ofstream out(path);
  if (!out) throw InsufficientData("cannot write data file: " + path);
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    if (j) out << ',';
    out << data.names[static_cast<std::size_t>(j)];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      if (j) out << ',';
      out << format_double(data.values(i, j));
    }
    out << '\n';
  }
}

void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw InsufficientData("cannot write file: " + path);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
}

}  // namespace otf
