#ifndef OTF_DATASET_HPP
#define OTF_DATASET_HPP

#include <string>
#include <vector>
#include <Eigen/Dense>

namespace otf {

// Observed multivariate series: one row per period, one column per variable.
struct DataSet {
  Eigen::MatrixXd values;          // n x d
  std::vector<std::string> names;  // d labels

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index d() const { return values.cols(); }

  Eigen::VectorXd column_means() const {
    return values.colwise().mean();
  }

  // Per-variable variance with divisor n (population style), used for the
  // default inverse-variance weighting.
  Eigen::VectorXd column_variances() const;

  void validate() const;  // finiteness, shape, names
};

DataSet make_dataset(const Eigen::MatrixXd& values,
                     std::vector<std::string> names = {});

// CSV interchange: UTF-8, header row, one column per observable, decimal
// point, 17 significant digits on write.
DataSet read_csv(const std::string& path);
void write_csv(const std::string& path, const DataSet& data);

// Generic table writer used for result files.
void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

std::string format_double(double x);  // %.17g

}  // namespace otf

#endif  // OTF_DATASET_HPP
