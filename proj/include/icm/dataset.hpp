#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace icm {

/// Outcome, covariates and instruments of a linear IV model y = X theta + u.
///
/// Column 0 of X is the intercept. Z may share columns with X (included
/// instruments) and need not contain any excluded instrument. Construction
/// validates every invariant; the object is immutable afterwards.
class Dataset {
 public:
  Dataset(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::MatrixXd Z,
          std::vector<std::string> x_names, std::vector<std::string> z_names,
          std::vector<bool> endog_mask, std::string y_name = "y");

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const Eigen::MatrixXd& Z() const noexcept { return Z_; }
  const std::string& y_name() const noexcept { return y_name_; }
  const std::vector<std::string>& x_names() const noexcept { return x_names_; }
  const std::vector<std::string>& z_names() const noexcept { return z_names_; }
  const std::vector<bool>& endog_mask() const noexcept { return endog_mask_; }

  Eigen::Index n() const noexcept { return y_.size(); }
  Eigen::Index p_x() const noexcept { return X_.cols(); }
  Eigen::Index p_z() const noexcept { return Z_.cols(); }

  /// Indices of the columns flagged endogenous.
  std::vector<Eigen::Index> endogenous_columns() const;

 private:
  void validate() const;

  Eigen::VectorXd y_;
  Eigen::MatrixXd X_;
  Eigen::MatrixXd Z_;
  std::vector<std::string> x_names_;
  std::vector<std::string> z_names_;
  std::vector<bool> endog_mask_;
  std::string y_name_;
};

/// Name given to the generated intercept column.
inline constexpr const char* kInterceptName = "(Intercept)";

/// Reads a comma-separated file with a header row. X gets an intercept
/// prepended; endog_cols must be a subset of x_cols.
Dataset load_csv(const std::string& path, const std::string& y_col,
                 const std::vector<std::string>& x_cols, const std::vector<std::string>& z_cols,
                 const std::vector<std::string>& endog_cols = {});

/// Same as load_csv but reads from a stream; `source` labels error messages.
Dataset read_csv(std::istream& in, const std::string& y_col,
                 const std::vector<std::string>& x_cols, const std::vector<std::string>& z_cols,
                 const std::vector<std::string>& endog_cols = {},
                 const std::string& source = "<stream>");

/// Writes y, the non-intercept X columns and every Z column whose name is not
/// already an X column, at 17 significant digits.
void write_csv(const Dataset& ds, std::ostream& out);
void write_csv(const Dataset& ds, const std::string& path);

enum class InstrumentTransform { none, atan };

InstrumentTransform parse_instrument_transform(const std::string& name);

/// Applies an element-wise bounded one-to-one map to Z. X and y are untouched.
Dataset standardize_instruments(const Dataset& ds, InstrumentTransform method);

}  // namespace icm
