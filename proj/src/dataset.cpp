#include "icm/dataset.hpp"

#include "icm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace icm {

Dataset::Dataset(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::MatrixXd Z,
                 std::vector<std::string> x_names, std::vector<std::string> z_names,
                 std::vector<bool> endog_mask, std::string y_name)
    : y_(std::move(y)),
      X_(std::move(X)),
      Z_(std::move(Z)),
      x_names_(std::move(x_names)),
      z_names_(std::move(z_names)),
      endog_mask_(std::move(endog_mask)),
      y_name_(std::move(y_name)) {
  validate();
}

std::vector<Eigen::Index> Dataset::endogenous_columns() const {
  std::vector<Eigen::Index> cols;
  for (std::size_t k = 0; k < endog_mask_.size(); ++k)
    if (endog_mask_[k]) cols.push_back(static_cast<Eigen::Index>(k));
  return cols;
}

void Dataset::validate() const {
  const Eigen::Index n = y_.size();
  if (X_.rows() != n || Z_.rows() != n)
    throw ValidationError("row count mismatch: y has " + std::to_string(n) + " rows, X " +
                          std::to_string(X_.rows()) + ", Z " + std::to_string(Z_.rows()));
  if (X_.cols() < 1) throw ValidationError("X must contain at least the intercept column");
  if (Z_.cols() < 1) throw ValidationError("Z must contain at least one instrument column");
  if (static_cast<Eigen::Index>(x_names_.size()) != X_.cols())
    throw ValidationError("x_names has " + std::to_string(x_names_.size()) + " labels for " +
                          std::to_string(X_.cols()) + " columns");
  if (static_cast<Eigen::Index>(z_names_.size()) != Z_.cols())
    throw ValidationError("z_names has " + std::to_string(z_names_.size()) + " labels for " +
                          std::to_string(Z_.cols()) + " columns");
  if (static_cast<Eigen::Index>(endog_mask_.size()) != X_.cols())
    throw ValidationError("endog_mask length differs from the number of X columns");
  if (n < 3 || n < X_.cols() + 2)
    throw ValidationError("sample size invariant violated: need n >= max(3, p_x + 2), got n = " +
                          std::to_string(n) + " with p_x = " + std::to_string(X_.cols()));
  if (!(X_.col(0).array() == 1.0).all())
    throw ValidationError("intercept invariant violated: X column 0 must be identically 1");
  if (endog_mask_[0]) throw ValidationError("intercept column cannot be endogenous");
  if (!y_.allFinite()) throw ValidationError("finiteness invariant violated: y has non-finite entries");
  if (!X_.allFinite()) throw ValidationError("finiteness invariant violated: X has non-finite entries");
  if (!Z_.allFinite()) throw ValidationError("finiteness invariant violated: Z has non-finite entries");
  for (Eigen::Index k = 0; k < Z_.cols(); ++k) {
    if ((Z_.col(k).array() == Z_(0, k)).all())
      throw ValidationError("constant instrument invariant violated: Z column '" + z_names_[k] +
                            "' is constant");
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column,
                  const std::string& source) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(source + ": row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + cell + "' as a number");
  }
  return value;
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& y_col, const std::vector<std::string>& x_cols,
                 const std::vector<std::string>& z_cols, const std::vector<std::string>& endog_cols,
                 const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file, header row expected");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_row(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < header.size(); ++k) index.emplace(header[k], k);

  auto column_of = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw ArgumentError(source + ": missing column '" + name + "'");
    return it->second;
  };
  for (const auto& e : endog_cols) {
    if (std::find(x_cols.begin(), x_cols.end(), e) == x_cols.end())
      throw ArgumentError("endogenous column '" + e + "' is not among the covariates");
  }

  const std::size_t y_idx = column_of(y_col);
  std::vector<std::size_t> x_idx, z_idx;
  for (const auto& c : x_cols) x_idx.push_back(column_of(c));
  for (const auto& c : z_cols) z_idx.push_back(column_of(c));

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_row(line);
    if (fields.size() != header.size())
      throw ParseError(source + ": row " + std::to_string(rows.size() + 1) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(header.size()));
    rows.push_back(std::move(fields));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(x_cols.size()) + 1);
  Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(z_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const auto row = static_cast<std::size_t>(i) + 1;
    y(i) = parse_cell(r[y_idx], row, y_col, source);
    X(i, 0) = 1.0;
    for (std::size_t k = 0; k < x_idx.size(); ++k)
      X(i, static_cast<Eigen::Index>(k) + 1) = parse_cell(r[x_idx[k]], row, x_cols[k], source);
    for (std::size_t k = 0; k < z_idx.size(); ++k)
      Z(i, static_cast<Eigen::Index>(k)) = parse_cell(r[z_idx[k]], row, z_cols[k], source);
  }

  std::vector<std::string> x_names{kInterceptName};
  x_names.insert(x_names.end(), x_cols.begin(), x_cols.end());
  std::vector<bool> mask(x_names.size(), false);
  for (std::size_t k = 0; k < x_cols.size(); ++k)
    mask[k + 1] = std::find(endog_cols.begin(), endog_cols.end(), x_cols[k]) != endog_cols.end();
  return Dataset(std::move(y), std::move(X), std::move(Z), std::move(x_names), z_cols,
                 std::move(mask), y_col);
}

Dataset load_csv(const std::string& path, const std::string& y_col,
                 const std::vector<std::string>& x_cols, const std::vector<std::string>& z_cols,
                 const std::vector<std::string>& endog_cols) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  return read_csv(in, y_col, x_cols, z_cols, endog_cols, path);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  const auto& xn = ds.x_names();
  std::vector<Eigen::Index> z_extra;
  for (Eigen::Index k = 0; k < ds.p_z(); ++k) {
    const auto& name = ds.z_names()[static_cast<std::size_t>(k)];
    if (std::find(xn.begin(), xn.end(), name) == xn.end()) z_extra.push_back(k);
  }

  out << ds.y_name();
  for (Eigen::Index k = 1; k < ds.p_x(); ++k) out << ',' << xn[static_cast<std::size_t>(k)];
  for (auto k : z_extra) out << ',' << ds.z_names()[static_cast<std::size_t>(k)];
  out << '\n';

  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << ds.y()(i);
    for (Eigen::Index k = 1; k < ds.p_x(); ++k) out << ',' << ds.X()(i, k);
    for (auto k : z_extra) out << ',' << ds.Z()(i, k);
    out << '\n';
  }
  out.precision(old_precision);
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  write_csv(ds, out);
}

InstrumentTransform parse_instrument_transform(const std::string& name) {
  if (name == "none") return InstrumentTransform::none;
  if (name == "atan") return InstrumentTransform::atan;
  throw ConfigError("unknown instrument transform '" + name + "' (expected none|atan)");
}

Dataset standardize_instruments(const Dataset& ds, InstrumentTransform method) {
  if (method == InstrumentTransform::none) return ds;
  Eigen::MatrixXd Z = ds.Z().array().atan().matrix();
  return Dataset(ds.y(), ds.X(), std::move(Z), ds.x_names(), ds.z_names(), ds.endog_mask(),
                 ds.y_name());
}

}  // namespace icm
