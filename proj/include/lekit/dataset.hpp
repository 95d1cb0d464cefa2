#pragma once
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lekit/error.hpp"
#include "lekit/matrix.hpp"
#include "lekit/rng.hpp"

namespace lekit {

/// One learning problem: features, optional ground-truth distributions,
/// optional logical labels.
struct Dataset {
  std::string name;
  Matrix X;                             // n x q
  std::optional<Matrix> D;              // n x c, rows on the simplex
  std::optional<Matrix> L;              // n x c, 0/1 with >= 1 one per row
  std::vector<std::string> label_names; // c entries
};

struct BinarizeStrategy {
  enum class Kind { MeanThreshold, TopK, FixedThreshold };
  Kind kind = Kind::MeanThreshold;
  std::size_t k = 1;     // TopK only
  double theta = 0.5;    // FixedThreshold only

  static BinarizeStrategy mean_threshold() { return {Kind::MeanThreshold, 1, 0.5}; }
  static BinarizeStrategy top_k(std::size_t k) { return {Kind::TopK, k, 0.5}; }
  static BinarizeStrategy fixed_threshold(double theta) { return {Kind::FixedThreshold, 1, theta}; }
};

inline std::string binarize_strategy_name(const BinarizeStrategy& s) {
  switch (s.kind) {
    case BinarizeStrategy::Kind::MeanThreshold: return "mean-threshold";
    case BinarizeStrategy::Kind::TopK: return "top-k:" + std::to_string(s.k);
    case BinarizeStrategy::Kind::FixedThreshold: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "fixed-threshold:%g", s.theta);
      return buf;
    }
  }
  return "?";
}

/// Parses "mean-threshold", "top-k:<k>" or "fixed-threshold:<theta>".
inline BinarizeStrategy parse_binarize_strategy(const std::string& text) {
  if (text == "mean-threshold") return BinarizeStrategy::mean_threshold();
  if (text.rfind("top-k:", 0) == 0) {
    const std::string arg = text.substr(6);
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
    if (ec != std::errc() || ptr != arg.data() + arg.size() || k == 0)
      throw ConfigError("bad top-k count '" + arg + "'");
    return BinarizeStrategy::top_k(k);
  }
  if (text.rfind("fixed-threshold:", 0) == 0) {
    const std::string arg = text.substr(16);
    try {
      std::size_t used = 0;
      const double theta = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return BinarizeStrategy::fixed_threshold(theta);
    } catch (const std::exception&) {
      throw ConfigError("bad fixed-threshold value '" + arg + "'");
    }
  }
  throw ConfigError("unknown binarize strategy '" + text +
                    "' (expected mean-threshold | top-k:<k> | fixed-threshold:<theta>)");
}

// ---- validation -------------------------------------------------------------

inline constexpr double kSimplexTolerance = 1e-6;

/// Checks one row for simplex membership; returns an error message or empty.
inline std::string simplex_violation(const Matrix& m, std::size_t row, double tol) {
  double sum = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) {
    const double v = m(row, j);
    if (!std::isfinite(v)) return "non-finite entry";
    if (v < 0.0) return "negative entry " + std::to_string(v);
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) return "row sums to " + std::to_string(sum) + ", expected 1";
  return {};
}

inline void validate_dataset(const Dataset& ds) {
  const std::size_t n = ds.X.rows;
  if (n == 0 || ds.X.cols == 0) throw DataError("dataset has no feature data");
  if (!ds.X.all_finite()) throw DataError("non-finite feature entry");
  if (!ds.D && !ds.L) throw DataError("dataset needs distributions or logical labels");
  const std::size_t c = ds.label_names.size();
  if (ds.D) {
    if (ds.D->rows != n || ds.D->cols != c)
      throw DataError("distribution block is " + ds.D->shape_str() + ", expected " +
                      std::to_string(n) + "x" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
      const std::string err = simplex_violation(*ds.D, i, kSimplexTolerance);
      if (!err.empty()) throw DataError("distribution row " + std::to_string(i + 1) + ": " + err);
    }
  }
  if (ds.L) {
    if (ds.L->rows != n || ds.L->cols != c)
      throw DataError("logical block is " + ds.L->shape_str() + ", expected " +
                      std::to_string(n) + "x" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < c; ++j) {
        const double v = (*ds.L)(i, j);
        if (v != 0.0 && v != 1.0)
          throw DataError("logical row " + std::to_string(i + 1) + ": entry not 0/1");
        any = any || v == 1.0;
      }
      if (!any) throw DataError("logical row " + std::to_string(i + 1) + ": no label set");
    }
  }
}

// ---- standardization ---------------------------------------------------------

/// Per-column z-score (population variance). Constant columns become zero.
/// Columns already at mean 0 / stddev 1 are left untouched so that a second
/// pass is an exact no-op.
inline void standardize_features(Matrix& X) {
  const double n = static_cast<double>(X.rows);
  for (std::size_t j = 0; j < X.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) mean += X(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double d = X(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
      for (std::size_t i = 0; i < X.rows; ++i) X(i, j) = 0.0;
      continue;
    }
    if (std::abs(mean) < 1e-12 && std::abs(sd - 1.0) < 1e-12) continue;
    for (std::size_t i = 0; i < X.rows; ++i) X(i, j) = (X(i, j) - mean) / sd;
  }
}

// ---- CSV ----------------------------------------------------------------------
// Header row names every column: f:<name> features, d:<label> ground-truth
// distributions, l:<label> logical labels. UTF-8, '.' decimal point, no
// quoting or thousands separators.

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    out.push_back(cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ParseError(row, "non-numeric cell '" + cell + "' in column " + col);
  return v;
}

inline std::string path_stem(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = stem.find_last_of('.');
  if (dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
  return stem;
}
}  // namespace detail

/// Loads a dataset CSV, validates it and z-scores the feature columns.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "empty file " + path);
  const std::vector<std::string> header = detail::split_csv_line(line);

  std::vector<std::size_t> f_cols, d_cols, l_cols;
  std::vector<std::string> d_names, l_names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& h = header[j];
    if (h.rfind("f:", 0) == 0) {
      f_cols.push_back(j);
    } else if (h.rfind("d:", 0) == 0) {
      d_cols.push_back(j);
      d_names.push_back(h.substr(2));
    } else if (h.rfind("l:", 0) == 0) {
      l_cols.push_back(j);
      l_names.push_back(h.substr(2));
    } else {
      throw ParseError(0, "unknown column '" + h + "' (expected f:/d:/l: prefix)");
    }
  }
  if (f_cols.empty()) throw ParseError(0, "no f: feature columns in " + path);
  if (d_cols.empty() && l_cols.empty())
    throw ParseError(0, "need at least one d: or l: column in " + path);
  if (!d_cols.empty() && !l_cols.empty() && d_names != l_names)
    throw ParseError(0, "d: and l: label names disagree");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(lineno, "expected " + std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
      row[j] = detail::parse_number(cells[j], lineno, header[j]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(lineno, "no data rows in " + path);

  Dataset ds;
  ds.name = detail::path_stem(path);
  ds.label_names = d_cols.empty() ? l_names : d_names;
  const std::size_t n = rows.size();
  ds.X = Matrix(n, f_cols.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f_cols.size(); ++j) ds.X(i, j) = rows[i][f_cols[j]];
  if (!d_cols.empty()) {
    Matrix D(n, d_cols.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_cols.size(); ++j) D(i, j) = rows[i][d_cols[j]];
    for (std::size_t i = 0; i < n; ++i) {
      const std::string err = simplex_violation(D, i, kSimplexTolerance);
      if (!err.empty()) throw ParseError(i + 2, "distribution " + err);
    }
    ds.D = std::move(D);
  }
  if (!l_cols.empty()) {
    Matrix L(n, l_cols.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < l_cols.size(); ++j) L(i, j) = rows[i][l_cols[j]];
    ds.L = std::move(L);
  }
  validate_dataset(ds);
  standardize_features(ds.X);
  return ds;
}

namespace detail {
inline void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}
}  // namespace detail

/// Writes a dataset back out; full precision, so load -> save -> load is an
/// exact round trip.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  std::string buf;
  for (std::size_t j = 0; j < ds.X.cols; ++j) {
    if (j) buf += ',';
    buf += "f:x" + std::to_string(j + 1);
  }
  if (ds.D)
    for (const std::string& name : ds.label_names) buf += ",d:" + name;
  if (ds.L)
    for (const std::string& name : ds.label_names) buf += ",l:" + name;
  buf += '\n';
  for (std::size_t i = 0; i < ds.X.rows; ++i) {
    for (std::size_t j = 0; j < ds.X.cols; ++j) {
      if (j) buf += ',';
      detail::append_number(buf, ds.X(i, j));
    }
    if (ds.D)
      for (std::size_t j = 0; j < ds.D->cols; ++j) {
        buf += ',';
        detail::append_number(buf, (*ds.D)(i, j));
      }
    if (ds.L)
      for (std::size_t j = 0; j < ds.L->cols; ++j) {
        buf += ',';
        detail::append_number(buf, (*ds.L)(i, j));
      }
    buf += '\n';
  }
  out << buf;
}

/// Reads just the d: block of a CSV (any f:/l: columns are ignored). Used for
/// prediction files and as the truth side of evaluation.
inline std::pair<Matrix, std::vector<std::string>> load_distributions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "empty file " + path);
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::vector<std::size_t> d_cols;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j].rfind("d:", 0) == 0) {
      d_cols.push_back(j);
      names.push_back(header[j].substr(2));
    }
  if (d_cols.empty()) throw ParseError(0, "no d: columns in " + path);

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(lineno, "expected " + std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
    std::vector<double> row(d_cols.size());
    for (std::size_t j = 0; j < d_cols.size(); ++j)
      row[j] = detail::parse_number(cells[d_cols[j]], lineno, header[d_cols[j]]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(lineno, "no data rows in " + path);
  Matrix D(rows.size(), d_cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d_cols.size(); ++j) D(i, j) = rows[i][j];
  return {std::move(D), std::move(names)};
}

/// Writes an n x c distribution matrix as a d:-only CSV.
inline void save_distributions(const Matrix& D, const std::vector<std::string>& label_names,
                               const std::string& path) {
  if (D.cols != label_names.size())
    throw ShapeError("save_distributions", D.shape_str(),
                     "nx" + std::to_string(label_names.size()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  std::string buf;
  for (std::size_t j = 0; j < label_names.size(); ++j) {
    if (j) buf += ',';
    buf += "d:" + label_names[j];
  }
  buf += '\n';
  for (std::size_t i = 0; i < D.rows; ++i) {
    for (std::size_t j = 0; j < D.cols; ++j) {
      if (j) buf += ',';
      detail::append_number(buf, D(i, j));
    }
    buf += '\n';
  }
  out << buf;
}

// ---- binarization --------------------------------------------------------------

/// Derives logical labels from ground-truth distributions. Rows that would
/// come out all-zero get their argmax set instead (ties to the lower index),
/// so every row carries at least one label.
inline Matrix binarize(const Matrix& D, const BinarizeStrategy& strategy) {
  const std::size_t c = D.cols;
  if (strategy.kind == BinarizeStrategy::Kind::TopK && strategy.k > c)
    throw ConfigError("top-k: k=" + std::to_string(strategy.k) + " exceeds " +
                      std::to_string(c) + " labels");
  if (strategy.kind == BinarizeStrategy::Kind::FixedThreshold &&
      !(strategy.theta > 0.0 && strategy.theta < 1.0))
    throw ConfigError("fixed-threshold: theta must lie in (0,1)");
  for (std::size_t i = 0; i < D.rows; ++i) {
    const std::string err = simplex_violation(D, i, kSimplexTolerance);
    if (!err.empty()) throw DataError("binarize: row " + std::to_string(i + 1) + ": " + err);
  }

  Matrix L(D.rows, c, 0.0);
  for (std::size_t i = 0; i < D.rows; ++i) {
    switch (strategy.kind) {
      case BinarizeStrategy::Kind::MeanThreshold: {
        const double threshold = 1.0 / static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j)
          if (D(i, j) > threshold) L(i, j) = 1.0;
        break;
      }
      case BinarizeStrategy::Kind::FixedThreshold:
        for (std::size_t j = 0; j < c; ++j)
          if (D(i, j) > strategy.theta) L(i, j) = 1.0;
        break;
      case BinarizeStrategy::Kind::TopK: {
        std::vector<std::size_t> order(c);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return D(i, a) > D(i, b); });
        for (std::size_t r = 0; r < strategy.k; ++r) L(i, order[r]) = 1.0;
        break;
      }
    }
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) any = any || L(i, j) == 1.0;
    if (!any) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (D(i, j) > D(i, best)) best = j;
      L(i, best) = 1.0;
    }
  }
  return L;
}

/// Rescales each row to sum 1. The naive recovery baseline for logical labels.
inline Matrix row_normalized(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) sum += m(i, j);
    if (sum == 0.0) throw DataError("row_normalized: row " + std::to_string(i + 1) + " sums to 0");
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(i, j) / sum;
  }
  return out;
}

// ---- synthetic data ---------------------------------------------------------

/// Features uniform in [-1,1]^q; ground truth D = row_softmax(X W + b) with
/// W, b drawn from the seeded generator. Used by the oracle tests and as a
/// stand-in when no real data is on disk.
inline Dataset generate_synthetic(std::size_t n, std::size_t q, std::size_t c,
                                  std::uint64_t seed) {
  if (n < 2 || q < 2 || c < 2) throw ConfigError("generate_synthetic: n, q, c must be >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.name = "synthetic-" + std::to_string(seed);
  ds.X = uniform_matrix(rng, n, q, -1.0, 1.0);
  const double w_sd = 2.0 / std::sqrt(static_cast<double>(q));
  Matrix W = scale(normal_matrix(rng, q, c), w_sd);
  Matrix b = scale(normal_matrix(rng, 1, c), 0.5);
  Matrix logits = matmul(ds.X, W);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) logits(i, j) += b(0, j);
  ds.D = row_softmax(logits);
  for (std::size_t j = 0; j < c; ++j) ds.label_names.push_back("y" + std::to_string(j + 1));
  return ds;
}

}  // namespace lekit
