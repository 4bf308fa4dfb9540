#pragma once

// CSV datasets and JSON encodings of estimates and reports.

#include "odb/core.hpp"
#include "odb/debias_batch.hpp"
#include "odb/estimate.hpp"
#include "odb/inference.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace odb::io {

using json = nlohmann::json;

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DomainError("csv: not a number: '" + s + "'");
  }
  if (used != s.size()) throw DomainError("csv: trailing characters in '" + s + "'");
  return v;
}

struct Table {
  std::vector<std::string> header;
  Matrix values;
  [[nodiscard]] Index column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Index>(j);
    throw DomainError("csv: no column named '" + name + "'");
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DomainError("csv: empty input");
  t.header = split_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw DimensionError("csv: row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                           " fields, header has " + std::to_string(t.header.size()));
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_double(c));
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
  require_dims(static_cast<Index>(header.size()) == values.cols(), "write_csv: header does not match column count");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path);
  write_csv(out, header, values);
}

inline std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> h;
  for (Index j = 1; j <= count; ++j) h.push_back(prefix + std::to_string(j));
  return h;
}

/// T x p series with header z1..zp.
inline void write_series(const std::string& path, const Matrix& z) { write_csv(path, numbered("z", z.cols()), z); }

inline Matrix read_series(const std::string& path) { return read_csv(path).values; }

/// Batch dataset: columns batch (1 or 2), y, x1..xp; batch-1 rows first.
inline void write_batch(const std::string& path, const BatchDesign& d) {
  Matrix m(d.n(), d.p() + 2);
  m.topRows(d.n1()).col(0).setConstant(1.0);
  m.topRows(d.n1()).col(1) = d.y1;
  m.topRows(d.n1()).rightCols(d.p()) = d.X1;
  if (d.n2() > 0) {
    m.bottomRows(d.n2()).col(0).setConstant(2.0);
    m.bottomRows(d.n2()).col(1) = d.y2;
    m.bottomRows(d.n2()).rightCols(d.p()) = d.X2;
  }
  std::vector<std::string> h{"batch", "y"};
  for (const auto& s : numbered("x", d.p())) h.push_back(s);
  write_csv(path, h, m);
}

inline BatchDesign read_batch(const std::string& path) {
  const Table t = read_csv(path);
  const Index b = t.column("batch");
  const Index y = t.column("y");
  require_dims(t.values.cols() >= 3, "batch csv: need at least one covariate column");
  std::vector<Index> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (static_cast<Index>(j) != b && static_cast<Index>(j) != y) cols.push_back(static_cast<Index>(j));
  std::vector<Index> first, second;
  for (Index i = 0; i < t.values.rows(); ++i) {
    const double v = t.values(i, b);
    if (v == 1.0)
      first.push_back(i);
    else if (v == 2.0)
      second.push_back(i);
    else
      throw DomainError("batch csv: batch column must be 1 or 2");
  }
  BatchDesign d;
  const auto take = [&](const std::vector<Index>& idx, Matrix& X, Vector& yv) {
    X.resize(static_cast<Index>(idx.size()), static_cast<Index>(cols.size()));
    yv.resize(static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      yv(static_cast<Index>(r)) = t.values(idx[r], y);
      for (std::size_t c = 0; c < cols.size(); ++c) X(static_cast<Index>(r), static_cast<Index>(c)) = t.values(idx[r], cols[c]);
    }
  };
  take(first, d.X1, d.y1);
  take(second, d.X2, d.y2);
  if (d.X2.rows() == 0) d.X2.resize(0, d.X1.cols());
  d.theta_int = Vector::Zero(d.X1.cols());
  d.validate();
  return d;
}

/// Estimates as CSV: index, estimate, variance (the input format of `infer`).
inline void write_estimates_csv(const std::string& path, const DebiasedEstimate& est) {
  Matrix m(est.theta.size(), 3);
  for (Index a = 0; a < est.theta.size(); ++a) m.row(a) << static_cast<double>(a), est.theta(a), est.variance(a);
  write_csv(path, {"index", "estimate", "variance"}, m);
}

inline DebiasedEstimate read_estimates_csv(const std::string& path, Index n) {
  const Table t = read_csv(path);
  DebiasedEstimate est;
  est.theta = t.values.col(t.column("estimate"));
  est.variance = t.values.col(t.column("variance"));
  est.n = n;
  for (Index a = 0; a < est.variance.size(); ++a)
    require(est.variance(a) >= 0.0, "estimates csv: variances must be nonnegative");
  return est;
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

inline json estimate_json(const DebiasedEstimate& est) {
  json j;
  j["method"] = to_string(est.method);
  j["n"] = est.n;
  j["sigma"] = est.sigma;
  j["theta"] = vector_json(est.theta);
  j["variance"] = vector_json(est.variance);
  if (est.bias_matrix_norm) j["bias_matrix_norm"] = *est.bias_matrix_norm;
  return j;
}

inline json report_json(const InferenceReport& rep) {
  json j;
  j["alpha"] = rep.alpha;
  json coords = json::array();
  for (const auto& c : rep.coords)
    coords.push_back({{"index", c.index},
                      {"estimate", c.estimate},
                      {"variance", c.variance},
                      {"ci_low", c.ci.low},
                      {"ci_high", c.ci.high},
                      {"p_value", c.p_value},
                      {"reject", c.reject}});
  j["coordinates"] = coords;
  j["by_rejections"] = rep.by_rejections;
  return j;
}

/// Doubles are printed in their shortest round-trip form.
inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError(path + ": " + e.what());
  }
}

}  // namespace odb::io
