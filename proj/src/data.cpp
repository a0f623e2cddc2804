#include "natmed/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace natmed {

namespace {

bool is01(double v) { return v == 0.0 || v == 1.0; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_number(const std::string& cell, const std::string& col, int row) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw DataError("malformed value '" + cell + "' in column " + col + ", data row " +
                    std::to_string(row));
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Category category_code(int c, double cy) {
  if (c == 0) {
    if (cy != 0.0) throw DataError("outcome recorded under censoring (C=0, CY!=0)");
    return Category::censored;
  }
  return cy != 0.0 ? Category::case_ : Category::survivor;
}

Dataset::Dataset(Eigen::MatrixXd W, Eigen::ArrayXi A, Eigen::ArrayXi R, Eigen::ArrayXd S,
                 Eigen::ArrayXi C, Eigen::ArrayXd CY, std::vector<std::string> covariate_names,
                 std::string meta, Eigen::ArrayXd design_gr, DatasetOptions opts)
    : W_(std::move(W)),
      A_(std::move(A)),
      R_(std::move(R)),
      C_(std::move(C)),
      S_(std::move(S)),
      CY_(std::move(CY)),
      design_gr_(std::move(design_gr)),
      names_(std::move(covariate_names)),
      meta_(std::move(meta)) {
  const int nn = n();
  if (A_.size() != nn || R_.size() != nn || S_.size() != nn || C_.size() != nn ||
      CY_.size() != nn)
    throw DataError("column length mismatch");
  if (static_cast<int>(names_.size()) != p()) throw DataError("covariate name count mismatch");
  if (design_gr_.size() != 0 && design_gr_.size() != nn)
    throw DataError("design sampling-probability column length mismatch");
  for (int i = 0; i < nn; ++i) {
    if (!W_.row(i).allFinite()) throw DataError("non-finite covariate, row " + std::to_string(i));
    if (A_(i) != 0 && A_(i) != 1) throw DataError("A not in {0,1}, row " + std::to_string(i));
    if (R_(i) != 0 && R_(i) != 1) throw DataError("R not in {0,1}, row " + std::to_string(i));
    if (C_(i) != 0 && C_(i) != 1) throw DataError("C not in {0,1}, row " + std::to_string(i));
    if (!opts.allow_real_outcome && !is01(CY_(i)))
      throw DataError("CY not in {0,1}, row " + std::to_string(i));
    if (C_(i) == 0 && CY_(i) != 0.0)
      throw DataError("outcome recorded under censoring, row " + std::to_string(i));
    const bool s_present = std::isfinite(S_(i));
    if (R_(i) == 1 && !s_present)
      throw DataError("mediator missing for a phase-two row, row " + std::to_string(i));
    if (R_(i) == 0 && s_present)
      throw DataError("mediator recorded outside the phase-two sample, row " +
                      std::to_string(i));
    if (design_gr_.size() == nn &&
        !(design_gr_(i) > 0.0 && design_gr_(i) <= 1.0))
      throw DataError("design sampling probability outside (0,1], row " + std::to_string(i));
  }
}

Eigen::MatrixXd Dataset::category_dummies() const {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n(), 2);
  for (int i = 0; i < n(); ++i) {
    switch (category_code(C_(i), CY_(i))) {
      case Category::survivor: D(i, 0) = 1.0; break;
      case Category::case_: D(i, 1) = 1.0; break;
      case Category::censored: break;
    }
  }
  return D;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file " + path);
  const std::vector<std::string> header = split_csv_line(line);
  auto col_index = [&](const std::string& name) {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw DataError("column '" + name + "' not found in " + path);
  };

  std::vector<int> w_idx;
  for (const auto& name : schema.w_cols) w_idx.push_back(col_index(name));
  const int a_idx = col_index(schema.a_col);
  const int r_idx = col_index(schema.r_col);
  const int s_idx = col_index(schema.s_col);
  const int c_idx = col_index(schema.c_col);
  const int y_idx = col_index(schema.y_col);
  const int gr_idx = schema.gr_col.empty() ? -1 : col_index(schema.gr_col);

  std::vector<std::vector<std::string>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("wrong field count, data row " + std::to_string(lineno));
    rows.push_back(std::move(cells));
  }

  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(w_idx.size());
  Eigen::MatrixXd W(n, p);
  Eigen::ArrayXi A(n), R(n), C(n);
  Eigen::ArrayXd S(n), CY(n);
  Eigen::ArrayXd GR = gr_idx >= 0 ? Eigen::ArrayXd(n) : Eigen::ArrayXd();

  auto parse01 = [&](const std::string& cell, const std::string& col, int row) {
    double v = parse_number(cell, col, row);
    if (!is01(v))
      throw DataError("column " + col + " must be 0/1, data row " + std::to_string(row));
    return static_cast<int>(v);
  };

  for (int i = 0; i < n; ++i) {
    const auto& cells = rows[i];
    const int row = i + 1;
    for (int j = 0; j < p; ++j) W(i, j) = parse_number(cells[w_idx[j]], schema.w_cols[j], row);
    A(i) = parse01(cells[a_idx], schema.a_col, row);
    R(i) = parse01(cells[r_idx], schema.r_col, row);
    C(i) = parse01(cells[c_idx], schema.c_col, row);
    const int y = parse01(cells[y_idx], schema.y_col, row);
    if (C(i) == 0 && y != 0)
      throw DataError("outcome recorded under censoring, data row " + std::to_string(row));
    CY(i) = static_cast<double>(C(i) * y);
    const std::string& s_cell = cells[s_idx];
    if (s_cell.empty()) {
      if (R(i) == 1)
        throw DataError("mediator missing for a phase-two row, data row " + std::to_string(row));
      S(i) = std::numeric_limits<double>::quiet_NaN();
    } else {
      if (R(i) == 0)
        throw DataError("mediator recorded outside the phase-two sample, data row " +
                        std::to_string(row));
      S(i) = parse_number(s_cell, schema.s_col, row);
    }
    if (gr_idx >= 0) GR(i) = parse_number(cells[gr_idx], schema.gr_col, row);
  }

  return Dataset(std::move(W), std::move(A), std::move(R), std::move(S), std::move(C),
                 std::move(CY), schema.w_cols, path, std::move(GR));
}

void write_csv(const Dataset& d, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const auto& names = d.covariate_names();
  for (int j = 0; j < d.p(); ++j) out << names[j] << ',';
  out << schema.a_col << ',' << schema.r_col << ',' << schema.s_col << ',' << schema.c_col
      << ',' << schema.y_col;
  const bool with_gr = d.has_design_gr();
  const std::string gr_name = schema.gr_col.empty() ? "sampling_prob" : schema.gr_col;
  if (with_gr) out << ',' << gr_name;
  out << '\n';
  for (int i = 0; i < d.n(); ++i) {
    for (int j = 0; j < d.p(); ++j) out << fmt(d.W()(i, j)) << ',';
    out << d.A()(i) << ',' << d.R()(i) << ',';
    if (d.R()(i) == 1) out << fmt(d.S()(i));
    out << ',' << d.C()(i) << ',' << fmt(d.CY()(i));
    if (with_gr) out << ',' << fmt(d.design_gr()(i));
    out << '\n';
  }
}

CaseCohortCheck validate_case_cohort(const Dataset& d) {
  CaseCohortCheck check;
  for (int i = 0; i < d.n(); ++i) {
    if (d.C()(i) == 1 && d.CY()(i) != 0.0 && d.R()(i) != 1) check.all_cases_sampled = false;
    std::vector<double> key(d.p() + 1);
    for (int j = 0; j < d.p(); ++j) key[j] = d.W()(i, j);
    key[d.p()] = static_cast<double>(d.A()(i));
    auto& counts = check.per_stratum_counts[key];
    counts.first += 1;
    if (d.R()(i) == 1) counts.second += 1;
  }
  return check;
}

}  // namespace natmed
