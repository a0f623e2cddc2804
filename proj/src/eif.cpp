#include "natmed/eif.hpp"

#include <cstdio>
#include <stdexcept>

namespace natmed {

namespace {

void need(const Eigen::ArrayXd& col, int n, const char* what) {
  if (col.size() != n) throw ConfigError(std::string(what) + " not fitted");
}

void check_full_data_inputs(const Dataset& d, const NuisanceBundle& b) {
  const int n = d.n();
  need(b.ga2, n, "arm probability");
  need(b.gc1, n, "censoring probability");
  need(b.aws_ratio, n, "arm density ratio");
  need(b.qy, n, "outcome regression");
}

double term1_at(const Dataset& d, const NuisanceBundle& b, int i) {
  if (d.R()(i) != 1 || d.A()(i) != b.pair.a1 || d.C()(i) != 1) return 0.0;
  return b.aws_ratio(i) / (b.ga2(i) * b.gc1(i)) * (d.CY()(i) - b.qy(i));
}

}  // namespace

Eigen::ArrayXd eval_full_data(const Dataset& d, const NuisanceBundle& b, double plug_in) {
  const int n = d.n();
  check_full_data_inputs(d, b);
  need(b.qqy, n, "second-stage regression");
  Eigen::ArrayXd out(n);
  for (int i = 0; i < n; ++i) {
    double v = term1_at(d, b, i);
    if (d.R()(i) == 1 && d.A()(i) == b.pair.a2) v += (b.qy(i) - b.qqy(i)) / b.ga2(i);
    out(i) = v + b.qqy(i) - plug_in;
  }
  return out;
}

EifColumn eval_classic(const Dataset& d, const NuisanceBundle& b, double plug_in) {
  const int n = d.n();
  need(b.gr, n, "sampling probability");
  need(b.qd, n, "influence projection");
  const Eigen::ArrayXd dx = eval_full_data(d, b, plug_in);
  EifColumn col{EifVariant::classic, b.pair, Eigen::ArrayXd(n), plug_in};
  for (int i = 0; i < n; ++i) {
    const double w = d.R()(i) == 1 ? 1.0 / b.gr(i) : 0.0;
    col.values(i) = w * dx(i) + (1.0 - w) * b.qd(i);
  }
  if (!col.values.allFinite()) throw ConfigError("non-finite influence value");
  return col;
}

EifColumn eval_alternative(const Dataset& d, const NuisanceBundle& b, double plug_in) {
  const int n = d.n();
  check_full_data_inputs(d, b);
  need(b.gr, n, "sampling probability");
  need(b.qtqy, n, "sequential regression");
  need(b.qtqt, n, "sequential second stage");
  need(b.qtd, n, "influence projection");
  EifColumn col{EifVariant::alternative, b.pair, Eigen::ArrayXd(n), plug_in};
  for (int i = 0; i < n; ++i) {
    const int r = d.R()(i);
    double v = b.qtqt(i) - plug_in - b.qtd(i) / b.gr(i) * (r - b.gr(i));
    if (d.A()(i) == b.pair.a2) {
      v += (b.qtqy(i) - b.qtqt(i)) / b.ga2(i);
      if (r == 1) v += (b.qy(i) - b.qtqy(i)) / (b.ga2(i) * b.gr(i));
    }
    if (r == 1) v += term1_at(d, b, i) / b.gr(i);
    col.values(i) = v;
  }
  if (!col.values.allFinite()) throw ConfigError("non-finite influence value");
  return col;
}

Eigen::ArrayXd partial_pseudo_outcome(const Dataset& d, const NuisanceBundle& b) {
  check_full_data_inputs(d, b);
  Eigen::ArrayXd out(d.n());
  for (int i = 0; i < d.n(); ++i) out(i) = term1_at(d, b, i);
  return out;
}

void write_eif_csv(const std::string& path, const std::vector<EifColumn>& columns) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "row,variant,value\n");
  for (const auto& col : columns) {
    const char* name = col.variant == EifVariant::full_data  ? "full_data"
                       : col.variant == EifVariant::classic ? "classic"
                                                            : "alternative";
    for (int i = 0; i < col.values.size(); ++i)
      std::fprintf(f, "%d,%s,%.17g\n", i, name, col.values(i));
  }
  if (std::fclose(f) != 0) throw std::runtime_error("failed to write " + path);
}

}  // namespace natmed
