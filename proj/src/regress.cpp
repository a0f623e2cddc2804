#include "natmed/regress.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>

namespace natmed {

namespace {

constexpr double kEtaClamp = 30.0;
constexpr double kVarFloor = 1e-10;
constexpr double kDevTol = 1e-8;
constexpr double kRidge = 1e-6;
constexpr int kMaxIter = 50;

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_sample(const WeightedSample& s, Link link) {
  const auto n = s.X.rows();
  if (s.y.size() != n || s.w.size() != n) throw ConfigError("sample row counts differ");
  if (n == 0) throw ConfigError("empty sample");
  if (!(s.w.array() >= 0.0).all() || !s.w.allFinite())
    throw ConfigError("weights must be finite and nonnegative");
  if (!(s.w.array() > 0.0).any()) throw ConfigError("all weights are zero");
  if (!s.y.allFinite() || !s.X.allFinite()) throw ConfigError("non-finite sample values");
  if (link == Link::logit && !((s.y.array() >= 0.0).all() && (s.y.array() <= 1.0).all()))
    throw ConfigError("logit link requires responses in [0,1]");
}

// Columns eligible for interaction products: those taking at most two
// distinct values in the fit sample.  Continuous measurements keep a single
// linear term, so interaction fits pool their slope instead of estimating it
// per cell (which destabilizes extrapolation off the observed range).
std::vector<int> interactable_columns(const Eigen::MatrixXd& X) {
  std::vector<int> out;
  for (int j = 0; j < X.cols(); ++j) {
    bool binary = true, second_seen = false;
    double v0 = X(0, j), v1 = v0;
    for (int i = 1; i < X.rows() && binary; ++i) {
      const double v = X(i, j);
      if (v == v0) continue;
      if (!second_seen) {
        v1 = v;
        second_seen = true;
      } else if (v != v1) {
        binary = false;
      }
    }
    if (binary) out.push_back(j);
  }
  return out;
}

// Expanded design for GLM kinds: intercept, the raw columns (main terms),
// and for the interaction kind the products over every subset (size >= 2) of
// the interaction-eligible columns.
Eigen::MatrixXd expand_design(LearnerKind kind, const Eigen::MatrixXd& X,
                              const std::vector<int>& inter_cols) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (kind == LearnerKind::glm_main_terms) {
    Eigen::MatrixXd D(n, p + 1);
    D.col(0).setOnes();
    D.rightCols(p) = X;
    return D;
  }
  const int q = static_cast<int>(inter_cols.size());
  if (q > 12) throw ConfigError("interaction expansion limited to 12 binary predictors");
  const int extra = (1 << q) - 1 - q;
  Eigen::MatrixXd D(n, 1 + p + extra);
  D.col(0).setOnes();
  D.middleCols(1, p) = X;
  int c = 1 + p;
  for (int mask = 1; mask < (1 << q); ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) < 2) continue;
    Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
    for (int j = 0; j < q; ++j)
      if (mask & (1 << j)) col.array() *= X.col(inter_cols[static_cast<size_t>(j)]).array();
    D.col(c++) = col;
  }
  return D;
}

Eigen::VectorXd solve_wls(const Eigen::MatrixXd& Xd, const Eigen::VectorXd& z,
                          const Eigen::VectorXd& w, double ridge) {
  const Eigen::VectorXd sw = w.array().sqrt();
  if (ridge <= 0.0) {
    const Eigen::MatrixXd Xs = sw.asDiagonal() * Xd;
    return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(Xs).solve(
        (sw.array() * z.array()).matrix());
  }
  // Augment with sqrt(ridge) rows penalizing the non-intercept coefficients.
  const int n = static_cast<int>(Xd.rows());
  const int p = static_cast<int>(Xd.cols());
  Eigen::MatrixXd Xs(n + p - 1, p);
  Eigen::VectorXd zs = Eigen::VectorXd::Zero(n + p - 1);
  Xs.topRows(n) = sw.asDiagonal() * Xd;
  Xs.bottomRows(p - 1).setZero();
  for (int j = 1; j < p; ++j) Xs(n + j - 1, j) = std::sqrt(ridge);
  zs.head(n) = sw.array() * z.array();
  return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(Xs).solve(zs);
}

double deviance(const Eigen::MatrixXd& Xd, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& beta) {
  const Eigen::ArrayXd eta = (Xd * beta).array().min(kEtaClamp).max(-kEtaClamp);
  const Eigen::ArrayXd mu = eta.unaryExpr([](double e) { return expit(e); })
                                .min(1.0 - 1e-12)
                                .max(1e-12);
  const Eigen::ArrayXd ya = y.array();
  return -2.0 * (w.array() * (ya * mu.log() + (1.0 - ya) * (1.0 - mu).log())).sum();
}

// IRLS for the Bernoulli likelihood; returns false if the deviance failed to
// settle within kMaxIter (caller then retries with ridge stabilization).
bool irls_logit(const Eigen::MatrixXd& Xd, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                double ridge, Eigen::VectorXd* beta_out) {
  const int p = static_cast<int>(Xd.cols());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double dev = deviance(Xd, y, w, beta);
  for (int it = 0; it < kMaxIter; ++it) {
    const Eigen::ArrayXd eta = (Xd * beta).array().min(kEtaClamp).max(-kEtaClamp);
    const Eigen::ArrayXd mu = eta.unaryExpr([](double e) { return expit(e); });
    const Eigen::ArrayXd v = (mu * (1.0 - mu)).max(kVarFloor);
    const Eigen::VectorXd iw = (w.array() * v).matrix();
    const Eigen::VectorXd z = (eta + (y.array() - mu) / v).matrix();
    Eigen::VectorXd cand = solve_wls(Xd, z, iw, ridge);
    double cand_dev = deviance(Xd, y, w, cand);
    int halvings = 0;
    while ((!std::isfinite(cand_dev) || cand_dev > dev + kDevTol * (0.1 + std::abs(dev))) &&
           halvings < 10) {
      cand = 0.5 * (cand + beta);
      cand_dev = deviance(Xd, y, w, cand);
      ++halvings;
    }
    if (!std::isfinite(cand_dev)) break;
    const bool done = std::abs(cand_dev - dev) < kDevTol * (0.1 + std::abs(dev));
    beta = cand;
    dev = cand_dev;
    if (done) {
      *beta_out = beta;
      return true;
    }
  }
  *beta_out = beta;
  return false;
}

std::vector<std::int64_t> cell_key(const Eigen::MatrixXd& X, int i) {
  std::vector<std::int64_t> key(X.cols());
  for (int j = 0; j < X.cols(); ++j) {
    const double v = X(i, j);
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9)
      throw ConfigError("saturated fit requires discrete predictors");
    key[j] = static_cast<std::int64_t>(r);
  }
  return key;
}

}  // namespace

struct FittedRegression::Impl {
  LearnerSpec spec;
  double p_min = 0.0;
  int n_predictors = 0;
  bool irls_fallback = false;
  bool dropped_member = false;
  double cv_risk = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd coef;           // GLM / intercept_only
  std::vector<int> inter_cols;    // interaction-eligible columns, fixed at fit
  Eigen::VectorXd alpha;          // ensemble weights
  std::map<std::vector<std::int64_t>, double> cells;  // saturated
  double global_mean = 0.0;
  std::vector<FittedRegression> members;  // ensemble

  Eigen::VectorXd raw_predict(const Eigen::MatrixXd& X, PredictInfo* info) const {
    const int n = static_cast<int>(X.rows());
    switch (spec.kind) {
      case LearnerKind::intercept_only:
        return Eigen::VectorXd::Constant(n, coef(0));
      case LearnerKind::glm_main_terms:
      case LearnerKind::glm_all_interactions: {
        const Eigen::MatrixXd D = expand_design(spec.kind, X, inter_cols);
        Eigen::ArrayXd eta = (D * coef).array();
        if (spec.link == Link::identity) return eta.matrix();
        eta = eta.min(kEtaClamp).max(-kEtaClamp);
        return eta.unaryExpr([](double e) { return expit(e); }).matrix();
      }
      case LearnerKind::saturated: {
        Eigen::VectorXd out(n);
        for (int i = 0; i < n; ++i) {
          const auto it = cells.find(cell_key(X, i));
          if (it == cells.end()) {
            out(i) = global_mean;
            if (info) ++info->unseen_cells;
          } else {
            out(i) = it->second;
          }
        }
        return out;
      }
      case LearnerKind::ensemble: {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < alpha.size(); ++k)
          out += alpha(k) * members[static_cast<size_t>(k)].predict(X, info);
        return out;
      }
    }
    throw ConfigError("unknown learner kind");
  }
};

const LearnerSpec& FittedRegression::spec() const { return impl_->spec; }
const Eigen::VectorXd& FittedRegression::coefficients() const { return impl_->coef; }
const Eigen::VectorXd& FittedRegression::ensemble_weights() const { return impl_->alpha; }
double FittedRegression::cv_risk() const { return impl_->cv_risk; }
bool FittedRegression::irls_fallback() const { return impl_->irls_fallback; }
bool FittedRegression::dropped_member() const { return impl_->dropped_member; }
double FittedRegression::p_min() const { return impl_->p_min; }

Eigen::VectorXd FittedRegression::predict(const Eigen::MatrixXd& X, PredictInfo* info) const {
  if (!impl_) throw ConfigError("predict on an unfitted regression");
  if (static_cast<int>(X.cols()) != impl_->n_predictors)
    throw ConfigError("predictor count mismatch: fit with " +
                      std::to_string(impl_->n_predictors) + ", given " +
                      std::to_string(X.cols()));
  Eigen::VectorXd out = impl_->raw_predict(X, info);
  if (impl_->spec.link == Link::logit && impl_->spec.kind != LearnerKind::ensemble) {
    const double lo = impl_->p_min;
    const double hi = 1.0 - impl_->p_min;
    for (int i = 0; i < out.size(); ++i) {
      if (out(i) < lo) {
        out(i) = lo;
        if (info && lo > 0.0) ++info->clipped;
      } else if (out(i) > hi) {
        out(i) = hi;
        if (info && lo > 0.0) ++info->clipped;
      }
    }
  }
  return out;
}

FittedRegression fit(const LearnerSpec& spec, const WeightedSample& sample, double p_min) {
  if (spec.kind == LearnerKind::ensemble)
    return fit_ensemble(spec.ensemble_members, sample, spec.cv_folds, p_min);
  check_sample(sample, spec.link);
  auto impl = std::make_shared<FittedRegression::Impl>();
  impl->spec = spec;
  impl->p_min = p_min;
  impl->n_predictors = static_cast<int>(sample.X.cols());

  if (spec.kind == LearnerKind::intercept_only) {
    impl->coef = Eigen::VectorXd::Constant(1, sample.w.dot(sample.y) / sample.w.sum());
    return FittedRegression(impl);
  }

  if (spec.kind == LearnerKind::saturated) {
    std::map<std::vector<std::int64_t>, std::pair<double, double>> acc;
    double tot_w = 0.0, tot_wy = 0.0;
    for (int i = 0; i < sample.X.rows(); ++i) {
      if (sample.w(i) <= 0.0) continue;
      auto& slot = acc[cell_key(sample.X, i)];
      slot.first += sample.w(i) * sample.y(i);
      slot.second += sample.w(i);
      tot_w += sample.w(i);
      tot_wy += sample.w(i) * sample.y(i);
    }
    for (const auto& [key, slot] : acc) impl->cells[key] = slot.first / slot.second;
    impl->global_mean = tot_wy / tot_w;
    return FittedRegression(impl);
  }

  if (spec.kind == LearnerKind::glm_all_interactions)
    impl->inter_cols = interactable_columns(sample.X);
  const Eigen::MatrixXd Xd = expand_design(spec.kind, sample.X, impl->inter_cols);
  Eigen::VectorXd beta;
  if (spec.link == Link::identity) {
    beta = solve_wls(Xd, sample.y, sample.w, 0.0);
    if (!beta.allFinite()) {
      beta = solve_wls(Xd, sample.y, sample.w, kRidge);
      impl->irls_fallback = true;
    }
  } else {
    if (!irls_logit(Xd, sample.y, sample.w, 0.0, &beta) || !beta.allFinite()) {
      impl->irls_fallback = true;
      irls_logit(Xd, sample.y, sample.w, kRidge, &beta);
    }
  }
  if (!beta.allFinite()) throw FitError("singular fit");
  impl->coef = beta;
  return FittedRegression(impl);
}

FittedRegression fit_ensemble(const std::vector<LearnerSpec>& members,
                              const WeightedSample& sample, int folds, double p_min) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  for (const auto& m : members)
    if (m.kind == LearnerKind::ensemble) throw ConfigError("nested ensembles unsupported");
  check_sample(sample, members.front().link);

  const int n = static_cast<int>(sample.X.rows());
  const int V = std::min(folds, n);
  const int m_in = static_cast<int>(members.size());

  // Round-robin fold ids keep CV deterministic without an RNG.
  auto fold_of = [&](int i) { return i % V; };

  Eigen::MatrixXd Z(n, m_in);
  std::vector<bool> keep(members.size(), true);
  for (int k = 0; k < m_in; ++k) {
    try {
      for (int f = 0; f < V; ++f) {
        int n_tr = 0, n_te = 0;
        for (int i = 0; i < n; ++i) (fold_of(i) == f ? n_te : n_tr)++;
        WeightedSample tr{Eigen::MatrixXd(n_tr, sample.X.cols()), Eigen::VectorXd(n_tr),
                          Eigen::VectorXd(n_tr)};
        Eigen::MatrixXd te(n_te, sample.X.cols());
        std::vector<int> te_rows(static_cast<size_t>(n_te));
        int a = 0, b = 0;
        for (int i = 0; i < n; ++i) {
          if (fold_of(i) == f) {
            te.row(b) = sample.X.row(i);
            te_rows[static_cast<size_t>(b)] = i;
            ++b;
          } else {
            tr.X.row(a) = sample.X.row(i);
            tr.y(a) = sample.y(i);
            tr.w(a) = sample.w(i);
            ++a;
          }
        }
        const FittedRegression fr = fit(members[static_cast<size_t>(k)], tr, p_min);
        const Eigen::VectorXd pred = fr.predict(te);
        for (int i = 0; i < n_te; ++i) Z(te_rows[static_cast<size_t>(i)], k) = pred(i);
      }
    } catch (const FitError&) {
      keep[static_cast<size_t>(k)] = false;
    } catch (const ConfigError&) {
      throw;  // a malformed member spec is the caller's bug, not a data hiccup
    }
  }

  std::vector<int> kept;
  for (int k = 0; k < m_in; ++k)
    if (keep[static_cast<size_t>(k)]) kept.push_back(k);
  if (kept.empty()) throw FitError("all ensemble members failed");
  const int m = static_cast<int>(kept.size());

  Eigen::MatrixXd Zk(n, m);
  for (int k = 0; k < m; ++k) Zk.col(k) = Z.col(kept[static_cast<size_t>(k)]);

  const Eigen::VectorXd& w = sample.w;
  auto risk_of = [&](const Eigen::VectorXd& alpha) {
    const Eigen::ArrayXd res = (sample.y - Zk * alpha).array();
    return (w.array() * res.square()).sum();
  };

  // Exact simplex-constrained weighted least squares by enumerating support
  // subsets: each KKT system fixes sum(alpha)=1 on a subset; the best
  // feasible (alpha >= 0) solution over all subsets is the global optimum.
  const Eigen::MatrixXd G = Zk.transpose() * w.asDiagonal() * Zk;
  const Eigen::VectorXd g = Zk.transpose() * (w.array() * sample.y.array()).matrix();
  double best_risk = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_alpha = Eigen::VectorXd::Zero(m);
  for (int mask = 1; mask < (1 << m); ++mask) {
    std::vector<int> idx;
    for (int k = 0; k < m; ++k)
      if (mask & (1 << k)) idx.push_back(k);
    const int t = static_cast<int>(idx.size());
    Eigen::MatrixXd K(t + 1, t + 1);
    Eigen::VectorXd rhs(t + 1);
    for (int a2 = 0; a2 < t; ++a2) {
      for (int b2 = 0; b2 < t; ++b2)
        K(a2, b2) = 2.0 * G(idx[static_cast<size_t>(a2)], idx[static_cast<size_t>(b2)]);
      K(a2, t) = 1.0;
      K(t, a2) = 1.0;
      rhs(a2) = 2.0 * g(idx[static_cast<size_t>(a2)]);
    }
    K(t, t) = 0.0;
    rhs(t) = 1.0;
    const Eigen::VectorXd sol = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(K).solve(rhs);
    if (!sol.allFinite()) continue;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
    bool feasible = std::abs(sol.head(t).sum() - 1.0) < 1e-8;
    for (int a2 = 0; a2 < t; ++a2) {
      if (sol(a2) < -1e-12) feasible = false;
      alpha(idx[static_cast<size_t>(a2)]) = std::max(sol(a2), 0.0);
    }
    if (!feasible) continue;
    alpha /= alpha.sum();
    const double r = risk_of(alpha);
    if (r < best_risk - 1e-15) {
      best_risk = r;
      best_alpha = alpha;
    }
  }
  if (!std::isfinite(best_risk)) throw FitError("ensemble weight optimization failed");

  // Degenerate ties (e.g. constant response): prefer uniform weights.
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(m, 1.0 / m);
  if (risk_of(uniform) <= best_risk + 1e-12 * (1.0 + best_risk)) best_alpha = uniform;

  auto impl = std::make_shared<FittedRegression::Impl>();
  impl->spec.kind = LearnerKind::ensemble;
  impl->spec.link = members.front().link;
  impl->spec.ensemble_members = members;
  impl->spec.cv_folds = folds;
  impl->p_min = p_min;
  impl->n_predictors = static_cast<int>(sample.X.cols());
  impl->dropped_member = (m != m_in);
  impl->alpha = best_alpha;
  impl->cv_risk = risk_of(best_alpha) / w.sum();
  for (int k : kept) impl->members.push_back(fit(members[static_cast<size_t>(k)], sample, p_min));
  return FittedRegression(impl);
}

}  // namespace natmed
