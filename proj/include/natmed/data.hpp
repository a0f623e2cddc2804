#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "natmed/errors.hpp"

namespace natmed {

// Three legal states of the (C, CY) pair.
enum class Category { censored, survivor, case_ };

// (0,0) -> censored, (1,0) -> survivor, (1,nonzero) -> case.
// (0,nonzero) violates the "outcome is zeroed under censoring" convention.
Category category_code(int c, double cy);

struct DatasetOptions {
  // Relaxes the {0,1} outcome check so Y may carry a positive rescaling;
  // exercised by the scale-equivariance tests only.
  bool allow_real_outcome = false;
};

// One row per trial participant: covariates W, arm A, phase-two indicator R,
// mediator S (finite iff R=1, NaN otherwise), non-censoring indicator C and
// outcome CY = C*Y.  Immutable after construction and safe to share across
// threads.  An optional per-row design sampling probability travels with the
// data when the generator (or the user's file) supplies one.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd W, Eigen::ArrayXi A, Eigen::ArrayXi R, Eigen::ArrayXd S,
          Eigen::ArrayXi C, Eigen::ArrayXd CY, std::vector<std::string> covariate_names,
          std::string meta = "", Eigen::ArrayXd design_gr = Eigen::ArrayXd(),
          DatasetOptions opts = DatasetOptions());

  int n() const { return static_cast<int>(W_.rows()); }
  int p() const { return static_cast<int>(W_.cols()); }

  const Eigen::MatrixXd& W() const { return W_; }
  const Eigen::ArrayXi& A() const { return A_; }
  const Eigen::ArrayXi& R() const { return R_; }
  const Eigen::ArrayXd& S() const { return S_; }
  const Eigen::ArrayXi& C() const { return C_; }
  const Eigen::ArrayXd& CY() const { return CY_; }
  const std::vector<std::string>& covariate_names() const { return names_; }
  const std::string& meta() const { return meta_; }

  bool has_design_gr() const { return design_gr_.size() == n(); }
  const Eigen::ArrayXd& design_gr() const { return design_gr_; }

  // n x 2 dummy matrix over the (C, CY) categories, censored as reference:
  // column 0 = survivor indicator, column 1 = case indicator.
  Eigen::MatrixXd category_dummies() const;

 private:
  Eigen::MatrixXd W_;
  Eigen::ArrayXi A_, R_, C_;
  Eigen::ArrayXd S_, CY_, design_gr_;
  std::vector<std::string> names_;
  std::string meta_;
};

struct CsvSchema {
  std::vector<std::string> w_cols;
  std::string a_col = "A";
  std::string r_col = "R";
  std::string s_col = "S";
  std::string c_col = "C";
  std::string y_col = "Y";
  std::string gr_col;  // optional design sampling probability column
};

// Header row required; missing mediator = empty cell, legal only when R=0.
// CY is computed as C*Y; a row with C=0 and Y!=0 is rejected.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Columns in schema order W..., A, R, S, C, Y (plus the sampling-probability
// column when present).  Numerics print with %.17g so a reload is
// bit-identical.
void write_csv(const Dataset& d, const std::string& path,
               const CsvSchema& schema = CsvSchema());

struct CaseCohortCheck {
  bool all_cases_sampled = true;
  // (covariate values..., arm) -> (n_total, n_sampled); diagnostic only.
  std::map<std::vector<double>, std::pair<int, int>> per_stratum_counts;
};

// Never throws; reports whether every case reached phase two and the
// per-(W, A)-stratum sampling counts.
CaseCohortCheck validate_case_cohort(const Dataset& d);

}  // namespace natmed
