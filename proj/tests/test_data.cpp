#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "natmed/data.hpp"
#include "natmed/simulate.hpp"

using namespace natmed;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Four legal rows covering every (C, CY, R) category.
Dataset tiny() {
  Eigen::MatrixXd W(4, 2);
  W << 0, 1, 1, 0, 1, 1, 0, 0;
  Eigen::ArrayXi A(4), R(4), C(4);
  A << 0, 1, 1, 0;
  R << 1, 0, 1, 1;
  C << 1, 1, 0, 1;
  Eigen::ArrayXd S(4), CY(4);
  S << 2.0, kNaN, 0.0, 1.0;
  CY << 1, 0, 0, 0;
  return Dataset(W, A, R, S, C, CY, {"w1", "w2"}, "tiny");
}

std::string tmp_path(const char* name) { return std::string("./") + name; }

}  // namespace

TEST_CASE("category coding") {
  CHECK(category_code(0, 0.0) == Category::censored);
  CHECK(category_code(1, 0.0) == Category::survivor);
  CHECK(category_code(1, 1.0) == Category::case_);
  CHECK(category_code(1, 0.7) == Category::case_);
  CHECK_THROWS_AS(category_code(0, 1.0), DataError);
}

TEST_CASE("dataset accessors and dummies") {
  Dataset d = tiny();
  CHECK(d.n() == 4);
  CHECK(d.p() == 2);
  CHECK(d.covariate_names()[1] == "w2");
  CHECK_FALSE(d.has_design_gr());
  Eigen::MatrixXd dum = d.category_dummies();
  CHECK(dum(0, 1) == 1.0);  // case
  CHECK(dum(1, 0) == 1.0);  // survivor
  CHECK(dum(2, 0) == 0.0);  // censored: reference level
  CHECK(dum(2, 1) == 0.0);
  CHECK(dum(3, 0) == 1.0);
}

TEST_CASE("constructor rejects invariant violations") {
  Eigen::MatrixXd W(2, 1);
  W << 0, 1;
  Eigen::ArrayXi A(2), R(2), C(2);
  A << 0, 1;
  R << 1, 0;
  C << 1, 1;
  Eigen::ArrayXd S(2), CY(2);
  S << 1.0, kNaN;
  CY << 0, 0;
  std::vector<std::string> nm{"w"};

  CHECK_NOTHROW(Dataset(W, A, R, S, C, CY, nm));

  {
    Eigen::ArrayXi A2(3);
    A2 << 0, 1, 0;
    CHECK_THROWS_AS(Dataset(W, A2, R, S, C, CY, nm), DataError);
  }
  {
    Eigen::MatrixXd Wb = W;
    Wb(0, 0) = kNaN;
    CHECK_THROWS_AS(Dataset(Wb, A, R, S, C, CY, nm), DataError);
  }
  {
    Eigen::ArrayXi Ab = A;
    Ab(0) = 2;
    CHECK_THROWS_AS(Dataset(W, Ab, R, S, C, CY, nm), DataError);
  }
  {
    Eigen::ArrayXd CYb = CY;
    CYb(1) = 0.5;  // real-valued outcome needs the explicit opt-in
    CHECK_THROWS_AS(Dataset(W, A, R, S, C, CYb, nm), DataError);
    Eigen::ArrayXd CYc = CY;
    CYc(0) = 0.5;
    DatasetOptions opts;
    opts.allow_real_outcome = true;
    CHECK_NOTHROW(Dataset(W, A, R, S, C, CYc, nm, "", Eigen::ArrayXd(), opts));
  }
  {
    Eigen::ArrayXi Cb = C;
    Eigen::ArrayXd CYb = CY;
    Cb(0) = 0;
    CYb(0) = 1.0;  // outcome recorded under censoring
    CHECK_THROWS_AS(Dataset(W, A, R, S, Cb, CYb, nm), DataError);
  }
  {
    Eigen::ArrayXd Sb = S;
    Sb(0) = kNaN;  // phase-two row without a mediator
    CHECK_THROWS_AS(Dataset(W, A, R, Sb, C, CY, nm), DataError);
    Eigen::ArrayXd Sc = S;
    Sc(1) = 3.0;  // mediator outside phase two
    CHECK_THROWS_AS(Dataset(W, A, R, Sc, C, CY, nm), DataError);
  }
  {
    Eigen::ArrayXd gr(2);
    gr << 0.25, 0.0;  // probability must be positive
    CHECK_THROWS_AS(Dataset(W, A, R, S, C, CY, nm, "", gr), DataError);
    gr << 0.25, 1.0;
    CHECK_NOTHROW(Dataset(W, A, R, S, C, CY, nm, "", gr));
  }
}

TEST_CASE("csv round trip is bit exact") {
  Dgp1Spec spec;
  spec.n = 500;
  spec.seed = 42;
  Dataset d = gen_dgp1(spec);
  const std::string path = tmp_path("round_trip.csv");
  write_csv(d, path);

  CsvSchema schema;
  schema.w_cols = {"w1", "w2"};
  schema.gr_col = "sampling_prob";
  Dataset back = load_csv(path, schema);

  REQUIRE(back.n() == d.n());
  CHECK((back.W() - d.W()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.A() == d.A()).all());
  CHECK((back.R() == d.R()).all());
  CHECK((back.C() == d.C()).all());
  CHECK((back.CY() == d.CY()).all());
  REQUIRE(back.has_design_gr());
  CHECK((back.design_gr() == d.design_gr()).all());
  for (int i = 0; i < d.n(); ++i) {
    if (d.R()(i) == 1)
      CHECK(back.S()(i) == d.S()(i));
    else
      CHECK(std::isnan(back.S()(i)));
  }
  std::remove(path.c_str());
}

TEST_CASE("csv loader rejects malformed input") {
  CsvSchema schema;
  schema.w_cols = {"w1"};

  CHECK_THROWS_AS(load_csv("./no_such_file.csv", schema), DataError);

  auto write_and_load = [&](const char* body) {
    const std::string path = tmp_path("malformed.csv");
    std::ofstream out(path);
    out << body;
    out.close();
    try {
      load_csv(path, schema);
    } catch (...) {
      std::remove(path.c_str());
      throw;
    }
    std::remove(path.c_str());
  };

  // missing required column
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C\n0,0,0,,1\n"), DataError);
  // non-numeric token
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\nx,0,0,,1,0\n"), DataError);
  // A outside {0,1}
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\n0,2,0,,1,0\n"), DataError);
  // outcome recorded under censoring
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\n0,0,0,,0,1\n"), DataError);
  // empty mediator on a phase-two row
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\n0,0,1,,1,0\n"), DataError);
  // mediator recorded on a phase-one row
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\n0,0,0,1.5,1,0\n"), DataError);
  // ragged row
  CHECK_THROWS_AS(write_and_load("w1,A,R,S,C,Y\n0,0,0,,1\n"), DataError);
  // row-indexed message
  try {
    write_and_load("w1,A,R,S,C,Y\n0,0,0,,1,0\n0,boom,0,,1,0\n");
    CHECK(false);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("case-cohort audit") {
  Dgp2Spec spec;
  spec.n = 6000;
  spec.seed = 7;
  Dataset d = gen_dgp2(spec);
  CaseCohortCheck check = validate_case_cohort(d);
  CHECK(check.all_cases_sampled);
  CHECK(check.per_stratum_counts.size() == 16);  // 8 covariate strata x 2 arms

  // Dropping one case from phase two must flip the audit flag.
  for (int i = 0; i < d.n(); ++i) {
    if (d.CY()(i) == 1.0 && d.R()(i) == 1) {
      Eigen::ArrayXi R2 = d.R();
      R2(i) = 0;
      Eigen::ArrayXd S2 = d.S();
      S2(i) = kNaN;
      Dataset broken(d.W(), d.A(), R2, S2, d.C(), d.CY(), d.covariate_names());
      CHECK_FALSE(validate_case_cohort(broken).all_cases_sampled);
      break;
    }
  }
}
