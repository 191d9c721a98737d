#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "crtopt/errors.hpp"
#include "crtopt/gls.hpp"
#include "crtopt/objective.hpp"
#include "oracle.hpp"

using namespace crtopt;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

DesignSpace two_sample_space(int n) {
  return DesignSpace(1, {{0, {{1, 0, n}}}, {1, {{1, 1, n}}}}, 1);
}

double direct_criterion(const DesignSpace& space, const Design& d, const CovarianceSpec& cov,
                        const ModelSpec& model) {
  const auto X = build_x(space, d);
  const auto S = build_sigma(space, d, cov, model);
  return c_optimality(information_matrix(X, S), treatment_contrast(space.periods()));
}

}  // namespace

TEST_CASE("covariance entries") {
  const auto exc2 = CovarianceSpec::exc2(0.16, 0.04);
  CHECK(exc2.entry(0, 0) == doctest::Approx(0.20));
  CHECK(exc2.entry(3, 0) == doctest::Approx(0.16));
  CHECK(CovarianceSpec::ar1(0.2, 0.8).entry(2, 0) == doctest::Approx(0.128).epsilon(1e-14));
  for (auto cov : {CovarianceSpec::exc1(0.1), exc2, CovarianceSpec::ar1(0.2, 0.8)}) CHECK(cov.entry(0, 1) == 0.0);
}

TEST_CASE("covariance validation") {
  CHECK_THROWS_AS(CovarianceSpec::exc1(-0.1).validate(), InvalidInput);
  CHECK_THROWS_AS(CovarianceSpec::exc2(0.1, -0.1).validate(), InvalidInput);
  CHECK_THROWS_AS(CovarianceSpec::ar1(0.1, 0.0).validate(), InvalidInput);
  CHECK_THROWS_AS(CovarianceSpec::ar1(0.1, 1.1).validate(), InvalidInput);
  CHECK_THROWS_AS(CovarianceSpec::exc1(0.1, 0.0).validate(), InvalidInput);
  CHECK_NOTHROW(CovarianceSpec::ar1(0.1, 1.0).validate());
}

TEST_CASE("ICC and CAC round trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 0.95);
  for (int i = 0; i < 200; ++i) {
    const double icc = u(rng), cac = u(rng), s2 = 0.1 + 3 * u(rng);
    const auto e2 = CovarianceSpec::exc2_from_icc_cac(icc, cac, s2);
    CHECK(std::abs(e2.icc() - icc) <= 1e-12);
    CHECK(std::abs(e2.cac() - cac) <= 1e-12);
    CHECK(std::abs(CovarianceSpec::exc1_from_icc(icc, s2).icc() - icc) <= 1e-12);
    CHECK(std::abs(CovarianceSpec::ar1_from_icc(icc, cac, s2).icc() - icc) <= 1e-12);
  }
}

TEST_CASE("iterated weights") {
  ModelSpec g = ModelSpec::gaussian(1);
  CHECK(iterated_weight(g, 1.0, 0.3, 0.0) == 1.0);
  CHECK(iterated_weight(g, 2.0, 0.3, 0.0) == 0.5);
  ModelSpec b;
  b.family = Family::binomial_logit;
  CHECK(iterated_weight(b, 1.0, 0.0, 0.0) == doctest::Approx(0.25));
  ModelSpec p;
  p.family = Family::poisson_log;
  CHECK(iterated_weight(p, 1.0, std::log(2.0), 0.0) == doctest::Approx(2.0));
  CHECK(attenuation_constant() == doctest::Approx(16 * std::sqrt(3.0) / (15 * M_PI)));
  // attenuation shrinks the predictor toward zero, raising the binomial weight
  b.attenuate = true;
  CHECK(iterated_weight(b, 1.0, 2.0, 1.0) > iterated_weight(ModelSpec{Family::binomial_logit, {}, false}, 1.0, 2.0, 1.0));
  CHECK_THROWS_AS(iterated_weight(p, 1.0, kInf, 0.0), NumericError);
}

TEST_CASE("weight diagonal at the marginal mean") {
  const DesignSpace space(2, {{0, {{1, 0, 1}, {2, 1, 1}}}}, 1);
  const Design d{{1}};
  ModelSpec b;
  b.family = Family::binomial_logit;
  b.beta = Eigen::Vector3d(0.0, 0.0, 0.0);
  const auto cov = CovarianceSpec::exc1(0.1);
  const auto w = glm_weight_diagonal(b, 1.0, build_x(space, d), build_z(space, d, cov), build_d(space, d, cov));
  CHECK(w(0) == doctest::Approx(0.25));
  CHECK(w(1) == doctest::Approx(0.25));
  const auto S = build_sigma(space, d, cov, b);
  CHECK(S(0, 0) == doctest::Approx(4.1));
  CHECK(S(0, 1) == doctest::Approx(0.1));
}

TEST_CASE("sigma assembly") {
  SUBCASE("EXC1 single cluster") {
    const DesignSpace space(1, {{0, {{1, 0, 2}}}}, 1);
    const auto S = build_sigma(space, Design{{1}}, CovarianceSpec::exc1(0.1), ModelSpec::gaussian(1));
    CHECK(S(0, 0) == doctest::Approx(1.1));
    CHECK(S(0, 1) == doctest::Approx(0.1));
    CHECK(S(1, 1) == doctest::Approx(1.1));
  }
  SUBCASE("clusters are uncorrelated") {
    const auto space = build_standard_space(3, SpaceStyle::no_reversibility, 2, {Granularity::sequence, 2});
    for (auto cov : {CovarianceSpec::exc1(0.2), CovarianceSpec::exc2(0.1, 0.1), CovarianceSpec::ar1(0.3, 0.5)}) {
      const auto S = build_sigma(space, Design{{1, 0, 1, 0}}, cov, ModelSpec::gaussian(3));
      CHECK(S.topRightCorner(6, 6).isZero());
      CHECK(S.bottomLeftCorner(6, 6).isZero());
    }
  }
  SUBCASE("EXC2 across periods") {
    const DesignSpace space(2, {{0, {{1, 0, 1}, {2, 1, 1}}}}, 1);
    const auto S = build_sigma(space, Design{{1}}, CovarianceSpec::exc2(0.16, 0.04), ModelSpec::gaussian(2));
    CHECK(S(0, 1) == doctest::Approx(0.16));
    CHECK(S(0, 0) == doctest::Approx(1.2));
  }
}

TEST_CASE("information matrix") {
  const Eigen::MatrixXd X = Eigen::VectorXd::Ones(5);
  CHECK(information_matrix(X, Eigen::MatrixXd::Identity(5, 5))(0, 0) == doctest::Approx(5.0));
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 5);
  CHECK_THROWS_AS(information_matrix(X, bad), NumericError);

  // block additivity
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  Eigen::MatrixXd X2(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) X2(i, j) = z(rng);
  Eigen::MatrixXd A(3, 3), B(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = z(rng), B(i, j) = z(rng);
  A = A * A.transpose() + Eigen::MatrixXd::Identity(3, 3);
  B = B * B.transpose() + Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(6, 6);
  S.topLeftCorner(3, 3) = A;
  S.bottomRightCorner(3, 3) = B;
  const Eigen::MatrixXd whole = information_matrix(X2, S);
  const Eigen::MatrixXd parts = information_matrix(X2.topRows(3), A) + information_matrix(X2.bottomRows(3), B);
  CHECK((whole - parts).norm() <= 1e-10 * whole.norm());
}

TEST_CASE("two-sample variance") {
  const auto space = two_sample_space(10);
  const auto obj = Objective::c_optimal(space, CovarianceSpec::exc1(0.0), ModelSpec::gaussian(1));
  CHECK(obj.evaluate(std::vector<int>{1, 1}) == doctest::Approx(0.2).epsilon(1e-13));
  CHECK(direct_criterion(space, Design{{1, 1}}, CovarianceSpec::exc1(0.0), ModelSpec::gaussian(1)) ==
        doctest::Approx(0.2).epsilon(1e-13));
  CHECK(obj.evaluate(std::vector<int>{1, 0}) == kInf);
  CHECK(obj.evaluate(std::vector<int>{0, 1}) == kInf);
}

TEST_CASE("c-optimality edge cases") {
  Eigen::Matrix2d M;
  M << 2, 2, 2, 2;
  CHECK(c_optimality(M, Eigen::Vector2d(0, 1)) == kInf);
  CHECK(c_optimality(Eigen::Matrix2d::Identity() * 4, Eigen::Vector2d(0, 1)) == doctest::Approx(0.25));
  // empty parameter rows are dropped
  Eigen::Matrix3d E = Eigen::Matrix3d::Zero();
  E(0, 0) = 2;
  E(2, 2) = 5;
  CHECK(c_optimality(E, Eigen::Vector3d(0, 0, 1)) == doctest::Approx(0.2));
  CHECK(c_optimality(E, Eigen::Vector3d(0, 1, 0)) == kInf);
  const auto diag = diagnose_information(E);
  CHECK(diag.dropped == 1);
  CHECK(diag.rank == 2);
}

TEST_CASE("scaling the covariance scales the criterion") {
  const auto space = build_standard_space(4, SpaceStyle::no_reversibility, 2, {Granularity::sequence, 3});
  const auto cov = CovarianceSpec::exc2(0.05, 0.02, 1.0);
  const double k = 3.7;
  const auto scaled = CovarianceSpec::exc2(0.05 * k, 0.02 * k, k);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 10; ++i) {
    const auto mult = oracle::random_design(space, 4, rng);
    const double a = Objective::c_optimal(space, cov, ModelSpec::gaussian(4)).evaluate(mult);
    const double b = Objective::c_optimal(space, scaled, ModelSpec::gaussian(4)).evaluate(mult);
    if (std::isinf(a))
      CHECK(std::isinf(b));
    else
      CHECK(rel(b, k * a) <= 1e-10);
  }
}

TEST_CASE("aggregation") {
  SUBCASE("residual variance of the cell mean") {
    const DesignSpace space(1, {{0, {{1, 0, 10}}}}, 1);
    const auto agg = aggregate_cluster_periods(space, Design{{1}}, CovarianceSpec::exc2(0.1, 0.04, 1.0),
                                               ModelSpec::gaussian(1));
    REQUIRE(agg.sigma.rows() == 1);
    CHECK(agg.sigma(0, 0) - 0.1 == doctest::Approx(0.14));
  }
  SUBCASE("one observation per cell reproduces the individual model") {
    const auto space = build_standard_space(4, SpaceStyle::no_reversibility, 2);
    const Design d{{1, 1, 0, 2, 1}};
    const auto cov = CovarianceSpec::ar1(0.2, 0.6);
    const auto agg = aggregate_cluster_periods(space, d, cov, ModelSpec::gaussian(4));
    CHECK((agg.sigma - build_sigma(space, d, cov, ModelSpec::gaussian(4))).norm() <= 1e-14);
    CHECK(agg.X == build_x(space, d));
  }
  SUBCASE("empty design") {
    const auto space = build_standard_space(3, SpaceStyle::no_reversibility, 1);
    CHECK_THROWS_AS(aggregate_cluster_periods(space, Design{{0, 0, 0, 0}}, CovarianceSpec::exc1(0.1),
                                              ModelSpec::gaussian(3)),
                    InvalidInput);
  }
}

TEST_CASE("aggregated criterion equals the observation-level GLS oracle") {
  std::mt19937_64 rng(20240601);
  const CovarianceSpec covs[] = {CovarianceSpec::exc1(0.08), CovarianceSpec::exc2(0.05, 0.03, 1.3),
                                 CovarianceSpec::ar1(0.2, 0.8)};
  int compared = 0;
  for (const auto& cov : covs) {
    for (int trial = 0; trial < 50; ++trial) {
      const int T = 2 + trial % 4;
      const int n = 1 + trial % 3;
      const auto style = trial % 2 ? SpaceStyle::reversible : SpaceStyle::no_reversibility;
      const auto space = build_standard_space(T, style, 3, {Granularity::sequence, n});
      const auto mult = oracle::random_design(space, 1 + trial % 6, rng);
      const double expect = oracle::gaussian_variance(space, mult, cov);
      const double got = Objective::c_optimal(space, cov, ModelSpec::gaussian(T)).evaluate(mult);
      if (std::isinf(expect)) {
        CHECK(std::isinf(got));
      } else {
        CHECK(rel(got, expect) <= 1e-10);
        ++compared;
      }
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("grouped granularities match the oracle") {
  std::mt19937_64 rng(77);
  for (auto gran : {Granularity::cluster_period, Granularity::observation}) {
    const auto space = build_standard_space(4, SpaceStyle::no_reversibility, 4, {gran, 3});
    for (auto cov : {CovarianceSpec::exc2(0.1, 0.05), CovarianceSpec::ar1(0.1, 0.7)}) {
      for (int trial = 0; trial < 20; ++trial) {
        const auto mult = oracle::random_design(space, 12, rng);
        const double expect = oracle::gaussian_variance(space, mult, cov);
        const double got = Objective::c_optimal(space, cov, ModelSpec::gaussian(4)).evaluate(mult);
        if (std::isinf(expect))
          CHECK(std::isinf(got));
        else
          CHECK(rel(got, expect) <= 1e-10);
      }
    }
  }
}

TEST_CASE("non-gaussian criterion matches the oracle with per-cell weights") {
  std::mt19937_64 rng(5);
  const int T = 4;
  const auto space = build_standard_space(T, SpaceStyle::no_reversibility, 2, {Granularity::sequence, 3});
  Eigen::VectorXd beta(T + 1);
  beta << -1.0, -0.8, -1.2, -0.6, -0.7;
  const auto cov = CovarianceSpec::exc2(0.16, 0.04);
  for (auto family : {Family::binomial_logit, Family::poisson_log}) {
    ModelSpec model{family, beta, false};
    auto residual = [&](int period, int treated) {
      const double eta = beta(period) + treated * beta(T);
      if (family == Family::poisson_log) return 1.0 / std::exp(eta);
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      return 1.0 / (mu * (1.0 - mu));
    };
    for (int trial = 0; trial < 20; ++trial) {
      const auto mult = oracle::random_design(space, 5, rng);
      const double expect = oracle::gls_variance(oracle::observations(space, mult), T, cov, residual);
      const double got = Objective::c_optimal(space, cov, model).evaluate(mult);
      const double dense = direct_criterion(space, Design{mult}, cov, model);
      if (std::isinf(expect)) {
        CHECK(std::isinf(got));
      } else {
        CHECK(rel(got, expect) <= 1e-10);
        CHECK(rel(dense, expect) <= 1e-10);
      }
    }
  }
}

TEST_CASE("adding a unit never increases the criterion") {
  std::mt19937_64 rng(8);
  const auto space = build_standard_space(5, SpaceStyle::reversible, 3, {Granularity::sequence, 2});
  const auto obj = Objective::c_optimal(space, CovarianceSpec::ar1(0.1, 0.7), ModelSpec::gaussian(5));
  for (int trial = 0; trial < 100; ++trial) {
    auto mult = oracle::random_design(space, 1 + trial % 6, rng);
    const double before = obj.evaluate(mult);
    std::vector<int> open;
    for (int j = 0; j < space.size(); ++j)
      if (mult[static_cast<size_t>(j)] < space.max_replication()) open.push_back(j);
    ++mult[static_cast<size_t>(open[static_cast<size_t>(trial) % open.size()])];
    CHECK(obj.evaluate(mult) <= before * (1 + 1e-12));
  }
}

TEST_CASE("objective state agrees with full evaluation") {
  std::mt19937_64 rng(13);
  for (auto gran : {Granularity::sequence, Granularity::cluster_period}) {
    const auto space = build_standard_space(4, SpaceStyle::no_reversibility, 3, {gran, 2});
    const auto obj = Objective::c_optimal(space, CovarianceSpec::exc2(0.1, 0.05), ModelSpec::gaussian(4));
    auto state = obj.start(oracle::random_design(space, 8, rng));
    std::uniform_int_distribution<int> pick(0, space.size() - 1);
    for (int step = 0; step < 100; ++step) {
      int remove = pick(rng), add = pick(rng);
      if (state.multiplicity[static_cast<size_t>(remove)] == 0) continue;
      if (add != remove && state.multiplicity[static_cast<size_t>(add)] == space.max_replication()) continue;
      const double predicted = obj.value_after(state, remove, add);
      obj.apply(state, remove, add);
      const double full = obj.evaluate(state.multiplicity);
      if (std::isinf(full))
        CHECK(std::isinf(predicted));
      else
        CHECK(rel(predicted, full) <= 1e-9);
      CHECK(state.value == predicted);
    }
  }
}
