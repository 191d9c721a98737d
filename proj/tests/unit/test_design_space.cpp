#include <doctest.h>

#include <algorithm>
#include <random>

#include "crtopt/errors.hpp"
#include "crtopt/objective.hpp"
#include "oracle.hpp"

using namespace crtopt;

namespace {

std::vector<int> pattern(const ExperimentalUnit& u) {
  std::vector<int> p;
  for (const auto& c : u.cells) p.push_back(c.treated);
  return p;
}

DesignSpace parallel_pair(int periods, int count) {
  std::vector<ExperimentalUnit> units;
  for (int arm = 0; arm < 2; ++arm) {
    ExperimentalUnit u{arm, {}};
    for (int t = 1; t <= periods; ++t) u.cells.push_back({t, arm, count});
    units.push_back(u);
  }
  return DesignSpace(periods, units, 1);
}

}  // namespace

TEST_CASE("standard space sizes") {
  const auto six = build_standard_space(6, SpaceStyle::no_reversibility, 5);
  CHECK(six.size() == 7);
  CHECK(six.max_replication() == 5);
  for (const auto& u : six.units()) CHECK(u.cells.size() == 6);

  const auto two = build_standard_space(2, SpaceStyle::no_reversibility, 1);
  REQUIRE(two.size() == 3);
  CHECK(pattern(two.unit(0)) == std::vector<int>{0, 0});
  CHECK(pattern(two.unit(1)) == std::vector<int>{0, 1});
  CHECK(pattern(two.unit(2)) == std::vector<int>{1, 1});

  // count monotone 0/1 strings of length 3 by enumeration
  int monotone = 0;
  for (int bits = 0; bits < 8; ++bits) {
    const int b0 = bits & 1, b1 = (bits >> 1) & 1, b2 = (bits >> 2) & 1;
    if (b0 <= b1 && b1 <= b2) ++monotone;
  }
  CHECK(monotone == 4);
  CHECK(build_standard_space(3, SpaceStyle::no_reversibility, 1).size() == monotone);
}

TEST_CASE("standard space rejects fewer than two periods") {
  CHECK_THROWS_AS(build_standard_space(1, SpaceStyle::no_reversibility, 1), InvalidDimension);
  CHECK_THROWS_AS(build_standard_space(0, SpaceStyle::reversible, 1), InvalidDimension);
}

TEST_CASE("no-reversibility sequences never switch back") {
  for (int T = 2; T <= 8; ++T) {
    const auto space = build_standard_space(T, SpaceStyle::no_reversibility, 1);
    for (const auto& u : space.units()) {
      const auto p = pattern(u);
      CHECK(std::is_sorted(p.begin(), p.end()));
    }
  }
}

TEST_CASE("reversible space adds switch-back sequences") {
  const auto space = build_standard_space(4, SpaceStyle::reversible, 1);
  CHECK(space.size() == 8);
  int reversing = 0;
  for (const auto& u : space.units()) {
    const auto p = pattern(u);
    if (!std::is_sorted(p.begin(), p.end())) ++reversing;
  }
  CHECK(reversing == 3);
}

TEST_CASE("grouped standard spaces have one cell per unit") {
  const auto cp = build_standard_space(4, SpaceStyle::no_reversibility, 3, {Granularity::cluster_period, 5});
  CHECK(cp.size() == 20);
  CHECK(cp.cluster_count() == 5);
  CHECK(cp.unit(7).cells.size() == 1);
  CHECK(cp.unit(7).cells.front().count == 5);
  const auto obs = build_standard_space(4, SpaceStyle::no_reversibility, 10, {Granularity::observation, 5});
  CHECK(obs.unit(0).cells.front().count == 1);
  CHECK(obs.units_in_cluster(2).size() == 4);
}

TEST_CASE("space validation") {
  using U = std::vector<ExperimentalUnit>;
  CHECK_THROWS_AS(DesignSpace(0, U{{0, {{1, 0, 1}}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{3, 0, 1}}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 2, 1}}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 0}}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 1}, {1, 1, 1}}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {}}}, 1), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 1}}}}, 0), InvalidInput);
  // grouped units hold exactly one cell, with a consistent arm per cluster-period
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 1}, {2, 0, 1}}}}, 1, Granularity::cluster_period), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 2}}}}, 1, Granularity::observation), InvalidInput);
  CHECK_THROWS_AS(DesignSpace(2, U{{0, {{1, 0, 1}}}, {0, {{1, 1, 1}}}}, 1, Granularity::observation), InvalidInput);
  CHECK_NOTHROW(DesignSpace(2, U{{0, {{1, 0, 1}}}, {0, {{1, 0, 1}}}}, 1, Granularity::observation));
}

TEST_CASE("design validation") {
  const auto space = build_standard_space(3, SpaceStyle::no_reversibility, 2);
  CHECK_NOTHROW(validate_design(space, Design{{2, 0, 0, 1}}));
  CHECK_THROWS_AS(validate_design(space, Design{{3, 0, 0, 1}}), InvalidInput);
  CHECK_THROWS_AS(validate_design(space, Design{{0, 0, 0, 0}}), InvalidInput);
  CHECK_THROWS_AS(validate_design(space, Design{{1, 0, 0}}), InvalidInput);
  CHECK_THROWS_AS(validate_design(space, Design{{-1, 1, 0, 1}}), InvalidInput);
}

TEST_CASE("fixed-effects matrix") {
  SUBCASE("parallel pair, two periods") {
    const auto space = parallel_pair(2, 1);
    const auto X = build_x(space, Design{{1, 1}});
    REQUIRE(X.rows() == 4);
    REQUIRE(X.cols() == 3);
    CHECK(X.col(2) == Eigen::Vector4d(0, 0, 1, 1));
    CHECK(X.leftCols(2).rowwise().sum() == Eigen::Vector4d::Ones());
  }
  SUBCASE("no treated cells") {
    const auto space = parallel_pair(3, 2);
    const auto X = build_x(space, Design{{1, 0}});
    CHECK(X.col(3).isZero());
  }
  SUBCASE("stepped sequence with two observations per cell") {
    const DesignSpace space(2, {{0, {{1, 0, 2}, {2, 1, 2}}}}, 1);
    const auto X = build_x(space, Design{{1}});
    CHECK(X.col(2) == Eigen::Vector4d(0, 0, 1, 1));
    CHECK(X.col(0) == Eigen::Vector4d(1, 1, 0, 0));
  }
}

TEST_CASE("random-effects incidence") {
  SUBCASE("EXC1, two clusters, one period") {
    const DesignSpace space(1, {{0, {{1, 0, 1}}}, {1, {{1, 1, 1}}}}, 1);
    const auto Z = build_z(space, Design{{1, 1}}, CovarianceSpec::exc1(0.1));
    CHECK(Z == Eigen::MatrixXd::Identity(2, 2));
  }
  SUBCASE("EXC2, one cluster, two periods") {
    const DesignSpace space(2, {{0, {{1, 0, 1}, {2, 1, 1}}}}, 1);
    const auto Z = build_z(space, Design{{1}}, CovarianceSpec::exc2(0.1, 0.05));
    Eigen::MatrixXd expect(2, 3);
    expect << 1, 1, 0, 1, 0, 1;
    CHECK(Z == expect);
    CHECK(build_d(space, Design{{1}}, CovarianceSpec::exc2(0.1, 0.05)).diagonal() == Eigen::Vector3d(0.1, 0.05, 0.05));
  }
  SUBCASE("AR1, one cluster, three periods, two observations per cell") {
    const DesignSpace space(3, {{0, {{1, 0, 2}, {2, 0, 2}, {3, 1, 2}}}}, 1);
    const auto Z = build_z(space, Design{{1}}, CovarianceSpec::ar1(0.2, 0.8));
    REQUIRE(Z.rows() == 6);
    REQUIRE(Z.cols() == 3);
    for (int i = 0; i < 6; ++i) {
      CHECK(Z.row(i).sum() == 1.0);
      CHECK(Z(i, i / 2) == 1.0);
    }
  }
}

TEST_CASE("row counts follow the cell counts") {
  std::mt19937_64 rng(11);
  const auto space = build_standard_space(5, SpaceStyle::reversible, 3, {Granularity::sequence, 4});
  for (int trial = 0; trial < 20; ++trial) {
    const auto mult = oracle::random_design(space, 1 + trial % 8, rng);
    const Design d{mult};
    long expected = 0;
    for (int j = 0; j < space.size(); ++j)
      for (const auto& c : space.unit(j).cells) expected += static_cast<long>(c.count) * mult[static_cast<size_t>(j)];
    for (auto cov : {CovarianceSpec::exc1(0.1), CovarianceSpec::exc2(0.1, 0.05), CovarianceSpec::ar1(0.1, 0.5)}) {
      const auto Z = build_z(space, d, cov);
      CHECK(Z.rows() == expected);
      const double ones_per_row = cov.kind == CovKind::exc2 ? 2.0 : 1.0;
      CHECK((Z.rowwise().sum().array() == ones_per_row).all());
    }
    CHECK(build_x(space, d).rows() == expected);
  }
}

TEST_CASE("permuting the units permutes designs without changing values") {
  const auto space = build_standard_space(4, SpaceStyle::reversible, 2, {Granularity::sequence, 3});
  std::vector<int> perm(static_cast<size_t>(space.size()));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(perm.size() - 1 - i);
  const auto shuffled = space.subset(perm);
  const auto cov = CovarianceSpec::exc2(0.05, 0.02);
  const auto a = Objective::c_optimal(space, cov, ModelSpec::gaussian(4));
  const auto b = Objective::c_optimal(shuffled, cov, ModelSpec::gaussian(4));
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mult = oracle::random_design(space, 5, rng);
    std::vector<int> permuted(mult.size());
    for (size_t i = 0; i < perm.size(); ++i) permuted[i] = mult[static_cast<size_t>(perm[i])];
    CHECK(a.evaluate(mult) == doctest::Approx(b.evaluate(permuted)).epsilon(1e-12));
  }
}

TEST_CASE("model spec") {
  CHECK(ModelSpec::gaussian(3).beta.size() == 4);
  ModelSpec m;
  m.family = Family::binomial_logit;
  CHECK_THROWS_AS(m.validate(3), InvalidInput);
  m.beta = Eigen::VectorXd::Zero(4);
  CHECK_NOTHROW(m.validate(3));
  CHECK(parse_family("poisson-log") == Family::poisson_log);
  CHECK(parse_granularity("cluster-period") == Granularity::cluster_period);
  CHECK_THROWS_AS(parse_family("probit"), InvalidInput);
}
