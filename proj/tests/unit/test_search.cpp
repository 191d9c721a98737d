#include <doctest.h>

#include <cmath>
#include <random>

#include "crtopt/errors.hpp"
#include "crtopt/search.hpp"
#include "crtopt/validate.hpp"
#include "oracle.hpp"

using namespace crtopt;

namespace {

Objective exc2_objective(const DesignSpace& space, double icc, double cac) {
  return Objective::c_optimal(space, CovarianceSpec::exc2_from_icc_cac(icc, cac), ModelSpec::gaussian(space.periods()));
}

}  // namespace

TEST_CASE("selecting everything needs no swaps") {
  const auto space = build_standard_space(3, SpaceStyle::no_reversibility, 2, {Granularity::sequence, 3});
  const auto obj = exc2_objective(space, 0.05, 0.5);
  SearchOptions opts;
  opts.restarts = 3;
  const auto r = local_search(obj, static_cast<int>(space.capacity()), opts);
  CHECK(r.design.multiplicity == std::vector<int>{2, 2, 2, 2});
  CHECK(r.swaps == 0);
  const auto g = reverse_greedy(obj, static_cast<int>(space.capacity()));
  CHECK(g.design.multiplicity == std::vector<int>{2, 2, 2, 2});
  CHECK(g.trace.size() == 1);
}

TEST_CASE("two picks near independence give the parallel pair") {
  const auto space = build_standard_space(6, SpaceStyle::no_reversibility, 1, {Granularity::sequence, 10});
  const auto obj = exc2_objective(space, 0.001, 0.5);
  const std::vector<int> parallel{1, 0, 0, 0, 0, 0, 1};
  CHECK(local_search(obj, 2, {}).design.multiplicity == parallel);
  CHECK(brute_force_optimum(obj, 2).design.multiplicity == parallel);
  CHECK(reverse_greedy(obj, 2).design.multiplicity == parallel);
}

TEST_CASE("search is reproducible and independent of worker count") {
  const auto space = build_standard_space(5, SpaceStyle::reversible, 3, {Granularity::sequence, 5});
  const auto obj = exc2_objective(space, 0.1, 0.7);
  SearchOptions opts;
  opts.restarts = 24;
  opts.seed = 42;
  const auto a = local_search(obj, 8, opts);
  const auto b = local_search(obj, 8, opts);
  opts.workers = 4;
  const auto c = local_search(obj, 8, opts);
  CHECK(a.design == b.design);
  CHECK(a.criterion == b.criterion);
  CHECK(a.design == c.design);
  CHECK(a.criterion == c.criterion);
  CHECK(a.winning_restart == c.winning_restart);
}

TEST_CASE("local search output is locally optimal") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto space = build_standard_space(3 + trial % 3, SpaceStyle::reversible, 2, {Granularity::sequence, 4});
    const auto obj = exc2_objective(space, 0.02 + 0.03 * trial, 0.6);
    SearchOptions opts;
    opts.restarts = 5;
    opts.seed = static_cast<std::uint64_t>(trial);
    const auto r = local_search(obj, 3 + trial % 4, opts);
    CHECK(is_locally_optimal(obj, r.design));
    CHECK(r.criterion == doctest::Approx(obj.evaluate(r.design)).epsilon(1e-12));
  }
}

TEST_CASE("reverse greedy trace is non-decreasing and stays finite") {
  const auto space = build_standard_space(5, SpaceStyle::no_reversibility, 2, {Granularity::sequence, 5});
  const auto obj = exc2_objective(space, 0.05, 0.8);
  const auto r = reverse_greedy(obj, 2);
  CHECK(r.trace.size() == static_cast<size_t>(space.capacity() - 2 + 1));
  for (size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] * (1 - 1e-12));
  CHECK(std::isfinite(r.trace.back()));
}

TEST_CASE("swap deltas") {
  const auto space = build_standard_space(4, SpaceStyle::no_reversibility, 3, {Granularity::sequence, 2});
  const auto obj = exc2_objective(space, 0.05, 0.5);
  const Design d{{1, 1, 0, 0, 1}};
  CHECK(swap_delta(obj, d, 1, 1) == 0.0);
  // the only treated-containing units leave, all-control remains
  CHECK(std::isinf(swap_delta(obj, Design{{1, 0, 0, 0, 1}}, 4, 0)));

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, space.size() - 1);
  int checked = 0;
  while (checked < 100) {
    const auto mult = oracle::random_design(space, 6, rng);
    const int remove = pick(rng), add = pick(rng);
    if (mult[static_cast<size_t>(remove)] == 0 || mult[static_cast<size_t>(add)] == space.max_replication()) continue;
    auto after = mult;
    --after[static_cast<size_t>(remove)];
    ++after[static_cast<size_t>(add)];
    const double before = oracle::gaussian_variance(space, mult, CovarianceSpec::exc2_from_icc_cac(0.05, 0.5));
    const double next = oracle::gaussian_variance(space, after, CovarianceSpec::exc2_from_icc_cac(0.05, 0.5));
    if (!std::isfinite(before) || !std::isfinite(next)) continue;
    const double delta = swap_delta(obj, Design{mult}, remove, add);
    CHECK(std::abs(delta - (next - before)) <= 1e-9 * before);
    ++checked;
  }
}

TEST_CASE("input checks") {
  const auto space = build_standard_space(3, SpaceStyle::no_reversibility, 1);
  const auto obj = exc2_objective(space, 0.05, 0.5);
  CHECK_THROWS_AS(local_search(obj, 0, {}), InvalidInput);
  CHECK_THROWS_AS(local_search(obj, 5, {}), InvalidInput);
  CHECK_THROWS_AS(reverse_greedy(obj, 5), InvalidInput);
  // one pick can never identify the treatment effect alongside period effects
  CHECK_THROWS_AS(local_search(obj, 1, {}), Infeasible);
  CHECK_THROWS_AS(reverse_greedy(obj, 1), Infeasible);
}
