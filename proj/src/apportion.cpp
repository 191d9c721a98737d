#include "crtopt/apportion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crtopt/errors.hpp"

namespace crtopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Remainders closer than this are treated as equal so that ties resolve by index
// rather than by representation error (0.35 * 10 is not exactly 3.5).
constexpr double kTieTolerance = 1e-9;

void check_weights(const std::vector<double>& weights, int total) {
  if (weights.empty()) throw InvalidInput("weights are empty");
  if (total < 1) throw InvalidInput("total must be >= 1");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("weights must be finite and non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidInput("weights must sum to 1");
}

std::vector<int> floors(const std::vector<double>& weights, int total, std::vector<double>* remainders) {
  std::vector<int> out(weights.size());
  if (remainders) remainders->resize(weights.size());
  for (size_t j = 0; j < weights.size(); ++j) {
    const double q = weights[j] * total;
    // a quota within tolerance of an integer is that integer
    double f = std::floor(q + kTieTolerance);
    out[j] = static_cast<int>(f);
    if (remainders) (*remainders)[j] = std::max(0.0, q - f);
  }
  return out;
}

}  // namespace

std::vector<int> hamilton_round(const std::vector<double>& weights, int total) {
  check_weights(weights, total);
  std::vector<double> rem;
  std::vector<int> alloc = floors(weights, total, &rem);
  int assigned = 0;
  for (int a : alloc) assigned += a;
  std::vector<bool> bumped(weights.size(), false);
  while (assigned < total) {
    size_t best = weights.size();
    for (size_t j = 0; j < weights.size(); ++j) {
      if (bumped[j]) continue;
      if (best == weights.size() || rem[j] > rem[best] + kTieTolerance) best = j;
    }
    if (best == weights.size()) {
      // every remainder used (sum slightly below 1); restart the pass
      std::fill(bumped.begin(), bumped.end(), false);
      continue;
    }
    bumped[best] = true;
    ++alloc[best];
    ++assigned;
  }
  while (assigned > total) {
    // weights summing slightly above 1 can overshoot by one; take from the smallest remainder
    size_t worst = weights.size();
    for (size_t j = 0; j < weights.size(); ++j)
      if (alloc[j] > 0 && (worst == weights.size() || rem[j] < rem[worst] - kTieTolerance)) worst = j;
    --alloc[worst];
    --assigned;
  }
  return alloc;
}

std::vector<int> adams_round(const std::vector<double>& weights, int total) {
  check_weights(weights, total);
  std::vector<int> alloc(weights.size(), 0);
  int assigned = 0;
  for (size_t j = 0; j < weights.size(); ++j)
    if (weights[j] > 0.0) {
      alloc[j] = 1;
      ++assigned;
    }
  if (assigned > total)
    throw Infeasible("total " + std::to_string(total) + " is below the " + std::to_string(assigned) +
                     " units with positive weight");
  // Highest averages with divisor a: the seat goes to the largest phi_j / a_j.
  while (assigned < total) {
    size_t best = weights.size();
    double best_ratio = -1.0;
    for (size_t j = 0; j < weights.size(); ++j) {
      if (alloc[j] == 0) continue;
      const double ratio = weights[j] / alloc[j];
      if (ratio > best_ratio * (1.0 + kTieTolerance)) {
        best = j;
        best_ratio = ratio;
      }
    }
    ++alloc[best];
    ++assigned;
  }
  return alloc;
}

std::vector<int> floor_greedy_round(const Objective& objective, const std::vector<double>& weights, int total) {
  check_weights(weights, total);
  const DesignSpace& space = objective.space();
  if (static_cast<int>(weights.size()) != space.size()) throw InvalidInput("weight vector does not match space");
  std::vector<int> alloc = floors(weights, total, nullptr);
  int assigned = 0;
  for (int& a : alloc) {
    a = std::min(a, space.max_replication());
    assigned += a;
  }
  if (assigned > total) return hamilton_round(weights, total);
  while (assigned < total) {
    int best = -1;
    double best_value = kInf;
    for (int j = 0; j < space.size(); ++j) {
      if (alloc[static_cast<size_t>(j)] >= space.max_replication()) continue;
      ++alloc[static_cast<size_t>(j)];
      const double v = objective.evaluate(alloc);
      --alloc[static_cast<size_t>(j)];
      if (best < 0 || v < best_value) {
        best = j;
        best_value = v;
      }
    }
    if (best < 0) break;  // no headroom left; the caller sees a short allocation
    ++alloc[static_cast<size_t>(best)];
    ++assigned;
  }
  return alloc;
}

RoundingResult best_rounding(const Objective& objective, const std::vector<double>& weights, int total) {
  const DesignSpace& space = objective.space();
  if (static_cast<int>(weights.size()) != space.size()) throw InvalidInput("weight vector does not match space");
  check_weights(weights, total);

  RoundingResult out;
  auto consider = [&](std::string scheme, std::vector<int> alloc) {
    RoundingCandidate cand{std::move(scheme), std::move(alloc), kInf};
    int sum = 0;
    bool within_cap = true;
    for (int a : cand.allocation) {
      sum += a;
      if (a > space.max_replication()) within_cap = false;
    }
    if (within_cap && sum == total) cand.criterion = objective.evaluate(cand.allocation);
    out.candidates.push_back(std::move(cand));
  };

  consider("hamilton", hamilton_round(weights, total));
  try {
    consider("adams", adams_round(weights, total));
  } catch (const Infeasible&) {
    out.candidates.push_back({"adams", {}, kInf});
  }
  consider("floor-greedy", floor_greedy_round(objective, weights, total));

  const RoundingCandidate* best = nullptr;
  for (const auto& c : out.candidates)
    if (std::isfinite(c.criterion) && (!best || c.criterion < best->criterion)) best = &c;
  if (!best) throw Infeasible("every rounding of the weights is infeasible");
  out.design = Design{best->allocation};
  out.criterion = best->criterion;
  out.scheme = best->scheme;
  return out;
}

}  // namespace crtopt
