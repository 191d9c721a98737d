#pragma once

#include <string>
#include <vector>

#include "crtopt/objective.hpp"

namespace crtopt {

// Largest-remainder rounding: floor(m*phi_j), then one more to the largest
// remainders (lower index first on ties) until the total is m.
std::vector<int> hamilton_round(const std::vector<double>& weights, int total);

// Divisor rounding with ceilings over the units with positive weight, so every such
// unit receives at least one. Throws Infeasible if m is below the positive count.
std::vector<int> adams_round(const std::vector<double>& weights, int total);

// floor(m*phi_j) capped at the replication limit, then the remaining units one at a
// time to whichever unit lowers the criterion most.
std::vector<int> floor_greedy_round(const Objective& objective, const std::vector<double>& weights, int total);

struct RoundingCandidate {
  std::string scheme;
  std::vector<int> allocation;
  double criterion = 0.0;  // +inf when infeasible or over the replication cap
};

struct RoundingResult {
  Design design;
  double criterion = 0.0;
  std::string scheme;
  std::vector<RoundingCandidate> candidates;
};

// Rounds with every scheme and keeps the smallest criterion (first scheme on ties).
// Allocations above the space's replication cap count as infeasible. Throws
// Infeasible when no candidate has a finite criterion.
RoundingResult best_rounding(const Objective& objective, const std::vector<double>& weights, int total);

}  // namespace crtopt
