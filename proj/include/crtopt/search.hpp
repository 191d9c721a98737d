#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crtopt/objective.hpp"

namespace crtopt {

struct SearchOptions {
  int restarts = 100;
  std::uint64_t seed = 0;
  int workers = 1;
  // Random starts with an infinite criterion are redrawn this many times.
  int max_start_attempts = 1000;
  // Called after each finished restart with (finished restarts, best value so far).
  // May be invoked from worker threads, but never concurrently.
  std::function<void(int, double)> progress;
};

struct SearchResult {
  Design design;
  double criterion = 0.0;
  int swaps = 0;          // accepted swaps in the winning restart
  int winning_restart = -1;
  // reverse_greedy: criterion after each removal, starting with the full design
  std::vector<double> trace;
};

// Swaps below this relative improvement are not taken.
inline constexpr double kImprovementTolerance = 1e-12;

// Best-improvement single-swap local search from `restarts` random size-m starts.
// Each sweep takes the swap with the smallest resulting value, the lowest
// (remove, add) pair on ties, and stops when no swap strictly improves. Restart r
// draws its start from seed_seq{seed, r}, so results do not depend on `workers`.
// Throws Infeasible when no finite start is found, InvalidInput for m outside
// [1, capacity].
SearchResult local_search(const Objective& objective, int m, const SearchOptions& options = {});

// Start from every unit at its replication cap and remove one copy at a time,
// always the one leaving the smallest criterion (lowest index on ties).
// Throws Infeasible if the final design has an infinite criterion.
SearchResult reverse_greedy(const Objective& objective, int m);

// f(d - remove + add) - f(d). Zero when remove == add or both values are infinite.
double swap_delta(const Objective& objective, const Design& design, int remove, int add);

// True when no single swap improves the design by more than the relative tolerance.
// Uses full re-evaluation, independent of the incremental state.
bool is_locally_optimal(const Objective& objective, const Design& design,
                        double tolerance = kImprovementTolerance);

}  // namespace crtopt
