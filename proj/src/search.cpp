#include "crtopt/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "crtopt/errors.hpp"

namespace crtopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool improves(double candidate, double current, double tolerance) {
  if (!std::isfinite(candidate)) return false;
  if (!std::isfinite(current)) return true;
  return candidate < current - tolerance * std::abs(current);
}

void check_size(const DesignSpace& space, int m) {
  if (m < 1 || m > space.capacity())
    throw InvalidInput("m = " + std::to_string(m) + " must lie in [1, " + std::to_string(space.capacity()) + "]");
}

std::vector<int> random_start(const DesignSpace& space, int m, std::mt19937_64& rng) {
  std::vector<int> pool;
  pool.reserve(static_cast<size_t>(space.capacity()));
  for (int j = 0; j < space.size(); ++j)
    for (int c = 0; c < space.max_replication(); ++c) pool.push_back(j);
  // partial Fisher-Yates: only the first m slots matter
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[pick(rng)]);
  }
  std::vector<int> mult(static_cast<size_t>(space.size()), 0);
  for (int i = 0; i < m; ++i) ++mult[static_cast<size_t>(pool[static_cast<size_t>(i)])];
  return mult;
}

struct RestartOutcome {
  bool feasible = false;
  std::vector<int> multiplicity;
  double value = kInf;
  int swaps = 0;
};

RestartOutcome run_restart(const Objective& objective, int m, const SearchOptions& options, int restart) {
  const DesignSpace& space = objective.space();
  std::seed_seq seq{static_cast<std::uint32_t>(options.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(options.seed >> 32), static_cast<std::uint32_t>(restart)};
  std::mt19937_64 rng(seq);

  RestartOutcome out;
  Objective::State state;
  for (int attempt = 0; attempt < options.max_start_attempts; ++attempt) {
    state = objective.start(random_start(space, m, rng));
    if (std::isfinite(state.value)) {
      out.feasible = true;
      break;
    }
  }
  if (!out.feasible) return out;

  const int cap = space.max_replication();
  for (;;) {
    int best_remove = -1, best_add = -1;
    double best_value = kInf;
    for (int r = 0; r < space.size(); ++r) {
      if (state.multiplicity[static_cast<size_t>(r)] == 0) continue;
      for (int a = 0; a < space.size(); ++a) {
        if (a == r || state.multiplicity[static_cast<size_t>(a)] >= cap) continue;
        const double v = objective.value_after(state, r, a);
        if (v < best_value) {
          best_value = v;
          best_remove = r;
          best_add = a;
        }
      }
    }
    if (best_remove < 0 || !improves(best_value, state.value, kImprovementTolerance)) break;
    objective.apply(state, best_remove, best_add);
    ++out.swaps;
  }
  out.multiplicity = state.multiplicity;
  out.value = state.value;
  return out;
}

}  // namespace

SearchResult local_search(const Objective& objective, int m, const SearchOptions& options) {
  const DesignSpace& space = objective.space();
  check_size(space, m);
  if (options.restarts < 1) throw InvalidInput("restarts must be >= 1");
  if (options.max_start_attempts < 1) throw InvalidInput("max_start_attempts must be >= 1");

  std::vector<RestartOutcome> outcomes(static_cast<size_t>(options.restarts));
  const int workers = std::clamp(options.workers, 1, options.restarts);
  std::mutex progress_mutex;
  int finished = 0;
  double best_so_far = kInf;

  auto worker = [&](int w) {
    for (int r = w; r < options.restarts; r += workers) {
      outcomes[static_cast<size_t>(r)] = run_restart(objective, m, options, r);
      if (options.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        ++finished;
        best_so_far = std::min(best_so_far, outcomes[static_cast<size_t>(r)].value);
        options.progress(finished, best_so_far);
      }
    }
  };

  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker, w);
    for (auto& t : threads) t.join();
  }

  SearchResult result;
  result.criterion = kInf;
  for (int r = 0; r < options.restarts; ++r) {
    const auto& o = outcomes[static_cast<size_t>(r)];
    if (o.feasible && (result.winning_restart < 0 || o.value < result.criterion)) {
      result.design = Design{o.multiplicity};
      result.criterion = o.value;
      result.swaps = o.swaps;
      result.winning_restart = r;
    }
  }
  if (result.winning_restart < 0)
    throw Infeasible("no random start with a finite criterion after " + std::to_string(options.max_start_attempts) +
                     " attempts per restart");
  return result;
}

SearchResult reverse_greedy(const Objective& objective, int m) {
  const DesignSpace& space = objective.space();
  check_size(space, m);
  Objective::State state =
      objective.start(std::vector<int>(static_cast<size_t>(space.size()), space.max_replication()));
  SearchResult result;
  result.trace.push_back(state.value);
  while (state.size > m) {
    int best = -1;
    double best_value = kInf;
    for (int j = 0; j < space.size(); ++j) {
      if (state.multiplicity[static_cast<size_t>(j)] == 0) continue;
      const double v = objective.value_after(state, j, -1);
      if (best < 0 || v < best_value) {
        best = j;
        best_value = v;
      }
    }
    objective.apply(state, best, -1);
    result.trace.push_back(state.value);
  }
  if (!std::isfinite(state.value))
    throw Infeasible("reverse greedy search ended at a design with infinite criterion");
  result.design = Design{state.multiplicity};
  result.criterion = state.value;
  return result;
}

double swap_delta(const Objective& objective, const Design& design, int remove, int add) {
  const DesignSpace& space = objective.space();
  validate_design(space, design);
  if (remove < 0 || remove >= space.size() || design.multiplicity[static_cast<size_t>(remove)] == 0)
    throw InvalidInput("unit to remove is not in the design");
  if (add < 0 || add >= space.size()) throw InvalidInput("unit to add is outside the space");
  if (remove == add) return 0.0;
  if (design.multiplicity[static_cast<size_t>(add)] >= space.max_replication())
    throw InvalidInput("unit to add is at its replication cap");
  const Objective::State state = objective.start(design.multiplicity);
  const double after = objective.value_after(state, remove, add);
  if (std::isinf(after) && std::isinf(state.value)) return 0.0;
  return after - state.value;
}

bool is_locally_optimal(const Objective& objective, const Design& design, double tolerance) {
  const DesignSpace& space = objective.space();
  validate_design(space, design);
  const double current = objective.evaluate(design);
  std::vector<int> mult = design.multiplicity;
  for (int r = 0; r < space.size(); ++r) {
    if (mult[static_cast<size_t>(r)] == 0) continue;
    for (int a = 0; a < space.size(); ++a) {
      if (a == r || mult[static_cast<size_t>(a)] >= space.max_replication()) continue;
      --mult[static_cast<size_t>(r)];
      ++mult[static_cast<size_t>(a)];
      const double v = objective.evaluate(mult);
      ++mult[static_cast<size_t>(r)];
      --mult[static_cast<size_t>(a)];
      if (improves(v, current, tolerance)) return false;
    }
  }
  return true;
}

}  // namespace crtopt
