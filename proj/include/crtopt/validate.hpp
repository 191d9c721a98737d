#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "crtopt/objective.hpp"

namespace crtopt {

// Number of size-m multisets over J units with at most `cap` copies of each;
// saturates at `limit` + 1 to keep the count cheap for large spaces.
long long count_multisets(int units, int cap, int m, long long limit = 1'000'000);

struct BruteForceResult {
  Design design;
  double criterion = 0.0;
  long long evaluated = 0;
};

// Exact minimiser over every size-m multiset, first in lexicographic order of the
// multiplicity vector on ties. Refuses (InvalidInput naming the count) above `limit`.
BruteForceResult brute_force_optimum(const Objective& objective, int m, long long limit = 1'000'000);

struct MonteCarloSummary {
  int n_sims = 0;
  std::uint64_t seed = 0;
  double estimate_mean = 0.0;
  double empirical_variance = 0.0;
  double model_variance = 0.0;
  // Standard error of the empirical variance under normality, var * sqrt(2/(n-1)).
  double standard_error = 0.0;
  double z_score = 0.0;
};

struct MonteCarloOptions {
  int n_sims = 10'000;
  std::uint64_t seed = 0;
  int workers = 1;
  int block_size = 500;  // simulations per independently seeded block
};

// Simulates y = X beta + Z u + e with u ~ N(0, D), e ~ N(0, sigma2 I), fits GLS with
// the true covariance and returns the spread of the treatment-effect estimates.
// Gaussian identity models only; n_sims >= 1000. Results depend on seed and
// block_size but not on workers.
MonteCarloSummary monte_carlo_variance(const DesignSpace& space, const Design& design, const CovarianceSpec& cov,
                                       const ModelSpec& model, const Eigen::VectorXd& true_beta,
                                       const MonteCarloOptions& options = {});

void write_monte_carlo_csv(std::ostream& out, const std::vector<MonteCarloSummary>& rows);

using SetFunction = std::function<double(const Design&)>;

struct SupermodularityWitness {
  Design larger;   // d
  Design smaller;  // d' within d
  int added = -1;  // E
  double gain_larger = 0.0;   // f(d + E) - f(d)
  double gain_smaller = 0.0;  // f(d' + E) - f(d')
  double f_larger = 0.0;
  double f_smaller = 0.0;
};

struct SupermodularityReport {
  int triples = 0;
  int supermodular_violations = 0;
  int monotone_violations = 0;
  int redraws = 0;  // triples skipped because f(d') was infinite
  std::vector<SupermodularityWitness> witnesses;

  bool passed() const { return supermodular_violations == 0 && monotone_violations == 0; }
};

// Samples nested d' within d and a unit E with headroom in d, then checks
//   f(d + E) - f(d) >= f(d' + E) - f(d') - slack   and   f(d') >= f(d) - slack.
// Triples with infinite f(d') are redrawn (at most 1000 times per triple).
SupermodularityReport supermodularity_probe(const DesignSpace& space, const SetFunction& f, int n_triples,
                                            std::uint64_t seed, double slack = 1e-10);

}  // namespace crtopt
