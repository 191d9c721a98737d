#include "crtopt/validate.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "crtopt/errors.hpp"
#include "crtopt/gls.hpp"

namespace crtopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::seed_seq make_seq(std::uint64_t seed, std::uint32_t stream) {
  return std::seed_seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                       stream};
}

}  // namespace

long long count_multisets(int units, int cap, int m, long long limit) {
  if (units < 0 || cap < 0 || m < 0) throw InvalidInput("negative multiset parameters");
  const long long sat = limit + 1;
  // ways[s]: multisets of size s over the units seen so far
  std::vector<long long> ways(static_cast<size_t>(m) + 1, 0);
  ways[0] = 1;
  for (int j = 0; j < units; ++j) {
    std::vector<long long> next(ways.size(), 0);
    for (int s = 0; s <= m; ++s) {
      long long acc = 0;
      for (int c = 0; c <= cap && c <= s; ++c) acc = std::min(sat, acc + ways[static_cast<size_t>(s - c)]);
      next[static_cast<size_t>(s)] = acc;
    }
    ways = std::move(next);
  }
  return ways[static_cast<size_t>(m)];
}

BruteForceResult brute_force_optimum(const Objective& objective, int m, long long limit) {
  const DesignSpace& space = objective.space();
  if (m < 1 || m > space.capacity()) throw InvalidInput("m is outside [1, capacity]");
  const long long count = count_multisets(space.size(), space.max_replication(), m, limit);
  if (count > limit)
    throw InvalidInput("enumeration would visit more than " + std::to_string(limit) + " multisets");

  BruteForceResult best;
  best.criterion = kInf;
  std::vector<int> mult(static_cast<size_t>(space.size()), 0);
  const int J = space.size();
  const int cap = space.max_replication();
  bool found = false;

  // Lexicographic descent: unit j takes the largest multiplicity first.
  auto recurse = [&](auto&& self, int j, int remaining) -> void {
    if (j == J - 1) {
      if (remaining > cap) return;
      mult[static_cast<size_t>(j)] = remaining;
      const double v = objective.evaluate(mult);
      ++best.evaluated;
      if (!found || v < best.criterion) {
        best.criterion = v;
        best.design = Design{mult};
        found = true;
      }
      mult[static_cast<size_t>(j)] = 0;
      return;
    }
    const int left_capacity = (J - 1 - j) * cap;
    for (int c = std::min(cap, remaining); c >= 0 && remaining - c <= left_capacity; --c) {
      mult[static_cast<size_t>(j)] = c;
      self(self, j + 1, remaining - c);
    }
    mult[static_cast<size_t>(j)] = 0;
  };
  recurse(recurse, 0, m);
  return best;
}

MonteCarloSummary monte_carlo_variance(const DesignSpace& space, const Design& design, const CovarianceSpec& cov,
                                       const ModelSpec& model, const Eigen::VectorXd& true_beta,
                                       const MonteCarloOptions& options) {
  if (model.family != Family::gaussian_identity)
    throw InvalidInput("Monte Carlo validation needs the gaussian-identity family");
  if (options.n_sims < 1000) throw InvalidInput("n_sims must be >= 1000");
  if (options.block_size < 1) throw InvalidInput("block_size must be >= 1");
  validate_design(space, design);
  const int P = space.periods() + 1;
  if (true_beta.size() != P) throw InvalidDimension("true beta must have length T+1");

  const Eigen::MatrixXd X = build_x(space, design);
  const Eigen::MatrixXd Z = build_z(space, design, cov);
  const Eigen::MatrixXd D = build_d(space, design, cov);
  const Eigen::MatrixXd sigma = build_sigma(space, design, cov, model);
  const Eigen::MatrixXd M = information_matrix(X, sigma);
  const Eigen::VectorXd c = treatment_contrast(space.periods());

  MonteCarloSummary out;
  out.n_sims = options.n_sims;
  out.seed = options.seed;
  out.model_variance = c_optimality(M, c);
  if (!std::isfinite(out.model_variance)) throw Infeasible("the treatment effect is not estimable in this design");

  // GLS estimate of delta is a'y with a = Sigma^-1 X M^-1 c.
  const Eigen::VectorXd a = Eigen::LLT<Eigen::MatrixXd>(sigma).solve(X * M.ldlt().solve(c));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  const Eigen::MatrixXd d_root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd L = Z * d_root;
  const Eigen::VectorXd mean = X * true_beta;
  const double sd = std::sqrt(cov.sigma2);

  std::vector<double> estimates(static_cast<size_t>(options.n_sims));
  const int blocks = (options.n_sims + options.block_size - 1) / options.block_size;
  auto run_block = [&](int b) {
    std::seed_seq seq = make_seq(options.seed, static_cast<std::uint32_t>(b));
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Eigen::VectorXd u(L.cols()), e(X.rows());
    const int lo = b * options.block_size;
    const int hi = std::min(options.n_sims, lo + options.block_size);
    for (int s = lo; s < hi; ++s) {
      for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = sd * normal(rng);
      const Eigen::VectorXd y = mean + L * u + e;
      estimates[static_cast<size_t>(s)] = a.dot(y);
    }
  };
  const int workers = std::clamp(options.workers, 1, blocks);
  if (workers == 1) {
    for (int b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
      threads.emplace_back([&, w] {
        for (int b = w; b < blocks; b += workers) run_block(b);
      });
    for (auto& t : threads) t.join();
  }

  double sum = 0.0;
  for (double v : estimates) sum += v;
  out.estimate_mean = sum / options.n_sims;
  double ss = 0.0;
  for (double v : estimates) ss += (v - out.estimate_mean) * (v - out.estimate_mean);
  out.empirical_variance = ss / (options.n_sims - 1);
  out.standard_error = out.empirical_variance * std::sqrt(2.0 / (options.n_sims - 1));
  out.z_score = (out.empirical_variance - out.model_variance) / out.standard_error;
  return out;
}

void write_monte_carlo_csv(std::ostream& out, const std::vector<MonteCarloSummary>& rows) {
  out << "n_sims,seed,estimate_mean,empirical_variance,model_variance,standard_error,z_score\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : rows)
    out << r.n_sims << ',' << r.seed << ',' << r.estimate_mean << ',' << r.empirical_variance << ','
        << r.model_variance << ',' << r.standard_error << ',' << r.z_score << '\n';
  out.precision(old_precision);
}

SupermodularityReport supermodularity_probe(const DesignSpace& space, const SetFunction& f, int n_triples,
                                            std::uint64_t seed, double slack) {
  if (n_triples < 1) throw InvalidInput("n_triples must be >= 1");
  if (space.capacity() < 2) throw InvalidInput("space is too small to hold a nested triple");
  std::seed_seq seq = make_seq(seed, 0);
  std::mt19937_64 rng(seq);
  const int J = space.size();
  const int cap = space.max_replication();

  std::vector<int> pool;
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < cap; ++c) pool.push_back(j);

  SupermodularityReport report;
  for (int t = 0; t < n_triples; ++t) {
    bool drawn = false;
    for (int attempt = 0; attempt < 1000 && !drawn; ++attempt) {
      std::uniform_int_distribution<long long> size_dist(1, space.capacity() - 1);
      const auto s = static_cast<size_t>(size_dist(rng));
      for (size_t i = 0; i < s; ++i) {
        std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      Design larger{std::vector<int>(static_cast<size_t>(J), 0)};
      Design smaller{std::vector<int>(static_cast<size_t>(J), 0)};
      std::bernoulli_distribution keep(0.5);
      for (size_t i = 0; i < s; ++i) {
        ++larger.multiplicity[static_cast<size_t>(pool[i])];
        if (keep(rng)) ++smaller.multiplicity[static_cast<size_t>(pool[i])];
      }
      std::vector<int> headroom;
      for (int j = 0; j < J; ++j)
        if (larger.multiplicity[static_cast<size_t>(j)] < cap) headroom.push_back(j);
      std::uniform_int_distribution<size_t> pick_e(0, headroom.size() - 1);
      const int e = headroom[pick_e(rng)];

      const double f_small = f(smaller);
      if (!std::isfinite(f_small)) {
        ++report.redraws;
        continue;
      }
      drawn = true;
      const double f_large = f(larger);
      Design larger_e = larger, smaller_e = smaller;
      ++larger_e.multiplicity[static_cast<size_t>(e)];
      ++smaller_e.multiplicity[static_cast<size_t>(e)];
      SupermodularityWitness w{larger, smaller, e, f(larger_e) - f_large, f(smaller_e) - f_small, f_large, f_small};
      ++report.triples;
      const bool super_ok = w.gain_larger >= w.gain_smaller - slack;
      const bool mono_ok = f_small >= f_large - slack;
      if (!super_ok) ++report.supermodular_violations;
      if (!mono_ok) ++report.monotone_violations;
      if (!super_ok || !mono_ok) report.witnesses.push_back(std::move(w));
    }
  }
  return report;
}

}  // namespace crtopt
