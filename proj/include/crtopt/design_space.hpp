#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "crtopt/covariance.hpp"

namespace crtopt {

// What a single selectable experimental unit represents.
//   sequence:        a whole cluster sequence; each selected copy is a fresh cluster
//   cluster_period:  one (cluster, period) cell; copies add observations to that cell
//   observation:     one observation in a (cluster, period) cell; same copy semantics
enum class Granularity { sequence, cluster_period, observation };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view name);

// One cluster-period worth of observations. `period` is 1-based.
struct Cell {
  int period = 1;
  int treated = 0;
  int count = 1;
};

struct ExperimentalUnit {
  int cluster_id = 0;
  std::vector<Cell> cells;
};

class DesignSpace {
 public:
  DesignSpace(int periods, std::vector<ExperimentalUnit> units, int max_replication,
              Granularity granularity = Granularity::sequence);

  int periods() const { return periods_; }
  int size() const { return static_cast<int>(units_.size()); }
  int max_replication() const { return max_replication_; }
  Granularity granularity() const { return granularity_; }
  const std::vector<ExperimentalUnit>& units() const { return units_; }
  const ExperimentalUnit& unit(int j) const { return units_[static_cast<size_t>(j)]; }

  // Units never share random effects across selections (only for sequence granularity).
  bool units_uncorrelated() const { return granularity_ == Granularity::sequence; }

  // Cluster grouping used by cluster-period and observation granularities.
  int cluster_count() const { return static_cast<int>(cluster_units_.size()); }
  int cluster_of(int unit) const { return unit_cluster_[static_cast<size_t>(unit)]; }
  const std::vector<int>& units_in_cluster(int cluster) const {
    return cluster_units_[static_cast<size_t>(cluster)];
  }

  // Total selectable multiplicity, size() * max_replication().
  long long capacity() const { return static_cast<long long>(size()) * max_replication_; }

  // Space restricted to the listed units, in the given order.
  DesignSpace subset(const std::vector<int>& unit_indices) const;

 private:
  void validate() const;
  void index_clusters();

  int periods_;
  std::vector<ExperimentalUnit> units_;
  int max_replication_;
  Granularity granularity_;
  std::vector<int> unit_cluster_;
  std::vector<std::vector<int>> cluster_units_;
};

// A multiset of units given as one multiplicity per unit of the space.
struct Design {
  std::vector<int> multiplicity;

  int total() const;
  bool operator==(const Design&) const = default;
};

// Throws InvalidInput if the design does not fit the space.
void validate_design(const DesignSpace& space, const Design& design);

enum class Family { gaussian_identity, binomial_logit, poisson_log };

std::string_view to_string(Family f);
Family parse_family(std::string_view name);

// Fixed effects are ordered [gamma_1 .. gamma_T, delta] on the linear predictor scale.
struct ModelSpec {
  Family family = Family::gaussian_identity;
  Eigen::VectorXd beta;
  bool attenuate = false;

  static ModelSpec gaussian(int periods);
  void validate(int periods) const;
  // Gaussian models may leave beta empty; it does not enter their weights.
  ModelSpec with_default_beta(int periods) const;
};

enum class SpaceStyle { no_reversibility, reversible };

struct StandardSpaceOptions {
  Granularity granularity = Granularity::sequence;
  // Observations per cluster-period in each generated cell (sequence and
  // cluster-period granularity). Observation granularity always uses 1.
  int count = 1;
};

// Design Space A (monotone switches: all-control, switch after period 1, ...,
// all-treated) or Design Space B (A plus the non-constant 1 -> 0 switches).
// For cluster-period / observation granularity every sequence becomes one
// cluster whose cells are the units.
DesignSpace build_standard_space(int periods, SpaceStyle style, int max_replication,
                                 StandardSpaceOptions options = {});

// One cell-mean of a materialised cluster: 0-based period and real-valued count.
struct CellMean {
  int period = 0;
  int treated = 0;
  double count = 0.0;
};
using ClusterCells = std::vector<CellMean>;

// Materialise a design into clusters of non-empty cells, each sorted by period.
// Sequence units give one cluster per selected copy; other granularities give one
// cluster per distinct cluster id with copies summed into the cell counts.
std::vector<ClusterCells> expand_clusters(const DesignSpace& space, const Design& design);

// Cells of one grouped cluster under the given multiplicities.
ClusterCells cluster_cells(const DesignSpace& space, int cluster, const std::vector<int>& mult);

// Observation-level fixed-effects matrix: T period indicators then the treatment indicator.
Eigen::MatrixXd build_x(const DesignSpace& space, const Design& design);

// Observation-level random-effects incidence matrix; its columns line up with build_d.
//   EXC1: one column per cluster
//   EXC2: one column per cluster, then one per non-empty cluster-period
//   AR1:  one column per non-empty cluster-period
Eigen::MatrixXd build_z(const DesignSpace& space, const Design& design, const CovarianceSpec& cov);
Eigen::MatrixXd build_d(const DesignSpace& space, const Design& design, const CovarianceSpec& cov);

// Contrast selecting the treatment effect among T+1 fixed effects.
Eigen::VectorXd treatment_contrast(int periods);

}  // namespace crtopt
