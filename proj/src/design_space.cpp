#include "crtopt/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "crtopt/errors.hpp"

namespace crtopt {

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::sequence: return "sequence";
    case Granularity::cluster_period: return "cluster-period";
    case Granularity::observation: return "observation";
  }
  return "?";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "sequence") return Granularity::sequence;
  if (name == "cluster-period") return Granularity::cluster_period;
  if (name == "observation") return Granularity::observation;
  throw InvalidInput("unknown unit granularity '" + std::string(name) + "'");
}

std::string_view to_string(Family f) {
  switch (f) {
    case Family::gaussian_identity: return "gaussian-identity";
    case Family::binomial_logit: return "binomial-logit";
    case Family::poisson_log: return "poisson-log";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian-identity" || name == "gaussian") return Family::gaussian_identity;
  if (name == "binomial-logit" || name == "binomial") return Family::binomial_logit;
  if (name == "poisson-log" || name == "poisson") return Family::poisson_log;
  throw InvalidInput("unknown model family '" + std::string(name) + "'");
}

DesignSpace::DesignSpace(int periods, std::vector<ExperimentalUnit> units, int max_replication,
                         Granularity granularity)
    : periods_(periods),
      units_(std::move(units)),
      max_replication_(max_replication),
      granularity_(granularity) {
  validate();
  index_clusters();
}

void DesignSpace::validate() const {
  if (periods_ < 1) throw InvalidDimension("design space needs at least one period");
  if (units_.empty()) throw InvalidInput("design space has no units");
  if (max_replication_ < 1) throw InvalidInput("maxReplication must be >= 1");

  // (cluster, period) -> treated, for grouped granularities
  std::map<std::pair<int, int>, int> cell_status;
  for (size_t j = 0; j < units_.size(); ++j) {
    const auto& u = units_[j];
    const std::string where = "unit " + std::to_string(j);
    if (u.cells.empty()) throw InvalidInput(where + " has no cells");
    std::set<int> seen;
    for (const auto& c : u.cells) {
      if (c.period < 1 || c.period > periods_)
        throw InvalidInput(where + ": period " + std::to_string(c.period) + " outside [1, " +
                           std::to_string(periods_) + "]");
      if (c.treated != 0 && c.treated != 1) throw InvalidInput(where + ": treated must be 0 or 1");
      if (c.count < 1) throw InvalidInput(where + ": cell count must be >= 1");
      if (!seen.insert(c.period).second)
        throw InvalidInput(where + ": duplicate period " + std::to_string(c.period));
    }
    if (granularity_ != Granularity::sequence) {
      if (u.cells.size() != 1)
        throw InvalidInput(where + ": " + std::string(to_string(granularity_)) +
                           " units hold exactly one cell");
      if (granularity_ == Granularity::observation && u.cells[0].count != 1)
        throw InvalidInput(where + ": observation units hold one observation");
      const auto key = std::make_pair(u.cluster_id, u.cells[0].period);
      auto [it, inserted] = cell_status.emplace(key, u.cells[0].treated);
      if (!inserted && it->second != u.cells[0].treated)
        throw InvalidInput(where + ": conflicting treatment status within a cluster-period");
    }
  }
}

void DesignSpace::index_clusters() {
  unit_cluster_.assign(units_.size(), 0);
  cluster_units_.clear();
  if (granularity_ == Granularity::sequence) {
    for (size_t j = 0; j < units_.size(); ++j) {
      unit_cluster_[j] = static_cast<int>(j);
      cluster_units_.push_back({static_cast<int>(j)});
    }
    return;
  }
  std::map<int, int> index;
  for (size_t j = 0; j < units_.size(); ++j) {
    auto [it, inserted] = index.emplace(units_[j].cluster_id, static_cast<int>(cluster_units_.size()));
    if (inserted) cluster_units_.emplace_back();
    unit_cluster_[j] = it->second;
    cluster_units_[static_cast<size_t>(it->second)].push_back(static_cast<int>(j));
  }
}

DesignSpace DesignSpace::subset(const std::vector<int>& unit_indices) const {
  std::vector<ExperimentalUnit> picked;
  picked.reserve(unit_indices.size());
  for (int j : unit_indices) {
    if (j < 0 || j >= size()) throw InvalidInput("subset index out of range");
    picked.push_back(units_[static_cast<size_t>(j)]);
  }
  return DesignSpace(periods_, std::move(picked), max_replication_, granularity_);
}

int Design::total() const { return std::accumulate(multiplicity.begin(), multiplicity.end(), 0); }

void validate_design(const DesignSpace& space, const Design& design) {
  if (static_cast<int>(design.multiplicity.size()) != space.size())
    throw InvalidInput("design has " + std::to_string(design.multiplicity.size()) +
                       " multiplicities for a space of " + std::to_string(space.size()) + " units");
  for (size_t j = 0; j < design.multiplicity.size(); ++j) {
    const int k = design.multiplicity[j];
    if (k < 0 || k > space.max_replication())
      throw InvalidInput("multiplicity of unit " + std::to_string(j) + " is " + std::to_string(k) +
                         ", outside [0, " + std::to_string(space.max_replication()) + "]");
  }
  if (design.total() < 1) throw InvalidInput("design selects no units");
}

ModelSpec ModelSpec::gaussian(int periods) {
  ModelSpec m;
  m.family = Family::gaussian_identity;
  m.beta = Eigen::VectorXd::Zero(periods + 1);
  return m;
}

ModelSpec ModelSpec::with_default_beta(int periods) const {
  ModelSpec out = *this;
  if (out.beta.size() == 0 && out.family == Family::gaussian_identity) out.beta = Eigen::VectorXd::Zero(periods + 1);
  return out;
}

void ModelSpec::validate(int periods) const {
  if (beta.size() != periods + 1)
    throw InvalidDimension("beta must have length T+1 = " + std::to_string(periods + 1) + ", got " +
                           std::to_string(beta.size()));
  if (!beta.allFinite()) throw InvalidInput("beta has non-finite entries");
}

DesignSpace build_standard_space(int periods, SpaceStyle style, int max_replication,
                                 StandardSpaceOptions options) {
  if (periods < 2) throw InvalidDimension("standard design spaces need T >= 2");
  if (options.count < 1) throw InvalidInput("cell count must be >= 1");

  // s = 0 all-control, s = k (1..T-1) treated from period k+1, s = T all-treated.
  std::vector<std::vector<int>> patterns;
  for (int s = 0; s <= periods; ++s) {
    std::vector<int> p(static_cast<size_t>(periods), 0);
    if (s == periods) {
      std::fill(p.begin(), p.end(), 1);
    } else if (s > 0) {
      for (int t = s; t < periods; ++t) p[static_cast<size_t>(t)] = 1;
    }
    patterns.push_back(std::move(p));
  }
  if (style == SpaceStyle::reversible) {
    // intervention removed after period k, k = 1..T-1
    for (int k = 1; k < periods; ++k) {
      std::vector<int> p(static_cast<size_t>(periods), 0);
      for (int t = 0; t < k; ++t) p[static_cast<size_t>(t)] = 1;
      patterns.push_back(std::move(p));
    }
  }

  std::vector<ExperimentalUnit> units;
  for (size_t s = 0; s < patterns.size(); ++s) {
    const int cluster = static_cast<int>(s);
    if (options.granularity == Granularity::sequence) {
      ExperimentalUnit u{cluster, {}};
      for (int t = 0; t < periods; ++t)
        u.cells.push_back({t + 1, patterns[s][static_cast<size_t>(t)], options.count});
      units.push_back(std::move(u));
    } else {
      const int count = options.granularity == Granularity::observation ? 1 : options.count;
      for (int t = 0; t < periods; ++t)
        units.push_back({cluster, {{t + 1, patterns[s][static_cast<size_t>(t)], count}}});
    }
  }
  return DesignSpace(periods, std::move(units), max_replication, options.granularity);
}

namespace {

ClusterCells sorted_cells(const ExperimentalUnit& u, double scale) {
  ClusterCells out;
  out.reserve(u.cells.size());
  for (const auto& c : u.cells) out.push_back({c.period - 1, c.treated, scale * c.count});
  std::sort(out.begin(), out.end(), [](const CellMean& a, const CellMean& b) { return a.period < b.period; });
  return out;
}

}  // namespace

ClusterCells cluster_cells(const DesignSpace& space, int cluster, const std::vector<int>& mult) {
  ClusterCells out;
  for (int j : space.units_in_cluster(cluster)) {
    const int k = mult[static_cast<size_t>(j)];
    if (k == 0) continue;
    const Cell& c = space.unit(j).cells.front();
    auto it = std::find_if(out.begin(), out.end(), [&](const CellMean& m) { return m.period == c.period - 1; });
    if (it == out.end())
      out.push_back({c.period - 1, c.treated, static_cast<double>(k) * c.count});
    else
      it->count += static_cast<double>(k) * c.count;
  }
  std::sort(out.begin(), out.end(), [](const CellMean& a, const CellMean& b) { return a.period < b.period; });
  return out;
}

std::vector<ClusterCells> expand_clusters(const DesignSpace& space, const Design& design) {
  validate_design(space, design);
  std::vector<ClusterCells> clusters;
  if (space.units_uncorrelated()) {
    for (int j = 0; j < space.size(); ++j) {
      for (int copy = 0; copy < design.multiplicity[static_cast<size_t>(j)]; ++copy)
        clusters.push_back(sorted_cells(space.unit(j), 1.0));
    }
    return clusters;
  }
  for (int k = 0; k < space.cluster_count(); ++k) {
    auto cells = cluster_cells(space, k, design.multiplicity);
    if (!cells.empty()) clusters.push_back(std::move(cells));
  }
  return clusters;
}

namespace {

int observation_count(const std::vector<ClusterCells>& clusters) {
  double n = 0;
  for (const auto& cl : clusters)
    for (const auto& c : cl) n += c.count;
  return static_cast<int>(std::lround(n));
}

}  // namespace

Eigen::MatrixXd build_x(const DesignSpace& space, const Design& design) {
  const auto clusters = expand_clusters(space, design);
  const int T = space.periods();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(observation_count(clusters), T + 1);
  Eigen::Index row = 0;
  for (const auto& cl : clusters) {
    for (const auto& c : cl) {
      for (long i = 0; i < std::lround(c.count); ++i, ++row) {
        X(row, c.period) = 1.0;
        X(row, T) = c.treated;
      }
    }
  }
  return X;
}

namespace {

// Column layout of Z shared by build_z and build_d.
struct ZLayout {
  int cluster_columns = 0;                       // EXC1/EXC2
  std::vector<std::pair<int, int>> cp_columns;   // (cluster, period) for EXC2/AR1
};

ZLayout z_layout(const std::vector<ClusterCells>& clusters, CovKind kind) {
  ZLayout z;
  if (kind != CovKind::ar1) z.cluster_columns = static_cast<int>(clusters.size());
  if (kind != CovKind::exc1) {
    for (size_t k = 0; k < clusters.size(); ++k)
      for (const auto& c : clusters[k]) z.cp_columns.emplace_back(static_cast<int>(k), c.period);
  }
  return z;
}

}  // namespace

Eigen::MatrixXd build_z(const DesignSpace& space, const Design& design, const CovarianceSpec& cov) {
  const auto clusters = expand_clusters(space, design);
  const auto layout = z_layout(clusters, cov.kind);
  const int n_cols = layout.cluster_columns + static_cast<int>(layout.cp_columns.size());
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(observation_count(clusters), n_cols);
  Eigen::Index row = 0;
  int cp = layout.cluster_columns;
  for (size_t k = 0; k < clusters.size(); ++k) {
    for (const auto& c : clusters[k]) {
      const long r = std::lround(c.count);
      for (long i = 0; i < r; ++i) {
        if (cov.kind != CovKind::ar1) Z(row + i, static_cast<Eigen::Index>(k)) = 1.0;
        if (cov.kind != CovKind::exc1) Z(row + i, cp) = 1.0;
      }
      row += r;
      if (cov.kind != CovKind::exc1) ++cp;
    }
  }
  return Z;
}

Eigen::MatrixXd build_d(const DesignSpace& space, const Design& design, const CovarianceSpec& cov) {
  const auto clusters = expand_clusters(space, design);
  const auto layout = z_layout(clusters, cov.kind);
  const int nc = layout.cluster_columns;
  const int n_cols = nc + static_cast<int>(layout.cp_columns.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_cols, n_cols);
  switch (cov.kind) {
    case CovKind::exc1:
      D.diagonal().setConstant(cov.tau2);
      break;
    case CovKind::exc2:
      D.topLeftCorner(nc, nc).diagonal().setConstant(cov.tau2);
      D.bottomRightCorner(n_cols - nc, n_cols - nc).diagonal().setConstant(cov.omega2);
      break;
    case CovKind::ar1:
      for (int a = 0; a < n_cols; ++a) {
        for (int b = 0; b < n_cols; ++b) {
          const auto& ca = layout.cp_columns[static_cast<size_t>(a)];
          const auto& cb = layout.cp_columns[static_cast<size_t>(b)];
          if (ca.first == cb.first) D(a, b) = cov.entry(std::abs(ca.second - cb.second), 0);
        }
      }
      break;
  }
  return D;
}

Eigen::VectorXd treatment_contrast(int periods) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(periods + 1);
  c(periods) = 1.0;
  return c;
}

}  // namespace crtopt
