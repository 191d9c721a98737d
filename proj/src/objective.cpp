#include "crtopt/objective.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "crtopt/errors.hpp"

namespace crtopt {

std::string_view to_string(RobustForm f) {
  return f == RobustForm::log_average ? "log-average" : "linear-average";
}

RobustForm parse_robust_form(std::string_view name) {
  if (name == "linear-average" || name == "linear") return RobustForm::linear_average;
  if (name == "log-average" || name == "log") return RobustForm::log_average;
  throw InvalidInput("unknown robust criterion form '" + std::string(name) + "'");
}

void ModelClass::validate(int periods) const {
  if (entries.empty()) throw InvalidInput("model class has no entries");
  double total = 0.0;
  for (size_t l = 0; l < entries.size(); ++l) {
    const auto& e = entries[l];
    if (!(e.prior >= 0.0)) throw InvalidInput("prior of entry " + std::to_string(l) + " is negative");
    if (e.contrast.size() != 0 && e.contrast.size() != periods + 1)
      throw InvalidDimension("contrast of entry " + std::to_string(l) + " must have length T+1");
    total += e.prior;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("model class priors must sum to 1");
}

Objective::Objective(const DesignSpace& space, ModelClass models) : space_(space), class_(std::move(models)) {
  class_.validate(space_.periods());
  const int P = space_.periods() + 1;
  for (auto& e : class_.entries) {
    models_.emplace_back(space_.periods(), e.cov, e.model);
    contrasts_.push_back(e.contrast.size() == 0 ? treatment_contrast(space_.periods()) : e.contrast);
  }
  if (space_.units_uncorrelated()) {
    unit_info_.resize(models_.size());
    for (size_t l = 0; l < models_.size(); ++l) {
      unit_info_[l].reserve(static_cast<size_t>(space_.size()));
      for (int j = 0; j < space_.size(); ++j) {
        Design one{std::vector<int>(static_cast<size_t>(space_.size()), 0)};
        one.multiplicity[static_cast<size_t>(j)] = 1;
        const auto clusters = expand_clusters(space_, one);
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(P, P);
        models_[l].add_cluster_information(clusters.front(), M);
        unit_info_[l].push_back(std::move(M));
      }
    }
  }
}

Objective Objective::c_optimal(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                               Eigen::VectorXd contrast) {
  ModelClass mc;
  mc.entries.push_back({cov, model, std::move(contrast), 1.0});
  return Objective(space, std::move(mc));
}

double Objective::combine(const std::vector<double>& per_entry) const {
  double out = 0.0;
  for (size_t l = 0; l < per_entry.size(); ++l) {
    const double p = class_.entries[l].prior;
    if (p == 0.0) continue;
    const double v = per_entry[l];
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    out += p * (class_.form == RobustForm::log_average ? std::log(v) : v);
  }
  return out;
}

Eigen::MatrixXd Objective::total_information(int entry, const std::vector<int>& mult) const {
  const int P = space_.periods() + 1;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(P, P);
  const auto l = static_cast<size_t>(entry);
  if (space_.units_uncorrelated()) {
    for (size_t j = 0; j < mult.size(); ++j)
      if (mult[j] != 0) M.noalias() += static_cast<double>(mult[j]) * unit_info_[l][j];
    return M;
  }
  for (int k = 0; k < space_.cluster_count(); ++k) {
    const auto cells = cluster_cells(space_, k, mult);
    models_[l].add_cluster_information(cells, M);
  }
  return M;
}

Eigen::MatrixXd Objective::information(int entry, const std::vector<int>& multiplicity) const {
  validate_design(space_, Design{multiplicity});
  return total_information(entry, multiplicity);
}

std::vector<double> Objective::entry_values(const std::vector<int>& multiplicity) const {
  if (Design{multiplicity}.total() == 0)
    return std::vector<double>(models_.size(), std::numeric_limits<double>::infinity());
  validate_design(space_, Design{multiplicity});
  std::vector<double> out;
  for (int l = 0; l < entry_count(); ++l)
    out.push_back(c_optimality(total_information(l, multiplicity), contrasts_[static_cast<size_t>(l)]));
  return out;
}

double Objective::evaluate(const std::vector<int>& multiplicity) const {
  return combine(entry_values(multiplicity));
}

double Objective::evaluate(const Design& design) const { return evaluate(design.multiplicity); }

Objective::State Objective::start(const std::vector<int>& multiplicity) const {
  if (static_cast<int>(multiplicity.size()) != space_.size())
    throw InvalidInput("multiplicity vector does not match the design space");
  State s;
  s.multiplicity = multiplicity;
  s.size = Design{multiplicity}.total();
  if (!space_.units_uncorrelated()) {
    s.cluster_info.resize(models_.size());
    for (size_t l = 0; l < models_.size(); ++l) {
      for (int k = 0; k < space_.cluster_count(); ++k)
        s.cluster_info[l].push_back(models_[l].cluster_information(cluster_cells(space_, k, multiplicity)));
    }
  }
  std::vector<double> per;
  for (int l = 0; l < entry_count(); ++l)
    per.push_back(c_optimality(total_information(l, multiplicity), contrasts_[static_cast<size_t>(l)]));
  s.value = combine(per);
  return s;
}

double Objective::value_after(const State& state, int remove, int add) const {
  if (remove == add) return state.value;
  const int P = space_.periods() + 1;
  std::vector<double> per(models_.size());
  if (space_.units_uncorrelated()) {
    for (size_t l = 0; l < models_.size(); ++l) {
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(P, P);
      for (size_t j = 0; j < state.multiplicity.size(); ++j) {
        int k = state.multiplicity[j];
        if (static_cast<int>(j) == remove) --k;
        if (static_cast<int>(j) == add) ++k;
        if (k != 0) M.noalias() += static_cast<double>(k) * unit_info_[l][j];
      }
      per[l] = c_optimality(M, contrasts_[l]);
    }
    return combine(per);
  }

  std::vector<int> mult = state.multiplicity;
  if (remove >= 0) --mult[static_cast<size_t>(remove)];
  if (add >= 0) ++mult[static_cast<size_t>(add)];
  const int c_remove = remove >= 0 ? space_.cluster_of(remove) : -1;
  const int c_add = add >= 0 ? space_.cluster_of(add) : -1;
  for (size_t l = 0; l < models_.size(); ++l) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(P, P);
    for (int k = 0; k < space_.cluster_count(); ++k) {
      if (k == c_remove || k == c_add) continue;
      M += state.cluster_info[l][static_cast<size_t>(k)];
    }
    if (c_remove >= 0) models_[l].add_cluster_information(cluster_cells(space_, c_remove, mult), M);
    if (c_add >= 0 && c_add != c_remove) models_[l].add_cluster_information(cluster_cells(space_, c_add, mult), M);
    per[l] = c_optimality(M, contrasts_[l]);
  }
  return combine(per);
}

void Objective::apply(State& state, int remove, int add) const {
  if (remove == add) return;
  if (remove >= 0) {
    --state.multiplicity[static_cast<size_t>(remove)];
    --state.size;
  }
  if (add >= 0) {
    ++state.multiplicity[static_cast<size_t>(add)];
    ++state.size;
  }
  if (!space_.units_uncorrelated()) {
    for (int unit : {remove, add}) {
      if (unit < 0) continue;
      const int k = space_.cluster_of(unit);
      for (size_t l = 0; l < models_.size(); ++l)
        state.cluster_info[l][static_cast<size_t>(k)] =
            models_[l].cluster_information(cluster_cells(space_, k, state.multiplicity));
    }
  }
  std::vector<double> per;
  for (int l = 0; l < entry_count(); ++l)
    per.push_back(c_optimality(total_information(l, state.multiplicity), contrasts_[static_cast<size_t>(l)]));
  state.value = combine(per);
}

double robust_criterion(const DesignSpace& space, const Design& design, const ModelClass& models) {
  return Objective(space, models).evaluate(design);
}

}  // namespace crtopt
