#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "crtopt/design_space.hpp"
#include "crtopt/gls.hpp"

namespace crtopt {

enum class RobustForm { linear_average, log_average };

std::string_view to_string(RobustForm f);
RobustForm parse_robust_form(std::string_view name);

struct ModelEntry {
  CovarianceSpec cov;
  ModelSpec model;
  Eigen::VectorXd contrast;  // empty means the treatment effect
  double prior = 1.0;
};

// Candidate models with prior probabilities.
struct ModelClass {
  std::vector<ModelEntry> entries;
  RobustForm form = RobustForm::linear_average;

  // Throws InvalidInput: empty class, negative priors, priors not summing to 1.
  void validate(int periods) const;
};

// The design criterion minimised by every optimiser: plain c-optimality for a single
// entry, or the prior-weighted (log-)average over a model class. Construction
// precomputes whatever does not depend on the design; evaluation is const and safe
// to share across threads.
class Objective {
 public:
  Objective(const DesignSpace& space, ModelClass models);

  static Objective c_optimal(const DesignSpace& space, const CovarianceSpec& cov, const ModelSpec& model,
                             Eigen::VectorXd contrast = {});

  const DesignSpace& space() const { return space_; }
  const ModelClass& models() const { return class_; }
  int entry_count() const { return static_cast<int>(class_.entries.size()); }

  double evaluate(const Design& design) const;
  double evaluate(const std::vector<int>& multiplicity) const;

  // Per-entry c' M^- c.
  std::vector<double> entry_values(const std::vector<int>& multiplicity) const;

  // Information matrix of one entry.
  Eigen::MatrixXd information(int entry, const std::vector<int>& multiplicity) const;

  // Working state for exchange algorithms; tracks per-cluster information so that a
  // change to one or two units only refactorises the clusters it touches.
  struct State {
    std::vector<int> multiplicity;
    int size = 0;
    double value = 0.0;
    // [entry][cluster] information; only used for correlated-unit spaces
    std::vector<std::vector<Eigen::MatrixXd>> cluster_info;
  };

  State start(const std::vector<int>& multiplicity) const;
  // Value after removing one copy of `remove` and adding one copy of `add`.
  // Either index may be -1.
  double value_after(const State& state, int remove, int add) const;
  void apply(State& state, int remove, int add) const;

 private:
  double combine(const std::vector<double>& per_entry) const;
  Eigen::MatrixXd total_information(int entry, const std::vector<int>& mult) const;

  DesignSpace space_;
  ModelClass class_;
  std::vector<ClusterPeriodModel> models_;
  std::vector<Eigen::VectorXd> contrasts_;
  // [entry][unit] information of one copy of a sequence unit
  std::vector<std::vector<Eigen::MatrixXd>> unit_info_;
};

// Robust criterion of a design over a model class.
double robust_criterion(const DesignSpace& space, const Design& design, const ModelClass& models);

}  // namespace crtopt
