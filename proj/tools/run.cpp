#include "run.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include "crtopt/apportion.hpp"
#include "crtopt/errors.hpp"
#include "crtopt/exact.hpp"
#include "crtopt/search.hpp"
#include "crtopt/weights.hpp"

namespace crtopt::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::string pattern(const ExperimentalUnit& unit, int periods) {
  std::string p(static_cast<size_t>(periods), '.');
  for (const auto& c : unit.cells) p[static_cast<size_t>(c.period - 1)] = c.treated ? '1' : '0';
  return p;
}

struct AlgorithmResult {
  Design design;
  double criterion = 0.0;
  json details = json::object();
  std::vector<double> weights;  // weight algorithms only
  // gh-exact designs select every row of their own layout
  std::optional<DesignSpace> row_space;
};

const ModelEntry& single_entry(const ModelClass& models, std::string_view algorithm) {
  if (models.entries.size() != 1)
    throw ConfigError("algorithm: " + std::string(algorithm) + " does not support a robust model class");
  return models.entries.front();
}

AlgorithmResult run_closed_form(const RunConfig& cfg, const ModelClass& models) {
  const ModelEntry& e = single_entry(models, "gh-exact");
  if (e.cov.kind == CovKind::ar1) throw ConfigError("algorithm: gh-exact needs an EXC1 or EXC2 covariance");
  if (e.model.family != Family::gaussian_identity) throw ConfigError("algorithm: gh-exact needs a gaussian model");
  if (e.contrast.size() != 0 && e.contrast != treatment_contrast(cfg.space.periods()))
    throw ConfigError("algorithm: gh-exact only targets the treatment effect");
  int n = -1;
  for (const auto& u : cfg.space.units())
    for (const auto& c : u.cells) {
      if (n >= 0 && c.count != n) throw ConfigError("space: gh-exact needs the same count in every cell");
      n = c.count;
    }
  ClosedFormParams p{cfg.m, cfg.space.periods(), static_cast<double>(n), e.cov.tau2, e.cov.omega2, e.cov.sigma2};
  const ClosedFormDesign best = closed_form_design(p);
  if (!(best.precision > 0.0)) throw Infeasible("no design carries information about the treatment effect");

  // Express the optimal layout as a design over its own rows.
  const DesignSpace rows = space_from_treatment(best.treat, n);
  AlgorithmResult r;
  r.design = Design{std::vector<int>(static_cast<size_t>(rows.size()), 1)};
  r.criterion = 1.0 / best.precision;
  r.details["treated_cells"] = best.treated_cells;
  r.details["matrix_criterion"] = number(Objective::c_optimal(rows, e.cov, e.model).evaluate(r.design));
  r.row_space = rows;
  return r;
}

AlgorithmResult run_algorithm(const RunConfig& cfg, const ModelClass& models,
                              const std::function<void(int, double)>& progress) {
  const DesignSpace& space = cfg.space;
  switch (cfg.algorithm) {
    case Algorithm::local: {
      const Objective obj(space, models);
      SearchOptions opt;
      opt.restarts = cfg.restarts;
      opt.seed = cfg.seed;
      opt.workers = cfg.workers;
      opt.progress = progress;
      const SearchResult s = local_search(obj, cfg.m, opt);
      AlgorithmResult r;
      r.design = s.design;
      r.criterion = s.criterion;
      r.details["swaps"] = s.swaps;
      r.details["winning_restart"] = s.winning_restart;
      return r;
    }
    case Algorithm::reverse_greedy: {
      const Objective obj(space, models);
      const SearchResult s = reverse_greedy(obj, cfg.m);
      AlgorithmResult r;
      r.design = s.design;
      r.criterion = s.criterion;
      r.details["removals"] = static_cast<int>(s.trace.size()) - 1;
      return r;
    }
    case Algorithm::mixed_model_weights:
    case Algorithm::simplex_weights: {
      const ModelEntry& e = single_entry(models, to_string(cfg.algorithm));
      WeightedDesign w;
      if (cfg.algorithm == Algorithm::mixed_model_weights) {
        MixedModelWeightOptions opt;
        opt.total_budget = cfg.m;
        opt.tolerance = cfg.tolerance;
        w = mixed_model_weights(space, e.cov, e.model, e.contrast, opt);
      } else {
        SimplexOptions opt;
        opt.tolerance = cfg.tolerance;
        w = simplex_weight_descent(space, e.cov, e.model, e.contrast, opt);
        w.total_budget = cfg.m;
      }
      const Objective obj(space, models);
      const RoundingResult rounded = best_rounding(obj, w.weights, cfg.m);
      AlgorithmResult r;
      r.design = rounded.design;
      r.criterion = rounded.criterion;
      r.weights = w.weights;
      r.details["iterations"] = w.iterations;
      r.details["weighted_criterion"] = number(weighted_criterion(space, e.cov, e.model, e.contrast, w.weights, cfg.m));
      r.details["rounding"] = rounded.scheme;
      json cands = json::array();
      for (const auto& c : rounded.candidates)
        cands.push_back({{"scheme", c.scheme}, {"criterion", number(c.criterion)}, {"allocation", c.allocation}});
      r.details["rounding_candidates"] = cands;
      return r;
    }
    case Algorithm::closed_form:
      return run_closed_form(cfg, models);
  }
  throw ConfigError("algorithm: unsupported");
}

void write_weights_csv(const fs::path& dir, const DesignSpace& space, const std::vector<double>& weights) {
  std::ofstream out = open_output(dir / "weights.csv");
  if (space.units_uncorrelated()) {
    out << "unit,sequence,weight\n";
    for (int j = 0; j < space.size(); ++j)
      out << j << ',' << pattern(space.unit(j), space.periods()) << ',' << weights[static_cast<size_t>(j)] << '\n';
    return;
  }
  out << "unit,cluster,period,treated,weight\n";
  std::vector<std::vector<double>> grid(static_cast<size_t>(space.cluster_count()),
                                        std::vector<double>(static_cast<size_t>(space.periods()), 0.0));
  for (int j = 0; j < space.size(); ++j) {
    const Cell& c = space.unit(j).cells.front();
    out << j << ',' << space.unit(j).cluster_id << ',' << c.period << ',' << c.treated << ','
        << weights[static_cast<size_t>(j)] << '\n';
    grid[static_cast<size_t>(space.cluster_of(j))][static_cast<size_t>(c.period - 1)] += weights[static_cast<size_t>(j)];
  }
  std::ofstream g = open_output(dir / "weights_grid.csv");
  g << "cluster";
  for (int t = 1; t <= space.periods(); ++t) g << ",period_" << t;
  g << '\n';
  for (int k = 0; k < space.cluster_count(); ++k) {
    g << space.unit(space.units_in_cluster(k).front()).cluster_id;
    for (double v : grid[static_cast<size_t>(k)]) g << ',' << v;
    g << '\n';
  }
}

json design_json(const DesignSpace& space, const Design& d) {
  json seqs = json::array();
  if (space.units_uncorrelated())
    for (int j = 0; j < space.size(); ++j)
      if (d.multiplicity[static_cast<size_t>(j)] > 0)
        seqs.push_back({{"sequence", pattern(space.unit(j), space.periods())},
                        {"copies", d.multiplicity[static_cast<size_t>(j)]}});
  json out{{"multiplicity", d.multiplicity}, {"size", d.total()}};
  if (!seqs.empty()) out["sequences"] = seqs;
  return out;
}

void write_summary(const fs::path& dir, const json& summary) {
  std::ofstream out = open_output(dir / "summary.json");
  out << summary.dump(2) << '\n';
}

}  // namespace

void write_design_csv(std::ostream& out, const DesignSpace& space, const Design& design) {
  out << "cluster";
  for (int t = 1; t <= space.periods(); ++t) out << ",period_" << t;
  out << '\n';
  const auto clusters = expand_clusters(space, design);
  for (size_t k = 0; k < clusters.size(); ++k) {
    std::vector<std::string> row(static_cast<size_t>(space.periods()));
    for (const auto& c : clusters[k]) {
      std::ostringstream cell;
      cell << c.treated << ':' << c.count;
      row[static_cast<size_t>(c.period)] = cell.str();
    }
    out << k;
    for (const auto& cell : row) out << ',' << cell;
    out << '\n';
  }
}

json run_optimize(const RunConfig& cfg, const std::function<void(int, double)>& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  json summary{{"algorithm", std::string(to_string(cfg.algorithm))},
               {"seed", cfg.seed},
               {"config_digest", config_digest(cfg)},
               {"m", cfg.m}};

  if (!cfg.sweep) {
    const AlgorithmResult r = run_algorithm(cfg, cfg.models, progress);
    const DesignSpace& ds = r.row_space ? *r.row_space : cfg.space;
    std::ofstream csv = open_output(dir / "design.csv");
    write_design_csv(csv, ds, r.design);
    summary["design"] = design_json(ds, r.design);
    if (!r.weights.empty()) {
      write_weights_csv(dir, cfg.space, r.weights);
      summary["weights"] = r.weights;
    }
    summary["criterion"] = number(r.criterion);
    summary["details"] = r.details;
  } else {
    const Sweep& sw = *cfg.sweep;
    const CovarianceSpec base = cfg.models.entries.front().cov;
    const bool exc2 = base.kind == CovKind::exc2;
    fs::create_directories(dir / "designs");
    std::ofstream table = open_output(dir / "sweep.csv");
    table << "icc," << (exc2 ? "cac" : "lambda") << ",criterion,multiplicity,design_file\n";
    json cells = json::array();
    for (size_t i = 0; i < sw.icc.size(); ++i) {
      for (size_t j = 0; j < sw.second.size(); ++j) {
        ModelClass mc = cfg.models;
        try {
          mc.entries.front().cov = exc2 ? CovarianceSpec::exc2_from_icc_cac(sw.icc[i], sw.second[j], base.sigma2)
                                        : CovarianceSpec::ar1_from_icc(sw.icc[i], sw.second[j], base.sigma2);
        } catch (const InvalidInput& e) {
          throw ConfigError("sweep: " + std::string(e.what()));
        }
        const AlgorithmResult r = run_algorithm(cfg, mc, progress);
        const std::string name = "design_" + std::to_string(i) + "_" + std::to_string(j) + ".csv";
        std::ofstream csv = open_output(dir / "designs" / name);
        const DesignSpace& ds = r.row_space ? *r.row_space : cfg.space;
        write_design_csv(csv, ds, r.design);
        std::string mult;
        for (size_t u = 0; u < r.design.multiplicity.size(); ++u)
          mult += (u ? ";" : "") + std::to_string(r.design.multiplicity[u]);
        table << sw.icc[i] << ',' << sw.second[j] << ',' << r.criterion << ',' << mult << ",designs/" << name << '\n';
        cells.push_back({{"icc", sw.icc[i]},
                         {exc2 ? "cac" : "lambda", sw.second[j]},
                         {"criterion", number(r.criterion)},
                         {"design", design_json(ds, r.design)},
                         {"design_file", "designs/" + name}});
      }
    }
    summary["sweep"] = cells;
  }

  summary["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_summary(dir, summary);
  return summary;
}

json evaluate_design(const RunConfig& cfg, const Design& design) {
  validate_design(cfg.space, design);
  const Objective obj(cfg.space, cfg.models);
  json report;
  report["criterion"] = number(obj.evaluate(design));
  report["finite"] = std::isfinite(obj.evaluate(design));
  report["form"] = std::string(to_string(cfg.models.form));

  json entries = json::array();
  const auto values = obj.entry_values(design.multiplicity);
  for (int l = 0; l < obj.entry_count(); ++l) {
    const auto diag = diagnose_information(obj.information(l, design.multiplicity));
    entries.push_back({{"criterion", number(values[static_cast<size_t>(l)])},
                       {"rank", diag.rank},
                       {"dropped_parameters", diag.dropped},
                       {"min_eigenvalue", diag.min_eigenvalue},
                       {"max_eigenvalue", diag.max_eigenvalue},
                       {"condition_number", number(diag.condition_number)}});
  }
  report["entries"] = entries;

  // Closed-form cross-check: one Gaussian exchangeable model, treatment contrast,
  // every cluster observed in every period with a common count.
  json cf{{"applicable", false}};
  const ModelEntry& e = cfg.models.entries.front();
  const int T = cfg.space.periods();
  if (cfg.models.entries.size() == 1 && e.cov.kind != CovKind::ar1 && e.model.family == Family::gaussian_identity &&
      (e.contrast.size() == 0 || e.contrast == treatment_contrast(T))) {
    const auto clusters = expand_clusters(cfg.space, design);
    double n = -1.0;
    bool equal = true;
    for (const auto& cl : clusters) {
      if (static_cast<int>(cl.size()) != T) equal = false;
      for (const auto& c : cl) {
        if (n < 0) n = c.count;
        if (c.count != n) equal = false;
      }
    }
    if (equal && !clusters.empty()) {
      TreatmentMatrix treat(static_cast<Eigen::Index>(clusters.size()), T);
      for (size_t k = 0; k < clusters.size(); ++k)
        for (const auto& c : clusters[k]) treat(static_cast<Eigen::Index>(k), c.period) = c.treated;
      const ClosedFormParams p{static_cast<int>(clusters.size()), T, n, e.cov.tau2, e.cov.omega2, e.cov.sigma2};
      const double closed = closed_form_precision(p, treat);
      const double matrix = 1.0 / values.front();
      double rel = 0.0;
      if (closed > 0.0)
        rel = std::abs(matrix - closed) / closed;
      else if (matrix > 0.0)
        rel = std::numeric_limits<double>::infinity();
      cf = {{"applicable", true},
            {"closed_form_precision", closed},
            {"matrix_precision", matrix},
            {"relative_discrepancy", number(rel)}};
    }
  }
  report["closed_form"] = cf;
  return report;
}

void print_evaluation(std::ostream& out, const json& report) {
  auto show = [](const json& v) {
    if (v.is_string()) return v.get<std::string>() == "inf" ? std::string("inf (treatment effect not estimable)")
                                                             : v.get<std::string>();
    std::ostringstream s;
    s << std::setprecision(12) << v.get<double>();
    return s.str();
  };
  out << "criterion: " << show(report["criterion"]) << '\n';
  const auto& entries = report["entries"];
  for (size_t l = 0; l < entries.size(); ++l) {
    const auto& e = entries[l];
    out << "model " << l << ": variance " << show(e["criterion"]) << ", rank " << e["rank"].get<int>()
        << ", dropped parameters " << e["dropped_parameters"].get<int>() << ", condition number "
        << show(e["condition_number"]) << '\n';
  }
  const auto& cf = report["closed_form"];
  if (cf["applicable"].get<bool>()) {
    out << "closed form precision: " << show(cf["closed_form_precision"]) << '\n';
    out << "matrix precision: " << show(cf["matrix_precision"]) << '\n';
    out << "relative discrepancy: " << show(cf["relative_discrepancy"]) << '\n';
  } else {
    out << "closed form: not applicable\n";
  }
}

}  // namespace crtopt::cli
