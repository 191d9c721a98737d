#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crtopt/apportion.hpp"
#include "crtopt/errors.hpp"
#include "crtopt/exact.hpp"
#include "crtopt/gls.hpp"
#include "crtopt/objective.hpp"
#include "crtopt/search.hpp"
#include "crtopt/validate.hpp"
#include "crtopt/weights.hpp"

namespace py = pybind11;
using namespace crtopt;

namespace {

// Units as [(cluster_id, [(period, treated, count), ...]), ...].
using UnitTuple = std::pair<int, std::vector<std::tuple<int, int, int>>>;

DesignSpace make_space(int periods, const std::vector<UnitTuple>& units, int max_replication,
                       const std::string& granularity) {
  std::vector<ExperimentalUnit> out;
  for (const auto& [id, cells] : units) {
    ExperimentalUnit u{id, {}};
    for (const auto& [p, t, c] : cells) u.cells.push_back({p, t, c});
    out.push_back(std::move(u));
  }
  return DesignSpace(periods, std::move(out), max_replication, parse_granularity(granularity));
}

ModelSpec make_model(const std::string& family, const Eigen::VectorXd& beta, bool attenuate) {
  ModelSpec m;
  m.family = parse_family(family);
  m.beta = beta;
  m.attenuate = attenuate;
  return m;
}

py::dict weighted_to_dict(const WeightedDesign& w) {
  py::dict d;
  d["weights"] = w.weights;
  d["criterion"] = w.criterion;
  d["iterations"] = w.iterations;
  d["total_budget"] = w.total_budget;
  return d;
}

}  // namespace

PYBIND11_MODULE(_crtopt, m) {
  m.doc() = "c-optimal cluster randomised trial designs";

  py::register_exception<Infeasible>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidInput& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const NonConvergence& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  py::class_<CovarianceSpec>(m, "CovarianceSpec")
      .def_static("exc1", &CovarianceSpec::exc1, py::arg("tau2"), py::arg("sigma2") = 1.0)
      .def_static("exc2", &CovarianceSpec::exc2, py::arg("tau2"), py::arg("omega2"), py::arg("sigma2") = 1.0)
      .def_static("ar1", &CovarianceSpec::ar1, py::arg("tau2"), py::arg("lambda_"), py::arg("sigma2") = 1.0)
      .def_static("exc1_from_icc", &CovarianceSpec::exc1_from_icc, py::arg("icc"), py::arg("sigma2") = 1.0)
      .def_static("exc2_from_icc_cac", &CovarianceSpec::exc2_from_icc_cac, py::arg("icc"), py::arg("cac"),
                  py::arg("sigma2") = 1.0)
      .def_static("ar1_from_icc", &CovarianceSpec::ar1_from_icc, py::arg("icc"), py::arg("lambda_"),
                  py::arg("sigma2") = 1.0)
      .def_property_readonly("kind", [](const CovarianceSpec& c) { return std::string(to_string(c.kind)); })
      .def_readonly("tau2", &CovarianceSpec::tau2)
      .def_readonly("omega2", &CovarianceSpec::omega2)
      .def_readonly("lambda_", &CovarianceSpec::lambda)
      .def_readonly("sigma2", &CovarianceSpec::sigma2)
      .def("icc", &CovarianceSpec::icc)
      .def("cac", &CovarianceSpec::cac)
      .def("entry", &CovarianceSpec::entry, py::arg("delta_t"), py::arg("delta_k"));

  py::class_<DesignSpace>(m, "DesignSpace")
      .def(py::init(&make_space), py::arg("periods"), py::arg("units"), py::arg("max_replication"),
           py::arg("granularity") = "sequence")
      .def_property_readonly("periods", &DesignSpace::periods)
      .def_property_readonly("size", &DesignSpace::size)
      .def_property_readonly("max_replication", &DesignSpace::max_replication)
      .def_property_readonly("granularity", [](const DesignSpace& s) { return std::string(to_string(s.granularity())); })
      .def("treatment_patterns", [](const DesignSpace& s) {
        std::vector<std::vector<int>> out;
        for (const auto& u : s.units()) {
          std::vector<int> row(static_cast<size_t>(s.periods()), -1);
          for (const auto& c : u.cells) row[static_cast<size_t>(c.period - 1)] = c.treated;
          out.push_back(std::move(row));
        }
        return out;
      });

  m.def(
      "build_standard_space",
      [](int periods, const std::string& style, int max_replication, const std::string& granularity, int count) {
        SpaceStyle st;
        if (style == "no-reversibility")
          st = SpaceStyle::no_reversibility;
        else if (style == "reversible")
          st = SpaceStyle::reversible;
        else
          throw InvalidInput("style must be 'no-reversibility' or 'reversible'");
        return build_standard_space(periods, st, max_replication, {parse_granularity(granularity), count});
      },
      py::arg("periods"), py::arg("style") = "no-reversibility", py::arg("max_replication") = 1,
      py::arg("granularity") = "sequence", py::arg("count") = 1);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init(&make_model), py::arg("family") = "gaussian-identity", py::arg("beta") = Eigen::VectorXd(),
           py::arg("attenuate") = false)
      .def_property_readonly("family", [](const ModelSpec& s) { return std::string(to_string(s.family)); })
      .def_readonly("beta", &ModelSpec::beta)
      .def_readonly("attenuate", &ModelSpec::attenuate);

  auto design = [](const std::vector<int>& mult) { return Design{mult}; };

  m.def("build_x", [=](const DesignSpace& s, const std::vector<int>& d) { return build_x(s, design(d)); });
  m.def("build_z", [=](const DesignSpace& s, const std::vector<int>& d, const CovarianceSpec& c) {
    return build_z(s, design(d), c);
  });
  m.def("build_d", [=](const DesignSpace& s, const std::vector<int>& d, const CovarianceSpec& c) {
    return build_d(s, design(d), c);
  });
  m.def("build_sigma", [=](const DesignSpace& s, const std::vector<int>& d, const CovarianceSpec& c,
                           const ModelSpec& mod) { return build_sigma(s, design(d), c, mod); });
  m.def("information_matrix", &information_matrix, py::arg("X"), py::arg("sigma"));
  m.def("c_optimality", &c_optimality, py::arg("M"), py::arg("c"));
  m.def("treatment_contrast", &treatment_contrast, py::arg("periods"));

  py::class_<Objective>(m, "Objective")
      .def(py::init([](const DesignSpace& s, const CovarianceSpec& c, const ModelSpec& mod, const Eigen::VectorXd& ctr) {
             return Objective::c_optimal(s, c, mod, ctr);
           }),
           py::arg("space"), py::arg("cov"), py::arg("model") = ModelSpec(), py::arg("contrast") = Eigen::VectorXd())
      .def_static(
          "robust",
          [](const DesignSpace& s, const std::vector<std::tuple<CovarianceSpec, ModelSpec, double>>& entries,
             const std::string& form) {
            ModelClass mc;
            mc.form = parse_robust_form(form);
            for (const auto& [c, mod, p] : entries) mc.entries.push_back({c, mod, {}, p});
            return Objective(s, std::move(mc));
          },
          py::arg("space"), py::arg("entries"), py::arg("form") = "linear-average")
      .def("evaluate", [](const Objective& o, const std::vector<int>& mult) { return o.evaluate(mult); })
      .def("entry_values", &Objective::entry_values)
      .def_property_readonly("space", &Objective::space);

  py::class_<SearchResult>(m, "SearchResult")
      .def_property_readonly("multiplicity", [](const SearchResult& r) { return r.design.multiplicity; })
      .def_readonly("criterion", &SearchResult::criterion)
      .def_readonly("swaps", &SearchResult::swaps)
      .def_readonly("winning_restart", &SearchResult::winning_restart)
      .def_readonly("trace", &SearchResult::trace);

  m.def(
      "local_search",
      [](const Objective& o, int size, int restarts, std::uint64_t seed, int workers) {
        SearchOptions opt;
        opt.restarts = restarts;
        opt.seed = seed;
        opt.workers = workers;
        py::gil_scoped_release release;
        return local_search(o, size, opt);
      },
      py::arg("objective"), py::arg("m"), py::arg("restarts") = 100, py::arg("seed") = 0, py::arg("workers") = 1);
  m.def("reverse_greedy", &reverse_greedy,
        py::arg("objective"), py::arg("m"));
  m.def("swap_delta", [=](const Objective& o, const std::vector<int>& d, int r, int a) {
    return swap_delta(o, design(d), r, a);
  });
  m.def("brute_force_optimum", [](const Objective& o, int size) {
    const auto r = brute_force_optimum(o, size);
    py::dict d;
    d["multiplicity"] = r.design.multiplicity;
    d["criterion"] = r.criterion;
    d["evaluated"] = r.evaluated;
    return d;
  });

  m.def(
      "mixed_model_weights",
      [](const DesignSpace& s, const CovarianceSpec& c, const ModelSpec& mod, double budget, double tol) {
        MixedModelWeightOptions opt;
        opt.total_budget = budget;
        opt.tolerance = tol;
        return weighted_to_dict(mixed_model_weights(s, c, mod, {}, opt));
      },
      py::arg("space"), py::arg("cov"), py::arg("model") = ModelSpec(), py::arg("total_budget") = 1.0,
      py::arg("tolerance") = 1e-6);
  m.def(
      "simplex_weight_descent",
      [](const DesignSpace& s, const CovarianceSpec& c, const ModelSpec& mod, double tol) {
        SimplexOptions opt;
        opt.tolerance = tol;
        return weighted_to_dict(simplex_weight_descent(s, c, mod, {}, opt));
      },
      py::arg("space"), py::arg("cov"), py::arg("model") = ModelSpec(), py::arg("tolerance") = 1e-9);
  m.def("project_to_simplex", &project_to_simplex);

  m.def("hamilton_round", &hamilton_round, py::arg("weights"), py::arg("total"));
  m.def("adams_round", &adams_round, py::arg("weights"), py::arg("total"));
  m.def("best_rounding", [](const Objective& o, const std::vector<double>& w, int total) {
    const auto r = best_rounding(o, w, total);
    py::dict d;
    d["multiplicity"] = r.design.multiplicity;
    d["criterion"] = r.criterion;
    d["scheme"] = r.scheme;
    return d;
  });

  m.def("design_coefficients", [](const TreatmentMatrix& t) {
    const auto c = design_coefficients(t);
    return std::make_pair(c.a, c.b);
  });
  m.def(
      "closed_form_precision",
      [](const TreatmentMatrix& t, double n, double tau2, double omega2, double sigma2) {
        ClosedFormParams p{static_cast<int>(t.rows()), static_cast<int>(t.cols()), n, tau2, omega2, sigma2};
        return closed_form_precision(p, t);
      },
      py::arg("treatment"), py::arg("n"), py::arg("tau2"), py::arg("omega2"), py::arg("sigma2") = 1.0);
  m.def("lawrie_weights", &lawrie_weights, py::arg("periods"), py::arg("r"), py::arg("rho"));
  m.def("zhan_weights", &zhan_weights, py::arg("periods"), py::arg("r"), py::arg("rho"));

  m.def(
      "monte_carlo_variance",
      [=](const DesignSpace& s, const std::vector<int>& d, const CovarianceSpec& c, const Eigen::VectorXd& beta,
          int n_sims, std::uint64_t seed) {
        MonteCarloOptions opt;
        opt.n_sims = n_sims;
        opt.seed = seed;
        const auto r = monte_carlo_variance(s, design(d), c, ModelSpec(), beta, opt);
        py::dict out;
        out["empirical_variance"] = r.empirical_variance;
        out["model_variance"] = r.model_variance;
        out["standard_error"] = r.standard_error;
        out["z_score"] = r.z_score;
        return out;
      },
      py::arg("space"), py::arg("multiplicity"), py::arg("cov"), py::arg("beta"), py::arg("n_sims") = 10000,
      py::arg("seed") = 0);
}
