#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "crtopt/errors.hpp"
#include "crtopt/weights.hpp"
#include "run.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitFailure = 4;

using crtopt::cli::ConfigError;
using nlohmann::json;

std::optional<int> workers_from_env() {
  const char* v = std::getenv("CRT_OPTIM_WORKERS");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) throw ConfigError("CRT_OPTIM_WORKERS: expected a positive integer");
  return static_cast<int>(n);
}

template <typename F>
int guarded_main(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const crtopt::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const crtopt::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const crtopt::NonConvergence& e) {
    std::cerr << "did not converge: " << e.what() << " (after " << e.last_iterate().iterations << " iterations)\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c-optimal cluster randomised trial designs"};
  app.require_subcommand(1);

  std::string config_path, design_path, algorithm, out_dir, eval_out;
  std::optional<int> m, restarts, workers;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  auto* optimize = app.add_subcommand("optimize", "Search for an optimal design");
  optimize->add_option("--config", config_path, "Run configuration (JSON)")->required();
  optimize->add_option("--algorithm", algorithm, "Optimiser")
      ->check(CLI::IsMember({"local", "reverse-greedy", "girling-weights", "simplex-weights", "gh-exact"}));
  optimize->add_option("--m", m, "Units to select (or weight budget)");
  optimize->add_option("--restarts", restarts, "Local search restarts");
  optimize->add_option("--seed", seed, "Random seed");
  optimize->add_option("--workers", workers, "Worker threads (default: $CRT_OPTIM_WORKERS, then config)");
  optimize->add_option("--out", out_dir, "Output directory");
  optimize->add_flag("--verbose", verbose, "Report restart progress on stderr");

  auto* evaluate = app.add_subcommand("evaluate", "Report the criterion of one design");
  evaluate->add_option("--config", config_path, "Run configuration (JSON)")->required();
  evaluate->add_option("--design", design_path, "Design file {\"multiplicity\": [...]}")->required();
  evaluate->add_option("--out", eval_out, "Also write the report as JSON to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  return guarded_main([&] {
    json doc = crtopt::cli::read_json_file(config_path);
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object at the top level");

    if (*optimize) {
      if (!algorithm.empty()) doc["algorithm"] = algorithm;
      if (m) doc["m"] = *m;
      if (restarts) doc["restarts"] = *restarts;
      if (seed) doc["seed"] = *seed;
      if (!workers) workers = workers_from_env();
      if (workers) doc["workers"] = *workers;
      if (!out_dir.empty()) doc["output"]["dir"] = out_dir;
      const auto cfg = crtopt::cli::parse_config(doc);
      std::function<void(int, double)> progress;
      if (verbose)
        progress = [&](int done, double best) {
          std::cerr << "restart " << done << "/" << cfg.restarts << " best " << best << '\n';
        };
      const json summary = crtopt::cli::run_optimize(cfg, progress);
      if (summary.contains("criterion"))
        std::cout << "criterion " << summary["criterion"].dump() << ", results in " << cfg.out_dir << '\n';
      else
        std::cout << summary["sweep"].size() << " grid cells, results in " << cfg.out_dir << '\n';
      return kExitOk;
    }

    const auto cfg = crtopt::cli::parse_config(doc);
    const auto design = crtopt::cli::parse_design(crtopt::cli::read_json_file(design_path), cfg.space);
    const json report = crtopt::cli::evaluate_design(cfg, design);
    crtopt::cli::print_evaluation(std::cout, report);
    if (!eval_out.empty()) {
      std::ofstream out(eval_out, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + eval_out);
      out << report.dump(2) << '\n';
    }
    return kExitOk;
  });
}
