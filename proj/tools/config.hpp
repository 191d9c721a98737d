#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crtopt/objective.hpp"

namespace crtopt::cli {

// Configuration problems; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { local, reverse_greedy, mixed_model_weights, simplex_weights, closed_form };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

// One axis pair of a parameter sweep: ICC crossed with CAC (EXC2) or lambda (AR1).
struct Sweep {
  std::vector<double> icc;
  std::vector<double> second;  // CAC for EXC2, lambda for AR1
};

struct RunConfig {
  DesignSpace space;
  ModelClass models;
  Algorithm algorithm = Algorithm::local;
  int m = 1;  // clusters / sequences / observations to select, or the weight budget
  int restarts = 100;
  std::uint64_t seed = 0;
  int workers = 1;
  double tolerance = 1e-9;
  std::optional<Sweep> sweep;
  std::string out_dir = "out";
};

// Reads and validates a configuration. Throws ConfigError; JSON syntax errors
// report line and column.
nlohmann::json read_json_file(const std::filesystem::path& path);
RunConfig parse_config(const nlohmann::json& doc);

// Semantically relevant content of a configuration with every default filled in;
// output location and worker count are excluded.
nlohmann::json canonical_config(const RunConfig& config);
// Hex SHA-256 of canonical_config(config).dump().
std::string config_digest(const RunConfig& config);

// Design file: {"multiplicity": [int, ...]}.
Design parse_design(const nlohmann::json& doc, const DesignSpace& space);

}  // namespace crtopt::cli
