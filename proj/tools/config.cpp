#include "config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "crtopt/errors.hpp"

namespace crtopt::cli {

using nlohmann::json;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::local: return "local";
    case Algorithm::reverse_greedy: return "reverse-greedy";
    case Algorithm::mixed_model_weights: return "girling-weights";
    case Algorithm::simplex_weights: return "simplex-weights";
    case Algorithm::closed_form: return "gh-exact";
  }
  return "local";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::local, Algorithm::reverse_greedy, Algorithm::mixed_model_weights,
                      Algorithm::simplex_weights, Algorithm::closed_form})
    if (to_string(a) == name) return a;
  throw ConfigError("algorithm: unknown value '" + std::string(name) + "'");
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key) + ": required field is missing");
  return *it;
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(field + ": must be finite");
  return d;
}

int as_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError(field + ": expected an integer");
  const auto i = v.get<long long>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
    throw ConfigError(field + ": out of range");
  return static_cast<int>(i);
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field + ": expected a string");
  return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field + ": expected an array of numbers");
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : as_number(*it, join(path, key));
}

int int_or(const json& obj, const std::string& key, const std::string& path, int fallback) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : as_int(*it, join(path, key));
}

// Re-throws library validation errors as configuration errors on `field`.
template <typename F>
auto guarded(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const InvalidInput& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

DesignSpace parse_space(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  if (auto it = j.find("standard"); it != j.end()) {
    const std::string sp = join(path, "standard");
    const json& s = *it;
    const int T = as_int(require(s, "T", sp), join(sp, "T"));
    const std::string style = s.contains("style") ? as_string(s["style"], join(sp, "style")) : "no-reversibility";
    SpaceStyle st;
    if (style == "no-reversibility")
      st = SpaceStyle::no_reversibility;
    else if (style == "reversible")
      st = SpaceStyle::reversible;
    else
      throw ConfigError(join(sp, "style") + ": expected 'no-reversibility' or 'reversible'");
    StandardSpaceOptions opt;
    if (s.contains("granularity"))
      opt.granularity = guarded(join(sp, "granularity"),
                                [&] { return parse_granularity(as_string(s["granularity"], join(sp, "granularity"))); });
    opt.count = int_or(s, "count", sp, 1);
    const int cap = int_or(s, "maxReplication", sp, 1);
    return guarded(sp, [&] { return build_standard_space(T, st, cap, opt); });
  }
  const int T = as_int(require(j, "T", path), join(path, "T"));
  const int cap = int_or(j, "maxReplication", path, 1);
  Granularity g = Granularity::sequence;
  if (j.contains("granularity"))
    g = guarded(join(path, "granularity"),
                [&] { return parse_granularity(as_string(j["granularity"], join(path, "granularity"))); });
  const json& units = require(j, "units", path);
  if (!units.is_array()) throw ConfigError(join(path, "units") + ": expected an array");
  std::vector<ExperimentalUnit> parsed;
  for (size_t u = 0; u < units.size(); ++u) {
    const std::string up = join(path, "units") + "[" + std::to_string(u) + "]";
    ExperimentalUnit unit;
    unit.cluster_id = int_or(units[u], "clusterId", up, static_cast<int>(u));
    const json& cells = require(units[u], "cells", up);
    if (!cells.is_array()) throw ConfigError(join(up, "cells") + ": expected an array");
    for (size_t c = 0; c < cells.size(); ++c) {
      const std::string cp = join(up, "cells") + "[" + std::to_string(c) + "]";
      Cell cell;
      cell.period = as_int(require(cells[c], "period", cp), join(cp, "period"));
      cell.treated = as_int(require(cells[c], "treated", cp), join(cp, "treated"));
      cell.count = int_or(cells[c], "count", cp, 1);
      unit.cells.push_back(cell);
    }
    parsed.push_back(std::move(unit));
  }
  return guarded(path, [&] { return DesignSpace(T, std::move(parsed), cap, g); });
}

CovarianceSpec parse_covariance(const json& j, const std::string& path, bool allow_partial) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const CovKind kind =
      guarded(join(path, "kind"), [&] { return parse_cov_kind(as_string(require(j, "kind", path), join(path, "kind"))); });
  const double sigma2 = number_or(j, "sigma2", path, 1.0);
  CovarianceSpec cov;
  cov.kind = kind;
  cov.sigma2 = sigma2;
  if (j.contains("icc")) {
    const double icc = as_number(j["icc"], join(path, "icc"));
    return guarded(path, [&] {
      switch (kind) {
        case CovKind::exc1: return CovarianceSpec::exc1_from_icc(icc, sigma2);
        case CovKind::exc2:
          return CovarianceSpec::exc2_from_icc_cac(icc, as_number(require(j, "cac", path), join(path, "cac")), sigma2);
        case CovKind::ar1:
          return CovarianceSpec::ar1_from_icc(icc, as_number(require(j, "lambda", path), join(path, "lambda")), sigma2);
      }
      return cov;
    });
  }
  if (allow_partial && !j.contains("tau2")) return cov;
  cov.tau2 = as_number(require(j, "tau2", path), join(path, "tau2"));
  if (kind == CovKind::exc2) cov.omega2 = as_number(require(j, "omega2", path), join(path, "omega2"));
  if (kind == CovKind::ar1) cov.lambda = as_number(require(j, "lambda", path), join(path, "lambda"));
  guarded(path, [&] {
    cov.validate();
    return 0;
  });
  return cov;
}

ModelSpec parse_model(const json* j, const std::string& path, int periods) {
  ModelSpec model;
  if (!j) return model.with_default_beta(periods);
  if (!j->is_object()) throw ConfigError(path + ": expected an object");
  if (j->contains("family"))
    model.family =
        guarded(join(path, "family"), [&] { return parse_family(as_string((*j)["family"], join(path, "family"))); });
  if (j->contains("attenuate")) {
    if (!(*j)["attenuate"].is_boolean()) throw ConfigError(join(path, "attenuate") + ": expected true or false");
    model.attenuate = (*j)["attenuate"].get<bool>();
  }
  if (j->contains("beta")) {
    const auto b = as_numbers((*j)["beta"], join(path, "beta"));
    model.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  } else if (j->contains("logit")) {
    // base rate, per-period odds ratios and a treatment odds ratio on the logit scale
    const std::string lp = join(path, "logit");
    const json& l = (*j)["logit"];
    const double base = as_number(require(l, "baseRate", lp), join(lp, "baseRate"));
    if (!(base > 0.0 && base < 1.0)) throw ConfigError(join(lp, "baseRate") + ": must lie in (0, 1)");
    const auto ors = as_numbers(require(l, "periodOddsRatios", lp), join(lp, "periodOddsRatios"));
    const double trt = as_number(require(l, "treatmentOddsRatio", lp), join(lp, "treatmentOddsRatio"));
    if (static_cast<int>(ors.size()) != periods)
      throw ConfigError(join(lp, "periodOddsRatios") + ": expected one entry per period");
    for (double o : ors)
      if (!(o > 0.0)) throw ConfigError(join(lp, "periodOddsRatios") + ": odds ratios must be positive");
    if (!(trt > 0.0)) throw ConfigError(join(lp, "treatmentOddsRatio") + ": must be positive");
    model.beta.resize(periods + 1);
    for (int t = 0; t < periods; ++t) model.beta(t) = std::log(base / (1.0 - base)) + std::log(ors[static_cast<size_t>(t)]);
    model.beta(periods) = std::log(trt);
  }
  model = model.with_default_beta(periods);
  guarded(path, [&] {
    model.validate(periods);
    return 0;
  });
  return model;
}

Eigen::VectorXd parse_contrast(const json& j, const std::string& field, int periods) {
  const auto c = as_numbers(j, field);
  if (static_cast<int>(c.size()) != periods + 1) throw ConfigError(field + ": expected T+1 entries");
  return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

json covariance_json(const CovarianceSpec& c) {
  json j{{"kind", std::string(to_string(c.kind))}, {"tau2", c.tau2}, {"sigma2", c.sigma2}};
  if (c.kind == CovKind::exc2) j["omega2"] = c.omega2;
  if (c.kind == CovKind::ar1) j["lambda"] = c.lambda;
  return j;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte is 1-based and points just past the offending character
    const size_t at = e.byte == 0 ? 0 : std::min(text.size(), static_cast<size_t>(e.byte - 1));
    size_t line = 1, column = 1;
    for (size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(path.string() + ": JSON parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(column) + " (byte " + std::to_string(e.byte) + ")");
  }
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object at the top level");
  RunConfig cfg{.space = parse_space(require(doc, "space", ""), "space"), .models = {}, .sweep = {}};
  const int T = cfg.space.periods();

  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    Sweep sweep;
    sweep.icc = as_numbers(require(s, "icc", "sweep"), "sweep.icc");
    if (s.contains("cac"))
      sweep.second = as_numbers(s["cac"], "sweep.cac");
    else if (s.contains("lambda"))
      sweep.second = as_numbers(s["lambda"], "sweep.lambda");
    else
      throw ConfigError("sweep: needs 'cac' (EXC2) or 'lambda' (AR1)");
    if (sweep.icc.empty() || sweep.second.empty()) throw ConfigError("sweep: axes must be non-empty");
    cfg.sweep = std::move(sweep);
  }

  const json* model_json = doc.contains("model") ? &doc["model"] : nullptr;
  const ModelSpec base_model = parse_model(model_json, "model", T);
  Eigen::VectorXd base_contrast;
  if (doc.contains("contrast")) base_contrast = parse_contrast(doc["contrast"], "contrast", T);

  if (doc.contains("robust")) {
    if (cfg.sweep) throw ConfigError("robust: cannot be combined with sweep");
    const json& r = doc["robust"];
    if (r.contains("form"))
      cfg.models.form =
          guarded("robust.form", [&] { return parse_robust_form(as_string(r["form"], "robust.form")); });
    const json& entries = require(r, "entries", "robust");
    if (!entries.is_array() || entries.empty()) throw ConfigError("robust.entries: expected a non-empty array");
    for (size_t l = 0; l < entries.size(); ++l) {
      const std::string ep = "robust.entries[" + std::to_string(l) + "]";
      ModelEntry e;
      e.cov = parse_covariance(require(entries[l], "covariance", ep), join(ep, "covariance"), false);
      e.model = entries[l].contains("model") ? parse_model(&entries[l]["model"], join(ep, "model"), T) : base_model;
      e.contrast = entries[l].contains("contrast")
                       ? parse_contrast(entries[l]["contrast"], join(ep, "contrast"), T)
                       : base_contrast;
      e.prior = entries[l].contains("prior") ? as_number(entries[l]["prior"], join(ep, "prior"))
                                             : 1.0 / static_cast<double>(entries.size());
      cfg.models.entries.push_back(std::move(e));
    }
  } else {
    ModelEntry e;
    e.cov = parse_covariance(require(doc, "covariance", ""), "covariance", cfg.sweep.has_value());
    if (cfg.sweep) {
      if (e.cov.kind == CovKind::exc1) throw ConfigError("sweep: needs an EXC2 or AR1 covariance");
      if ((e.cov.kind == CovKind::exc2) != doc["sweep"].contains("cac"))
        throw ConfigError("sweep: use 'cac' with EXC2 and 'lambda' with AR1");
    }
    e.model = base_model;
    e.contrast = base_contrast;
    cfg.models.entries.push_back(std::move(e));
  }
  guarded("robust", [&] {
    cfg.models.validate(T);
    return 0;
  });

  if (doc.contains("algorithm")) cfg.algorithm = parse_algorithm(as_string(doc["algorithm"], "algorithm"));
  cfg.m = int_or(doc, "m", "", cfg.m);
  cfg.restarts = int_or(doc, "restarts", "", cfg.restarts);
  if (doc.contains("seed")) {
    const json& sd = doc["seed"];
    if (!sd.is_number_unsigned() && !(sd.is_number_integer() && sd.get<std::int64_t>() >= 0))
      throw ConfigError("seed: expected a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  cfg.workers = int_or(doc, "workers", "", cfg.workers);
  cfg.tolerance = number_or(doc, "tolerance", "", cfg.tolerance);
  if (doc.contains("output")) {
    const json& o = doc["output"];
    if (o.contains("dir")) cfg.out_dir = as_string(o["dir"], "output.dir");
  }

  if (cfg.m < 1) throw ConfigError("m: must be >= 1");
  if (cfg.restarts < 1) throw ConfigError("restarts: must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
  if (!(cfg.tolerance > 0.0)) throw ConfigError("tolerance: must be > 0");
  return cfg;
}

json canonical_config(const RunConfig& cfg) {
  const DesignSpace& s = cfg.space;
  json units = json::array();
  for (const auto& u : s.units()) {
    json cells = json::array();
    for (const auto& c : u.cells) cells.push_back({{"period", c.period}, {"treated", c.treated}, {"count", c.count}});
    units.push_back({{"clusterId", u.cluster_id}, {"cells", cells}});
  }
  json entries = json::array();
  for (const auto& e : cfg.models.entries) {
    json m{{"family", std::string(to_string(e.model.family))},
           {"beta", vector_json(e.model.beta)},
           {"attenuate", e.model.attenuate}};
    entries.push_back({{"covariance", covariance_json(e.cov)},
                       {"model", m},
                       {"contrast", vector_json(e.contrast.size() ? e.contrast : treatment_contrast(s.periods()))},
                       {"prior", e.prior}});
  }
  json out{{"space",
            {{"T", s.periods()},
             {"maxReplication", s.max_replication()},
             {"granularity", std::string(to_string(s.granularity()))},
             {"units", units}}},
           {"models", {{"form", std::string(to_string(cfg.models.form))}, {"entries", entries}}},
           {"algorithm", std::string(to_string(cfg.algorithm))},
           {"m", cfg.m},
           {"restarts", cfg.restarts},
           {"seed", cfg.seed},
           {"tolerance", cfg.tolerance}};
  if (cfg.sweep) out["sweep"] = {{"icc", cfg.sweep->icc}, {"second", cfg.sweep->second}};
  return out;
}

std::string config_digest(const RunConfig& cfg) {
  const std::string text = canonical_config(cfg).dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

Design parse_design(const json& doc, const DesignSpace& space) {
  const auto& mult = require(doc, "multiplicity", "design");
  if (!mult.is_array()) throw ConfigError("design.multiplicity: expected an array of integers");
  Design d;
  for (size_t i = 0; i < mult.size(); ++i)
    d.multiplicity.push_back(as_int(mult[i], "design.multiplicity[" + std::to_string(i) + "]"));
  if (static_cast<int>(d.multiplicity.size()) != space.size())
    throw ConfigError("design.multiplicity: expected " + std::to_string(space.size()) + " entries, one per unit");
  for (int v : d.multiplicity)
    if (v < 0 || v > space.max_replication())
      throw ConfigError("design.multiplicity: entries must lie in [0, maxReplication]");
  return d;
}

}  // namespace crtopt::cli
