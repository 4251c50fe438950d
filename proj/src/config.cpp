#include "stochinv/config.hpp"

#include <cstdlib>
#include <fstream>

#include "stochinv/error.hpp"

namespace stochinv {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config: '" + field + "' " + what);
}

void reject_unknown(const json& j, const std::string& scope,
                    std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " +
                        scope);
    }
  }
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

std::string get_string(const json& j, const std::string& field) {
  if (!j.is_string()) fail(field, "must be a string");
  return j.get<std::string>();
}

double get_real(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "must be a number");
  return j.get<double>();
}

double get_positive(const json& j, const std::string& field) {
  const double v = get_real(j, field);
  if (!(v > 0.0)) fail(field, "must be positive");
  return v;
}

Eigen::Index get_count(const json& j, const std::string& field) {
  if (!j.is_number_integer()) fail(field, "must be an integer");
  const auto v = j.get<long long>();
  if (v < 1) fail(field, "must be at least 1");
  return static_cast<Eigen::Index>(v);
}

std::uint64_t get_seed(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (!j.is_number_integer()) fail(field, "must be a nonnegative integer");
  const auto v = j.get<long long>();
  if (v < 0) fail(field, "must be a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

double get_fraction(const json& j, const std::string& field) {
  const double v = get_real(j, field);
  if (!(v >= 0.0) || !(v < 1.0)) fail(field, "must lie in [0, 1)");
  return v;
}

SyntheticConfig parse_synthetic(const json& j) {
  reject_unknown(j, "'synthetic'",
                 {"recipe", "n_tensile", "n_cyclic", "noise_tensile",
                  "noise_cyclic", "n_curves", "n_points", "noise", "seed"});
  SyntheticConfig s;
  const json* v = find(j, "recipe");
  if (!v) fail("synthetic.recipe", "is required");
  s.recipe = get_string(*v, "synthetic.recipe");
  if (s.recipe != "damage" && s.recipe != "toy") {
    fail("synthetic.recipe", "must be 'damage' or 'toy'");
  }
  if ((v = find(j, "n_tensile"))) s.n_tensile = get_count(*v, "synthetic.n_tensile");
  if ((v = find(j, "n_cyclic"))) s.n_cyclic = get_count(*v, "synthetic.n_cyclic");
  if ((v = find(j, "noise_tensile"))) s.noise_tensile = get_positive(*v, "synthetic.noise_tensile");
  if ((v = find(j, "noise_cyclic"))) s.noise_cyclic = get_positive(*v, "synthetic.noise_cyclic");
  if ((v = find(j, "n_curves"))) s.n_curves = get_count(*v, "synthetic.n_curves");
  if ((v = find(j, "n_points"))) s.n_points = get_count(*v, "synthetic.n_points");
  if ((v = find(j, "noise"))) s.noise = get_positive(*v, "synthetic.noise");
  if ((v = find(j, "seed"))) s.seed = get_seed(*v, "synthetic.seed");
  return s;
}

DatasetConfig parse_dataset(const json& j) {
  reject_unknown(j, "'dataset'",
                 {"tensile", "cyclic", "observations", "provenance",
                  "noise_tensile", "noise_cyclic", "noise"});
  DatasetConfig d;
  const json* v;
  if ((v = find(j, "tensile"))) d.tensile = get_string(*v, "dataset.tensile");
  if ((v = find(j, "cyclic"))) d.cyclic = get_string(*v, "dataset.cyclic");
  if ((v = find(j, "observations"))) d.observations = get_string(*v, "dataset.observations");
  if ((v = find(j, "provenance"))) d.provenance = get_string(*v, "dataset.provenance");
  if ((v = find(j, "noise_tensile"))) d.noise_tensile = get_positive(*v, "dataset.noise_tensile");
  if ((v = find(j, "noise_cyclic"))) d.noise_cyclic = get_positive(*v, "dataset.noise_cyclic");
  if ((v = find(j, "noise"))) d.noise = get_positive(*v, "dataset.noise");
  if (d.tensile.empty() && d.cyclic.empty() && d.observations.empty()) {
    fail("dataset", "must name at least one data file");
  }
  return d;
}

SurrogateConfig parse_surrogate(const json& j) {
  reject_unknown(j, "'surrogate'",
                 {"degree", "n_train", "cv_degrees", "k_folds"});
  SurrogateConfig s;
  const json* v;
  if ((v = find(j, "degree"))) {
    s.degree = static_cast<int>(get_count(*v, "surrogate.degree"));
  }
  if ((v = find(j, "n_train"))) s.n_train = get_count(*v, "surrogate.n_train");
  if ((v = find(j, "cv_degrees"))) {
    if (!v->is_array()) fail("surrogate.cv_degrees", "must be an array");
    for (const auto& d : *v) {
      s.cv_degrees.push_back(
          static_cast<int>(get_count(d, "surrogate.cv_degrees")));
    }
  }
  if ((v = find(j, "k_folds"))) s.k_folds = get_count(*v, "surrogate.k_folds");
  return s;
}

McmcConfig parse_mcmc(const json& j) {
  reject_unknown(j, "'mcmc'",
                 {"steps", "burn_in_fraction", "band_lo", "band_hi", "thin",
                  "pilot_steps", "max_tune_rounds", "n_sim", "seed"});
  McmcConfig m;
  const json* v;
  if ((v = find(j, "steps"))) m.steps = get_count(*v, "mcmc.steps");
  if ((v = find(j, "burn_in_fraction"))) {
    m.burn_in_fraction = get_fraction(*v, "mcmc.burn_in_fraction");
  }
  if ((v = find(j, "band_lo"))) m.band_lo = get_real(*v, "mcmc.band_lo");
  if ((v = find(j, "band_hi"))) m.band_hi = get_real(*v, "mcmc.band_hi");
  if (!(0.0 < m.band_lo && m.band_lo < m.band_hi && m.band_hi < 1.0)) {
    fail("mcmc.band_lo", "and 'mcmc.band_hi' must satisfy 0 < lo < hi < 1");
  }
  if ((v = find(j, "thin"))) m.thin = get_count(*v, "mcmc.thin");
  if ((v = find(j, "pilot_steps"))) m.pilot_steps = get_count(*v, "mcmc.pilot_steps");
  if ((v = find(j, "max_tune_rounds"))) {
    m.max_tune_rounds = static_cast<int>(get_count(*v, "mcmc.max_tune_rounds"));
  }
  if ((v = find(j, "n_sim"))) m.n_sim = get_count(*v, "mcmc.n_sim");
  if ((v = find(j, "seed"))) m.seed = get_seed(*v, "mcmc.seed");
  return m;
}

}  // namespace

std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::bayes:
      return "bayes";
    case Formulation::transform:
      return "transform";
    default:
      return "both";
  }
}

RunConfig RunConfig::parse(const json& j) {
  if (!j.is_object()) throw ConfigError("config: root must be an object");
  reject_unknown(j, "the config root",
                 {"experiment", "model", "formulation", "output_dir",
                  "synthetic", "dataset", "surrogate", "mcmc"});
  RunConfig c;
  const json* v = find(j, "experiment");
  if (!v) fail("experiment", "is required");
  c.experiment = get_string(*v, "experiment");
  if (c.experiment.empty()) fail("experiment", "must not be empty");

  v = find(j, "model");
  if (!v) fail("model", "is required");
  c.model = get_string(*v, "model");
  if (c.model != "landgraf_morrow" && c.model != "toy_cyclic") {
    fail("model", "must be 'landgraf_morrow' or 'toy_cyclic'");
  }

  if ((v = find(j, "formulation"))) {
    const std::string f = get_string(*v, "formulation");
    if (f == "bayes") {
      c.formulation = Formulation::bayes;
    } else if (f == "transform") {
      c.formulation = Formulation::transform;
    } else if (f == "both") {
      c.formulation = Formulation::both;
    } else {
      fail("formulation", "must be 'bayes', 'transform', or 'both'");
    }
  }

  if ((v = find(j, "output_dir"))) {
    c.output_dir = get_string(*v, "output_dir");
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
  }

  const json* syn = find(j, "synthetic");
  const json* dat = find(j, "dataset");
  if (syn && dat) {
    throw ConfigError(
        "config: 'synthetic' and 'dataset' are mutually exclusive");
  }
  if (!syn && !dat) {
    throw ConfigError("config: one of 'synthetic' or 'dataset' is required");
  }
  if (syn) {
    if (!syn->is_object()) fail("synthetic", "must be an object");
    c.has_synthetic = true;
    c.synthetic = parse_synthetic(*syn);
    const bool damage_model = c.model == "landgraf_morrow";
    if (damage_model != (c.synthetic.recipe == "damage")) {
      fail("synthetic.recipe", "does not match the declared model");
    }
  }
  if (dat) {
    if (!dat->is_object()) fail("dataset", "must be an object");
    c.has_dataset = true;
    c.dataset = parse_dataset(*dat);
  }

  if ((v = find(j, "surrogate"))) {
    if (!v->is_object()) fail("surrogate", "must be an object");
    c.surrogate = parse_surrogate(*v);
  }
  if ((v = find(j, "mcmc"))) {
    if (!v->is_object()) fail("mcmc", "must be an object");
    c.mcmc = parse_mcmc(*v);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse(j);
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["model"] = model;
  j["formulation"] = to_string(formulation);
  j["output_dir"] = output_dir;
  if (has_synthetic) {
    json s;
    s["recipe"] = synthetic.recipe;
    if (synthetic.recipe == "damage") {
      s["n_tensile"] = synthetic.n_tensile;
      s["n_cyclic"] = synthetic.n_cyclic;
      s["noise_tensile"] = synthetic.noise_tensile;
      s["noise_cyclic"] = synthetic.noise_cyclic;
    } else {
      s["n_curves"] = synthetic.n_curves;
      s["n_points"] = synthetic.n_points;
      s["noise"] = synthetic.noise;
    }
    s["seed"] = synthetic.seed;
    j["synthetic"] = s;
  }
  if (has_dataset) {
    json d;
    if (!dataset.tensile.empty()) d["tensile"] = dataset.tensile;
    if (!dataset.cyclic.empty()) d["cyclic"] = dataset.cyclic;
    if (!dataset.observations.empty()) {
      d["observations"] = dataset.observations;
    }
    if (!dataset.provenance.empty()) d["provenance"] = dataset.provenance;
    d["noise_tensile"] = dataset.noise_tensile;
    d["noise_cyclic"] = dataset.noise_cyclic;
    d["noise"] = dataset.noise;
    j["dataset"] = d;
  }
  json s;
  s["degree"] = surrogate.degree;
  s["n_train"] = surrogate.n_train;
  s["cv_degrees"] = surrogate.cv_degrees;
  s["k_folds"] = surrogate.k_folds;
  j["surrogate"] = s;
  json m;
  m["steps"] = mcmc.steps;
  m["burn_in_fraction"] = mcmc.burn_in_fraction;
  m["band_lo"] = mcmc.band_lo;
  m["band_hi"] = mcmc.band_hi;
  m["thin"] = mcmc.thin;
  m["pilot_steps"] = mcmc.pilot_steps;
  m["max_tune_rounds"] = mcmc.max_tune_rounds;
  m["n_sim"] = mcmc.n_sim;
  m["seed"] = mcmc.seed;
  j["mcmc"] = m;
  return j;
}

void apply_overrides(RunConfig& config,
                     const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& output_dir) {
  std::optional<std::uint64_t> s = seed;
  std::optional<std::string> out = output_dir;
  if (!s) {
    if (const char* env = std::getenv("STOCHINV_SEED")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0') {
        throw ConfigError("config: STOCHINV_SEED must be an integer");
      }
      s = static_cast<std::uint64_t>(v);
    }
  }
  if (!out) {
    if (const char* env = std::getenv("STOCHINV_OUT")) {
      if (*env == '\0') {
        throw ConfigError("config: STOCHINV_OUT must not be empty");
      }
      out = std::string(env);
    }
  }
  if (s) {
    config.synthetic.seed = *s;
    config.mcmc.seed = *s;
  }
  if (out) config.output_dir = *out;
}

}  // namespace stochinv
