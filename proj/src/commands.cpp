#include "stochinv/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <utility>

#include "stochinv/batch.hpp"
#include "stochinv/csv.hpp"
#include "stochinv/diagnostics.hpp"
#include "stochinv/error.hpp"
#include "stochinv/pca.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/transform.hpp"

namespace stochinv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "stochinv 1.0.0";

// Fixed stream assignments; every command that regenerates a pipeline piece
// sees the same draws.
constexpr std::uint64_t kStreamGenerate = 0;
constexpr std::uint64_t kStreamCorrelation = 1;
constexpr std::uint64_t kStreamBayesChain = 2;
constexpr std::uint64_t kStreamTransformChain = 3;
constexpr std::uint64_t kStreamPredictive = 4;
constexpr std::uint64_t kStreamDesign = 5;

class PhaseTimer {
  using Clock = std::chrono::steady_clock;

 public:
  PhaseTimer() : start_(Clock::now()), last_(start_) {}

  double lap() {
    const auto now = Clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

  double total() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  Clock::time_point start_, last_;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + std::string(e.what()));
  }
  return j;
}

RunManifest start_manifest(const RunConfig& config, std::uint64_t seed) {
  RunManifest m;
  m.resolved_config = config.to_json();
  m.seed = seed;
  m.version = kVersion;
  return m;
}

// Single numeric column, any header name.
Eigen::VectorXd read_column(const std::string& path) {
  const csv::Table t = csv::read(path);
  if (t.header.size() != 1) {
    throw DataError("'" + path + "' must hold exactly one column, has " +
                    std::to_string(t.header.size()));
  }
  if (t.rows.rows() == 0) throw DataError("empty input: " + path);
  return t.rows.col(0);
}

std::vector<DistributionSpec> training_marginals(const ForwardModel& model) {
  const Box& box = model.feasible_domain();
  std::vector<DistributionSpec> out;
  out.reserve(static_cast<std::size_t>(box.dim()));
  for (Eigen::Index j = 0; j < box.dim(); ++j) {
    out.push_back(DistributionSpec::uniform(box.lo(j), box.hi(j)));
  }
  return out;
}

struct DamageData {
  Eigen::VectorXd tensile;     // strain observable
  Eigen::VectorXd cyclic;      // cycle counts
  Eigen::MatrixXd provenance;  // specimen rows x (S, s) when known
};

DamageData damage_data(const RunConfig& config) {
  DamageData d;
  if (config.has_synthetic) {
    const auto& syn = config.synthetic;
    LandgrafMorrowModel model;
    RandomSource rng(syn.seed, kStreamGenerate);
    Eigen::VectorXd sig(2);
    sig << syn.noise_tensile, syn.noise_cyclic;
    const ObservationEnsemble ens = generate_synthetic_ensemble(
        model, damage_generation_marginals(),
        static_cast<std::size_t>(syn.n_tensile + syn.n_cyclic), NoiseSpec(sig),
        rng);
    d.tensile = ens.data.row(0).head(syn.n_tensile).transpose();
    d.cyclic = ens.data.row(1).tail(syn.n_cyclic).transpose();
    d.provenance = ens.provenance.transpose();
    return d;
  }
  const auto& ds = config.dataset;
  if (ds.tensile.empty() || ds.cyclic.empty()) {
    throw ConfigError(
        "config: the damage study needs 'dataset.tensile' and "
        "'dataset.cyclic'");
  }
  d.tensile = read_column(ds.tensile);
  d.cyclic = read_column(ds.cyclic);
  if (!ds.provenance.empty()) {
    const csv::Table t = csv::read(ds.provenance);
    if (t.rows.rows() == 0) throw DataError("empty input: " + ds.provenance);
    if (t.rows.cols() != 2) {
      throw DataError("'" + ds.provenance + "' must hold two columns (S, s)");
    }
    d.provenance = t.rows;
  }
  return d;
}

struct ToyData {
  Eigen::MatrixXd observations;  // n_points x n_curves
  Eigen::MatrixXd provenance;    // curve rows x 6 when known
};

ToyData toy_data(const RunConfig& config) {
  ToyData d;
  if (config.has_synthetic) {
    const auto& syn = config.synthetic;
    ToyCyclicModel model(syn.n_points);
    RandomSource rng(syn.seed, kStreamGenerate);
    const ObservationEnsemble ens = generate_synthetic_ensemble(
        model, toy_generation_marginals(),
        static_cast<std::size_t>(syn.n_curves), NoiseSpec(syn.noise), rng);
    d.observations = ens.data;
    d.provenance = ens.provenance.transpose();
    return d;
  }
  const auto& ds = config.dataset;
  if (ds.observations.empty()) {
    throw ConfigError("config: the curve study needs 'dataset.observations'");
  }
  d.observations = read_ensemble_csv(ds.observations);
  if (!ds.provenance.empty()) {
    d.provenance = read_provenance_csv(ds.provenance).transpose();
  }
  return d;
}

double damage_noise_tensile(const RunConfig& c) {
  return c.has_synthetic ? c.synthetic.noise_tensile : c.dataset.noise_tensile;
}
double damage_noise_cyclic(const RunConfig& c) {
  return c.has_synthetic ? c.synthetic.noise_cyclic : c.dataset.noise_cyclic;
}
double toy_noise(const RunConfig& c) {
  return c.has_synthetic ? c.synthetic.noise : c.dataset.noise;
}

HierConfig hier_config(const McmcConfig& m) {
  HierConfig h;
  h.n_steps = static_cast<std::size_t>(m.steps);
  h.burn_in_fraction = m.burn_in_fraction;
  h.thin = static_cast<std::size_t>(m.thin);
  h.pilot_steps = static_cast<std::size_t>(m.pilot_steps);
  h.max_tune_rounds = static_cast<std::size_t>(m.max_tune_rounds);
  return h;
}

TransformConfig transform_config(const McmcConfig& m) {
  TransformConfig t;
  t.n_steps = m.steps;
  t.burn_in_fraction = m.burn_in_fraction;
  t.thin = m.thin;
  t.pilot_steps = m.pilot_steps;
  t.max_tune_rounds = m.max_tune_rounds;
  return t;
}

json tuning_json(const TuneResult& tuning) {
  json j;
  j["rounds"] = tuning.rounds;
  j["scales"] = tuning.scales;
  j["acceptances"] = tuning.acceptances;
  return j;
}

// Rows strided down to at most cap, first row always kept.
Eigen::Index sample_stride(Eigen::Index rows, Eigen::Index cap) {
  return std::max<Eigen::Index>(1, rows / cap);
}

// Retained-theta draws pushed through the structural law and the model:
// one specimen draw per strided posterior state, columns (x..., z...).
Eigen::MatrixXd posterior_push(const HierModel& model, const Chain& chain,
                               RandomSource& rng) {
  const auto post = chain.post_burn_in();
  const Eigen::Index stride = sample_stride(post.rows(), 2000);
  const Eigen::Index nx = model.n_x();
  const Eigen::Index nt = model.n_theta();
  std::vector<Eigen::VectorXd> draws;
  for (Eigen::Index i = 0; i < post.rows(); i += stride) {
    const Eigen::VectorXd theta = post.row(i).tail(nt).transpose();
    draws.push_back(draw_structural(model, theta, rng));
  }
  Eigen::MatrixXd xs(nx, static_cast<Eigen::Index>(draws.size()));
  for (std::size_t k = 0; k < draws.size(); ++k) {
    xs.col(static_cast<Eigen::Index>(k)) = draws[k];
  }
  const Eigen::MatrixXd zs = eval_batch(*model.model, xs);
  Eigen::MatrixXd out(xs.cols(), nx + zs.rows());
  out.leftCols(nx) = xs.transpose();
  out.rightCols(zs.rows()) = zs.transpose();
  return out;
}

// Post-burn-in transform states with the model responses appended.
Eigen::MatrixXd chain_push(const ForwardModel& model, const Chain& chain) {
  const auto post = chain.post_burn_in();
  const Eigen::Index stride = sample_stride(post.rows(), 2000);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < post.rows(); i += stride) rows.push_back(i);
  Eigen::MatrixXd xs(post.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    xs.col(static_cast<Eigen::Index>(k)) = post.row(rows[k]).transpose();
  }
  const Eigen::MatrixXd zs = eval_batch(model, xs);
  Eigen::MatrixXd out(xs.cols(), xs.rows() + zs.rows());
  out.leftCols(xs.rows()) = xs.transpose();
  out.rightCols(zs.rows()) = zs.transpose();
  return out;
}

csv::Table correlations_csv(const ComparisonTable& table) {
  csv::Table t;
  t.header.reserve(table.correlations.size());
  t.rows.resize(2, static_cast<Eigen::Index>(table.correlations.size()));
  for (std::size_t i = 0; i < table.correlations.size(); ++i) {
    const auto& c = table.correlations[i];
    t.header.push_back(c.set + ":" + c.var_a + ":" + c.var_b);
    const auto col = static_cast<Eigen::Index>(i);
    t.rows(0, col) = c.corr;
    t.rows(1, col) = c.defined ? 1.0 : 0.0;
  }
  return t;
}

void write_comparison(const std::string& dir, const ComparisonTable& table,
                      RunManifest& manifest, const json& extra) {
  const csv::Table mt = table.moments_csv();
  csv::write(dir + "/moments.csv", mt.header, mt.rows);
  manifest.add_output(dir, "moments.csv");
  if (!table.correlations.empty()) {
    const csv::Table ct = correlations_csv(table);
    csv::write(dir + "/correlations.csv", ct.header, ct.rows);
    manifest.add_output(dir, "correlations.csv");
  }
  json j = table.to_json();
  if (!extra.is_null()) j["response_errors"] = extra;
  write_json_file(dir + "/comparison.json", j);
  manifest.add_output(dir, "comparison.json");
}

std::shared_ptr<const SurrogateMap> load_surrogate(const std::string& path) {
  if (!fs::exists(path)) {
    throw IoError("missing '" + path +
                  "'; run fit-surrogate with this output directory first");
  }
  const json j = read_json_file(path);
  if (!j.contains("surrogate") || !j.contains("box")) {
    throw DataError("'" + path + "' lacks the surrogate or box block");
  }
  PCESurrogate pce = PCESurrogate::parse(j.at("surrogate"));
  const auto lo = j.at("box").at("lo").get<std::vector<double>>();
  const auto hi = j.at("box").at("hi").get<std::vector<double>>();
  Box box{Eigen::Map<const Eigen::VectorXd>(lo.data(),
                                            static_cast<Eigen::Index>(lo.size())),
          Eigen::Map<const Eigen::VectorXd>(hi.data(),
                                            static_cast<Eigen::Index>(hi.size()))};
  return std::make_shared<SurrogateMap>(std::move(pce), std::move(box));
}

// Mean and unbiased std per response component over ensemble columns.
void column_stats(const Eigen::MatrixXd& data, Eigen::VectorXd& mean,
                  Eigen::VectorXd& std_out) {
  const auto n = static_cast<double>(data.cols());
  mean = data.rowwise().mean();
  std_out = ((data.colwise() - mean).rowwise().squaredNorm() / (n - 1.0))
                .cwiseSqrt();
}

json response_error_json(const Eigen::VectorXd& data_mean,
                         const Eigen::VectorXd& data_std,
                         const Eigen::MatrixXd& pushed) {
  Eigen::VectorXd m, s;
  column_stats(pushed, m, s);
  const Mape pm = mape(data_mean, m);
  const Mape ps = mape(data_std, s);
  json j;
  j["mae_mean"] = mae(data_mean, m);
  j["mape_mean"] = pm.percent;
  j["mape_mean_excluded"] = pm.excluded;
  j["mae_std"] = mae(data_std, s);
  j["mape_std"] = ps.percent;
  j["mape_std_excluded"] = ps.excluded;
  j["n_pushed"] = pushed.cols();
  return j;
}

void infer_damage(const RunConfig& config, RunManifest& manifest,
                  PhaseTimer& timer) {
  const std::string& dir = config.output_dir;
  const DamageData data = damage_data(config);
  manifest.add_timing("data", timer.lap());

  std::vector<SampleSet> sets;
  std::vector<CorrelationRequest> pairs;
  if (data.provenance.size() > 0) {
    sets.push_back(paired_set("data", {"S", "s"}, data.provenance));
    const Eigen::Index n_c = data.cyclic.size();
    if (data.provenance.rows() >= n_c) {
      // The cyclic specimens are the tail of the generating inputs, so
      // their cycle counts pair with the inputs that produced them.
      Eigen::MatrixXd dc(n_c, 3);
      dc.col(0) = data.provenance.col(0).tail(n_c);
      dc.col(1) = data.provenance.col(1).tail(n_c);
      dc.col(2) = data.cyclic;
      sets.push_back(paired_set("data_cyclic", {"S", "s", "N_f"}, dc));
      pairs.push_back({"data", "S", "s"});
      pairs.push_back({"data_cyclic", "S", "N_f"});
    }
  } else {
    sets.push_back(
        unpaired_set("data", {"S", "N_f"}, {data.tensile, data.cyclic}));
  }

  const bool run_bayes = config.formulation != Formulation::transform;
  const bool run_transform = config.formulation != Formulation::bayes;
  auto model = std::make_shared<LandgrafMorrowModel>();

  if (run_bayes) {
    const HierModel hm =
        damage_hier_model(data.tensile, data.cyclic,
                          damage_noise_tensile(config),
                          damage_noise_cyclic(config));
    RandomSource rng(config.mcmc.seed, kStreamBayesChain);
    HierConfig hc = hier_config(config.mcmc);
    RandomSource init_rng = rng.derive(1);
    hc.init = data_consistent_init(hm, init_rng);
    const HierResult res = run_hier_inference(hm, hc, rng);
    res.chain.to_csv(dir + "/bayes_chain.csv");
    json summary = res.summary.to_json();
    summary["chain"] = res.chain.summary();
    summary["tuning"] = tuning_json(res.tuning);
    write_json_file(dir + "/bayes_summary.json", summary);
    manifest.add_timing("bayes", timer.lap());
    manifest.add_output(dir, "bayes_chain.csv");
    manifest.add_output(dir, "bayes_summary.json");

    RandomSource push_rng(config.mcmc.seed, kStreamPredictive);
    const Eigen::MatrixXd pushed = posterior_push(hm, res.chain, push_rng);
    Eigen::MatrixXd cols(pushed.rows(), 3);
    cols << pushed.col(0), pushed.col(1), pushed.col(3);
    sets.push_back(paired_set("bayes", {"S", "s", "N_f"}, cols));
    pairs.push_back({"bayes", "S", "s"});
    pairs.push_back({"bayes", "S", "N_f"});
    manifest.add_timing("bayes_push", timer.lap());
  }

  if (run_transform) {
    RandomSource sim_rng(config.mcmc.seed, kStreamCorrelation);
    DataDensity density = build_kernel_copula_density(
        data.tensile, data.cyclic, *model, model->feasible_domain(),
        config.mcmc.n_sim, sim_rng);
    TransformProblem problem{model, std::move(density),
                             model->feasible_domain()};
    RandomSource rng(config.mcmc.seed, kStreamTransformChain);
    const TransformResult res =
        sample_parameters(problem, transform_config(config.mcmc), rng);
    res.to_csv(dir + "/transform_samples.csv");
    json summary = res.summary();
    summary["data_density"] = problem.density.to_json();
    write_json_file(dir + "/transform_summary.json", summary);
    manifest.add_timing("transform", timer.lap());
    manifest.add_output(dir, "transform_samples.csv");
    manifest.add_output(dir, "transform_summary.json");

    const Eigen::MatrixXd pushed = chain_push(*model, res.chain);
    Eigen::MatrixXd cols(pushed.rows(), 3);
    cols << pushed.col(0), pushed.col(1), pushed.col(3);
    sets.push_back(paired_set("transform", {"S", "s", "N_f"}, cols));
    pairs.push_back({"transform", "S", "s"});
    pairs.push_back({"transform", "S", "N_f"});
    manifest.add_timing("transform_push", timer.lap());
  }

  write_comparison(dir, moment_table(sets, pairs), manifest, json());
  manifest.add_timing("comparison", timer.lap());
}

void infer_toy(const RunConfig& config, RunManifest& manifest,
               PhaseTimer& timer) {
  const std::string& dir = config.output_dir;
  const ToyData data = toy_data(config);
  manifest.add_timing("data", timer.lap());

  const auto smap = load_surrogate(dir + "/surrogate.json");
  if (smap->output_dim() != data.observations.rows()) {
    throw DataError("surrogate responds with " +
                    std::to_string(smap->output_dim()) +
                    " components but the data holds " +
                    std::to_string(data.observations.rows()));
  }

  std::vector<std::string> vars;
  for (Eigen::Index j = 0; j < smap->input_dim(); ++j) {
    vars.push_back("x_" + std::to_string(j + 1));
  }
  std::vector<SampleSet> sets;
  if (data.provenance.size() > 0) {
    sets.push_back(paired_set("data", vars, data.provenance));
  }
  Eigen::VectorXd data_mean, data_std;
  column_stats(data.observations, data_mean, data_std);

  const bool run_bayes = config.formulation != Formulation::transform;
  const bool run_transform = config.formulation != Formulation::bayes;
  json response_errors;

  if (run_bayes) {
    const HierModel hm =
        toy_hier_model(smap, data.observations, toy_noise(config));
    RandomSource rng(config.mcmc.seed, kStreamBayesChain);
    HierConfig hc = hier_config(config.mcmc);
    RandomSource init_rng = rng.derive(1);
    hc.init = data_consistent_init(hm, init_rng);
    const HierResult res = run_hier_inference(hm, hc, rng);
    res.chain.to_csv(dir + "/bayes_chain.csv");
    json summary = res.summary.to_json();
    summary["chain"] = res.chain.summary();
    summary["tuning"] = tuning_json(res.tuning);
    write_json_file(dir + "/bayes_summary.json", summary);
    manifest.add_timing("bayes", timer.lap());
    manifest.add_output(dir, "bayes_chain.csv");
    manifest.add_output(dir, "bayes_summary.json");

    RandomSource push_rng(config.mcmc.seed, kStreamPredictive);
    const Eigen::MatrixXd pushed = posterior_push(hm, res.chain, push_rng);
    const Eigen::Index nx = hm.n_x();
    sets.push_back(paired_set("bayes", vars, pushed.leftCols(nx)));
    response_errors["bayes"] = response_error_json(
        data_mean, data_std, pushed.rightCols(pushed.cols() - nx).transpose());
    manifest.add_timing("bayes_push", timer.lap());
  }

  if (run_transform) {
    DataDensity density =
        build_pca_data_density(data.observations, smap->input_dim());
    TransformProblem problem{smap, std::move(density),
                             smap->feasible_domain()};
    RandomSource rng(config.mcmc.seed, kStreamTransformChain);
    const TransformResult res =
        sample_parameters(problem, transform_config(config.mcmc), rng);
    res.to_csv(dir + "/transform_samples.csv");
    json summary = res.summary();
    summary["data_density"] = problem.density.to_json();
    write_json_file(dir + "/transform_summary.json", summary);
    manifest.add_timing("transform", timer.lap());
    manifest.add_output(dir, "transform_samples.csv");
    manifest.add_output(dir, "transform_summary.json");

    const Eigen::MatrixXd pushed = chain_push(*smap, res.chain);
    const Eigen::Index nx = smap->input_dim();
    sets.push_back(paired_set("transform", vars, pushed.leftCols(nx)));
    response_errors["transform"] = response_error_json(
        data_mean, data_std, pushed.rightCols(pushed.cols() - nx).transpose());
    manifest.add_timing("transform_push", timer.lap());
  }

  write_comparison(dir, moment_table(sets, {}), manifest, response_errors);
  manifest.add_timing("comparison", timer.lap());
}

// Chain rebuilt from its CSV; burn-in is recomputed from the config
// fraction, matching how the chain was produced.
Chain read_chain_csv(const std::string& path, double burn_in_fraction) {
  const csv::Table t = csv::read(path);
  if (t.rows.rows() == 0) throw DataError("empty input: " + path);
  if (t.header.size() < 4 || t.header[0] != "step" || t.header[1] != "logp") {
    throw DataError("'" + path + "' does not look like a chain file");
  }
  Chain chain;
  const Eigen::Index kept = t.rows.rows();
  const Eigen::Index dim = t.rows.cols() - 3;
  chain.states = t.rows.rightCols(dim);
  chain.log_densities = t.rows.col(1);
  chain.accepted.resize(static_cast<std::size_t>(kept));
  double accepted_post = 0.0;
  chain.burn_in = static_cast<Eigen::Index>(burn_in_fraction *
                                            static_cast<double>(kept));
  for (Eigen::Index i = 0; i < kept; ++i) {
    chain.accepted[static_cast<std::size_t>(i)] = t.rows(i, 2) != 0.0;
    if (i >= chain.burn_in) accepted_post += t.rows(i, 2);
  }
  chain.thin = kept > 1 ? static_cast<std::size_t>(t.rows(1, 0) - t.rows(0, 0))
                        : 1;
  chain.total_steps = static_cast<std::size_t>(t.rows(kept - 1, 0));
  chain.acceptance_rate =
      accepted_post / static_cast<double>(kept - chain.burn_in);
  return chain;
}

// Long-format density curves: one block of grid rows per column of draws.
void write_kde_csv(const std::string& path, const Eigen::MatrixXd& draws,
                   const Box& box, Eigen::Index n_grid) {
  const Eigen::Index d = draws.cols();
  Eigen::MatrixXd rows(d * n_grid, 3);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd grid =
        Eigen::VectorXd::LinSpaced(n_grid, box.lo(j), box.hi(j));
    const Eigen::VectorXd pdf = kde_normal(draws.col(j), grid);
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      rows(j * n_grid + g, 0) = static_cast<double>(j + 1);
      rows(j * n_grid + g, 1) = grid(g);
      rows(j * n_grid + g, 2) = pdf(g);
    }
  }
  csv::write(path, {"parameter", "t", "pdf"}, rows);
}

// Specimen-block draws pooled over a strided posterior subsample.
Eigen::MatrixXd pooled_specimen_draws(const Chain& chain,
                                      const HierModel& model) {
  const auto post = chain.post_burn_in();
  const Eigen::Index stride = sample_stride(post.rows(), 500);
  const Eigen::Index n = model.n_specimens();
  const Eigen::Index nx = model.n_x();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < post.rows(); i += stride) rows.push_back(i);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()) * n, nx);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const HierState state =
        unflatten_state(post.row(rows[k]).transpose(), model);
    out.middleRows(static_cast<Eigen::Index>(k) * n, n) = state.X;
  }
  return out;
}

// The hierarchical recipe the chain on disk was produced with, rebuilt from
// the same config, so state layout and structural families line up.
HierModel diagnose_hier_model(const RunConfig& config) {
  if (config.model == "landgraf_morrow") {
    const DamageData d = damage_data(config);
    return damage_hier_model(d.tensile, d.cyclic, damage_noise_tensile(config),
                             damage_noise_cyclic(config));
  }
  const ToyData d = toy_data(config);
  auto model = std::make_shared<ToyCyclicModel>(d.observations.rows());
  return toy_hier_model(model, d.observations, toy_noise(config));
}

void write_envelopes_csv(const std::string& path, const Chain& chain,
                         const HierModel& model) {
  const auto bands = envelope_pdfs(chain, model);
  const Eigen::Index n_grid = bands.empty() ? 0 : bands[0].grid.size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(bands.size()) * n_grid, 5);
  for (std::size_t j = 0; j < bands.size(); ++j) {
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      const Eigen::Index r = static_cast<Eigen::Index>(j) * n_grid + g;
      rows(r, 0) = static_cast<double>(j + 1);
      rows(r, 1) = bands[j].grid(g);
      rows(r, 2) = bands[j].lo(g);
      rows(r, 3) = bands[j].hi(g);
      rows(r, 4) = bands[j].map_pdf(g);
    }
  }
  csv::write(path, {"parameter", "t", "lo", "hi", "map"}, rows);
}

}  // namespace

std::vector<DistributionSpec> damage_generation_marginals() {
  return {DistributionSpec::beta(2.0, 2.0, 0.1, 1.2),
          DistributionSpec::beta(2.0, 2.0, 1.0, 2.8)};
}

std::vector<DistributionSpec> toy_generation_marginals() {
  // The sixth parameter keeps a numerically zero spread instead of a point
  // mass so the generation path stays one code path.
  const double mean[6] = {0.444, 0.263, 0.386, 0.381, 0.283, 0.240};
  const double std_[6] = {0.052, 0.105, 0.048, 0.095, 0.044, 1e-12};
  std::vector<DistributionSpec> out;
  for (int j = 0; j < 6; ++j) {
    out.push_back(DistributionSpec::lognormal(mean[j], std_[j]));
  }
  return out;
}

std::vector<PriorFamilySpec> damage_prior_family() {
  return {PriorFamilySpec::beta(0.1, 1.2, 0.1, 15.0, 0.1, 15.0),
          PriorFamilySpec::beta(1.0, 2.8, 0.1, 15.0, 0.1, 15.0)};
}

std::vector<PriorFamilySpec> toy_prior_family() {
  // Hyperprior boxes span the weakly informative prior moments plus or
  // minus one uniform half-width (sqrt(3) sigma), floored away from zero.
  const double mm[6] = {0.444, 0.263, 0.397, 0.381, 0.228, 0.520};
  const double ms[6] = {0.128, 0.182, 0.146, 0.165, 0.132, 0.300};
  const double sm[6] = {0.102, 0.145, 0.082, 0.131, 0.076, 0.300};
  const double ss[6] = {0.037, 0.053, 0.046, 0.048, 0.031, 0.173};
  const double w = std::sqrt(3.0);
  const auto floored = [](double v) { return v <= 0.0 ? 0.02 : v; };
  std::vector<PriorFamilySpec> out;
  for (int j = 0; j < 6; ++j) {
    out.push_back(PriorFamilySpec::lognormal(
        floored(mm[j] - w * ms[j]), mm[j] + w * ms[j],
        floored(sm[j] - w * ss[j]), sm[j] + w * ss[j]));
  }
  return out;
}

HierModel damage_hier_model(const Eigen::VectorXd& tensile,
                            const Eigen::VectorXd& cyclic,
                            double noise_tensile, double noise_cyclic) {
  HierModel m;
  m.model = std::make_shared<LandgrafMorrowModel>();
  m.priors = damage_prior_family();
  m.use_copula = true;
  Experiment tens;
  tens.name = "tensile";
  tens.components = {0};
  tens.data = tensile.transpose();
  tens.sigma_e = noise_tensile;
  Experiment cyc;
  cyc.name = "cyclic";
  cyc.components = {1};
  cyc.data = cyclic.transpose();
  cyc.sigma_e = noise_cyclic;
  m.experiments = {tens, cyc};
  return m;
}

HierModel toy_hier_model(std::shared_ptr<const ForwardModel> model,
                         const Eigen::MatrixXd& observations, double noise) {
  HierModel m;
  m.model = std::move(model);
  m.priors = toy_prior_family();
  Experiment e;
  e.name = "cyclic_curve";
  for (Eigen::Index c = 0; c < observations.rows(); ++c) {
    e.components.push_back(c);
  }
  e.data = observations;
  e.sigma_e = noise;
  m.experiments = {e};
  return m;
}

Eigen::VectorXd draw_structural(const HierModel& model,
                                const Eigen::VectorXd& theta,
                                RandomSource& rng) {
  const Box& box = model.model->feasible_domain();
  const Eigen::Index nx = model.n_x();
  Eigen::VectorXd u(nx);
  if (model.use_copula) {
    const GaussianCopula copula(theta(theta.size() - 1));
    const auto [u1, u2] = copula.sample(rng);
    u << u1, u2;
  } else {
    for (Eigen::Index j = 0; j < nx; ++j) u(j) = rng.uniform01();
  }
  Eigen::VectorXd x(nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    const DistributionSpec spec = model.marginal(j, theta);
    // Inverse of the box-truncated CDF, so the draw follows the same
    // truncated law the posterior density uses.
    const double f_lo = spec.cdf(box.lo(j));
    const double z = spec.cdf(box.hi(j)) - f_lo;
    if (!(z > 0.0)) {
      throw NumericalError(
          "draw_structural: the structural law has no mass inside the "
          "feasible box");
    }
    x(j) = std::clamp(spec.quantile(f_lo + u(j) * z), box.lo(j), box.hi(j));
  }
  return x;
}

RunManifest cmd_generate(const RunConfig& config) {
  if (!config.has_synthetic) {
    throw ConfigError("config: generate needs a 'synthetic' block");
  }
  PhaseTimer timer;
  ensure_dir(config.output_dir);
  RunManifest manifest = start_manifest(config, config.synthetic.seed);
  const std::string& dir = config.output_dir;

  if (config.synthetic.recipe == "damage") {
    const DamageData d = damage_data(config);
    csv::write(dir + "/tensile.csv", {"value"}, d.tensile);
    csv::write(dir + "/cyclic.csv", {"value"}, d.cyclic);
    csv::write(dir + "/provenance.csv", {"S", "s"}, d.provenance);
    manifest.add_timing("generate", timer.lap());
    manifest.add_output(dir, "tensile.csv");
    manifest.add_output(dir, "cyclic.csv");
    manifest.add_output(dir, "provenance.csv");
  } else {
    const ToyData d = toy_data(config);
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < d.observations.cols(); ++j) {
      header.push_back("specimen_" + std::to_string(j + 1));
    }
    csv::write(dir + "/observations.csv", header, d.observations);
    std::vector<std::string> pheader;
    for (Eigen::Index j = 0; j < d.provenance.cols(); ++j) {
      pheader.push_back("x_" + std::to_string(j + 1));
    }
    csv::write(dir + "/provenance.csv", pheader, d.provenance);
    manifest.add_timing("generate", timer.lap());
    manifest.add_output(dir, "observations.csv");
    manifest.add_output(dir, "provenance.csv");
  }
  manifest.wall_seconds = timer.total();
  manifest.write(dir + "/manifest.json");
  return manifest;
}

RunManifest cmd_fit_surrogate(const RunConfig& config) {
  PhaseTimer timer;
  ensure_dir(config.output_dir);
  const std::string& dir = config.output_dir;

  std::shared_ptr<const ForwardModel> model;
  if (config.model == "landgraf_morrow") {
    model = std::make_shared<LandgrafMorrowModel>();
  } else {
    const Eigen::Index n_points =
        config.has_synthetic ? config.synthetic.n_points : 568;
    model = std::make_shared<ToyCyclicModel>(n_points);
  }
  const std::vector<DistributionSpec> train = training_marginals(*model);
  const auto n_train = static_cast<std::size_t>(config.surrogate.n_train);

  RunConfig resolved = config;
  int degree = config.surrogate.degree;
  json cv_json;
  double cv_seconds = 0.0;
  const bool ran_cv = !config.surrogate.cv_degrees.empty();
  if (ran_cv) {
    RandomSource cv_rng =
        RandomSource(config.mcmc.seed, kStreamDesign).derive(1);
    const CVResult cv = cross_validate_degree(
        *model, train, config.surrogate.cv_degrees, n_train,
        static_cast<std::size_t>(config.surrogate.k_folds), cv_rng);
    degree = cv.selected_degree;
    resolved.surrogate.degree = degree;

    std::size_t k = 0;
    for (const auto& e : cv.table) k = std::max(k, e.fold_rmse.size());
    std::vector<std::string> header = {"degree", "mean_rmse", "failed"};
    for (std::size_t f = 0; f < k; ++f) {
      header.push_back("fold_" + std::to_string(f + 1));
    }
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(cv.table.size()),
        static_cast<Eigen::Index>(3 + k));
    for (std::size_t i = 0; i < cv.table.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      rows(r, 0) = cv.table[i].degree;
      rows(r, 1) = cv.table[i].mean_rmse;
      rows(r, 2) = cv.table[i].failed ? 1.0 : 0.0;
      for (std::size_t f = 0; f < cv.table[i].fold_rmse.size(); ++f) {
        rows(r, static_cast<Eigen::Index>(3 + f)) = cv.table[i].fold_rmse[f];
      }
    }
    csv::write(dir + "/cv_table.csv", header, rows);
    cv_json["selected_degree"] = cv.selected_degree;
    cv_json["candidates"] = config.surrogate.cv_degrees;
    cv_seconds = timer.lap();
  }

  RandomSource fit_rng(config.mcmc.seed, kStreamDesign);
  const FitResult fit = fit_regression(*model, train, degree, n_train, fit_rng);
  const double fit_seconds = timer.lap();

  json sj;
  sj["model"] = model->name();
  sj["surrogate"] = fit.surrogate.to_json();
  const Box& box = model->feasible_domain();
  sj["box"]["lo"] = std::vector<double>(box.lo.data(), box.lo.data() + box.dim());
  sj["box"]["hi"] = std::vector<double>(box.hi.data(), box.hi.data() + box.dim());
  sj["degree"] = degree;
  sj["n_train"] = config.surrogate.n_train;
  sj["rmse"] = fit.report.rmse;
  sj["rel_rmse"] = fit.report.rel_rmse;
  sj["undersampled"] = fit.report.undersampled;
  if (!cv_json.is_null()) sj["cv"] = cv_json;
  write_json_file(dir + "/surrogate.json", sj);

  RunManifest manifest = start_manifest(resolved, config.mcmc.seed);
  if (ran_cv) {
    manifest.add_timing("cv", cv_seconds);
    manifest.add_output(dir, "cv_table.csv");
  }
  manifest.add_timing("fit", fit_seconds);
  manifest.add_output(dir, "surrogate.json");
  manifest.wall_seconds = timer.total();
  manifest.write(dir + "/manifest.json");
  return manifest;
}

RunManifest cmd_infer(const RunConfig& config) {
  PhaseTimer timer;
  ensure_dir(config.output_dir);
  RunManifest manifest = start_manifest(config, config.mcmc.seed);
  if (config.model == "landgraf_morrow") {
    infer_damage(config, manifest, timer);
  } else {
    infer_toy(config, manifest, timer);
  }
  manifest.wall_seconds = timer.total();
  manifest.write(config.output_dir + "/manifest.json");
  return manifest;
}

RunManifest cmd_diagnose(const RunConfig& config) {
  PhaseTimer timer;
  ensure_dir(config.output_dir);
  const std::string& dir = config.output_dir;
  RunManifest manifest = start_manifest(config, config.mcmc.seed);

  std::shared_ptr<const ForwardModel> model;
  if (config.model == "landgraf_morrow") {
    model = std::make_shared<LandgrafMorrowModel>();
  } else {
    const Eigen::Index n_points =
        config.has_synthetic ? config.synthetic.n_points : 568;
    model = std::make_shared<ToyCyclicModel>(n_points);
  }

  // Sensitivity on the surrogate-training design, so it costs one batch of
  // model runs that the fit already pays for.
  RandomSource rng(config.mcmc.seed, kStreamDesign);
  const Eigen::MatrixXd design = lhs_sample(
      training_marginals(*model), static_cast<std::size_t>(config.surrogate.n_train),
      rng);
  const Eigen::MatrixXd ys = eval_batch(*model, design.transpose());
  SensitivityReport report = srcc(design, ys.transpose());
  report.provenance = "training latin hypercube, n=" +
                      std::to_string(config.surrogate.n_train) +
                      ", seed=" + std::to_string(config.mcmc.seed);
  const csv::Table st = report.to_csv();
  csv::write(dir + "/srcc.csv", st.header, st.rows);
  write_json_file(dir + "/srcc_meta.json", report.meta());
  manifest.add_timing("sensitivity", timer.lap());
  manifest.add_output(dir, "srcc.csv");
  manifest.add_output(dir, "srcc_meta.json");

  const Box& box = model->feasible_domain();
  json chain_summary = json::object();

  const std::string bayes_path = dir + "/bayes_chain.csv";
  if (fs::exists(bayes_path)) {
    const Chain chain =
        read_chain_csv(bayes_path, config.mcmc.burn_in_fraction);
    const ChainDiagnostics d = diagnostics(chain);

    const Eigen::Index stride = sample_stride(d.running_means.rows(), 1000);
    std::vector<Eigen::Index> checkpoints;
    for (Eigen::Index i = 0; i < d.running_means.rows(); i += stride) {
      checkpoints.push_back(i);
    }
    std::vector<std::string> header = {"checkpoint"};
    for (Eigen::Index j = 0; j < d.running_means.cols(); ++j) {
      header.push_back("x_" + std::to_string(j + 1));
    }
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(checkpoints.size()),
                         1 + d.running_means.cols());
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      rows(r, 0) = static_cast<double>(checkpoints[k] + 1);
      rows.block(r, 1, 1, d.running_means.cols()) =
          d.running_means.row(checkpoints[k]);
    }
    csv::write(dir + "/running_mean.csv", header, rows);
    manifest.add_output(dir, "running_mean.csv");

    chain_summary["bayes"]["acceptance_rate"] = d.acceptance_rate;
    chain_summary["bayes"]["ess"] =
        std::vector<double>(d.ess.data(), d.ess.data() + d.ess.size());
    chain_summary["bayes"]["ess_min"] = d.ess.minCoeff();
    chain_summary["bayes"]["kept"] = chain.kept();
    chain_summary["bayes"]["burn_in_rows"] = chain.burn_in;

    const HierModel hm = diagnose_hier_model(config);
    if (chain.dim() == hm.state_dim()) {
      write_kde_csv(dir + "/kde_bayes.csv", pooled_specimen_draws(chain, hm),
                    box, 201);
      manifest.add_output(dir, "kde_bayes.csv");
      write_envelopes_csv(dir + "/envelopes.csv", chain, hm);
      manifest.add_output(dir, "envelopes.csv");
    }
    manifest.add_timing("bayes_diagnostics", timer.lap());
  }

  const std::string transform_path = dir + "/transform_samples.csv";
  if (fs::exists(transform_path)) {
    const csv::Table t = csv::read(transform_path);
    if (t.rows.rows() == 0) throw DataError("empty input: " + transform_path);
    // Columns x_1..x_d,logp; the draws are already post burn-in.
    const Eigen::Index d = t.rows.cols() - 1;
    if (d == box.dim()) {
      write_kde_csv(dir + "/kde_transform.csv", t.rows.leftCols(d), box, 201);
      manifest.add_output(dir, "kde_transform.csv");
    }
    const Eigen::MatrixXd ess_in = t.rows.leftCols(d);
    const Eigen::VectorXd ess = effective_sample_size(ess_in);
    chain_summary["transform"]["ess"] =
        std::vector<double>(ess.data(), ess.data() + ess.size());
    chain_summary["transform"]["ess_min"] = ess.minCoeff();
    chain_summary["transform"]["kept"] = t.rows.rows();
    manifest.add_timing("transform_diagnostics", timer.lap());
  }

  write_json_file(dir + "/diagnose_summary.json", chain_summary);
  manifest.add_output(dir, "diagnose_summary.json");
  manifest.wall_seconds = timer.total();
  manifest.write(dir + "/manifest.json");
  return manifest;
}

void cmd_compare(const std::string& path_a, const std::string& path_b,
                 const std::string& out_csv) {
  const auto label = [](const std::string& path) {
    const fs::path p(path);
    const std::string stem = p.stem().string();
    if (stem == "comparison" && p.has_parent_path()) {
      const std::string parent = p.parent_path().filename().string();
      if (!parent.empty()) return parent;
    }
    return stem;
  };
  struct Entry {
    std::string name;
    double mean, std;
    double n;
  };
  std::vector<Entry> entries;
  for (const auto& [path, tag] :
       {std::pair<std::string, std::string>{path_a, label(path_a)},
        std::pair<std::string, std::string>{path_b, label(path_b)}}) {
    const json j = read_json_file(path);
    if (!j.contains("moments") || !j.at("moments").is_array()) {
      throw DataError("'" + path + "' has no moments block");
    }
    for (const auto& m : j.at("moments")) {
      entries.push_back({tag + "." + m.at("set").get<std::string>() + ":" +
                             m.at("var").get<std::string>(),
                         m.at("mean").get<double>(), m.at("std").get<double>(),
                         m.at("n").get<double>()});
    }
  }
  if (entries.empty()) {
    throw DataError("no moment rows found in '" + path_a + "' and '" + path_b +
                    "'");
  }
  std::vector<std::string> header;
  Eigen::MatrixXd rows(3, static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    header.push_back(entries[i].name);
    const auto c = static_cast<Eigen::Index>(i);
    rows(0, c) = entries[i].mean;
    rows(1, c) = entries[i].std;
    rows(2, c) = entries[i].n;
  }
  csv::write(out_csv, header, rows);
}

}  // namespace stochinv
