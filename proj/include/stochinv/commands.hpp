#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochinv/config.hpp"
#include "stochinv/distributions.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/hier_bayes.hpp"
#include "stochinv/manifest.hpp"

namespace stochinv {

// Study recipes shared by the CLI and the end-to-end tests. Damage study:
// stacked Landgraf-Morrow map with Beta(2,2) generating inputs, the strain
// parameter observed on tensile specimens and the cycle count on a disjoint
// cyclic set. Curve study: six-parameter cyclic response with lognormal
// generating inputs whose sixth parameter carries numerically zero spread.
std::vector<DistributionSpec> damage_generation_marginals();
std::vector<DistributionSpec> toy_generation_marginals();
std::vector<PriorFamilySpec> damage_prior_family();
std::vector<PriorFamilySpec> toy_prior_family();

HierModel damage_hier_model(const Eigen::VectorXd& tensile,
                            const Eigen::VectorXd& cyclic,
                            double noise_tensile, double noise_cyclic);
HierModel toy_hier_model(std::shared_ptr<const ForwardModel> model,
                         const Eigen::MatrixXd& observations, double noise);

// One draw of a specimen parameter vector from the structural law at theta
// (truncated marginals, coupled by the copula when the model carries one).
Eigen::VectorXd draw_structural(const HierModel& model,
                                const Eigen::VectorXd& theta,
                                RandomSource& rng);

// Commands. Each writes its outputs plus manifest.json into the config's
// output directory and returns the manifest.
RunManifest cmd_generate(const RunConfig& config);
RunManifest cmd_fit_surrogate(const RunConfig& config);
RunManifest cmd_infer(const RunConfig& config);
RunManifest cmd_diagnose(const RunConfig& config);

// Joins the moment blocks of two comparison files into one CSV.
void cmd_compare(const std::string& path_a, const std::string& path_b,
                 const std::string& out_csv);

}  // namespace stochinv
