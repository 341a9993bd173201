#ifndef SBIOS_DRIVER_HPP
#define SBIOS_DRIVER_HPP

// Orchestration shared by the CLI and the python bindings: run manifests,
// result directories, pooled posterior summaries.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "sbios/sampler.hpp"

namespace sbios {

nlohmann::json sampler_to_json(const SamplerConfig& c);
void sampler_from_json(const nlohmann::json& j, SamplerConfig& c);

// Runs chains per the manifest (store manifest or run manifest) with JSON
// overrides, writes run_manifest.json, chain outputs, and summary.json.
// Returns the summary.
nlohmann::json fit_run(const std::string& manifest_path,
                       const nlohmann::json& overrides, std::string out_dir,
                       bool resume = false);

// Chain outputs pooled across chains (weighted by retained draws).
struct LoadedResults {
  nlohmann::json run_manifest;
  std::vector<ChainOutput> chains;
  std::string algorithm;
  std::string data_manifest;
  Eigen::VectorXd pip;
  Eigen::VectorXd beta_mean;
  Eigen::VectorXd beta_delta_mean;
  Eigen::VectorXd beta_tilde_mean;  // empty unless two terms
  Eigen::MatrixXd gamma_mean;
  std::vector<std::vector<uint8_t>> delta_draws;
};

LoadedResults load_results(const std::string& dir);

// voxels.csv / regions.csv / metrics when truth is given; returns metrics.
nlohmann::json evaluate_run(const std::vector<std::string>& results_dirs,
                            const std::string& truth_path, double pip_cutoff,
                            double target_fpr, double op_threshold,
                            const std::string& out_dir);

void compare_run(const std::string& dir_a, const std::string& dir_b,
                 double pip_cutoff, double op_threshold,
                 const std::string& out_csv);

void report_run(const std::string& results_dir, const std::string& out_path);

}  // namespace sbios

#endif
