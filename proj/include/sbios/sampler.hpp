#ifndef SBIOS_SAMPLER_HPP
#define SBIOS_SAMPLER_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/basis.hpp"
#include "sbios/datastore.hpp"
#include "sbios/eval.hpp"
#include "sbios/model.hpp"
#include "sbios/stats.hpp"

namespace sbios {

enum class Algorithm { Gibbs, SgldZero, SgldImpute };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

struct StepSchedule {
  double a = 1e-4;
  double b = 1.0;
  double gamma_exp = 0.35;
};

// tau_t = a (b + t)^{-gamma}
double step_size(int64_t t, const StepSchedule& s);

enum class InitMode { Zero, One, Mua };

struct SamplerConfig {
  Algorithm algorithm = Algorithm::SgldZero;
  int64_t iterations = 5000;
  int64_t burn_in = 4000;
  int64_t subsample = 200;  // n_s
  int64_t eta_every = 10;   // t_I
  StepSchedule step;
  uint64_t seed = 1;
  int chains = 1;
  int threads = 1;
  int64_t thin_target = 1000;
  InitMode init = InitMode::Zero;
  bool shared_delta = false;
  int interaction_confounder = -1;  // >= 0 enables the second gated term
  Hyperparams hyper;
  double sigma_y2_init = 1.0;
  double sigma_beta2_init = 1.0;
  double sigma_gamma2_init = 1.0;
  double sigma_eta2_init = 1.0;
  double diag_fraction = 0.2;
  int64_t checkpoint_every = 0;

  void validate(int64_t min_batch_size) const;
  int H() const { return interaction_confounder >= 0 ? 2 : 1; }
};

struct DiagRecord {
  int64_t iteration = 0;
  double tau = 0.0;
  int batch = 0;
  double rss = 0.0;  // projected residual norm proxy (subsample / full data)
  bool eta_updated = false;
  int64_t peak_rss_bytes = 0;
  double elapsed_ms = 0.0;
};

struct ChainOutput {
  int chain_id = 0;
  int64_t retained = 0;
  int64_t thin = 1;
  std::vector<Eigen::VectorXd> pip;              // per delta term, length p
  std::vector<Eigen::MatrixXd> theta_beta_draws;  // per term, L x M
  Eigen::MatrixXd variance_draws;                 // 4 x M
  std::vector<std::vector<std::vector<uint8_t>>> delta_draws;  // term -> M of p
  std::vector<Eigen::VectorXd> beta_mean;        // per term, p
  std::vector<Eigen::VectorXd> beta_delta_mean;  // per term, p
  Eigen::MatrixXd gamma_mean;                    // p x m confounder images
  Eigen::VectorXd resid_series;                  // length M
  std::vector<DiagRecord> diagnostics;
  double elapsed_ms = 0.0;
  int64_t peak_rss = 0;
};

// Algorithm inputs resolved once per fit.
struct FitInputs {
  const BatchStore* store = nullptr;
  const BasisSet* basis = nullptr;
  const RegionIndex* regions = nullptr;
};

ChainOutput run_chain(const FitInputs& in, const SamplerConfig& config,
                      int chain_id, const std::string& work_dir,
                      int64_t resume_from = 0);

struct MultiChainResult {
  std::vector<ChainOutput> chains;
  std::optional<GelmanRubin> psrf;  // set when chains >= 2
};

MultiChainResult run_multichain(const FitInputs& in,
                                const SamplerConfig& config,
                                const std::string& out_dir);

// Serialized chain outputs under <dir>/chain_<id>/.
void save_chain_output(const std::string& dir, const ChainOutput& out);
ChainOutput load_chain_output(const std::string& dir);

}  // namespace sbios

#endif
