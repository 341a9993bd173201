#ifndef SBIOS_EVAL_HPP
#define SBIOS_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/datastore.hpp"
#include "sbios/grid.hpp"

namespace sbios {

// Streaming mean of binary draws; exact rational count / draws.
class PipAccumulator {
 public:
  explicit PipAccumulator(int64_t p) : counts_(p, 0) {}
  void add(const std::vector<uint8_t>& delta);
  int64_t draws() const { return draws_; }
  Eigen::VectorXd pip() const;

 private:
  std::vector<int64_t> counts_;
  int64_t draws_ = 0;
};

Eigen::VectorXd compute_pip(const std::vector<std::vector<uint8_t>>& draws);

struct RlarSummary {
  // draws x R matrix of per-draw active fractions, plus mean and 95% CI
  Eigen::MatrixXd draws;
  Eigen::VectorXd mean;
  Eigen::VectorXd lo;  // 2.5%
  Eigen::VectorXd hi;  // 97.5%
};

RlarSummary compute_rlar(const std::vector<std::vector<uint8_t>>& delta_draws,
                         const RegionIndex& regions);

struct EffectSums {
  Eigen::VectorXd neg_sum;  // per region
  Eigen::VectorXi neg_count;
  Eigen::VectorXd pos_sum;
  Eigen::VectorXi pos_count;
};

// Voxels with PIP < threshold count as zero effect.
EffectSums effect_sums(const Eigen::VectorXd& beta_mean,
                       const Eigen::VectorXd& pip, const RegionIndex& regions,
                       double pip_threshold = 0.95);

struct PercentDecline {
  double percent = 0.0;
  bool defined = false;
};

// Percent change in expected signal when age moves a0 -> a1 (years), given
// posterior means at one voxel and the exposure standardization constants.
PercentDecline percentage_decline(double beta, double beta_tilde,
                                  double gamma1, double gamma2, double c1_mean,
                                  double c2_mean, double age_mean,
                                  double age_sd, double a0_years,
                                  double a1_years);

struct GelmanRubin {
  double psrf = 0.0;
  double upper = 0.0;
};

// Standard PSRF over equal-length chains with the df correction.
GelmanRubin gelman_rubin(const std::vector<Eigen::VectorXd>& chains);

struct MuaResult {
  Eigen::VectorXd coefficient;  // exposure coefficient per voxel
  Eigen::MatrixXd coef_all;     // (2 + m) x p, [intercept, X, Z...]
  Eigen::VectorXd t_stat;
  Eigen::VectorXd p_value;
  Eigen::VectorXd p_bh;
  std::vector<uint8_t> valid;  // 0 for rank-deficient / excluded voxels
};

// Per-voxel OLS of zero-imputed outcomes on [1, X, Z]; BH across the
// group mask.
MuaResult mua_fit(const BatchStore& store,
                  const std::vector<uint8_t>& group_mask);

// Benjamini-Hochberg step-up adjustment.
Eigen::VectorXd bh_adjust(const Eigen::VectorXd& p_values);

// TPR at a target FPR from a piecewise-linear ROC over `thresholds`
// operating points (plus the (0,0) and (1,1) anchors). When
// `scores_are_pvalues` is true, thresholds are the quantiles of the scores
// and selection is score <= t; otherwise selection is score >= t with
// evenly spaced thresholds in [0, 1].
double tpr_at_fpr(const Eigen::VectorXd& scores,
                  const std::vector<uint8_t>& truth, double target_fpr = 0.1,
                  int thresholds = 20, bool scores_are_pvalues = false);

struct FdrTpr {
  double fdr = 0.0;
  double tpr = 0.0;
  int64_t selected = 0;
};

FdrTpr fdr_tpr_at_pip(const Eigen::VectorXd& pip,
                      const std::vector<uint8_t>& truth, double cutoff = 0.95);

// selection given directly (used for p-value based selections)
FdrTpr fdr_tpr_selected(const std::vector<uint8_t>& selected,
                        const std::vector<uint8_t>& truth);

}  // namespace sbios

#endif
