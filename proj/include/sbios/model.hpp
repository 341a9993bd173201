#ifndef SBIOS_MODEL_HPP
#define SBIOS_MODEL_HPP

#include <array>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sbios/basis.hpp"
#include "sbios/rng.hpp"
#include "sbios/stats.hpp"

namespace sbios {

struct Hyperparams {
  std::array<double, 2> ig_y{0.1, 0.1};
  std::array<double, 2> ig_eta{0.1, 0.1};
  std::array<double, 2> ig_gamma{0.1, 0.1};
  std::array<double, 2> ig_beta{0.1, 0.1};
  bool sigma_beta_sampled = true;
  double sigma_beta2_fixed = 0.01;
  double prior_incl = 0.5;

  void validate() const;
};

// All sampled parameters at one iteration (theta_eta lives in its own
// block store owned by the chain).
struct ModelState {
  int H = 1;
  bool shared_delta = false;
  std::vector<Eigen::VectorXd> theta_beta;  // H of stacked L
  Eigen::MatrixXd theta_gamma;              // L x m
  std::vector<std::vector<uint8_t>> delta;  // delta terms (1 if shared) of p
  Eigen::VectorXd prior_incl;               // p
  double sigma_y2 = 1.0;
  double sigma_beta2 = 1.0;
  double sigma_gamma2 = 1.0;
  double sigma_eta2 = 1.0;

  int delta_terms() const { return shared_delta ? 1 : H; }
  const std::vector<uint8_t>& delta_for(int h) const {
    return delta[shared_delta ? 0 : h];
  }
  std::vector<uint8_t>& delta_for(int h) { return delta[shared_delta ? 0 : h]; }

  void init(int H_, bool shared, Eigen::Index L, int m, int64_t p,
            double prior_p);
  void check_finite() const;  // throws divergence_error
};

// Q' y per region, concatenated to length sum(L_r).
Eigen::VectorXd project_outcome(const Eigen::VectorXd& y, const BasisSet& basis,
                                const RegionIndex& regions);

// D_delta v = Q'(delta .* (Q v)) without forming the L x L matrix.
Eigen::VectorXd apply_ddelta(const RegionBasis& rb,
                             const uint8_t* delta_region,
                             const Eigen::VectorXd& v);
Eigen::MatrixXd dense_ddelta(const RegionBasis& rb,
                             const uint8_t* delta_region);

// Gaussian conditional as (mean, lower-Cholesky of the precision); sampling
// solves L^T x = z.
struct GaussianFactor {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol_lower;
  Eigen::VectorXd sample(KeyedRng& rng) const;
};

// theta_beta conditional for one region/term. s_resid is
// sum_i X_hi (Y*_i - theta_eta_i - sum_k theta_gamma_k Z_ik - other-term),
// restricted to the region block.
GaussianFactor beta_full_conditional(const RegionBasis& rb,
                                     const uint8_t* delta_region,
                                     const Eigen::VectorXd& s_resid,
                                     double x_sumsq, double sigma_y2,
                                     double sigma_beta2);

// log prior + (n/n_s) * log subsample likelihood gradient for theta_beta.
Eigen::VectorXd beta_log_gradient(const RegionBasis& rb,
                                  const uint8_t* delta_region,
                                  const Eigen::VectorXd& s_resid_sub,
                                  double x_sumsq_sub,
                                  const Eigen::VectorXd& theta_beta_region,
                                  double sigma_y2, double sigma_beta2,
                                  double n_over_ns);

// Elementwise-Gaussian conditional over the stacked coefficient space.
struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::VectorXd sample(KeyedRng& rng) const;
};

// theta_gamma_k conditional; s_resid = sum_i Z_ik (Y*_i - theta_eta_i
// - sum_{k' != k} theta_gamma_k' Z_ik' - sum_h X_hi Ddelta_h theta_h).
DiagonalGaussian gamma_full_conditional(const Eigen::VectorXd& lambda,
                                        const Eigen::VectorXd& s_resid,
                                        double z_sumsq, double sigma_y2,
                                        double sigma_gamma2);

// theta_eta_i conditional; resid = Y*_i - sum_h X_hi Ddelta_h theta_h
// - theta_gamma Z_i.
DiagonalGaussian eta_full_conditional(const Eigen::VectorXd& lambda,
                                      const Eigen::VectorXd& resid,
                                      double sigma_y2, double sigma_eta2);

// P(delta(s)=1 | rest) for a single gated term:
// logistic(logit p + (2 beta r - beta^2 x_sumsq) / (2 sigma_y2)).
double delta_inclusion_probability(double prior_p, double beta_j, double r_j,
                                   double x_sumsq, double sigma_y2);

// Shared-delta version across H terms; cross products enter the quadratic.
// beta_j, r_j, length H; x_cross is sum_i X_hi X_h'i.
double delta_inclusion_probability_shared(double prior_p,
                                          const Eigen::VectorXd& beta_j,
                                          const Eigen::VectorXd& r_j,
                                          const Eigen::MatrixXd& x_cross,
                                          double sigma_y2);

// Conjugate IG draw for a variance given sum of squares and count.
double sample_variance_ig(KeyedRng& rng, const std::array<double, 2>& ig,
                          double rss, double count);

// Model-based draw for one missing outcome.
double impute_outcome_value(const std::vector<double>& beta_at_voxel,
                            const std::vector<uint8_t>& delta_at_voxel,
                            const Eigen::VectorXd& x_row,
                            const std::vector<double>& gamma_at_voxel,
                            const Eigen::VectorXd& z_row, double eta_at_voxel,
                            double sigma_y2, KeyedRng& rng);

}  // namespace sbios

#endif
