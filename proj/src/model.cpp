#include "sbios/model.hpp"

#include <cmath>

#include "sbios/errors.hpp"

namespace sbios {

void Hyperparams::validate() const {
  for (const auto& ig : {ig_y, ig_eta, ig_gamma, ig_beta})
    if (ig[0] <= 0.0 || ig[1] <= 0.0)
      throw config_error("inverse-gamma hyperparameters must be positive");
  if (!sigma_beta_sampled && sigma_beta2_fixed <= 0.0)
    throw config_error("fixed sigma_beta2 must be positive");
  if (prior_incl <= 0.0 || prior_incl >= 1.0)
    throw config_error("prior inclusion probability must be in (0,1)");
}

void ModelState::init(int H_, bool shared, Eigen::Index L, int m, int64_t p,
                      double prior_p) {
  H = H_;
  shared_delta = shared;
  theta_beta.assign(H, Eigen::VectorXd::Zero(L));
  theta_gamma = Eigen::MatrixXd::Zero(L, m);
  delta.assign(delta_terms(), std::vector<uint8_t>(p, 1));
  prior_incl = Eigen::VectorXd::Constant(p, prior_p);
}

void ModelState::check_finite() const {
  auto bad = [](double v) { return !std::isfinite(v) || std::abs(v) > 1e8; };
  for (const auto& th : theta_beta)
    if (!th.allFinite() || th.cwiseAbs().maxCoeff() > 1e8)
      throw divergence_error("theta_beta diverged");
  if (theta_gamma.size() > 0 &&
      (!theta_gamma.allFinite() || theta_gamma.cwiseAbs().maxCoeff() > 1e8))
    throw divergence_error("theta_gamma diverged");
  for (double v : {sigma_y2, sigma_beta2, sigma_gamma2, sigma_eta2})
    if (bad(v) || v < 1e-12 || v > 1e12)
      throw divergence_error("variance parameter left [1e-12, 1e12]");
}

Eigen::VectorXd project_outcome(const Eigen::VectorXd& y, const BasisSet& basis,
                                const RegionIndex& regions) {
  Eigen::VectorXd out(basis.total_L());
  for (int r = 0; r < regions.num_regions(); ++r) {
    const auto& ids = regions.voxels[r];
    Eigen::VectorXd yreg(static_cast<Eigen::Index>(ids.size()));
    for (size_t j = 0; j < ids.size(); ++j) yreg[j] = y[ids[j]];
    out.segment(basis.offsets[r], basis.regions[r].L_r()).noalias() =
        basis.regions[r].Qt * yreg;
  }
  return out;
}

Eigen::VectorXd apply_ddelta(const RegionBasis& rb,
                             const uint8_t* delta_region,
                             const Eigen::VectorXd& v) {
  Eigen::VectorXd img = rb.Q * v;
  for (Eigen::Index j = 0; j < img.size(); ++j)
    if (!delta_region[j]) img[j] = 0.0;
  return rb.Qt * img;
}

Eigen::MatrixXd dense_ddelta(const RegionBasis& rb,
                             const uint8_t* delta_region) {
  // Q' diag(delta) Q accumulated over active rows only
  const Eigen::Index L = rb.L_r();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(L, L);
  for (Eigen::Index j = 0; j < rb.p_r(); ++j)
    if (delta_region[j]) d.selfadjointView<Eigen::Lower>().rankUpdate(rb.Qt.col(j));
  return d.selfadjointView<Eigen::Lower>();
}

Eigen::VectorXd GaussianFactor::sample(KeyedRng& rng) const {
  Eigen::VectorXd z = rng.normals(mean.size());
  return mean + chol_lower.transpose()
                    .triangularView<Eigen::Upper>()
                    .solve(z);
}

GaussianFactor beta_full_conditional(const RegionBasis& rb,
                                     const uint8_t* delta_region,
                                     const Eigen::VectorXd& s_resid,
                                     double x_sumsq, double sigma_y2,
                                     double sigma_beta2) {
  if (sigma_y2 <= 0.0 || sigma_beta2 <= 0.0)
    throw config_error("variances must be positive");
  const Eigen::Index L = rb.L_r();
  const Eigen::MatrixXd dd = dense_ddelta(rb, delta_region);
  Eigen::MatrixXd prec = (x_sumsq / sigma_y2) * (dd * dd);
  prec.diagonal() += (rb.lambda.array().inverse() / sigma_beta2).matrix();

  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    prec.diagonal().array() += 1e-10;  // jitter, applied once
    llt.compute(prec);
    if (llt.info() != Eigen::Success)
      throw data_error("beta conditional precision not positive definite");
  }
  GaussianFactor g;
  g.chol_lower = llt.matrixL();
  g.mean = llt.solve(dd * s_resid / sigma_y2);
  (void)L;
  return g;
}

Eigen::VectorXd beta_log_gradient(const RegionBasis& rb,
                                  const uint8_t* delta_region,
                                  const Eigen::VectorXd& s_resid_sub,
                                  double x_sumsq_sub,
                                  const Eigen::VectorXd& theta_beta_region,
                                  double sigma_y2, double sigma_beta2,
                                  double n_over_ns) {
  // prior: -theta / (sigma_beta2 * lambda)
  Eigen::VectorXd g =
      -(theta_beta_region.array() / (sigma_beta2 * rb.lambda.array())).matrix();
  // likelihood, via mask-then-project so the cost stays O(p_r L_r)
  const Eigen::VectorXd dd_theta =
      apply_ddelta(rb, delta_region, theta_beta_region);
  const Eigen::VectorXd dd_dd_theta = apply_ddelta(rb, delta_region, dd_theta);
  const Eigen::VectorXd dd_s = apply_ddelta(rb, delta_region, s_resid_sub);
  g.noalias() +=
      (n_over_ns / sigma_y2) * (dd_s - x_sumsq_sub * dd_dd_theta);
  return g;
}

Eigen::VectorXd DiagonalGaussian::sample(KeyedRng& rng) const {
  Eigen::VectorXd z = rng.normals(mean.size());
  return mean + sd.cwiseProduct(z);
}

DiagonalGaussian gamma_full_conditional(const Eigen::VectorXd& lambda,
                                        const Eigen::VectorXd& s_resid,
                                        double z_sumsq, double sigma_y2,
                                        double sigma_gamma2) {
  DiagonalGaussian g;
  Eigen::ArrayXd var =
      (lambda.array().inverse() / sigma_gamma2 + z_sumsq / sigma_y2).inverse();
  g.sd = var.sqrt().matrix();
  g.mean = (var * (s_resid.array() / sigma_y2)).matrix();
  return g;
}

DiagonalGaussian eta_full_conditional(const Eigen::VectorXd& lambda,
                                      const Eigen::VectorXd& resid,
                                      double sigma_y2, double sigma_eta2) {
  DiagonalGaussian g;
  Eigen::ArrayXd var =
      (lambda.array().inverse() / sigma_eta2 + 1.0 / sigma_y2).inverse();
  g.sd = var.sqrt().matrix();
  g.mean = (var * (resid.array() / sigma_y2)).matrix();
  return g;
}

static double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double delta_inclusion_probability(double prior_p, double beta_j, double r_j,
                                   double x_sumsq, double sigma_y2) {
  const double logit_p = std::log(prior_p) - std::log1p(-prior_p);
  const double expo =
      (2.0 * beta_j * r_j - beta_j * beta_j * x_sumsq) / (2.0 * sigma_y2);
  return logistic(logit_p + expo);
}

double delta_inclusion_probability_shared(double prior_p,
                                          const Eigen::VectorXd& beta_j,
                                          const Eigen::VectorXd& r_j,
                                          const Eigen::MatrixXd& x_cross,
                                          double sigma_y2) {
  const double logit_p = std::log(prior_p) - std::log1p(-prior_p);
  const double lin = 2.0 * beta_j.dot(r_j);
  const double quad = beta_j.dot(x_cross * beta_j);
  return logistic(logit_p + (lin - quad) / (2.0 * sigma_y2));
}

double sample_variance_ig(KeyedRng& rng, const std::array<double, 2>& ig,
                          double rss, double count) {
  if (ig[0] <= 0.0 || ig[1] <= 0.0)
    throw config_error("inverse-gamma hyperparameters must be positive");
  return rng.inverse_gamma(ig[0] + 0.5 * count, ig[1] + 0.5 * rss);
}

double impute_outcome_value(const std::vector<double>& beta_at_voxel,
                            const std::vector<uint8_t>& delta_at_voxel,
                            const Eigen::VectorXd& x_row,
                            const std::vector<double>& gamma_at_voxel,
                            const Eigen::VectorXd& z_row, double eta_at_voxel,
                            double sigma_y2, KeyedRng& rng) {
  double mean = eta_at_voxel;
  for (size_t h = 0; h < beta_at_voxel.size(); ++h)
    if (delta_at_voxel[h]) mean += x_row[static_cast<Eigen::Index>(h)] * beta_at_voxel[h];
  for (size_t k = 0; k < gamma_at_voxel.size(); ++k)
    mean += gamma_at_voxel[k] * z_row[static_cast<Eigen::Index>(k)];
  return mean + std::sqrt(sigma_y2) * rng.normal();
}

}  // namespace sbios
