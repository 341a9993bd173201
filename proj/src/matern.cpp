#include "sbios/matern.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sbios/errors.hpp"

namespace sbios {

double matern_cnu(double d, double nu) {
  if (!std::isfinite(d) || !std::isfinite(nu))
    throw domain_error("matern_cnu: non-finite input");
  if (d < 0.0) throw domain_error("matern_cnu: negative distance");
  if (nu <= 0.0) throw domain_error("matern_cnu: nu must be positive");
  if (d == 0.0) return 1.0;
  const double x = std::sqrt(2.0 * nu) * d;
  // below ~1e-8 the limit value 1 is exact to double precision
  if (x < 1e-8) return 1.0;
  const double k = std::cyl_bessel_k(nu, x);
  if (!std::isfinite(k)) return 0.0;  // K_nu underflowed at large x
  const double v =
      std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * k;
  // clamp tiny negative round-off
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

double matern_kernel_value(double dist2, const MaternParams& params,
                           DistanceMode mode) {
  if (params.rho <= 0.0 || params.nu <= 0.0)
    throw config_error("matern params must be positive");
  const double arg = mode == DistanceMode::Squared
                         ? dist2 / params.rho
                         : std::sqrt(dist2) / params.rho;
  return matern_cnu(arg, params.nu);
}

Eigen::MatrixXd build_region_kernel(const VoxelGrid& grid, int region_id,
                                    const MaternParams& params,
                                    DistanceMode mode) {
  std::vector<int> ids;
  for (Eigen::Index j = 0; j < grid.num_voxels(); ++j)
    if (grid.region_labels[j] == region_id) ids.push_back(static_cast<int>(j));
  if (ids.empty())
    throw config_error("region " + std::to_string(region_id) + " is empty");
  const Eigen::Index pr = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd k(pr, pr);
  for (Eigen::Index a = 0; a < pr; ++a) {
    k(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < pr; ++b) {
      const double d2 = (grid.coords.row(ids[a]) - grid.coords.row(ids[b])).squaredNorm();
      const double v = matern_kernel_value(d2, params, mode);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

MaternParams tune_kernel_params(const Eigen::MatrixXd& empirical_cov,
                                const std::vector<double>& grid_rho,
                                const std::vector<double>& grid_nu,
                                const VoxelGrid& grid, int region_id,
                                DistanceMode mode) {
  if (grid_rho.empty() || grid_nu.empty())
    throw config_error("tune_kernel_params: empty parameter grid");
  if (empirical_cov.rows() != empirical_cov.cols())
    throw config_error("tune_kernel_params: empirical covariance not square");
  // ascending scan + strict improvement implements the tie rule
  std::vector<double> rhos = grid_rho, nus = grid_nu;
  std::sort(rhos.begin(), rhos.end());
  std::sort(nus.begin(), nus.end());
  MaternParams best;
  double best_err = std::numeric_limits<double>::infinity();
  bool first = true;
  for (double rho : rhos) {
    for (double nu : nus) {
      const MaternParams cand{rho, nu};
      const Eigen::MatrixXd k = build_region_kernel(grid, region_id, cand, mode);
      if (k.rows() != empirical_cov.rows())
        throw config_error("tune_kernel_params: covariance size does not match region");
      const double err = (empirical_cov - k).norm();
      if (first || err < best_err) {
        best = cand;
        best_err = err;
        first = false;
      }
    }
  }
  return best;
}

}  // namespace sbios
