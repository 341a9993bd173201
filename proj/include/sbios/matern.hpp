#ifndef SBIOS_MATERN_HPP
#define SBIOS_MATERN_HPP

#include <vector>

#include <Eigen/Core>

#include "sbios/grid.hpp"

namespace sbios {

struct MaternParams {
  double rho = 2.0;  // range, > 0
  double nu = 0.2;   // smoothness, > 0
};

// Kernel argument convention. The model feeds C_nu the squared distance
// over rho; the conventional Matern uses the plain distance. Squared is
// the default.
enum class DistanceMode { Squared, Plain };

// C_nu(d) = 2^{1-nu}/Gamma(nu) (sqrt(2 nu) d)^nu K_nu(sqrt(2 nu) d), C_nu(0) = 1.
double matern_cnu(double d, double nu);

// Kernel value for a voxel pair at squared euclidean distance dist2.
double matern_kernel_value(double dist2, const MaternParams& params,
                           DistanceMode mode = DistanceMode::Squared);

// p_r x p_r symmetric kernel matrix over one region of the grid.
Eigen::MatrixXd build_region_kernel(const VoxelGrid& grid, int region_id,
                                    const MaternParams& params,
                                    DistanceMode mode = DistanceMode::Squared);

// Grid search minimizing the Frobenius distance to an empirical covariance;
// ties go to the smallest rho, then the smallest nu.
MaternParams tune_kernel_params(const Eigen::MatrixXd& empirical_cov,
                                const std::vector<double>& grid_rho,
                                const std::vector<double>& grid_nu,
                                const VoxelGrid& grid, int region_id,
                                DistanceMode mode = DistanceMode::Squared);

}  // namespace sbios

#endif
