#ifndef SBIOS_BASIS_HPP
#define SBIOS_BASIS_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/grid.hpp"
#include "sbios/matern.hpp"

namespace sbios {

// Truncated orthonormal eigenbasis for one region. Q' Q = I to 1e-10,
// eigenvalues nonincreasing and positive.
struct RegionBasis {
  int region_id = 0;
  Eigen::MatrixXd Q;       // p_r x L_r
  Eigen::MatrixXd Qt;      // L_r x p_r, columns contiguous per voxel
  Eigen::VectorXd lambda;  // L_r

  Eigen::Index p_r() const { return Q.rows(); }
  Eigen::Index L_r() const { return Q.cols(); }
  void finalize() { Qt = Q.transpose(); }
};

enum class TruncationMode {
  EnergyFraction,  // smallest L with cumulative eigenvalue fraction >= value
  CountFraction,   // L = round(value * p_r)
};

struct TruncationSpec {
  TruncationMode mode = TruncationMode::EnergyFraction;
  double value = 0.9;
};

// Dense symmetric eigendecomposition, truncation, QR re-orthonormalization,
// and a sign convention (first nonzero entry of each column positive).
RegionBasis eigenbasis(const Eigen::MatrixXd& kernel, double energy);
RegionBasis eigenbasis_truncated(const Eigen::MatrixXd& kernel,
                                 const TruncationSpec& spec);

// Basis for the modified squared-exponential kernel
//   k(x,x') = exp{-a(|x|^2+|x'|^2) - b|x-x'|^2}
// via its Hermite-function eigenpairs (one kernel over the whole grid).
// Coordinates are centered and scaled to unit half-width before evaluation.
// L = C(degree + d, d) multi-indices ordered by total degree.
RegionBasis modified_se_basis(const Eigen::MatrixXd& coords, double a, double b,
                              int degree);

struct BasisSet {
  std::vector<RegionBasis> regions;  // aligned with RegionIndex order
  std::vector<Eigen::Index> offsets;  // stacked coefficient offsets, size R+1

  Eigen::Index total_L() const { return offsets.empty() ? 0 : offsets.back(); }
  void rebuild_offsets();

  // eigenvalue vector over the stacked coefficient space
  Eigen::VectorXd stacked_lambda() const;
};

// SBQR export: magic, u32 version=1, u64 p_r, u64 L_r, lambda, Q column-major.
void save_region_basis(const std::string& path, const RegionBasis& basis);
RegionBasis load_region_basis(const std::string& path, int region_id);

void save_basis_set(const std::string& dir, const BasisSet& basis);
BasisSet load_basis_set(const std::string& dir);

}  // namespace sbios

#endif
