#ifndef SBIOS_TEST_INSTANCE_HPP
#define SBIOS_TEST_INSTANCE_HPP

// Small dense model instances for conditional-distribution checks.

#include <vector>

#include <Eigen/Dense>

#include "sbios/basis.hpp"
#include "sbios/grid.hpp"
#include "sbios/matern.hpp"
#include "sbios/model.hpp"
#include "sbios/rng.hpp"
#include "sbios/stats.hpp"

namespace testsupport {

struct ModelInstance {
  sbios::VoxelGrid grid;
  sbios::RegionIndex regions;
  sbios::BasisSet basis;
  sbios::RegionLookup lookup;
  int64_t n = 0;
  int m = 0;
  int H = 1;
  Eigen::MatrixXd x;      // n x H
  Eigen::MatrixXd z;      // n x m
  Eigen::MatrixXd ystar;  // L x n
  Eigen::MatrixXd eta;    // L x n coefficients
  sbios::ModelState state;

  Eigen::Index L() const { return basis.total_L(); }

  // dense D_delta for region r / term h, built directly from Q and delta
  Eigen::MatrixXd dense_ddelta_oracle(int r, int h) const {
    const auto& rb = basis.regions[r];
    Eigen::VectorXd d(rb.p_r());
    const auto& ids = regions.voxels[r];
    for (Eigen::Index j = 0; j < rb.p_r(); ++j)
      d[j] = state.delta_for(h)[ids[j]] ? 1.0 : 0.0;
    return rb.Q.transpose() * d.asDiagonal() * rb.Q;
  }

  // region block of sum_i X_hi (Y*_i - eta_i - theta_gamma z_i - other terms)
  Eigen::VectorXd s_resid_region(int r, int h) const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(L());
    for (int64_t i = 0; i < n; ++i) {
      Eigen::VectorXd resid = ystar.col(i) - eta.col(i);
      resid -= state.theta_gamma * z.row(i).transpose();
      for (int h2 = 0; h2 < H; ++h2) {
        if (h2 == h) continue;
        // other gated term, full dense evaluation
        Eigen::VectorXd contrib = Eigen::VectorXd::Zero(L());
        for (size_t r2 = 0; r2 < basis.regions.size(); ++r2) {
          const Eigen::MatrixXd dd =
              dense_ddelta_oracle(static_cast<int>(r2), h2);
          contrib.segment(basis.offsets[r2], basis.regions[r2].L_r()) =
              dd * state.theta_beta[h2].segment(basis.offsets[r2],
                                                basis.regions[r2].L_r());
        }
        resid -= x(i, h2) * contrib;
      }
      s += x(i, h) * resid;
    }
    return s.segment(basis.offsets[r], basis.regions[r].L_r());
  }
};

inline ModelInstance make_instance(uint64_t seed, int64_t n, int m,
                                   int H = 1, bool delta_on = true) {
  using namespace sbios;
  ModelInstance mi;
  mi.grid = make_lattice_grid({4, 4}, {2, 1});  // two regions of 8 voxels
  mi.regions = RegionIndex::build(mi.grid);
  for (int r = 0; r < 2; ++r) {
    Eigen::MatrixXd k = build_region_kernel(mi.grid, r + 1, {2.0, 0.2});
    RegionBasis rb = eigenbasis_truncated(k, {TruncationMode::CountFraction, 0.5});
    rb.region_id = r + 1;
    mi.basis.regions.push_back(std::move(rb));
  }
  mi.basis.rebuild_offsets();
  mi.lookup = RegionLookup::build(mi.regions, mi.grid.num_voxels());
  mi.n = n;
  mi.m = m;
  mi.H = H;

  KeyedRng rng(seed, 0, 0, 99);
  const Eigen::Index L = mi.L();
  const int64_t p = mi.grid.num_voxels();
  mi.x.resize(n, H);
  mi.z.resize(n, m);
  mi.ystar.resize(L, n);
  mi.eta.resize(L, n);
  for (int64_t i = 0; i < n; ++i) {
    for (int h = 0; h < H; ++h) mi.x(i, h) = rng.normal();
    for (int k = 0; k < m; ++k) mi.z(i, k) = rng.normal();
    mi.ystar.col(i) = rng.normals(L);
    mi.eta.col(i) = 0.3 * rng.normals(L);
  }
  mi.state.init(H, false, L, m, p, 0.5);
  for (int h = 0; h < H; ++h) mi.state.theta_beta[h] = rng.normals(L);
  for (int k = 0; k < m; ++k) mi.state.theta_gamma.col(k) = rng.normals(L);
  if (!delta_on)
    for (auto& d : mi.state.delta) std::fill(d.begin(), d.end(), 0);
  else
    for (auto& d : mi.state.delta)
      for (auto& v : d) v = rng.uniform() < 0.6 ? 1 : 0;
  mi.state.sigma_y2 = 0.8;
  mi.state.sigma_beta2 = 1.3;
  mi.state.sigma_gamma2 = 0.9;
  mi.state.sigma_eta2 = 0.7;
  return mi;
}

}  // namespace testsupport

#endif
