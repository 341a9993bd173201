#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "sbios/basis.hpp"
#include "sbios/errors.hpp"
#include "sbios/grid.hpp"
#include "sbios/matern.hpp"

#include "support/oracles.hpp"

using namespace sbios;

TEST_CASE("matern kernel closed forms and limits") {
  CHECK(matern_cnu(0.0, 0.7) == 1.0);
  // nu = 1/2: C(d) = exp(-d)
  CHECK(matern_cnu(1.0, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(matern_cnu(1.0, 0.5) ==
        doctest::Approx(oracle::matern_cnu_reference(1.0, 0.5)).epsilon(1e-7));
  // nu = 3/2: C(d) = (1 + sqrt(3) d) exp(-sqrt(3) d)
  const double s3 = std::sqrt(3.0);
  CHECK(matern_cnu(1.0, 1.5) ==
        doctest::Approx((1.0 + s3) * std::exp(-s3)).epsilon(1e-10));
  CHECK(matern_cnu(1.0, 1.5) ==
        doctest::Approx(oracle::matern_cnu_reference(1.0, 1.5)).epsilon(1e-7));
  CHECK(matern_cnu(0.5, 0.2) ==
        doctest::Approx(oracle::matern_cnu_reference(0.5, 0.2)).epsilon(1e-7));
  CHECK(matern_cnu(2.3, 1.1) ==
        doctest::Approx(oracle::matern_cnu_reference(2.3, 1.1)).epsilon(1e-7));
  CHECK_THROWS_AS(matern_cnu(std::nan(""), 0.5), domain_error);
  CHECK_THROWS_AS(matern_cnu(1.0, -1.0), domain_error);
}

TEST_CASE("matern kernel nonincreasing in distance") {
  for (double nu : {0.2, 0.5, 1.5, 2.5}) {
    double prev = 1.0 + 1e-15;
    for (double d = 0.0; d <= 6.0; d += 0.173) {
      const double v = matern_cnu(d, nu);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("build_region_kernel basics") {
  VoxelGrid g;
  g.coords.resize(3, 2);
  g.coords << 0, 0, 1, 0, 5, 5;
  g.region_labels = {1, 1, 2};

  SUBCASE("single voxel region") {
    Eigen::MatrixXd k = build_region_kernel(g, 2, {1.0, 0.5});
    REQUIRE(k.rows() == 1);
    CHECK(k(0, 0) == 1.0);
  }
  SUBCASE("pair at distance d, nu=1/2, rho=1: off-diagonal exp(-d^2)") {
    Eigen::MatrixXd k = build_region_kernel(g, 1, {1.0, 0.5});
    // squared-distance argument: C_{1/2}(d^2 / rho) = exp(-d^2)
    CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(k(0, 1) == k(1, 0));
    CHECK(k(0, 0) == 1.0);
  }
  SUBCASE("plain distance mode") {
    Eigen::MatrixXd k = build_region_kernel(g, 1, {1.0, 0.5}, DistanceMode::Plain);
    CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
}

TEST_CASE("region kernel on a 3x3 grid is PSD") {
  VoxelGrid g = make_lattice_grid({3, 3}, {1, 1});
  Eigen::MatrixXd k = build_region_kernel(g, 1, {2.0, 0.2});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()));
  CHECK(es.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("region kernel invariant under voxel reordering") {
  VoxelGrid g = make_lattice_grid({4, 3}, {1, 1});
  Eigen::MatrixXd k = build_region_kernel(g, 1, {2.0, 0.7});
  // permute voxels
  std::vector<int> perm = {5, 0, 7, 2, 9, 4, 11, 6, 1, 8, 3, 10};
  VoxelGrid gp;
  gp.coords.resize(g.coords.rows(), 2);
  gp.region_labels.assign(g.num_voxels(), 1);
  for (size_t j = 0; j < perm.size(); ++j) gp.coords.row(j) = g.coords.row(perm[j]);
  Eigen::MatrixXd kp = build_region_kernel(gp, 1, {2.0, 0.7});
  for (size_t a = 0; a < perm.size(); ++a)
    for (size_t b = 0; b < perm.size(); ++b)
      CHECK(kp(a, b) == doctest::Approx(k(perm[a], perm[b])).epsilon(1e-14));
}

TEST_CASE("tune_kernel_params recovers generating parameters") {
  VoxelGrid g = make_lattice_grid({4, 4}, {1, 1});
  const MaternParams truth{2.0, 0.5};
  Eigen::MatrixXd target = build_region_kernel(g, 1, truth);
  std::vector<double> rhos = {0.5, 1.0, 2.0, 4.0};
  std::vector<double> nus = {0.2, 0.5, 1.5};
  MaternParams best = tune_kernel_params(target, rhos, nus, g, 1);
  CHECK(best.rho == truth.rho);
  CHECK(best.nu == truth.nu);

  SUBCASE("identity covariance picks the smallest off-diagonal mass") {
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(16, 16);
    MaternParams pick = tune_kernel_params(eye, rhos, nus, g, 1);
    // exhaustive oracle
    double best_err = 1e300;
    MaternParams want{};
    for (double r : rhos)
      for (double n : nus) {
        double err = (eye - build_region_kernel(g, 1, {r, n})).norm();
        if (err < best_err) {
          best_err = err;
          want = {r, n};
        }
      }
    CHECK(pick.rho == want.rho);
    CHECK(pick.nu == want.nu);
  }
  SUBCASE("grid of one point") {
    MaternParams pick = tune_kernel_params(target, {3.0}, {0.9}, g, 1);
    CHECK(pick.rho == 3.0);
    CHECK(pick.nu == 0.9);
  }
  SUBCASE("empty grid errors") {
    CHECK_THROWS_AS(tune_kernel_params(target, {}, nus, g, 1), config_error);
  }
}

TEST_CASE("eigenbasis truncation rules") {
  SUBCASE("identity kernel, energy 0.9, p=10 -> L=9, flat spectrum") {
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(10, 10);
    RegionBasis b = eigenbasis(eye, 0.9);
    CHECK(b.L_r() == 9);
    for (Eigen::Index l = 0; l < b.L_r(); ++l)
      CHECK(b.lambda[l] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("rank-1 kernel -> L=1") {
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(8, 1.0, 2.0).normalized();
    Eigen::MatrixXd k = 3.0 * v * v.transpose();
    RegionBasis b = eigenbasis(k, 0.9);
    CHECK(b.L_r() == 1);
    CHECK(b.lambda[0] == doctest::Approx(3.0).epsilon(1e-10));
  }
  SUBCASE("count-fraction mode: 30x30 Matern region at 10% -> L=90") {
    VoxelGrid g = make_lattice_grid({30, 30}, {1, 1});
    Eigen::MatrixXd k = build_region_kernel(g, 1, {2.0, 0.2});
    RegionBasis b = eigenbasis_truncated(k, {TruncationMode::CountFraction, 0.10});
    CHECK(b.L_r() == 90);
    CHECK(b.p_r() == 900);
    // orthonormality to 1e-10
    Eigen::MatrixXd qtq = b.Q.transpose() * b.Q;
    CHECK((qtq - Eigen::MatrixXd::Identity(90, 90)).cwiseAbs().maxCoeff() <=
          1e-10);
    // nonincreasing positive eigenvalues
    for (Eigen::Index l = 1; l < b.L_r(); ++l) {
      CHECK(b.lambda[l] <= b.lambda[l - 1] + 1e-14);
      CHECK(b.lambda[l] > 0.0);
    }
  }
  SUBCASE("all-zero kernel errors") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(5, 5);
    CHECK_THROWS_AS(eigenbasis(z, 0.9), data_error);
  }
}

TEST_CASE("eigenbasis with energy 1.0 reconstructs the kernel") {
  // plain-distance mode keeps the kernel PSD and full rank on small grids;
  // the squared-distance form can go indefinite for some (rho, nu)
  VoxelGrid g = make_lattice_grid({5, 5}, {1, 1});
  Eigen::MatrixXd k = build_region_kernel(g, 1, {1.5, 0.8}, DistanceMode::Plain);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  REQUIRE(es.eigenvalues().minCoeff() > 0.0);
  RegionBasis b = eigenbasis(k, 1.0);
  Eigen::MatrixXd rec = b.Q * b.lambda.asDiagonal() * b.Q.transpose();
  CHECK((rec - k).norm() <= 1e-6 * k.norm());
}

TEST_CASE("basis sign convention makes bases reproducible") {
  VoxelGrid g = make_lattice_grid({6, 6}, {1, 1});
  Eigen::MatrixXd k = build_region_kernel(g, 1, {2.0, 0.4});
  RegionBasis a = eigenbasis(k, 0.95);
  RegionBasis b = eigenbasis(k, 0.95);
  CHECK((a.Q - b.Q).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index c = 0; c < a.Q.cols(); ++c) {
    Eigen::Index rr = 0;
    while (rr < a.Q.rows() && std::abs(a.Q(rr, c)) <= 1e-14) ++rr;
    REQUIRE(rr < a.Q.rows());
    CHECK(a.Q(rr, c) > 0.0);
  }
}

TEST_CASE("SBQR round trip") {
  VoxelGrid g = make_lattice_grid({4, 4}, {1, 1});
  Eigen::MatrixXd k = build_region_kernel(g, 1, {2.0, 0.3});
  RegionBasis b = eigenbasis(k, 0.9);
  b.region_id = 3;
  const std::string path = "/tmp/sbios_test_basis.sbqr";
  save_region_basis(path, b);
  RegionBasis r = load_region_basis(path, 3);
  CHECK(r.p_r() == b.p_r());
  CHECK(r.L_r() == b.L_r());
  CHECK((r.Q - b.Q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.lambda - b.lambda).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("modified squared-exponential basis is orthonormal with decaying "
          "eigenvalues") {
  VoxelGrid g = make_lattice_grid({9, 9, 9}, {1, 1, 1});
  RegionBasis b = modified_se_basis(g.coords, 0.01, 1.0, 4);
  CHECK(b.L_r() == 35);  // C(4+3,3)
  Eigen::MatrixXd qtq = b.Q.transpose() * b.Q;
  CHECK((qtq - Eigen::MatrixXd::Identity(b.L_r(), b.L_r())).cwiseAbs().maxCoeff() <=
        1e-10);
  for (Eigen::Index l = 1; l < b.L_r(); ++l)
    CHECK(b.lambda[l] <= b.lambda[l - 1] + 1e-15);
}
