#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sbios/model.hpp"
#include "sbios/errors.hpp"

#include "support/instance.hpp"
#include "support/oracles.hpp"

using namespace sbios;
using testsupport::ModelInstance;
using testsupport::make_instance;

TEST_CASE("project_outcome basics") {
  ModelInstance mi = make_instance(11, 5, 1);
  const Eigen::Index L = mi.L();
  const int64_t p = mi.grid.num_voxels();

  SUBCASE("zero maps to zero") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
    CHECK(project_outcome(y, mi.basis, mi.regions).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("basis column maps to a unit vector") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
    const auto& ids = mi.regions.voxels[1];
    for (size_t j = 0; j < ids.size(); ++j) y[ids[j]] = mi.basis.regions[1].Q(j, 2);
    Eigen::VectorXd proj = project_outcome(y, mi.basis, mi.regions);
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(L);
    expect[mi.basis.offsets[1] + 2] = 1.0;
    CHECK((proj - expect).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("random vector matches dense oracle") {
    KeyedRng rng(5, 0, 0, 0);
    Eigen::VectorXd y = rng.normals(p);
    Eigen::VectorXd proj = project_outcome(y, mi.basis, mi.regions);
    for (int r = 0; r < 2; ++r) {
      const auto& ids = mi.regions.voxels[r];
      Eigen::VectorXd yr(ids.size());
      for (size_t j = 0; j < ids.size(); ++j) yr[j] = y[ids[j]];
      Eigen::VectorXd want = mi.basis.regions[r].Q.transpose() * yr;
      CHECK((proj.segment(mi.basis.offsets[r], mi.basis.regions[r].L_r()) - want)
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("beta full conditional") {
  SUBCASE("delta all zero: posterior equals the prior") {
    ModelInstance mi = make_instance(21, 30, 2, 1, /*delta_on=*/false);
    const int r = 0;
    const auto d = [&] {
      std::vector<uint8_t> v;
      for (int j : mi.regions.voxels[r]) v.push_back(mi.state.delta_for(0)[j]);
      return v;
    }();
    Eigen::VectorXd s = mi.s_resid_region(r, 0);
    GaussianFactor g = beta_full_conditional(
        mi.basis.regions[r], d.data(), s, mi.x.col(0).squaredNorm(),
        mi.state.sigma_y2, mi.state.sigma_beta2);
    CHECK(g.mean.cwiseAbs().maxCoeff() <= 1e-12);
    // covariance = sigma_beta2 * diag(lambda)
    Eigen::MatrixXd prec = g.chol_lower * g.chol_lower.transpose();
    Eigen::MatrixXd cov = prec.inverse();
    Eigen::MatrixXd want =
        mi.state.sigma_beta2 *
        Eigen::MatrixXd(mi.basis.regions[r].lambda.asDiagonal());
    CHECK((cov - want).cwiseAbs().maxCoeff() <= 1e-8);
  }

  SUBCASE("matches dense conjugate oracle on random instances") {
    for (uint64_t seed : {31ULL, 32ULL, 33ULL}) {
      ModelInstance mi = make_instance(seed, 50, 2);
      for (int r = 0; r < 2; ++r) {
        const Eigen::Index off = mi.basis.offsets[r];
        const Eigen::Index lr = mi.basis.regions[r].L_r();
        std::vector<uint8_t> d;
        for (int j : mi.regions.voxels[r]) d.push_back(mi.state.delta_for(0)[j]);

        Eigen::VectorXd s = mi.s_resid_region(r, 0);
        GaussianFactor g = beta_full_conditional(
            mi.basis.regions[r], d.data(), s, mi.x.col(0).squaredNorm(),
            mi.state.sigma_y2, mi.state.sigma_beta2);

        // oracle: stacked Bayesian linear regression with designs X_i D_delta
        const Eigen::MatrixXd dd = mi.dense_ddelta_oracle(r, 0);
        std::vector<Eigen::MatrixXd> designs;
        std::vector<Eigen::VectorXd> ys;
        for (int64_t i = 0; i < mi.n; ++i) {
          designs.push_back(mi.x(i, 0) * dd);
          Eigen::VectorXd resid =
              mi.ystar.col(i) - mi.eta.col(i) -
              mi.state.theta_gamma * mi.z.row(i).transpose();
          ys.push_back(resid.segment(off, lr));
        }
        auto post = oracle::blr_posterior(
            designs, ys,
            mi.state.sigma_beta2 * mi.basis.regions[r].lambda,
            mi.state.sigma_y2);
        CHECK((g.mean - post.mean).cwiseAbs().maxCoeff() <= 1e-8);
        Eigen::MatrixXd cov =
            (g.chol_lower * g.chol_lower.transpose()).inverse();
        CHECK((cov - post.cov).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }
}

TEST_CASE("beta log gradient") {
  SUBCASE("vanishes at the full-conditional mean on the full sample") {
    ModelInstance mi = make_instance(41, 40, 2);
    for (int r = 0; r < 2; ++r) {
      const Eigen::Index off = mi.basis.offsets[r];
      const Eigen::Index lr = mi.basis.regions[r].L_r();
      std::vector<uint8_t> d;
      for (int j : mi.regions.voxels[r]) d.push_back(mi.state.delta_for(0)[j]);
      Eigen::VectorXd s = mi.s_resid_region(r, 0);
      GaussianFactor g = beta_full_conditional(
          mi.basis.regions[r], d.data(), s, mi.x.col(0).squaredNorm(),
          mi.state.sigma_y2, mi.state.sigma_beta2);
      Eigen::VectorXd grad = beta_log_gradient(
          mi.basis.regions[r], d.data(), s, mi.x.col(0).squaredNorm(), g.mean,
          mi.state.sigma_y2, mi.state.sigma_beta2, 1.0);
      CHECK(grad.cwiseAbs().maxCoeff() <= 1e-8);
      (void)off;
      (void)lr;
    }
  }

  SUBCASE("zero at theta = 0 with delta = 0") {
    ModelInstance mi = make_instance(42, 20, 1, 1, /*delta_on=*/false);
    const int r = 1;
    std::vector<uint8_t> d(mi.regions.voxels[r].size(), 0);
    Eigen::VectorXd theta =
        Eigen::VectorXd::Zero(mi.basis.regions[r].L_r());
    Eigen::VectorXd s = mi.s_resid_region(r, 0);
    Eigen::VectorXd grad = beta_log_gradient(
        mi.basis.regions[r], d.data(), s, mi.x.col(0).squaredNorm(), theta,
        mi.state.sigma_y2, mi.state.sigma_beta2, 3.1);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("matches central finite differences") {
    ModelInstance mi = make_instance(43, 25, 2);
    const int r = 0;
    const Eigen::Index off = mi.basis.offsets[r];
    const Eigen::Index lr = mi.basis.regions[r].L_r();
    std::vector<uint8_t> d;
    for (int j : mi.regions.voxels[r]) d.push_back(mi.state.delta_for(0)[j]);
    // subsample = first 10 subjects, scale n/n_s
    const int64_t ns = 10;
    const double scale = static_cast<double>(mi.n) / ns;
    Eigen::VectorXd s_sub = Eigen::VectorXd::Zero(lr);
    for (int64_t i = 0; i < ns; ++i) {
      Eigen::VectorXd resid = mi.ystar.col(i) - mi.eta.col(i) -
                              mi.state.theta_gamma * mi.z.row(i).transpose();
      s_sub += mi.x(i, 0) * resid.segment(off, lr);
    }
    double x2_sub = mi.x.col(0).head(ns).squaredNorm();
    const Eigen::VectorXd theta = mi.state.theta_beta[0].segment(off, lr);
    Eigen::VectorXd grad =
        beta_log_gradient(mi.basis.regions[r], d.data(), s_sub, x2_sub, theta,
                          mi.state.sigma_y2, mi.state.sigma_beta2, scale);

    const Eigen::MatrixXd dd = mi.dense_ddelta_oracle(r, 0);
    auto logdens = [&](const Eigen::VectorXd& th) {
      double lp = -0.5 * (th.array().square() /
                          (mi.state.sigma_beta2 *
                           mi.basis.regions[r].lambda.array()))
                             .sum();
      double ll = 0.0;
      for (int64_t i = 0; i < ns; ++i) {
        Eigen::VectorXd resid = mi.ystar.col(i) - mi.eta.col(i) -
                                mi.state.theta_gamma * mi.z.row(i).transpose();
        Eigen::VectorXd rr = resid.segment(off, lr) - mi.x(i, 0) * (dd * th);
        ll -= 0.5 * rr.squaredNorm() / mi.state.sigma_y2;
      }
      return lp + scale * ll;
    };
    const double h = 1e-6;
    for (Eigen::Index l = 0; l < lr; ++l) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[l] += h;
      tm[l] -= h;
      const double fd = (logdens(tp) - logdens(tm)) / (2.0 * h);
      const double rel = std::abs(fd - grad[l]) /
                         std::max(1.0, std::abs(grad[l]));
      CHECK(rel <= 1e-5);
    }
  }
}

TEST_CASE("gamma full conditional") {
  SUBCASE("no confounder signal: posterior equals prior") {
    ModelInstance mi = make_instance(51, 30, 1);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(mi.L());
    Eigen::VectorXd lambda = mi.basis.stacked_lambda();
    DiagonalGaussian g = gamma_full_conditional(lambda, s, 0.0,
                                                mi.state.sigma_y2,
                                                mi.state.sigma_gamma2);
    CHECK(g.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.sd.array().square() -
           mi.state.sigma_gamma2 * lambda.array())
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }

  SUBCASE("matches ridge closed form, single confounder") {
    ModelInstance mi = make_instance(52, 40, 1);
    Eigen::VectorXd lambda = mi.basis.stacked_lambda();
    // residual excluding confounder 0, dense
    Eigen::VectorXd s = Eigen::VectorXd::Zero(mi.L());
    std::vector<Eigen::MatrixXd> designs;
    std::vector<Eigen::VectorXd> ys;
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(mi.L(), mi.L());
    for (int64_t i = 0; i < mi.n; ++i) {
      Eigen::VectorXd masked = Eigen::VectorXd::Zero(mi.L());
      for (int r = 0; r < 2; ++r) {
        const Eigen::MatrixXd dd = mi.dense_ddelta_oracle(r, 0);
        masked.segment(mi.basis.offsets[r], mi.basis.regions[r].L_r()) =
            dd * mi.state.theta_beta[0].segment(mi.basis.offsets[r],
                                                mi.basis.regions[r].L_r());
      }
      Eigen::VectorXd resid =
          mi.ystar.col(i) - mi.eta.col(i) - mi.x(i, 0) * masked;
      s += mi.z(i, 0) * resid;
      designs.push_back(mi.z(i, 0) * eye);
      ys.push_back(resid);
    }
    DiagonalGaussian g = gamma_full_conditional(
        lambda, s, mi.z.col(0).squaredNorm(), mi.state.sigma_y2,
        mi.state.sigma_gamma2);
    auto post = oracle::blr_posterior(
        designs, ys, mi.state.sigma_gamma2 * lambda, mi.state.sigma_y2);
    CHECK((g.mean - post.mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((g.sd.array().square() - post.cov.diagonal().array())
              .cwiseAbs()
              .maxCoeff() <= 1e-8);
  }
}

TEST_CASE("delta inclusion probability") {
  SUBCASE("beta = 0 returns the prior") {
    CHECK(delta_inclusion_probability(0.3, 0.0, 5.0, 10.0, 1.0) ==
          doctest::Approx(0.3).epsilon(1e-12));
  }
  SUBCASE("hand-evaluated example") {
    // p=0.5, beta=1, sum X^2=10, r=10, sigma_y2=1: logistic(5)
    const double want = 1.0 / (1.0 + std::exp(-5.0));
    CHECK(delta_inclusion_probability(0.5, 1.0, 10.0, 10.0, 1.0) ==
          doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(0.993307).epsilon(1e-5));
  }
  SUBCASE("symmetry point: r = beta * sumsq / 2 gives probability 1/2") {
    CHECK(delta_inclusion_probability(0.5, 2.0, 2.0 * 10.0 / 2.0, 10.0, 3.0) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("monotone increasing in beta * r") {
    double prev = 0.0;
    for (double r = -5.0; r <= 5.0; r += 0.5) {
      const double v = delta_inclusion_probability(0.4, 1.3, r, 4.0, 1.1);
      if (r > -5.0) CHECK(v >= prev);
      prev = v;
    }
  }
  SUBCASE("shared form reduces to the single-term form when H = 1") {
    Eigen::VectorXd b1(1), r1(1);
    Eigen::MatrixXd xc(1, 1);
    b1 << 0.7;
    r1 << 2.0;
    xc << 9.0;
    CHECK(delta_inclusion_probability_shared(0.4, b1, r1, xc, 1.2) ==
          doctest::Approx(delta_inclusion_probability(0.4, 0.7, 2.0, 9.0, 1.2))
              .epsilon(1e-12));
  }
}

TEST_CASE("eta full conditional") {
  Eigen::VectorXd lambda(3);
  lambda << 2.0, 1.0, 0.5;

  SUBCASE("zero residual gives zero mean") {
    DiagonalGaussian g =
        eta_full_conditional(lambda, Eigen::VectorXd::Zero(3), 1.0, 1.0);
    CHECK(g.mean.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("large sigma_eta2 removes shrinkage") {
    Eigen::VectorXd resid(3);
    resid << 1.0, -2.0, 0.5;
    DiagonalGaussian g = eta_full_conditional(lambda, resid, 1.0, 1e8);
    CHECK((g.mean - resid).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("matches dense conjugate oracle") {
    ModelInstance mi = make_instance(61, 5, 1);
    Eigen::VectorXd slambda = mi.basis.stacked_lambda();
    Eigen::VectorXd resid = mi.ystar.col(0) * 0.7;
    DiagonalGaussian g = eta_full_conditional(slambda, resid,
                                              mi.state.sigma_y2,
                                              mi.state.sigma_eta2);
    std::vector<Eigen::MatrixXd> designs = {
        Eigen::MatrixXd::Identity(mi.L(), mi.L())};
    std::vector<Eigen::VectorXd> ys = {resid};
    auto post = oracle::blr_posterior(designs, ys,
                                      mi.state.sigma_eta2 * slambda,
                                      mi.state.sigma_y2);
    CHECK((g.mean - post.mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((g.sd.array().square() - post.cov.diagonal().array())
              .cwiseAbs()
              .maxCoeff() <= 1e-8);
  }
}

TEST_CASE("variance conditionals") {
  SUBCASE("zero RSS keeps draws positive") {
    KeyedRng rng(7, 0, 0, 0);
    for (int k = 0; k < 100; ++k) {
      const double v = sample_variance_ig(rng, {0.1, 0.1}, 0.0, 20.0);
      CHECK(v > 0.0);
    }
  }
  SUBCASE("IG posterior mean matches closed form") {
    // IG(5, 8) has mean 8 / (5 - 1) = 2
    KeyedRng rng(8, 0, 0, 0);
    double sum = 0.0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) sum += rng.inverse_gamma(5.0, 8.0);
    CHECK(sum / draws == doctest::Approx(2.0).epsilon(0.01));
  }
  SUBCASE("invalid hyperparameters") {
    KeyedRng rng(9, 0, 0, 0);
    CHECK_THROWS_AS(sample_variance_ig(rng, {0.0, 0.1}, 1.0, 2.0),
                    config_error);
  }
}

TEST_CASE("impute_outcome") {
  KeyedRng rng(17, 0, 0, 0);
  Eigen::VectorXd x1(1);
  x1 << 2.0;
  Eigen::VectorXd z1(1);
  z1 << 3.0;

  SUBCASE("all coefficients zero, sigma -> 0 gives 0") {
    const double v = impute_outcome_value({0.0}, {1}, x1, {0.0}, z1, 0.0,
                                          0.0, rng);
    CHECK(v == 0.0);
  }
  SUBCASE("eta isolation") {
    const double v = impute_outcome_value({0.0}, {0}, x1, {0.0}, z1, 1.7,
                                          0.0, rng);
    CHECK(v == 1.7);
  }
  SUBCASE("delta gates the exposure term") {
    const double on = impute_outcome_value({0.5}, {1}, x1, {0.0}, z1, 0.0,
                                           0.0, rng);
    const double off = impute_outcome_value({0.5}, {0}, x1, {0.0}, z1, 0.0,
                                            0.0, rng);
    CHECK(on == 1.0);
    CHECK(off == 0.0);
  }
  SUBCASE("Monte Carlo mean matches the model mean within 3 SE") {
    const double sigma_y2 = 0.49;
    const double model_mean = 2.0 * 0.5 + 0.25 * 3.0 + 0.9;  // x b + g z + eta
    const int draws = 10000;
    double sum = 0.0;
    for (int k = 0; k < draws; ++k)
      sum += impute_outcome_value({0.5}, {1}, x1, {0.25}, z1, 0.9, sigma_y2,
                                  rng);
    const double se = std::sqrt(sigma_y2 / draws);
    CHECK(std::abs(sum / draws - model_mean) <= 3.0 * se);
  }
}

TEST_CASE("divergence guard") {
  ModelInstance mi = make_instance(71, 5, 1);
  mi.state.check_finite();
  mi.state.theta_beta[0][0] = 1e9;
  CHECK_THROWS_AS(mi.state.check_finite(), divergence_error);
  mi.state.theta_beta[0][0] = 0.0;
  mi.state.sigma_y2 = 1e-13;
  CHECK_THROWS_AS(mi.state.check_finite(), divergence_error);
}
