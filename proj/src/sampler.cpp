#include "sbios/sampler.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"
#include "sbios/rss.hpp"

namespace sbios {

namespace fs = std::filesystem;

Algorithm parse_algorithm(const std::string& name) {
  if (name == "gibbs") return Algorithm::Gibbs;
  if (name == "sgld0" || name == "sgld_zero") return Algorithm::SgldZero;
  if (name == "sgldimp" || name == "sgld_impute") return Algorithm::SgldImpute;
  throw config_error("unknown algorithm: " + name);
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Gibbs:
      return "gibbs";
    case Algorithm::SgldZero:
      return "sgld0";
    default:
      return "sgldimp";
  }
}

double step_size(int64_t t, const StepSchedule& s) {
  if (t < 0) throw config_error("step_size: negative iteration");
  return s.a * std::pow(s.b + static_cast<double>(t), -s.gamma_exp);
}

void SamplerConfig::validate(int64_t min_batch_size) const {
  if (iterations < 0) throw config_error("iterations must be nonnegative");
  if (burn_in < 0) throw config_error("burn_in must be nonnegative");
  if (eta_every < 1) throw config_error("eta_every must be >= 1");
  if (chains < 1) throw config_error("chains must be >= 1");
  if (thin_target < 1) throw config_error("thin_target must be >= 1");
  if (algorithm != Algorithm::Gibbs) {
    if (subsample < 1 || subsample > min_batch_size)
      throw config_error("subsample size must be in [1, min batch size]");
    if (step.a <= 0.0 || step.b <= 0.0)
      throw config_error("step schedule a, b must be positive");
  }
  if (diag_fraction <= 0.0 || diag_fraction > 1.0)
    throw config_error("diag_fraction must be in (0,1]");
  hyper.validate();
}

namespace {

void parallel_regions(int threads, int R, const std::function<void(int)>& fn) {
  if (threads <= 1 || R <= 1) {
    for (int r = 0; r < R; ++r) fn(r);
    return;
  }
  const int workers = std::min(threads, R);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      for (int r = w; r < R; r += workers) fn(r);
    });
  for (auto& t : pool) t.join();
}

class ChainRunner {
 public:
  ChainRunner(const FitInputs& in, const SamplerConfig& cfg, int chain_id,
              std::string work_dir)
      : store_(*in.store),
        basis_(*in.basis),
        regions_(*in.regions),
        cfg_(cfg),
        chain_(chain_id),
        work_dir_(std::move(work_dir)) {
    fs::create_directories(work_dir_);
    p_ = store_.meta().p;
    L_ = basis_.total_L();
    m_ = store_.meta().m;
    espec_.interaction_confounder = cfg_.interaction_confounder;
    H_ = espec_.H();
    lookup_ = RegionLookup::build(regions_, p_);
    lambda_ = basis_.stacked_lambda();
    B_ = store_.num_batches();
    thin_ = std::max<int64_t>(
        1, (cfg_.iterations - cfg_.burn_in + cfg_.thin_target - 1) /
               std::max<int64_t>(1, cfg_.thin_target));
    if (cfg_.iterations <= cfg_.burn_in) thin_ = 1;
  }

  ChainOutput run(int64_t resume_from) {
    const auto t_start = std::chrono::steady_clock::now();
    build_caches();
    init_stores();
    if (resume_from > 0) {
      load_checkpoint(resume_from);
    } else {
      compute_initial_stats();
      init_state();
    }
    refresh_derived();

    for (int64_t t = resume_from + 1; t <= cfg_.iterations; ++t) {
      const auto it_start = std::chrono::steady_clock::now();
      const double tau =
          cfg_.algorithm == Algorithm::Gibbs ? 0.0 : step_size(t, cfg_.step);
      const int b = static_cast<int>((t - 1) % B_);

      double rss_proxy = 0.0;
      if (cfg_.algorithm == Algorithm::Gibbs)
        rss_proxy = update_beta_gibbs(t);
      else
        rss_proxy = update_beta_sgld(t, tau, b);
      update_gamma(t);
      update_delta(t);
      update_sigma_gamma_beta(t);

      bool eta_updated = false;
      if (t % cfg_.eta_every == 0) {
        eta_sweep(t);
        eta_updated = true;
      }
      state_.check_finite();

      if (t > cfg_.burn_in && (t - cfg_.burn_in) % thin_ == 0) retain(t);
      if (cfg_.checkpoint_every > 0 && t % cfg_.checkpoint_every == 0)
        save_checkpoint(t);

      DiagRecord rec;
      rec.iteration = t;
      rec.tau = tau;
      rec.batch = b;
      rec.rss = rss_proxy;
      rec.eta_updated = eta_updated;
      rec.peak_rss_bytes = sbios::peak_rss_bytes();
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - it_start)
                           .count();
      diagnostics_.push_back(rec);
    }

    ChainOutput out = collect_output();
    out.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
    out.peak_rss = sbios::peak_rss_bytes();
    return out;
  }

 private:
  // --- setup -----------------------------------------------------------

  void build_caches() {
    x_cache_.resize(B_);
    z_cache_.resize(B_);
    for (int b = 0; b < B_; ++b) {
      Eigen::MatrixXd cov = store_.covariates(b);
      x_cache_[b] = espec_.exposures(cov);
      z_cache_[b] = ExposureSpec::confounders(cov);
    }
    // diagnostics subset: every k-th subject, fraction cfg_.diag_fraction
    const int64_t stride = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(1.0 / cfg_.diag_fraction)));
    diag_subset_.resize(B_);
    for (int b = 0; b < B_; ++b) {
      const int64_t base = store_.subject_offset(b);
      for (int64_t i = 0; i < store_.batch_size(b); ++i)
        if ((base + i) % stride == 0)
          diag_subset_[b].push_back(static_cast<int>(i));
    }
  }

  void init_stores() {
    std::vector<int64_t> block_cols;
    for (int b = 0; b < B_; ++b) block_cols.push_back(store_.batch_size(b));
    const bool file_backed = cfg_.algorithm != Algorithm::Gibbs;
    ystar_ = std::make_unique<BlockMatrixStore>(
        file_backed, work_dir_ + "/ystar", L_, block_cols);
    eta_ = std::make_unique<BlockMatrixStore>(file_backed, work_dir_ + "/eta",
                                              L_, block_cols);
    if (cfg_.algorithm == Algorithm::SgldImpute)
      missing_ = MissingIndex::build(store_);
    if (cfg_.algorithm == Algorithm::Gibbs) {
      // the in-memory baseline keeps the whole outcome matrix and the
      // voxel-space individual effects resident for the run
      y_full_.resize(p_, store_.meta().n);
      for (int b = 0; b < B_; ++b) {
        OutcomeView yv = store_.map_outcomes(b);
        y_full_.middleCols(store_.subject_offset(b), store_.batch_size(b)) =
            yv.matrix();
      }
      eta_img_ = Eigen::MatrixXd::Zero(p_, store_.meta().n);
    }
  }

  void compute_initial_stats() {
    const MissingIndex* mi =
        cfg_.algorithm == Algorithm::SgldImpute ? &missing_ : nullptr;
    stats_ = compute_stats(store_, basis_, regions_, espec_, mi, ystar_.get());
  }

  void init_state() {
    state_.init(H_, cfg_.shared_delta, L_, m_, p_, cfg_.hyper.prior_incl);
    state_.sigma_y2 = cfg_.sigma_y2_init;
    state_.sigma_beta2 = cfg_.hyper.sigma_beta_sampled
                             ? cfg_.sigma_beta2_init
                             : cfg_.hyper.sigma_beta2_fixed;
    state_.sigma_gamma2 = cfg_.sigma_gamma2_init;
    state_.sigma_eta2 = cfg_.sigma_eta2_init;
    if (cfg_.init == InitMode::One) {
      for (int h = 0; h < H_; ++h) state_.theta_beta[h].setOnes();
      state_.theta_gamma.setOnes();
    } else if (cfg_.init == InitMode::Mua) {
      MuaResult mua = mua_fit(store_, {});
      Eigen::VectorXd beta_img = mua.coef_all.row(1);
      state_.theta_beta[0] = project_outcome(beta_img, basis_, regions_);
      for (int k = 0; k < m_; ++k) {
        Eigen::VectorXd g_img = mua.coef_all.row(2 + k);
        state_.theta_gamma.col(k) = project_outcome(g_img, basis_, regions_);
      }
    }
    pip_counts_.assign(state_.delta_terms(),
                       std::vector<int64_t>(p_, 0));
    theta_draws_.assign(H_, {});
    delta_draws_.resize(state_.delta_terms());
    beta_mean_acc_.assign(H_, Eigen::VectorXd::Zero(p_));
    beta_delta_mean_acc_.assign(H_, Eigen::VectorXd::Zero(p_));
    gamma_mean_acc_ = Eigen::MatrixXd::Zero(p_, m_);
    variance_draws_.clear();
    resid_series_.clear();
    retained_ = 0;
  }

  // --- derived images ----------------------------------------------------

  Eigen::VectorXd image_of(const Eigen::VectorXd& coef) const {
    Eigen::VectorXd img(p_);
    for (int r = 0; r < regions_.num_regions(); ++r) {
      const auto& ids = regions_.voxels[r];
      Eigen::VectorXd block =
          basis_.regions[r].Q *
          coef.segment(basis_.offsets[r], basis_.regions[r].L_r());
      for (size_t jj = 0; jj < ids.size(); ++jj)
        img[ids[jj]] = block[static_cast<Eigen::Index>(jj)];
    }
    return img;
  }

  std::vector<uint8_t> gather_delta(const std::vector<uint8_t>& delta,
                                    int r) const {
    const auto& ids = regions_.voxels[r];
    std::vector<uint8_t> out(ids.size());
    for (size_t jj = 0; jj < ids.size(); ++jj) out[jj] = delta[ids[jj]];
    return out;
  }

  Eigen::VectorXd masked_projection(const Eigen::VectorXd& theta,
                                    const std::vector<uint8_t>& delta) const {
    Eigen::VectorXd out(L_);
    for (int r = 0; r < regions_.num_regions(); ++r) {
      const auto d = gather_delta(delta, r);
      out.segment(basis_.offsets[r], basis_.regions[r].L_r()) = apply_ddelta(
          basis_.regions[r], d.data(),
          theta.segment(basis_.offsets[r], basis_.regions[r].L_r()));
    }
    return out;
  }

  void refresh_beta(int h) {
    beta_img_[h] = image_of(state_.theta_beta[h]);
    masked_beta_[h] =
        masked_projection(state_.theta_beta[h], state_.delta_for(h));
  }

  void refresh_derived() {
    beta_img_.resize(H_);
    masked_beta_.resize(H_);
    for (int h = 0; h < H_; ++h) refresh_beta(h);
    gamma_img_.resize(p_, m_);
    for (int k = 0; k < m_; ++k)
      gamma_img_.col(k) = image_of(state_.theta_gamma.col(k));
    eta_x_img_.resize(H_);
    for (int h = 0; h < H_; ++h) eta_x_img_[h] = image_of(stats_.eta_x[h]);
  }

  // --- beta updates ------------------------------------------------------

  // full-data residual projection sum_i X_hi (Y*_i - eta_i - gamma Z_i),
  // before the other-term adjustment
  Eigen::VectorXd full_data_s(int h) {
    if (cfg_.algorithm == Algorithm::Gibbs) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(L_);
      for (int b = 0; b < B_; ++b) {
        s.noalias() += ystar_->ram_block(b) * x_cache_[b].col(h);
        s.noalias() -= eta_->ram_block(b) * x_cache_[b].col(h);
      }
      s.noalias() -= state_.theta_gamma * stats_.xz_cross.row(h).transpose();
      return s;
    }
    Eigen::VectorXd s = stats_.xy_proj[h] - stats_.eta_x[h];
    s.noalias() -= state_.theta_gamma * stats_.xz_cross.row(h).transpose();
    return s;
  }

  double update_beta_gibbs(int64_t t) {
    for (int h = 0; h < H_; ++h) {
      Eigen::VectorXd s = full_data_s(h);
      for (int h2 = 0; h2 < H_; ++h2)
        if (h2 != h) s.noalias() -= stats_.xx_cross(h, h2) * masked_beta_[h2];
      parallel_regions(cfg_.threads, regions_.num_regions(), [&](int r) {
        const auto d = gather_delta(state_.delta_for(h), r);
        const Eigen::Index off = basis_.offsets[r];
        const Eigen::Index lr = basis_.regions[r].L_r();
        GaussianFactor g = beta_full_conditional(
            basis_.regions[r], d.data(), s.segment(off, lr),
            stats_.xx_cross(h, h), state_.sigma_y2, state_.sigma_beta2);
        KeyedRng rng(cfg_.seed, chain_, t,
                     rngblock::kBetaBase + r + 50000 * h);
        state_.theta_beta[h].segment(off, lr) = g.sample(rng);
      });
      refresh_beta(h);
    }
    // full projected residual norm (the in-memory baseline tracks this)
    double rss = 0.0;
    for (int b = 0; b < B_; ++b) {
      Eigen::MatrixXd resid = ystar_->ram_block(b) - eta_->ram_block(b);
      resid.noalias() -= state_.theta_gamma * z_cache_[b].transpose();
      for (int h = 0; h < H_; ++h)
        resid.noalias() -= masked_beta_[h] * x_cache_[b].col(h).transpose();
      rss += resid.squaredNorm();
    }
    return std::sqrt(rss);
  }

  double update_beta_sgld(int64_t t, double tau, int b) {
    // subsample without replacement from the current batch
    const int64_t n_b = store_.batch_size(b);
    KeyedRng sub_rng(cfg_.seed, chain_, t, rngblock::kSubsample);
    std::vector<int> idx(n_b);
    for (int64_t i = 0; i < n_b; ++i) idx[i] = static_cast<int>(i);
    for (int64_t k = 0; k < cfg_.subsample; ++k) {
      const int64_t swap =
          k + static_cast<int64_t>(sub_rng.uniform_index(n_b - k));
      std::swap(idx[k], idx[swap]);
    }
    idx.resize(cfg_.subsample);

    Eigen::MatrixXd ys_sub, eta_sub;
    ystar_->load_columns(b, idx, ys_sub);
    eta_->load_columns(b, idx, eta_sub);
    Eigen::MatrixXd x_sub(cfg_.subsample, H_), z_sub(cfg_.subsample, m_);
    for (int64_t k = 0; k < cfg_.subsample; ++k) {
      x_sub.row(k) = x_cache_[b].row(idx[k]);
      z_sub.row(k) = z_cache_[b].row(idx[k]);
    }

    const Eigen::MatrixXd a_sub = ys_sub - eta_sub;  // L x n_s
    const Eigen::MatrixXd xx_sub = x_sub.transpose() * x_sub;
    const double scale = static_cast<double>(store_.meta().n) /
                         static_cast<double>(cfg_.subsample);
    for (int h = 0; h < H_; ++h) {
      Eigen::VectorXd s_sub = a_sub * x_sub.col(h);
      s_sub.noalias() -=
          state_.theta_gamma * (z_sub.transpose() * x_sub.col(h));
      for (int h2 = 0; h2 < H_; ++h2)
        if (h2 != h) s_sub.noalias() -= xx_sub(h, h2) * masked_beta_[h2];
      parallel_regions(cfg_.threads, regions_.num_regions(), [&](int r) {
        const auto d = gather_delta(state_.delta_for(h), r);
        const Eigen::Index off = basis_.offsets[r];
        const Eigen::Index lr = basis_.regions[r].L_r();
        const Eigen::VectorXd grad = beta_log_gradient(
            basis_.regions[r], d.data(), s_sub.segment(off, lr), xx_sub(h, h),
            state_.theta_beta[h].segment(off, lr), state_.sigma_y2,
            state_.sigma_beta2, scale);
        KeyedRng rng(cfg_.seed, chain_, t,
                     rngblock::kBetaBase + r + 50000 * h);
        state_.theta_beta[h].segment(off, lr) +=
            0.5 * tau * grad + std::sqrt(tau) * rng.normals(lr);
      });
      refresh_beta(h);
    }
    // subsample projected residual norm as the log-likelihood proxy
    Eigen::MatrixXd resid = a_sub;
    resid.noalias() -= state_.theta_gamma * z_sub.transpose();
    for (int h = 0; h < H_; ++h)
      resid.noalias() -= masked_beta_[h] * x_sub.col(h).transpose();
    return std::sqrt(resid.squaredNorm());
  }

  // --- gamma, delta, variances -------------------------------------------

  void update_gamma(int64_t t) {
    KeyedRng rng(cfg_.seed, chain_, t, rngblock::kGamma);
    for (int k = 0; k < m_; ++k) {
      Eigen::VectorXd s;
      if (cfg_.algorithm == Algorithm::Gibbs) {
        s = Eigen::VectorXd::Zero(L_);
        for (int b = 0; b < B_; ++b) {
          s.noalias() += ystar_->ram_block(b) * z_cache_[b].col(k);
          s.noalias() -= eta_->ram_block(b) * z_cache_[b].col(k);
        }
      } else {
        s = stats_.yz_proj.col(k) - stats_.eta_z.col(k);
      }
      for (int k2 = 0; k2 < m_; ++k2)
        if (k2 != k)
          s.noalias() -= stats_.z_cross(k2, k) * state_.theta_gamma.col(k2);
      for (int h = 0; h < H_; ++h)
        s.noalias() -= stats_.xz_cross(h, k) * masked_beta_[h];
      DiagonalGaussian g =
          gamma_full_conditional(lambda_, s, stats_.z_cross(k, k),
                                 state_.sigma_y2, state_.sigma_gamma2);
      state_.theta_gamma.col(k) = g.sample(rng);
    }
    for (int k = 0; k < m_; ++k)
      gamma_img_.col(k) = image_of(state_.theta_gamma.col(k));
  }

  void update_delta(int64_t t) {
    KeyedRng rng(cfg_.seed, chain_, t, rngblock::kDelta);
    // voxel-level residual stat r_h(j) = sum_i X_hi (Y_ij - eta_ij - gamma Z)
    std::vector<Eigen::VectorXd> r_vox(H_);
    for (int h = 0; h < H_; ++h) {
      if (cfg_.algorithm == Algorithm::Gibbs) {
        Eigen::VectorXd eta_x_vox = Eigen::VectorXd::Zero(p_);
        for (int b = 0; b < B_; ++b)
          eta_x_vox.noalias() +=
              eta_img_.middleCols(store_.subject_offset(b),
                                  store_.batch_size(b)) *
              x_cache_[b].col(h);
        r_vox[h] = stats_.xy_term[h] - eta_x_vox;
      } else {
        r_vox[h] = stats_.xy_term[h] - eta_x_img_[h];
      }
      r_vox[h].noalias() -= gamma_img_ * stats_.xz_cross.row(h).transpose();
    }

    if (state_.shared_delta && H_ > 1) {
      // the gated terms never enter r_vox, so the quadratic form carries
      // the full delta dependence including the X-Xtilde cross product
      Eigen::VectorXd bj(H_), rj(H_);
      auto& delta = state_.delta[0];
      for (int64_t j = 0; j < p_; ++j) {
        for (int h = 0; h < H_; ++h) {
          bj[h] = beta_img_[h][j];
          rj[h] = r_vox[h][j];
        }
        const double prob = delta_inclusion_probability_shared(
            state_.prior_incl[j], bj, rj, stats_.xx_cross, state_.sigma_y2);
        delta[j] = rng.uniform() < prob ? 1 : 0;
      }
    } else {
      for (int64_t j = 0; j < p_; ++j) {
        for (int h = 0; h < H_; ++h) {
          auto& delta = state_.delta_for(h);
          double rj = r_vox[h][j];
          for (int h2 = 0; h2 < H_; ++h2)
            if (h2 != h && state_.delta_for(h2)[j])
              rj -= stats_.xx_cross(h, h2) * beta_img_[h2][j];
          const double prob = delta_inclusion_probability(
              state_.prior_incl[j], beta_img_[h][j], rj,
              stats_.xx_cross(h, h), state_.sigma_y2);
          delta[j] = rng.uniform() < prob ? 1 : 0;
        }
      }
    }
    for (int h = 0; h < H_; ++h)
      masked_beta_[h] =
          masked_projection(state_.theta_beta[h], state_.delta_for(h));
  }

  void update_sigma_gamma_beta(int64_t t) {
    KeyedRng rng(cfg_.seed, chain_, t, rngblock::kVariances);
    double gamma_quad = 0.0;
    for (int k = 0; k < m_; ++k)
      gamma_quad +=
          (state_.theta_gamma.col(k).array().square() / lambda_.array()).sum();
    if (m_ > 0)
      state_.sigma_gamma2 = sample_variance_ig(
          rng, cfg_.hyper.ig_gamma, gamma_quad,
          static_cast<double>(m_) * static_cast<double>(L_));
    if (cfg_.hyper.sigma_beta_sampled) {
      double beta_quad = 0.0;
      for (int h = 0; h < H_; ++h)
        beta_quad +=
            (state_.theta_beta[h].array().square() / lambda_.array()).sum();
      state_.sigma_beta2 = sample_variance_ig(
          rng, cfg_.hyper.ig_beta, beta_quad,
          static_cast<double>(H_) * static_cast<double>(L_));
    }
  }

  // --- eta sweep, sigma_Y / sigma_eta, imputation --------------------------

  void eta_sweep(int64_t t) {
    double rss = 0.0, eta_quad = 0.0;
    std::vector<Eigen::VectorXd> eta_x_new(H_, Eigen::VectorXd::Zero(L_));
    Eigen::MatrixXd eta_z_new = Eigen::MatrixXd::Zero(L_, m_);

    for (int b = 0; b < B_; ++b) {
      const Eigen::MatrixXd ys = ystar_->load(b);
      Eigen::MatrixXd et(L_, store_.batch_size(b));
      KeyedRng rng(cfg_.seed, chain_, t, rngblock::kEtaBase + b);
      for (int64_t i = 0; i < store_.batch_size(b); ++i) {
        Eigen::VectorXd resid = ys.col(i);
        for (int h = 0; h < H_; ++h)
          resid.noalias() -= x_cache_[b](i, h) * masked_beta_[h];
        resid.noalias() -=
            state_.theta_gamma * z_cache_[b].row(i).transpose();
        DiagonalGaussian g = eta_full_conditional(
            lambda_, resid, state_.sigma_y2, state_.sigma_eta2);
        et.col(i) = g.sample(rng);
        rss += (resid - et.col(i)).squaredNorm();
        eta_quad += (et.col(i).array().square() / lambda_.array()).sum();
      }
      eta_->store(b, et);
      for (int h = 0; h < H_; ++h)
        eta_x_new[h].noalias() += et * x_cache_[b].col(h);
      eta_z_new.noalias() += et * z_cache_[b];
      if (cfg_.algorithm == Algorithm::Gibbs) {
        // voxel-space individual effects, kept resident by the baseline
        auto block = eta_img_.middleCols(store_.subject_offset(b),
                                         store_.batch_size(b));
        for (int r = 0; r < regions_.num_regions(); ++r) {
          const auto& ids = regions_.voxels[r];
          Eigen::MatrixXd img =
              basis_.regions[r].Q *
              et.middleRows(basis_.offsets[r], basis_.regions[r].L_r());
          for (size_t jj = 0; jj < ids.size(); ++jj)
            block.row(ids[jj]) = img.row(static_cast<Eigen::Index>(jj));
        }
      }
    }
    stats_.eta_x = eta_x_new;
    stats_.eta_z = eta_z_new;

    KeyedRng vrng(cfg_.seed, chain_, t, rngblock::kVariances + 100);
    const double n_res =
        static_cast<double>(store_.meta().n) * static_cast<double>(L_);
    state_.sigma_y2 = sample_variance_ig(vrng, cfg_.hyper.ig_y, rss, n_res);
    state_.sigma_eta2 =
        sample_variance_ig(vrng, cfg_.hyper.ig_eta, eta_quad, n_res);

    if (cfg_.algorithm == Algorithm::SgldImpute) impute_sweep(t);
    for (int h = 0; h < H_; ++h) eta_x_img_[h] = image_of(stats_.eta_x[h]);
  }

  void impute_sweep(int64_t t) {
    const double sigma_y = std::sqrt(state_.sigma_y2);
    for (int b = 0; b < B_; ++b) {
      const int64_t base = store_.subject_offset(b);
      if (missing_.offsets[base + store_.batch_size(b)] ==
          missing_.offsets[base])
        continue;  // no missing voxels in this batch
      Eigen::MatrixXd ys = ystar_->load(b);
      const Eigen::MatrixXd et = eta_->load(b);
      KeyedRng rng(cfg_.seed, chain_, t, rngblock::kImputeBase + b);
      for (int64_t i = 0; i < store_.batch_size(b); ++i) {
        const int64_t gi = base + i;
        const Eigen::VectorXd x_row = x_cache_[b].row(i);
        const Eigen::VectorXd z_row = z_cache_[b].row(i);
        for (int64_t k = missing_.offsets[gi]; k < missing_.offsets[gi + 1];
             ++k) {
          const int32_t j = missing_.voxels[k];
          const int r = lookup_.region_of[j];
          const Eigen::Index off = basis_.offsets[r];
          const Eigen::Index lr = basis_.regions[r].L_r();
          double mean =
              basis_.regions[r].Qt.col(lookup_.local_of[j]).dot(
                  et.col(i).segment(off, lr));
          for (int h = 0; h < H_; ++h)
            if (state_.delta_for(h)[j]) mean += x_row[h] * beta_img_[h][j];
          for (int k2 = 0; k2 < m_; ++k2)
            mean += gamma_img_(j, k2) * z_row[k2];
          const double value = mean + sigma_y * rng.normal();
          apply_imputation_update(stats_, basis_, lookup_, ys.col(i), x_row,
                                  z_row, j, missing_.y_imp[k], value);
          missing_.y_imp[k] = value;
        }
      }
      ystar_->store(b, ys);
    }
  }

  // --- retention and diagnostics -------------------------------------------

  double diag_residual_norm() {
    double total = 0.0;
    Eigen::MatrixXd ys, et;
    for (int b = 0; b < B_; ++b) {
      if (diag_subset_[b].empty()) continue;
      ystar_->load_columns(b, diag_subset_[b], ys);
      eta_->load_columns(b, diag_subset_[b], et);
      for (size_t k = 0; k < diag_subset_[b].size(); ++k) {
        const int i = diag_subset_[b][k];
        Eigen::VectorXd resid = ys.col(k) - et.col(k);
        for (int h = 0; h < H_; ++h)
          resid.noalias() -= x_cache_[b](i, h) * masked_beta_[h];
        resid.noalias() -=
            state_.theta_gamma * z_cache_[b].row(i).transpose();
        total += resid.squaredNorm();
      }
    }
    return std::sqrt(total);
  }

  void retain(int64_t t) {
    for (int h = 0; h < H_; ++h) {
      theta_draws_[h].push_back(state_.theta_beta[h]);
      beta_mean_acc_[h] += beta_img_[h];
      Eigen::VectorXd bd = beta_img_[h];
      const auto& delta = state_.delta_for(h);
      for (int64_t j = 0; j < p_; ++j)
        if (!delta[j]) bd[j] = 0.0;
      beta_delta_mean_acc_[h] += bd;
    }
    for (int d = 0; d < state_.delta_terms(); ++d) {
      delta_draws_[d].push_back(state_.delta[d]);
      for (int64_t j = 0; j < p_; ++j)
        pip_counts_[d][j] += state_.delta[d][j];
    }
    gamma_mean_acc_ += gamma_img_;
    variance_draws_.push_back({state_.sigma_y2, state_.sigma_beta2,
                               state_.sigma_gamma2, state_.sigma_eta2});
    resid_series_.push_back(diag_residual_norm());
    ++retained_;
    (void)t;
  }

  ChainOutput collect_output() {
    ChainOutput out;
    out.chain_id = chain_;
    out.retained = retained_;
    out.thin = thin_;
    out.diagnostics = std::move(diagnostics_);
    out.pip.resize(state_.delta_terms());
    for (int d = 0; d < state_.delta_terms(); ++d) {
      out.pip[d].resize(p_);
      for (int64_t j = 0; j < p_; ++j)
        out.pip[d][j] = retained_ > 0 ? static_cast<double>(pip_counts_[d][j]) /
                                            static_cast<double>(retained_)
                                      : 0.0;
    }
    out.theta_beta_draws.resize(H_);
    for (int h = 0; h < H_; ++h) {
      out.theta_beta_draws[h].resize(L_, retained_);
      for (int64_t d = 0; d < retained_; ++d)
        out.theta_beta_draws[h].col(d) = theta_draws_[h][d];
    }
    out.variance_draws.resize(4, retained_);
    for (int64_t d = 0; d < retained_; ++d)
      for (int v = 0; v < 4; ++v) out.variance_draws(v, d) = variance_draws_[d][v];
    out.delta_draws = std::move(delta_draws_);
    out.beta_mean.resize(H_);
    out.beta_delta_mean.resize(H_);
    for (int h = 0; h < H_; ++h) {
      out.beta_mean[h] = retained_ > 0
                             ? (beta_mean_acc_[h] / retained_).eval()
                             : Eigen::VectorXd::Zero(p_);
      out.beta_delta_mean[h] =
          retained_ > 0 ? (beta_delta_mean_acc_[h] / retained_).eval()
                        : Eigen::VectorXd::Zero(p_);
    }
    out.gamma_mean = retained_ > 0
                         ? Eigen::MatrixXd(gamma_mean_acc_ / retained_)
                         : Eigen::MatrixXd::Zero(p_, m_);
    out.resid_series.resize(retained_);
    for (int64_t d = 0; d < retained_; ++d) out.resid_series[d] = resid_series_[d];
    return out;
  }

  // --- checkpointing --------------------------------------------------------

  std::string checkpoint_dir(int64_t t) const {
    return work_dir_ + "/checkpoint_t" + std::to_string(t);
  }

  void save_checkpoint(int64_t t) {
    const std::string dir = checkpoint_dir(t);
    fs::create_directories(dir);
    nlohmann::json j;
    j["iteration"] = t;
    j["retained"] = retained_;
    j["sigma_y2"] = state_.sigma_y2;
    j["sigma_beta2"] = state_.sigma_beta2;
    j["sigma_gamma2"] = state_.sigma_gamma2;
    j["sigma_eta2"] = state_.sigma_eta2;
    write_text_file(dir + "/state.json", j.dump(2) + "\n");

    for (int h = 0; h < H_; ++h)
      write_f64_blob(dir + "/theta_beta_h" + std::to_string(h) + ".bin", "SBTB",
                     state_.theta_beta[h]);
    write_f64_blob(dir + "/theta_gamma.bin", "SBTB", state_.theta_gamma);
    for (int d = 0; d < state_.delta_terms(); ++d) {
      write_packed_draws(dir + "/delta_d" + std::to_string(d) + ".bin",
                         {state_.delta[d]}, p_);
      Eigen::MatrixXd counts(p_, 1);
      for (int64_t jj = 0; jj < p_; ++jj)
        counts(jj, 0) = static_cast<double>(pip_counts_[d][jj]);
      write_f64_blob(dir + "/pip_counts_d" + std::to_string(d) + ".bin", "SBTB",
                     counts);
      write_packed_draws(dir + "/delta_draws_d" + std::to_string(d) + ".bin",
                         delta_draws_[d], p_);
    }
    for (int h = 0; h < H_; ++h) {
      Eigen::MatrixXd draws(L_, retained_);
      for (int64_t d = 0; d < retained_; ++d) draws.col(d) = theta_draws_[h][d];
      write_f64_blob(dir + "/theta_draws_h" + std::to_string(h) + ".bin",
                     "SBTB", draws);
      write_f64_blob(dir + "/beta_mean_acc_h" + std::to_string(h) + ".bin",
                     "SBTB", beta_mean_acc_[h]);
      write_f64_blob(
          dir + "/beta_delta_mean_acc_h" + std::to_string(h) + ".bin", "SBTB",
          beta_delta_mean_acc_[h]);
    }
    write_f64_blob(dir + "/gamma_mean_acc.bin", "SBTB", gamma_mean_acc_);
    Eigen::MatrixXd vd(4, retained_);
    for (int64_t d = 0; d < retained_; ++d)
      for (int v = 0; v < 4; ++v) vd(v, d) = variance_draws_[d][v];
    write_f64_blob(dir + "/variance_draws.bin", "SBTB", vd);
    Eigen::MatrixXd rs(retained_, 1);
    for (int64_t d = 0; d < retained_; ++d) rs(d, 0) = resid_series_[d];
    write_f64_blob(dir + "/resid_series.bin", "SBTB", rs);

    // sufficient statistics (live values; incremental updates round
    // differently from a fresh recompute, so they are part of the state)
    for (int h = 0; h < H_; ++h) {
      write_f64_blob(dir + "/stat_xy_term_h" + std::to_string(h) + ".bin",
                     "SBTB", stats_.xy_term[h]);
      write_f64_blob(dir + "/stat_xy_proj_h" + std::to_string(h) + ".bin",
                     "SBTB", stats_.xy_proj[h]);
      write_f64_blob(dir + "/stat_eta_x_h" + std::to_string(h) + ".bin", "SBTB",
                     stats_.eta_x[h]);
    }
    write_f64_blob(dir + "/stat_yz_proj.bin", "SBTB", stats_.yz_proj);
    write_f64_blob(dir + "/stat_eta_z.bin", "SBTB", stats_.eta_z);
    write_f64_blob(dir + "/stat_xz_cross.bin", "SBTB", stats_.xz_cross);
    write_f64_blob(dir + "/stat_xx_cross.bin", "SBTB", stats_.xx_cross);
    write_f64_blob(dir + "/stat_z_cross.bin", "SBTB", stats_.z_cross);

    if (cfg_.algorithm == Algorithm::SgldImpute) {
      Eigen::MatrixXd yi(static_cast<Eigen::Index>(missing_.y_imp.size()), 1);
      for (size_t k = 0; k < missing_.y_imp.size(); ++k)
        yi(static_cast<Eigen::Index>(k), 0) = missing_.y_imp[k];
      write_f64_blob(dir + "/y_imp.bin", "SBTB", yi);
    }
    for (int b = 0; b < B_; ++b) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "/ystar_%04d.bin", b);
      write_f64_blob(dir + buf, "SBTB", ystar_->load(b));
      std::snprintf(buf, sizeof(buf), "/eta_%04d.bin", b);
      write_f64_blob(dir + buf, "SBTB", eta_->load(b));
    }
    // JSON diagnostics so resume carries the full stream
    std::ostringstream diag;
    for (const auto& recd : diagnostics_) {
      nlohmann::json dj;
      dj["iteration"] = recd.iteration;
      dj["tau"] = recd.tau;
      dj["batch"] = recd.batch;
      dj["rss"] = recd.rss;
      dj["eta_updated"] = recd.eta_updated;
      dj["peak_rss_bytes"] = recd.peak_rss_bytes;
      dj["elapsed_ms"] = recd.elapsed_ms;
      diag << dj.dump() << "\n";
    }
    write_text_file(dir + "/diagnostics.jsonl", diag.str());
  }

  void load_checkpoint(int64_t t) {
    const std::string dir = checkpoint_dir(t);
    const auto j = nlohmann::json::parse(read_text_file(dir + "/state.json"));
    if (j.at("iteration").get<int64_t>() != t)
      throw data_error("checkpoint iteration mismatch");
    state_.init(H_, cfg_.shared_delta, L_, m_, p_, cfg_.hyper.prior_incl);
    state_.sigma_y2 = j.at("sigma_y2").get<double>();
    state_.sigma_beta2 = j.at("sigma_beta2").get<double>();
    state_.sigma_gamma2 = j.at("sigma_gamma2").get<double>();
    state_.sigma_eta2 = j.at("sigma_eta2").get<double>();
    retained_ = j.at("retained").get<int64_t>();

    for (int h = 0; h < H_; ++h)
      state_.theta_beta[h] = read_f64_blob(
          dir + "/theta_beta_h" + std::to_string(h) + ".bin", "SBTB");
    state_.theta_gamma = read_f64_blob(dir + "/theta_gamma.bin", "SBTB");
    pip_counts_.assign(state_.delta_terms(), std::vector<int64_t>(p_, 0));
    delta_draws_.assign(state_.delta_terms(), {});
    for (int d = 0; d < state_.delta_terms(); ++d) {
      auto cur = read_packed_draws(dir + "/delta_d" + std::to_string(d) + ".bin");
      state_.delta[d] = cur.at(0);
      Eigen::MatrixXd counts = read_f64_blob(
          dir + "/pip_counts_d" + std::to_string(d) + ".bin", "SBTB");
      for (int64_t jj = 0; jj < p_; ++jj)
        pip_counts_[d][jj] = static_cast<int64_t>(counts(jj, 0));
      delta_draws_[d] =
          read_packed_draws(dir + "/delta_draws_d" + std::to_string(d) + ".bin");
    }
    theta_draws_.assign(H_, {});
    beta_mean_acc_.assign(H_, Eigen::VectorXd::Zero(p_));
    beta_delta_mean_acc_.assign(H_, Eigen::VectorXd::Zero(p_));
    for (int h = 0; h < H_; ++h) {
      Eigen::MatrixXd draws = read_f64_blob(
          dir + "/theta_draws_h" + std::to_string(h) + ".bin", "SBTB");
      for (Eigen::Index d = 0; d < draws.cols(); ++d)
        theta_draws_[h].push_back(draws.col(d));
      beta_mean_acc_[h] = read_f64_blob(
          dir + "/beta_mean_acc_h" + std::to_string(h) + ".bin", "SBTB");
      beta_delta_mean_acc_[h] = read_f64_blob(
          dir + "/beta_delta_mean_acc_h" + std::to_string(h) + ".bin", "SBTB");
    }
    gamma_mean_acc_ = read_f64_blob(dir + "/gamma_mean_acc.bin", "SBTB");
    Eigen::MatrixXd vd = read_f64_blob(dir + "/variance_draws.bin", "SBTB");
    variance_draws_.clear();
    for (Eigen::Index d = 0; d < vd.cols(); ++d)
      variance_draws_.push_back({vd(0, d), vd(1, d), vd(2, d), vd(3, d)});
    Eigen::MatrixXd rs = read_f64_blob(dir + "/resid_series.bin", "SBTB");
    resid_series_.assign(rs.data(), rs.data() + rs.rows());

    stats_.init(H_, m_, p_, L_);
    for (int h = 0; h < H_; ++h) {
      stats_.xy_term[h] = read_f64_blob(
          dir + "/stat_xy_term_h" + std::to_string(h) + ".bin", "SBTB");
      stats_.xy_proj[h] = read_f64_blob(
          dir + "/stat_xy_proj_h" + std::to_string(h) + ".bin", "SBTB");
      stats_.eta_x[h] =
          read_f64_blob(dir + "/stat_eta_x_h" + std::to_string(h) + ".bin", "SBTB");
    }
    stats_.yz_proj = read_f64_blob(dir + "/stat_yz_proj.bin", "SBTB");
    stats_.eta_z = read_f64_blob(dir + "/stat_eta_z.bin", "SBTB");
    stats_.xz_cross = read_f64_blob(dir + "/stat_xz_cross.bin", "SBTB");
    stats_.xx_cross = read_f64_blob(dir + "/stat_xx_cross.bin", "SBTB");
    stats_.z_cross = read_f64_blob(dir + "/stat_z_cross.bin", "SBTB");

    if (cfg_.algorithm == Algorithm::SgldImpute) {
      missing_ = MissingIndex::build(store_);
      Eigen::MatrixXd yi = read_f64_blob(dir + "/y_imp.bin", "SBTB");
      if (yi.rows() != static_cast<Eigen::Index>(missing_.y_imp.size()))
        throw data_error("checkpoint y_imp size mismatch");
      for (Eigen::Index k = 0; k < yi.rows(); ++k) missing_.y_imp[k] = yi(k, 0);
    }
    for (int b = 0; b < B_; ++b) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "/ystar_%04d.bin", b);
      ystar_->store(b, read_f64_blob(dir + buf, "SBTB"));
      std::snprintf(buf, sizeof(buf), "/eta_%04d.bin", b);
      eta_->store(b, read_f64_blob(dir + buf, "SBTB"));
    }
    if (cfg_.algorithm == Algorithm::Gibbs) {
      for (int b = 0; b < B_; ++b) {
        const Eigen::MatrixXd et = eta_->load(b);
        auto block = eta_img_.middleCols(store_.subject_offset(b),
                                         store_.batch_size(b));
        for (int r = 0; r < regions_.num_regions(); ++r) {
          const auto& ids = regions_.voxels[r];
          Eigen::MatrixXd img =
              basis_.regions[r].Q *
              et.middleRows(basis_.offsets[r], basis_.regions[r].L_r());
          for (size_t jj = 0; jj < ids.size(); ++jj)
            block.row(ids[jj]) = img.row(static_cast<Eigen::Index>(jj));
        }
      }
    }
    // diagnostics stream up to the checkpoint
    diagnostics_.clear();
    std::istringstream diag(read_text_file(dir + "/diagnostics.jsonl"));
    std::string line;
    while (std::getline(diag, line)) {
      if (line.empty()) continue;
      const auto dj = nlohmann::json::parse(line);
      DiagRecord recd;
      recd.iteration = dj.at("iteration").get<int64_t>();
      recd.tau = dj.at("tau").get<double>();
      recd.batch = dj.at("batch").get<int>();
      recd.rss = dj.at("rss").get<double>();
      recd.eta_updated = dj.at("eta_updated").get<bool>();
      recd.peak_rss_bytes = dj.at("peak_rss_bytes").get<int64_t>();
      recd.elapsed_ms = dj.at("elapsed_ms").get<double>();
      diagnostics_.push_back(recd);
    }
  }

  // --- members ---------------------------------------------------------------

  const BatchStore& store_;
  const BasisSet& basis_;
  const RegionIndex& regions_;
  SamplerConfig cfg_;
  int chain_;
  std::string work_dir_;

  int64_t p_ = 0;
  Eigen::Index L_ = 0;
  int m_ = 0;
  int H_ = 1;
  int B_ = 0;
  int64_t thin_ = 1;
  ExposureSpec espec_;
  RegionLookup lookup_;
  Eigen::VectorXd lambda_;

  SufficientStats stats_;
  ModelState state_;
  std::unique_ptr<BlockMatrixStore> ystar_;
  std::unique_ptr<BlockMatrixStore> eta_;
  MissingIndex missing_;
  Eigen::MatrixXd y_full_;   // gibbs only
  Eigen::MatrixXd eta_img_;  // gibbs only, p x n

  std::vector<Eigen::MatrixXd> x_cache_, z_cache_;
  std::vector<std::vector<int>> diag_subset_;

  std::vector<Eigen::VectorXd> beta_img_;     // H of p
  std::vector<Eigen::VectorXd> masked_beta_;  // H of L
  Eigen::MatrixXd gamma_img_;                 // p x m
  std::vector<Eigen::VectorXd> eta_x_img_;    // H of p

  std::vector<std::vector<int64_t>> pip_counts_;
  std::vector<std::vector<Eigen::VectorXd>> theta_draws_;
  std::vector<std::vector<std::vector<uint8_t>>> delta_draws_;
  std::vector<Eigen::VectorXd> beta_mean_acc_, beta_delta_mean_acc_;
  Eigen::MatrixXd gamma_mean_acc_;
  std::vector<std::array<double, 4>> variance_draws_;
  std::vector<double> resid_series_;
  std::vector<DiagRecord> diagnostics_;
  int64_t retained_ = 0;
};

}  // namespace

ChainOutput run_chain(const FitInputs& in, const SamplerConfig& config,
                      int chain_id, const std::string& work_dir,
                      int64_t resume_from) {
  int64_t min_batch = in.store->batch_size(0);
  for (int b = 1; b < in.store->num_batches(); ++b)
    min_batch = std::min(min_batch, in.store->batch_size(b));
  config.validate(min_batch);
  ChainRunner runner(in, config, chain_id, work_dir);
  return runner.run(resume_from);
}

MultiChainResult run_multichain(const FitInputs& in,
                                const SamplerConfig& config,
                                const std::string& out_dir) {
  MultiChainResult result;
  result.chains.resize(config.chains);
  const int workers = std::max(1, std::min(config.threads, config.chains));
  SamplerConfig chain_cfg = config;
  chain_cfg.threads = std::max(1, config.threads / workers);

  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(config.chains);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int c = w; c < config.chains; c += workers) {
        try {
          result.chains[c] =
              run_chain(in, chain_cfg, c,
                        out_dir + "/chain_" + std::to_string(c) + "/work");
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (config.chains >= 2) {
    // PSRF over the residual-norm series, last 1000 retained iterations
    int64_t len = result.chains[0].resid_series.size();
    for (const auto& c : result.chains)
      len = std::min<int64_t>(len, c.resid_series.size());
    len = std::min<int64_t>(len, 1000);
    if (len >= 2) {
      std::vector<Eigen::VectorXd> series;
      for (const auto& c : result.chains)
        series.push_back(c.resid_series.tail(len));
      result.psrf = gelman_rubin(series);
    }
  }
  return result;
}

void save_chain_output(const std::string& dir, const ChainOutput& out) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["chain_id"] = out.chain_id;
  j["retained"] = out.retained;
  j["thin"] = out.thin;
  j["terms"] = out.beta_mean.size();
  j["delta_terms"] = out.pip.size();
  j["elapsed_ms"] = out.elapsed_ms;
  j["peak_rss"] = out.peak_rss;
  write_text_file(dir + "/chain.json", j.dump(2) + "\n");

  for (size_t h = 0; h < out.beta_mean.size(); ++h) {
    const std::string hs = std::to_string(h);
    write_f64_blob(dir + "/theta_beta_draws_h" + hs + ".bin", "SBTB",
                   out.theta_beta_draws[h]);
    write_f64_blob(dir + "/beta_mean_h" + hs + ".bin", "SBTB", out.beta_mean[h]);
    write_f64_blob(dir + "/beta_delta_mean_h" + hs + ".bin", "SBTB",
                   out.beta_delta_mean[h]);
  }
  for (size_t d = 0; d < out.pip.size(); ++d) {
    const std::string ds = std::to_string(d);
    write_f64_blob(dir + "/pip_d" + ds + ".bin", "SBTB", out.pip[d]);
    write_packed_draws(dir + "/delta_draws_d" + ds + ".bin", out.delta_draws[d],
                       static_cast<size_t>(out.pip[d].size()));
  }
  write_f64_blob(dir + "/gamma_mean.bin", "SBTB", out.gamma_mean);
  write_f64_blob(dir + "/variance_draws.bin", "SBTB", out.variance_draws);
  write_f64_blob(dir + "/resid_series.bin", "SBTB", out.resid_series);

  std::ostringstream diag;
  for (const auto& recd : out.diagnostics) {
    nlohmann::json dj;
    dj["iteration"] = recd.iteration;
    dj["tau"] = recd.tau;
    dj["batch"] = recd.batch;
    dj["rss"] = recd.rss;
    dj["eta_updated"] = recd.eta_updated;
    dj["peak_rss_bytes"] = recd.peak_rss_bytes;
    dj["elapsed_ms"] = recd.elapsed_ms;
    diag << dj.dump() << "\n";
  }
  write_text_file(dir + "/diagnostics.jsonl", diag.str());
}

ChainOutput load_chain_output(const std::string& dir) {
  ChainOutput out;
  const auto j = nlohmann::json::parse(read_text_file(dir + "/chain.json"));
  out.chain_id = j.at("chain_id").get<int>();
  out.retained = j.at("retained").get<int64_t>();
  out.thin = j.at("thin").get<int64_t>();
  out.elapsed_ms = j.at("elapsed_ms").get<double>();
  out.peak_rss = j.at("peak_rss").get<int64_t>();
  const int H = j.at("terms").get<int>();
  const int D = j.at("delta_terms").get<int>();
  for (int h = 0; h < H; ++h) {
    const std::string hs = std::to_string(h);
    out.theta_beta_draws.push_back(
        read_f64_blob(dir + "/theta_beta_draws_h" + hs + ".bin", "SBTB"));
    out.beta_mean.push_back(
        read_f64_blob(dir + "/beta_mean_h" + hs + ".bin", "SBTB"));
    out.beta_delta_mean.push_back(
        read_f64_blob(dir + "/beta_delta_mean_h" + hs + ".bin", "SBTB"));
  }
  for (int d = 0; d < D; ++d) {
    const std::string ds = std::to_string(d);
    out.pip.push_back(read_f64_blob(dir + "/pip_d" + ds + ".bin", "SBTB"));
    out.delta_draws.push_back(
        read_packed_draws(dir + "/delta_draws_d" + ds + ".bin"));
  }
  out.gamma_mean = read_f64_blob(dir + "/gamma_mean.bin", "SBTB");
  out.variance_draws = read_f64_blob(dir + "/variance_draws.bin", "SBTB");
  Eigen::MatrixXd rs = read_f64_blob(dir + "/resid_series.bin", "SBTB");
  out.resid_series = rs.col(0);
  return out;
}

}  // namespace sbios
