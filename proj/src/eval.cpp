#include "sbios/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <Eigen/Dense>

#include "sbios/errors.hpp"

namespace sbios {

void PipAccumulator::add(const std::vector<uint8_t>& delta) {
  if (delta.size() != counts_.size()) throw index_error("pip size mismatch");
  for (size_t j = 0; j < delta.size(); ++j) counts_[j] += delta[j] ? 1 : 0;
  ++draws_;
}

Eigen::VectorXd PipAccumulator::pip() const {
  if (draws_ == 0) throw data_error("pip accumulator has no draws");
  Eigen::VectorXd out(static_cast<Eigen::Index>(counts_.size()));
  for (size_t j = 0; j < counts_.size(); ++j)
    out[j] = static_cast<double>(counts_[j]) / static_cast<double>(draws_);
  return out;
}

Eigen::VectorXd compute_pip(const std::vector<std::vector<uint8_t>>& draws) {
  if (draws.empty()) throw data_error("compute_pip needs at least one draw");
  PipAccumulator acc(static_cast<int64_t>(draws[0].size()));
  for (const auto& d : draws) acc.add(d);
  return acc.pip();
}

RlarSummary compute_rlar(const std::vector<std::vector<uint8_t>>& delta_draws,
                         const RegionIndex& regions) {
  if (delta_draws.empty()) throw data_error("compute_rlar needs draws");
  const int R = regions.num_regions();
  const Eigen::Index M = static_cast<Eigen::Index>(delta_draws.size());
  RlarSummary out;
  out.draws.resize(M, R);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& d = delta_draws[m];
    for (int r = 0; r < R; ++r) {
      int64_t active = 0;
      for (int j : regions.voxels[r]) active += d[j] ? 1 : 0;
      out.draws(m, r) =
          static_cast<double>(active) / static_cast<double>(regions.voxels[r].size());
    }
  }
  out.mean = out.draws.colwise().mean();
  out.lo.resize(R);
  out.hi.resize(R);
  std::vector<double> col(M);
  for (int r = 0; r < R; ++r) {
    for (Eigen::Index m = 0; m < M; ++m) col[m] = out.draws(m, r);
    std::sort(col.begin(), col.end());
    auto quant = [&](double q) {
      const double pos = q * static_cast<double>(M - 1);
      const auto lo_i = static_cast<Eigen::Index>(std::floor(pos));
      const auto hi_i = static_cast<Eigen::Index>(std::ceil(pos));
      const double w = pos - static_cast<double>(lo_i);
      return (1.0 - w) * col[lo_i] + w * col[hi_i];
    };
    out.lo[r] = quant(0.025);
    out.hi[r] = quant(0.975);
  }
  return out;
}

EffectSums effect_sums(const Eigen::VectorXd& beta_mean,
                       const Eigen::VectorXd& pip, const RegionIndex& regions,
                       double pip_threshold) {
  if (pip_threshold <= 0.0 || pip_threshold >= 1.0)
    throw config_error("pip threshold must be in (0,1)");
  const int R = regions.num_regions();
  EffectSums out;
  out.neg_sum = Eigen::VectorXd::Zero(R);
  out.pos_sum = Eigen::VectorXd::Zero(R);
  out.neg_count = Eigen::VectorXi::Zero(R);
  out.pos_count = Eigen::VectorXi::Zero(R);
  for (int r = 0; r < R; ++r) {
    for (int j : regions.voxels[r]) {
      if (pip[j] < pip_threshold) continue;
      const double b = beta_mean[j];
      if (b < 0.0) {
        out.neg_sum[r] += b;
        out.neg_count[r]++;
      } else if (b > 0.0) {
        out.pos_sum[r] += b;
        out.pos_count[r]++;
      }
    }
  }
  return out;
}

PercentDecline percentage_decline(double beta, double beta_tilde,
                                  double gamma1, double gamma2, double c1_mean,
                                  double c2_mean, double age_mean,
                                  double age_sd, double a0_years,
                                  double a1_years) {
  const double a0 = (a0_years - age_mean) / age_sd;
  const double a1 = (a1_years - age_mean) / age_sd;
  const double da = a1 - a0;
  const double num = beta * da + beta_tilde * da * c1_mean;
  const double den =
      beta * a0 + beta_tilde * a0 * c1_mean + gamma1 * c1_mean + gamma2 * c2_mean;
  PercentDecline out;
  if (den == 0.0) return out;
  out.defined = true;
  out.percent = 100.0 * num / den;
  return out;
}

GelmanRubin gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  const int m = static_cast<int>(chains.size());
  if (m < 2) throw config_error("gelman_rubin needs at least 2 chains");
  const Eigen::Index n = chains[0].size();
  for (const auto& c : chains)
    if (c.size() != n) throw config_error("gelman_rubin chains must be equal length");
  if (n < 2) throw config_error("gelman_rubin chains too short");

  Eigen::VectorXd means(m), vars(m);
  for (int i = 0; i < m; ++i) {
    means[i] = chains[i].mean();
    vars[i] = (chains[i].array() - means[i]).square().sum() /
              static_cast<double>(n - 1);
  }
  const double xbar = means.mean();
  const double w = vars.mean();
  const double b_over_n =
      (means.array() - xbar).square().sum() / static_cast<double>(m - 1);
  const double b = static_cast<double>(n) * b_over_n;

  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double sigma2 = (nn - 1.0) / nn * w + b / nn;
  const double v = sigma2 + b / (mm * nn);

  GelmanRubin out;
  if (w <= 0.0) {
    out.psrf = out.upper = std::sqrt((nn - 1.0) / nn);
    return out;
  }
  // df correction terms (coda's gelman.diag)
  const double var_w =
      (vars.array() - w).square().sum() / (mm - 1.0) / mm;
  const double var_b = 2.0 * b * b / (mm - 1.0);
  Eigen::VectorXd means2 = means.array().square();
  auto cov = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& c2) {
    return ((a.array() - a.mean()) * (c2.array() - c2.mean())).sum() / (mm - 1.0);
  };
  const double cov_wb =
      (nn / mm) * (cov(vars, means2) - 2.0 * xbar * cov(vars, means));
  const double var_v =
      ((nn - 1.0) * (nn - 1.0) * var_w + std::pow(1.0 + 1.0 / mm, 2) * var_b +
       2.0 * (nn - 1.0) * (1.0 + 1.0 / mm) * cov_wb) /
      (nn * nn);
  const double r2_fixed = (nn - 1.0) / nn;
  const double r2_random = (1.0 + 1.0 / mm) * (1.0 / nn) * (b / w);
  const double r2 = r2_fixed + r2_random;

  double df_adjust = 1.0;
  if (var_v > 0.0) {
    const double df = 2.0 * v * v / var_v;
    df_adjust = (df + 3.0) / (df + 1.0);
  }
  out.psrf = std::sqrt(df_adjust * r2);

  double r2_upper = r2;
  if (var_w > 0.0 && b > 0.0) {
    const double df2 = 2.0 * w * w / var_w;
    boost::math::fisher_f f(mm - 1.0, df2);
    r2_upper = r2_fixed + boost::math::quantile(f, 0.975) * r2_random;
  }
  out.upper = std::sqrt(df_adjust * r2_upper);
  return out;
}

Eigen::VectorXd bh_adjust(const Eigen::VectorXd& p_values) {
  const Eigen::Index n = p_values.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return p_values[a] < p_values[b];
  });
  Eigen::VectorXd adj(n);
  double running = 1.0;
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const double scaled =
        p_values[order[k]] * static_cast<double>(n) / static_cast<double>(k + 1);
    running = std::min(running, scaled);
    adj[order[k]] = running;
  }
  return adj;
}

MuaResult mua_fit(const BatchStore& store,
                  const std::vector<uint8_t>& group_mask) {
  const int64_t p = store.meta().p;
  const int m = store.meta().m;
  const int q = 2 + m;  // intercept, exposure, confounders
  const int64_t n = store.meta().n;
  if (n <= q) throw data_error("mua_fit: too few subjects for the design");

  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(q, p);  // q x p
  Eigen::VectorXd ysq = Eigen::VectorXd::Zero(p);
  for (int b = 0; b < store.num_batches(); ++b) {
    OutcomeView yv = store.map_outcomes(b);
    auto y = yv.matrix();
    Eigen::MatrixXd cov = store.covariates(b);
    Eigen::MatrixXd design(cov.rows(), q);
    design.col(0).setOnes();
    design.rightCols(q - 1) = cov;
    xtx.noalias() += design.transpose() * design;
    xty.noalias() += design.transpose() * y.transpose();
    ysq.noalias() += y.array().square().matrix().rowwise().sum();
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  MuaResult out;
  out.coefficient = Eigen::VectorXd::Zero(p);
  out.coef_all = Eigen::MatrixXd::Zero(q, p);
  out.t_stat = Eigen::VectorXd::Zero(p);
  out.p_value = Eigen::VectorXd::Ones(p);
  out.valid.assign(p, 0);
  if (lu.rank() < q) {
    // shared design is rank deficient: nothing is estimable
    out.p_bh = Eigen::VectorXd::Ones(p);
    return out;
  }
  const Eigen::MatrixXd xtx_inv = lu.inverse();
  const double se_factor = xtx_inv(1, 1);  // exposure coefficient variance factor
  const double df = static_cast<double>(n - q);
  boost::math::students_t tdist(df);

  for (int64_t j = 0; j < p; ++j) {
    if (!group_mask.empty() && !group_mask[j]) continue;
    const Eigen::VectorXd beta = xtx_inv * xty.col(j);
    const double rss = std::max(0.0, ysq[j] - beta.dot(xty.col(j)));
    const double s2 = rss / df;
    out.coefficient[j] = beta[1];
    out.coef_all.col(j) = beta;
    out.valid[j] = 1;
    if (s2 <= 0.0) {
      out.t_stat[j] = beta[1] == 0.0 ? 0.0 : std::copysign(1e12, beta[1]);
      out.p_value[j] = beta[1] == 0.0 ? 1.0 : 0.0;
      continue;
    }
    const double se = std::sqrt(s2 * se_factor);
    const double t = beta[1] / se;
    out.t_stat[j] = t;
    out.p_value[j] = 2.0 * boost::math::cdf(tdist, -std::abs(t));
  }

  // BH across the group mask only
  std::vector<Eigen::Index> idx;
  for (int64_t j = 0; j < p; ++j)
    if (out.valid[j]) idx.push_back(j);
  Eigen::VectorXd masked(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) masked[k] = out.p_value[idx[k]];
  Eigen::VectorXd adj = bh_adjust(masked);
  out.p_bh = Eigen::VectorXd::Ones(p);
  for (size_t k = 0; k < idx.size(); ++k) out.p_bh[idx[k]] = adj[k];
  return out;
}

namespace {

// The operating points are nested (selection sets grow as the cut loosens),
// so sorting lexicographically reproduces the threshold path; vertical runs
// at one FPR are kept intact rather than collapsed.
double interpolate_roc(std::vector<std::pair<double, double>> pts,
                       double target_fpr) {
  pts.emplace_back(0.0, 0.0);
  pts.emplace_back(1.0, 1.0);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  if (target_fpr <= pts.front().first) return pts.front().second;
  if (target_fpr >= pts.back().first) return pts.back().second;
  // last point with fpr <= target is the top of its vertical run; the next
  // point is the bottom of the following run
  size_t i = 0;
  while (i + 1 < pts.size() && pts[i + 1].first <= target_fpr) ++i;
  const auto& [f0, t0] = pts[i];
  const auto& [f1, t1] = pts[i + 1];
  if (f1 == f0) return t1;
  const double w = (target_fpr - f0) / (f1 - f0);
  return t0 + w * (t1 - t0);
}

}  // namespace

double tpr_at_fpr(const Eigen::VectorXd& scores,
                  const std::vector<uint8_t>& truth, double target_fpr,
                  int thresholds, bool scores_are_pvalues) {
  const Eigen::Index p = scores.size();
  if (static_cast<Eigen::Index>(truth.size()) != p)
    throw config_error("tpr_at_fpr: size mismatch");
  int64_t pos = 0, neg = 0;
  for (uint8_t t : truth) (t ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw data_error("tpr_at_fpr: degenerate truth labels");

  std::vector<double> cuts(thresholds);
  if (scores_are_pvalues) {
    // quantiles of the scores at the evenly spaced probabilities
    std::vector<double> sorted(scores.data(), scores.data() + p);
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < thresholds; ++k) {
      const double prob = static_cast<double>(k) / (thresholds - 1);
      const double posn = prob * static_cast<double>(p - 1);
      const auto lo = static_cast<Eigen::Index>(std::floor(posn));
      const auto hi = static_cast<Eigen::Index>(std::ceil(posn));
      const double w = posn - static_cast<double>(lo);
      cuts[k] = (1.0 - w) * sorted[lo] + w * sorted[hi];
    }
  } else {
    for (int k = 0; k < thresholds; ++k)
      cuts[k] = static_cast<double>(k) / (thresholds - 1);
  }

  std::vector<std::pair<double, double>> pts;
  for (double c : cuts) {
    int64_t tp = 0, fp = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const bool sel = scores_are_pvalues ? scores[j] <= c : scores[j] >= c;
      if (!sel) continue;
      (truth[j] ? tp : fp)++;
    }
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos));
  }
  return interpolate_roc(std::move(pts), target_fpr);
}

FdrTpr fdr_tpr_at_pip(const Eigen::VectorXd& pip,
                      const std::vector<uint8_t>& truth, double cutoff) {
  std::vector<uint8_t> sel(truth.size());
  for (size_t j = 0; j < truth.size(); ++j) sel[j] = pip[static_cast<Eigen::Index>(j)] >= cutoff;
  return fdr_tpr_selected(sel, truth);
}

FdrTpr fdr_tpr_selected(const std::vector<uint8_t>& selected,
                        const std::vector<uint8_t>& truth) {
  if (selected.size() != truth.size())
    throw config_error("fdr_tpr: size mismatch");
  int64_t tp = 0, fp = 0, pos = 0;
  for (size_t j = 0; j < truth.size(); ++j) {
    if (truth[j]) pos++;
    if (selected[j]) (truth[j] ? tp : fp)++;
  }
  FdrTpr out;
  out.selected = tp + fp;
  out.fdr = static_cast<double>(fp) /
            static_cast<double>(std::max<int64_t>(1, tp + fp));
  out.tpr = pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pos);
  return out;
}

}  // namespace sbios
