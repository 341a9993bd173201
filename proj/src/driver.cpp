#include "sbios/driver.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sbios/basis.hpp"
#include "sbios/binio.hpp"
#include "sbios/datastore.hpp"
#include "sbios/errors.hpp"
#include "sbios/eval.hpp"
#include "sbios/simgen.hpp"

namespace sbios {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct FitSpec {
  std::string data;
  std::string basis;
  std::string out;
  SamplerConfig sampler;
};

}  // namespace

json sampler_to_json(const SamplerConfig& c) {
  json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["subsample"] = c.subsample;
  j["eta_every"] = c.eta_every;
  j["step"] = {{"a", c.step.a}, {"b", c.step.b}, {"gamma", c.step.gamma_exp}};
  j["seed"] = c.seed;
  j["chains"] = c.chains;
  j["threads"] = c.threads;
  j["thin_target"] = c.thin_target;
  j["init"] = c.init == InitMode::Zero ? "zero"
              : c.init == InitMode::One ? "one"
                                        : "mua";
  j["shared_delta"] = c.shared_delta;
  j["interaction_confounder"] = c.interaction_confounder;
  j["hyper"] = {{"ig_y", c.hyper.ig_y},
                {"ig_eta", c.hyper.ig_eta},
                {"ig_gamma", c.hyper.ig_gamma},
                {"ig_beta", c.hyper.ig_beta},
                {"sigma_beta_sampled", c.hyper.sigma_beta_sampled},
                {"sigma_beta2_fixed", c.hyper.sigma_beta2_fixed},
                {"prior_incl", c.hyper.prior_incl}};
  j["sigma_inits"] = {{"y2", c.sigma_y2_init},
                      {"beta2", c.sigma_beta2_init},
                      {"gamma2", c.sigma_gamma2_init},
                      {"eta2", c.sigma_eta2_init}};
  j["diag_fraction"] = c.diag_fraction;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

void sampler_from_json(const json& j, SamplerConfig& c) {
  if (j.contains("algorithm"))
    c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  c.iterations = j.value("iterations", c.iterations);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.subsample = j.value("subsample", c.subsample);
  c.eta_every = j.value("eta_every", c.eta_every);
  if (j.contains("step")) {
    c.step.a = j["step"].value("a", c.step.a);
    c.step.b = j["step"].value("b", c.step.b);
    c.step.gamma_exp = j["step"].value("gamma", c.step.gamma_exp);
  }
  c.seed = j.value("seed", c.seed);
  c.chains = j.value("chains", c.chains);
  c.threads = j.value("threads", c.threads);
  c.thin_target = j.value("thin_target", c.thin_target);
  if (j.contains("init")) {
    const std::string v = j.at("init").get<std::string>();
    if (v == "zero")
      c.init = InitMode::Zero;
    else if (v == "one")
      c.init = InitMode::One;
    else if (v == "mua")
      c.init = InitMode::Mua;
    else
      throw config_error("init must be zero, one, or mua");
  }
  c.shared_delta = j.value("shared_delta", c.shared_delta);
  c.interaction_confounder =
      j.value("interaction_confounder", c.interaction_confounder);
  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    c.hyper.ig_y = h.value("ig_y", c.hyper.ig_y);
    c.hyper.ig_eta = h.value("ig_eta", c.hyper.ig_eta);
    c.hyper.ig_gamma = h.value("ig_gamma", c.hyper.ig_gamma);
    c.hyper.ig_beta = h.value("ig_beta", c.hyper.ig_beta);
    c.hyper.sigma_beta_sampled =
        h.value("sigma_beta_sampled", c.hyper.sigma_beta_sampled);
    c.hyper.sigma_beta2_fixed =
        h.value("sigma_beta2_fixed", c.hyper.sigma_beta2_fixed);
    c.hyper.prior_incl = h.value("prior_incl", c.hyper.prior_incl);
  }
  if (j.contains("sigma_inits")) {
    const auto& s = j["sigma_inits"];
    c.sigma_y2_init = s.value("y2", c.sigma_y2_init);
    c.sigma_beta2_init = s.value("beta2", c.sigma_beta2_init);
    c.sigma_gamma2_init = s.value("gamma2", c.sigma_gamma2_init);
    c.sigma_eta2_init = s.value("eta2", c.sigma_eta2_init);
  }
  c.diag_fraction = j.value("diag_fraction", c.diag_fraction);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

LoadedResults load_results(const std::string& dir) {
  LoadedResults r;
  r.run_manifest = json::parse(read_text_file(dir + "/run_manifest.json"));
  r.algorithm = r.run_manifest.at("sampler").at("algorithm").get<std::string>();
  r.data_manifest = r.run_manifest.at("data").get<std::string>();
  const int chains = r.run_manifest.at("sampler").at("chains").get<int>();
  int64_t total = 0;
  for (int c = 0; c < chains; ++c) {
    r.chains.push_back(load_chain_output(dir + "/chain_" + std::to_string(c)));
    total += r.chains.back().retained;
  }
  if (total == 0) throw data_error("results contain no retained draws: " + dir);
  const Eigen::Index p = r.chains[0].pip[0].size();
  r.pip = Eigen::VectorXd::Zero(p);
  r.beta_mean = Eigen::VectorXd::Zero(p);
  r.beta_delta_mean = Eigen::VectorXd::Zero(p);
  r.gamma_mean = Eigen::MatrixXd::Zero(p, r.chains[0].gamma_mean.cols());
  const bool two_terms = r.chains[0].beta_mean.size() > 1;
  if (two_terms) r.beta_tilde_mean = Eigen::VectorXd::Zero(p);
  for (const auto& c : r.chains) {
    const double w = static_cast<double>(c.retained) / static_cast<double>(total);
    r.pip += w * c.pip[0];
    r.beta_mean += w * c.beta_mean[0];
    r.beta_delta_mean += w * c.beta_delta_mean[0];
    r.gamma_mean += w * c.gamma_mean;
    if (two_terms) r.beta_tilde_mean += w * c.beta_mean[1];
    for (const auto& d : c.delta_draws[0]) r.delta_draws.push_back(d);
  }
  return r;
}

json fit_run(const std::string& manifest_path, const json& overrides,
             std::string out_dir, bool resume) {
  const std::string& manifest = manifest_path;
  const std::string& out = out_dir;
  FitSpec spec;

  json run;
  const json parsed = json::parse(read_text_file(manifest));
  if (parsed.contains("type") &&
      parsed.at("type").get<std::string>() == "sbios_run") {
    run = parsed;
    spec.data = run.at("data").get<std::string>();
    spec.basis = run.at("basis").get<std::string>();
    if (run.contains("out")) spec.out = run.at("out").get<std::string>();
    if (run.contains("sampler")) sampler_from_json(run["sampler"], spec.sampler);
  } else if (parsed.contains("batches")) {
    spec.data = fs::absolute(manifest).string();
  } else {
    throw schema_error("manifest is neither a store nor a run manifest");
  }
  sampler_from_json(overrides, spec.sampler);
  if (overrides.contains("basis"))
    spec.basis = overrides.at("basis").get<std::string>();
  if (!out.empty()) spec.out = out;
  if (spec.out.empty()) throw config_error("--out is required");
  if (spec.basis.empty()) throw config_error("--basis is required");

  BatchStore store = BatchStore::open(spec.data);
  BasisSet basis = load_basis_set(spec.basis);
  VoxelGrid grid = store.load_grid();
  RegionIndex regions = RegionIndex::build(grid);
  FitInputs inputs{&store, &basis, &regions};

  fs::create_directories(spec.out);
  json echo;
  echo["type"] = "sbios_run";
  echo["schema_version"] = 1;
  echo["data"] = fs::absolute(spec.data).string();
  echo["basis"] = fs::absolute(spec.basis).string();
  echo["sampler"] = sampler_to_json(spec.sampler);
  write_text_file(spec.out + "/run_manifest.json", echo.dump(2) + "\n");

  int64_t resume_from = 0;
  if (resume) {
    // latest checkpoint shared by all chains
    resume_from = -1;
    for (int c = 0; c < spec.sampler.chains; ++c) {
      int64_t latest = 0;
      const std::string wd = spec.out + "/chain_" + std::to_string(c) + "/work";
      if (fs::exists(wd))
        for (const auto& e : fs::directory_iterator(wd)) {
          const std::string name = e.path().filename().string();
          if (name.rfind("checkpoint_t", 0) == 0)
            latest = std::max<int64_t>(latest, std::stoll(name.substr(12)));
        }
      resume_from = resume_from < 0 ? latest : std::min(resume_from, latest);
    }
    if (resume_from <= 0) throw data_error("no checkpoint to resume from");
  }

  MultiChainResult result;
  if (resume_from > 0) {
    result.chains.resize(spec.sampler.chains);
    for (int c = 0; c < spec.sampler.chains; ++c)
      result.chains[c] =
          run_chain(inputs, spec.sampler, c,
                    spec.out + "/chain_" + std::to_string(c) + "/work",
                    resume_from);
    if (spec.sampler.chains >= 2) {
      std::vector<Eigen::VectorXd> series;
      int64_t len = result.chains[0].resid_series.size();
      for (const auto& c : result.chains)
        len = std::min<int64_t>(len, c.resid_series.size());
      len = std::min<int64_t>(len, 1000);
      if (len >= 2) {
        for (const auto& c : result.chains)
          series.push_back(c.resid_series.tail(len));
        result.psrf = gelman_rubin(series);
      }
    }
  } else {
    result = run_multichain(inputs, spec.sampler, spec.out);
  }

  json summary;
  summary["algorithm"] = algorithm_name(spec.sampler.algorithm);
  summary["config_digest"] = fnv1a(echo.dump());
  json chains = json::array();
  double elapsed = 0.0;
  int64_t peak = 0;
  for (const auto& c : result.chains) {
    save_chain_output(spec.out + "/chain_" + std::to_string(c.chain_id), c);
    chains.push_back({{"chain", c.chain_id},
                      {"retained", c.retained},
                      {"elapsed_ms", c.elapsed_ms},
                      {"peak_rss_bytes", c.peak_rss}});
    elapsed = std::max(elapsed, c.elapsed_ms);
    peak = std::max(peak, c.peak_rss);
  }
  summary["chains"] = chains;
  summary["elapsed_ms"] = elapsed;
  summary["peak_rss_bytes"] = peak;
  if (result.psrf) {
    summary["psrf"] = result.psrf->psrf;
    summary["psrf_upper"] = result.psrf->upper;
  }
  write_text_file(spec.out + "/summary.json", summary.dump(2) + "\n");
  return summary;
}

json evaluate_run(const std::vector<std::string>& results_dirs,
                  const std::string& truth_path, double pip_cutoff,
                  double target_fpr, double op_threshold,
                  const std::string& out_dir) {
  const std::string& out = out_dir;
  if (results_dirs.empty()) throw config_error("need at least one --results");
  fs::create_directories(out);

  json all_metrics;
  std::vector<LoadedResults> all;
  for (const auto& d : results_dirs) all.push_back(load_results(d));
  BatchStore store = BatchStore::open(all[0].data_manifest);
  VoxelGrid grid = store.load_grid();
  RegionIndex regions = RegionIndex::build(grid);
  const int64_t p = store.meta().p;

  Eigen::VectorXd h = store.load_observed_proportion();
  std::vector<uint8_t> group_mask(p, 1);
  const double thr = op_threshold >= 0.0 ? op_threshold
                                         : store.meta().op_threshold;
  for (int64_t j = 0; j < p; ++j) group_mask[j] = h[j] >= thr ? 1 : 0;

  MuaResult mua = mua_fit(store, group_mask);

  // per-voxel CSV from the first results dir (the primary fit)
  const LoadedResults& prim = all[0];
  {
    std::ostringstream csv;
    csv << "voxel_id,x,y,z,region,pip,beta_mean,beta_delta_mean,mua_p,mua_p_bh\n";
    csv.precision(10);
    for (int64_t j = 0; j < p; ++j) {
      if (!group_mask[j]) continue;
      const int d = grid.dim();
      csv << j << ',' << grid.coords(j, 0) << ',' << grid.coords(j, 1) << ','
          << (d > 2 ? grid.coords(j, 2) : 0.0) << ',' << grid.region_labels[j]
          << ',' << prim.pip[j] << ',' << prim.beta_mean[j] << ','
          << prim.beta_delta_mean[j] << ',' << mua.p_value[j] << ','
          << mua.p_bh[j] << '\n';
    }
    write_text_file(out + "/voxels.csv", csv.str());
  }

  // per-region CSV
  {
    RlarSummary rlar = compute_rlar(prim.delta_draws, regions);
    EffectSums sums =
        effect_sums(prim.beta_delta_mean, prim.pip, regions, pip_cutoff);
    const auto& meta = store.meta();
    const bool pct_ok = meta.has_exposure_stats && meta.m >= 2;
    std::ostringstream csv;
    csv << "region,size,rlar_mean,rlar_lo,rlar_hi,neg_sum,neg_count,pos_sum,"
           "pos_count,median_pct_50_60\n";
    csv.precision(10);
    for (int r = 0; r < regions.num_regions(); ++r) {
      csv << (r + 1) << ',' << regions.voxels[r].size() << ',' << rlar.mean[r]
          << ',' << rlar.lo[r] << ',' << rlar.hi[r] << ',' << sums.neg_sum[r]
          << ',' << sums.neg_count[r] << ',' << sums.pos_sum[r] << ','
          << sums.pos_count[r] << ',';
      if (pct_ok) {
        std::vector<double> pcts;
        for (int j : regions.voxels[r]) {
          if (prim.pip[j] < pip_cutoff) continue;
          const double bt =
              prim.beta_tilde_mean.size() > 0 ? prim.beta_tilde_mean[j] : 0.0;
          PercentDecline d = percentage_decline(
              prim.beta_mean[j], bt, prim.gamma_mean(j, 0),
              prim.gamma_mean(j, 1), meta.confounder_means[0],
              meta.confounder_means[1], meta.exposure_mean, meta.exposure_sd,
              50.0, 60.0);
          if (d.defined) pcts.push_back(d.percent);
        }
        if (!pcts.empty()) {
          std::sort(pcts.begin(), pcts.end());
          const size_t mid = pcts.size() / 2;
          const double median = pcts.size() % 2 ? pcts[mid]
                                                : 0.5 * (pcts[mid - 1] + pcts[mid]);
          csv << median;
        }
      }
      csv << '\n';
    }
    write_text_file(out + "/regions.csv", csv.str());
  }

  // metrics against ground truth
  if (!truth_path.empty()) {
    GroundTruth truth = load_truth_csv(truth_path);
    std::vector<uint8_t> truth_masked;
    for (int64_t j = 0; j < p; ++j)
      if (group_mask[j]) truth_masked.push_back(truth.delta_true[j]);

    std::ostringstream csv;
    csv << "method,tpr_at_fpr,fdr_at_pip,tpr_at_pip\n";
    csv.precision(6);
    json& metrics = all_metrics;
    for (const auto& res : all) {
      Eigen::VectorXd scores(truth_masked.size());
      Eigen::Index k = 0;
      for (int64_t j = 0; j < p; ++j)
        if (group_mask[j]) scores[k++] = res.pip[j];
      const double tpr = tpr_at_fpr(scores, truth_masked, target_fpr);
      FdrTpr ft = fdr_tpr_at_pip(scores, truth_masked, pip_cutoff);
      csv << res.algorithm << ',' << tpr << ',' << ft.fdr << ',' << ft.tpr
          << '\n';
      metrics[res.algorithm] = {{"tpr_at_fpr", tpr},
                                {"fdr_at_pip", ft.fdr},
                                {"tpr_at_pip", ft.tpr}};
    }
    // MUA row: BH-adjusted p-values as scores
    Eigen::VectorXd pscores(truth_masked.size());
    std::vector<uint8_t> sel(truth_masked.size());
    Eigen::Index k = 0;
    for (int64_t j = 0; j < p; ++j)
      if (group_mask[j]) {
        pscores[k] = mua.p_bh[j];
        sel[k] = mua.p_bh[j] <= 1.0 - pip_cutoff ? 1 : 0;
        ++k;
      }
    const double mua_tpr =
        tpr_at_fpr(pscores, truth_masked, target_fpr, 20, true);
    FdrTpr mua_ft = fdr_tpr_selected(sel, truth_masked);
    csv << "mua," << mua_tpr << ',' << mua_ft.fdr << ',' << mua_ft.tpr << '\n';
    metrics["mua"] = {{"tpr_at_fpr", mua_tpr},
                      {"fdr_at_pip", mua_ft.fdr},
                      {"tpr_at_pip", mua_ft.tpr}};
    write_text_file(out + "/metrics.csv", csv.str());
    write_text_file(out + "/metrics.json", metrics.dump(2) + "\n");
  }

  // run summary echo
  json summary;
  summary["results"] = results_dirs;
  summary["pip_cutoff"] = pip_cutoff;
  summary["target_fpr"] = target_fpr;
  summary["op_threshold"] = thr;
  write_text_file(out + "/eval_summary.json", summary.dump(2) + "\n");
  return all_metrics;
}

void compare_run(const std::string& dir_a, const std::string& dir_b,
                 double pip_cutoff, double op_threshold,
                 const std::string& out_csv) {
  const std::string& out = out_csv;
  LoadedResults a = load_results(dir_a);
  LoadedResults b = load_results(dir_b);
  BatchStore store = BatchStore::open(a.data_manifest);
  const int64_t p = store.meta().p;
  Eigen::VectorXd h = store.load_observed_proportion();
  const double thr = op_threshold >= 0.0 ? op_threshold
                                         : store.meta().op_threshold;

  auto stratum = [](double hv) {
    if (hv < 0.5) return std::string("below_0.5");
    if (hv < 0.7) return std::string("[0.5,0.7)");
    if (hv < 0.9) return std::string("[0.7,0.9)");
    return std::string("[0.9,1]");
  };

  std::ostringstream csv;
  csv << "voxel_id,op,stratum,est_a,est_b,diff\n";
  csv.precision(10);
  for (int64_t j = 0; j < p; ++j) {
    if (h[j] < thr) continue;
    const double ea = a.pip[j] >= pip_cutoff ? a.beta_mean[j] : 0.0;
    const double eb = b.pip[j] >= pip_cutoff ? b.beta_mean[j] : 0.0;
    csv << j << ',' << h[j] << ',' << stratum(h[j]) << ',' << ea << ',' << eb
        << ',' << (eb - ea) << '\n';
  }
  write_text_file(out, csv.str());
}

void report_run(const std::string& results_dir, const std::string& out_path) {
  const std::string& out = out_path;
  LoadedResults res = load_results(results_dir);
  json summary =
      json::parse(read_text_file(results_dir + "/summary.json"));
  BatchStore store = BatchStore::open(res.data_manifest);
  VoxelGrid grid = store.load_grid();
  RegionIndex regions = RegionIndex::build(grid);
  RlarSummary rlar = compute_rlar(res.delta_draws, regions);

  std::vector<int> order(regions.num_regions());
  for (int r = 0; r < regions.num_regions(); ++r) order[r] = r;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return rlar.mean[x] > rlar.mean[y]; });

  std::ostringstream md;
  md << "# Run report\n\n";
  md << "- algorithm: " << res.algorithm << "\n";
  md << "- chains: " << res.chains.size() << "\n";
  md << "- retained draws per chain: " << res.chains[0].retained << "\n";
  md << "- elapsed_ms: " << summary.value("elapsed_ms", 0.0) << "\n";
  md << "- peak_rss_bytes: " << summary.value("peak_rss_bytes", int64_t{0})
     << "\n";
  if (summary.contains("psrf"))
    md << "- gelman-rubin psrf: " << summary["psrf"].get<double>()
       << " (upper " << summary.value("psrf_upper", 0.0) << ")\n";
  md << "\n## Top regions by RLAR\n\n";
  md << "| region | size | rlar | 95% CI |\n|---|---|---|---|\n";
  const int top = std::min(10, regions.num_regions());
  md.precision(4);
  for (int k = 0; k < top; ++k) {
    const int r = order[k];
    md << "| " << (r + 1) << " | " << regions.voxels[r].size() << " | "
       << rlar.mean[r] << " | [" << rlar.lo[r] << ", " << rlar.hi[r]
       << "] |\n";
  }
  write_text_file(out, md.str());
}

}  // namespace sbios
