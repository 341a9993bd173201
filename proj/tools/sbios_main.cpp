// sbios: simulate / ingest / basis / fit / evaluate / compare / report
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
// divergence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "sbios/basis.hpp"
#include "sbios/binio.hpp"
#include "sbios/datastore.hpp"
#include "sbios/errors.hpp"
#include "sbios/eval.hpp"
#include "sbios/driver.hpp"
#include "sbios/sampler.hpp"
#include "sbios/simgen.hpp"

using namespace sbios;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int env_threads_default() {
  if (const char* v = std::getenv("SBIOS_THREADS")) {
    const int t = std::atoi(v);
    if (t >= 1) return t;
  }
  return 1;
}



// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out,
                 std::optional<uint64_t> seed) {
  SimConfig cfg = load_sim_config(config_path);
  if (seed) cfg.seed = *seed;
  SimOutput result = generate(cfg, out);
  std::cout << "wrote " << result.store.batches.size() << " batches, p="
            << result.store.p << ", n=" << result.store.n << " under " << out
            << "\n";
  return 0;
}

int cmd_ingest(const std::string& outcomes, const std::string& masks,
               const std::string& covariates, const std::string& region_map,
               int64_t batch_size, double op_threshold, bool do_standardize,
               const std::string& out) {
  VoxelGrid grid = load_region_map_csv(region_map);
  const int64_t p = grid.num_voxels();

  // covariates: CSV with one row per subject, exposure first
  std::ifstream cov_in(covariates);
  if (!cov_in) throw io_error("cannot open: " + covariates);
  std::vector<Eigen::VectorXd> cov_rows;
  std::string line;
  while (std::getline(cov_in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    bool numeric = true;
    while (std::getline(ss, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) continue;  // header
    cov_rows.push_back(Eigen::Map<Eigen::VectorXd>(
        vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  if (cov_rows.empty()) throw data_error("no covariate rows in " + covariates);
  const int64_t n = static_cast<int64_t>(cov_rows.size());
  const int m = static_cast<int>(cov_rows[0].size()) - 1;
  if (m < 0) throw schema_error("covariates need at least the exposure column");

  // outcomes: raw little-endian float64, column-major p x n
  std::FILE* yf = std::fopen(outcomes.c_str(), "rb");
  if (!yf) throw io_error("cannot open: " + outcomes);
  // masks: raw bytes p x n, or "full"
  std::FILE* mf = nullptr;
  if (masks != "full") {
    mf = std::fopen(masks.c_str(), "rb");
    if (!mf) {
      std::fclose(yf);
      throw io_error("cannot open: " + masks);
    }
  }

  int64_t i = 0;
  auto next = [&](SubjectRecord& rec) {
    if (i >= n) return false;
    rec.outcome.resize(p);
    if (std::fread(rec.outcome.data(), 8, p, yf) != static_cast<size_t>(p))
      throw schema_error("outcome file too short for n subjects");
    rec.mask.assign(p, 1);
    if (mf) {
      std::vector<uint8_t> buf(p);
      if (std::fread(buf.data(), 1, p, mf) != static_cast<size_t>(p))
        throw schema_error("mask file too short for n subjects");
      for (int64_t j = 0; j < p; ++j) {
        rec.mask[j] = buf[j] ? 1 : 0;
        if (!rec.mask[j]) rec.outcome[j] = 0.0;
      }
    }
    rec.covariates = cov_rows[i];
    if (rec.covariates.size() != 1 + m)
      throw schema_error("inconsistent covariate width");
    ++i;
    return true;
  };

  const std::string raw_dir = do_standardize ? out + "_raw" : out;
  ingest(raw_dir, next, p, m, batch_size, grid, op_threshold);
  std::fclose(yf);
  if (mf) std::fclose(mf);
  if (do_standardize) {
    BatchStore raw = BatchStore::open(raw_dir + "/manifest.json");
    standardize(raw, out);
  }
  std::cout << "ingested n=" << n << ", p=" << p << " into " << out << "\n";
  return 0;
}

int cmd_basis(const std::string& manifest, const std::string& out,
              const std::string& kernel, double rho, double nu, bool tune,
              std::vector<double> rho_grid, std::vector<double> nu_grid,
              int64_t tune_subjects, const std::string& truncation,
              double energy, double count_frac, const std::string& distance,
              double se_a, double se_b, int degree) {
  BatchStore store = BatchStore::open(manifest);
  VoxelGrid grid = store.load_grid();
  RegionIndex regions = RegionIndex::build(grid);
  BasisSet basis;

  if (kernel == "modified-se") {
    if (regions.num_regions() != 1)
      throw config_error("modified-se kernel needs a single-region map");
    RegionBasis rb = modified_se_basis(grid.coords, se_a, se_b, degree);
    rb.region_id = 1;
    basis.regions.push_back(std::move(rb));
  } else if (kernel == "matern") {
    const DistanceMode mode =
        distance == "plain" ? DistanceMode::Plain : DistanceMode::Squared;
    TruncationSpec trunc;
    if (truncation == "energy")
      trunc = {TruncationMode::EnergyFraction, energy};
    else
      trunc = {TruncationMode::CountFraction, count_frac};

    // empirical covariance of residual images on a subject subsample
    std::vector<Eigen::MatrixXd> emp;
    if (tune) {
      if (rho_grid.empty() || nu_grid.empty())
        throw config_error("--tune needs --rho-grid and --nu-grid");
      MuaResult mua = mua_fit(store, {});
      const int64_t n_sub = std::min<int64_t>(
          store.meta().n, tune_subjects > 0 ? tune_subjects : 1000);
      emp.resize(regions.num_regions());
      std::vector<int64_t> counts(regions.num_regions(), 0);
      for (int r = 0; r < regions.num_regions(); ++r)
        emp[r] = Eigen::MatrixXd::Zero(regions.voxels[r].size(),
                                       regions.voxels[r].size());
      int64_t used = 0;
      for (int b = 0; b < store.num_batches() && used < n_sub; ++b) {
        OutcomeView yv = store.map_outcomes(b);
        Eigen::MatrixXd cov = store.covariates(b);
        for (int64_t i = 0; i < yv.n_b() && used < n_sub; ++i, ++used) {
          Eigen::VectorXd resid = yv.matrix().col(i);
          Eigen::VectorXd design(2 + store.meta().m);
          design[0] = 1.0;
          design.tail(1 + store.meta().m) = cov.row(i);
          resid -= mua.coef_all.transpose() * design;
          for (int r = 0; r < regions.num_regions(); ++r) {
            const auto& ids = regions.voxels[r];
            Eigen::VectorXd rr(ids.size());
            for (size_t jj = 0; jj < ids.size(); ++jj) rr[jj] = resid[ids[jj]];
            emp[r].noalias() += rr * rr.transpose();
          }
        }
      }
      for (int r = 0; r < regions.num_regions(); ++r) {
        emp[r] /= static_cast<double>(std::max<int64_t>(1, used - 1));
        // scale to unit diagonal so it is comparable with the kernel
        Eigen::VectorXd d = emp[r].diagonal().cwiseMax(1e-12).cwiseSqrt();
        emp[r] = d.cwiseInverse().asDiagonal() * emp[r] *
                 d.cwiseInverse().asDiagonal();
      }
    }

    for (int r = 0; r < regions.num_regions(); ++r) {
      MaternParams params{rho, nu};
      if (tune)
        params = tune_kernel_params(emp[r], rho_grid, nu_grid, grid, r + 1, mode);
      Eigen::MatrixXd k = build_region_kernel(grid, r + 1, params, mode);
      RegionBasis rb = eigenbasis_truncated(k, trunc);
      rb.region_id = r + 1;
      basis.regions.push_back(std::move(rb));
      std::cout << "region " << (r + 1) << ": p_r=" << rb.p_r()
                << " L_r=" << rb.L_r() << " rho=" << params.rho
                << " nu=" << params.nu << "\n";
    }
  } else {
    throw config_error("kernel must be matern or modified-se");
  }
  basis.rebuild_offsets();
  save_basis_set(out, basis);
  std::cout << "basis: R=" << basis.regions.size() << " total L="
            << basis.total_L() << " -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scalable Bayesian image-on-scalar regression"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string sim_config, sim_out;
  std::optional<uint64_t> sim_seed;
  sim->add_option("--config", sim_config, "simulation config JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "override the config seed");

  // ingest
  auto* ing = app.add_subcommand("ingest", "import flat arrays into a store");
  std::string ing_y, ing_mask = "full", ing_cov, ing_map, ing_out;
  int64_t ing_batch = 500;
  double ing_op = 0.5;
  bool ing_std = false;
  ing->add_option("--outcomes", ing_y, "raw float64 column-major p x n")
      ->required();
  ing->add_option("--masks", ing_mask, "raw bytes p x n, or 'full'");
  ing->add_option("--covariates", ing_cov, "CSV, exposure first")->required();
  ing->add_option("--region-map", ing_map, "region map CSV")->required();
  ing->add_option("--batch-size", ing_batch, "subjects per batch");
  ing->add_option("--op-threshold", ing_op, "group mask threshold");
  ing->add_flag("--standardize", ing_std, "standardize outcomes and exposure");
  ing->add_option("--out", ing_out, "output store directory")->required();

  // basis
  auto* bas = app.add_subcommand("basis", "build region eigenbases");
  std::string bas_manifest, bas_out, bas_kernel = "matern";
  std::string bas_trunc = "energy", bas_distance = "squared";
  double bas_rho = 2.0, bas_nu = 0.2, bas_energy = 0.9, bas_count = 0.10;
  double bas_se_a = 0.01, bas_se_b = 1.0;
  int bas_degree = 10;
  bool bas_tune = false;
  std::vector<double> bas_rho_grid, bas_nu_grid;
  int64_t bas_tune_subjects = 1000;
  bas->add_option("--manifest", bas_manifest, "store manifest")->required();
  bas->add_option("--out", bas_out, "basis output directory")->required();
  bas->add_option("--kernel", bas_kernel, "matern | modified-se");
  bas->add_option("--rho", bas_rho, "Matern range");
  bas->add_option("--nu", bas_nu, "Matern smoothness");
  bas->add_flag("--tune", bas_tune, "grid-search kernel parameters");
  bas->add_option("--rho-grid", bas_rho_grid, "tuning grid for rho")
      ->delimiter(',');
  bas->add_option("--nu-grid", bas_nu_grid, "tuning grid for nu")
      ->delimiter(',');
  bas->add_option("--tune-subjects", bas_tune_subjects,
                  "subjects used for the empirical covariance");
  bas->add_option("--truncation", bas_trunc, "energy | count");
  bas->add_option("--energy", bas_energy, "eigenvalue energy fraction");
  bas->add_option("--count-frac", bas_count, "basis count fraction of p_r");
  bas->add_option("--distance", bas_distance, "squared | plain");
  bas->add_option("--se-a", bas_se_a, "modified-se kernel a");
  bas->add_option("--se-b", bas_se_b, "modified-se kernel b");
  bas->add_option("--degree", bas_degree, "modified-se Hermite degree");

  // fit
  auto* fit = app.add_subcommand("fit", "run MCMC chains");
  std::string fit_manifest, fit_basis, fit_out, fit_alg, fit_init,
      fit_sigma_beta;
  int64_t fit_iters = -1, fit_burn = -1, fit_sub = -1, fit_eta = -1,
          fit_thin = -1, fit_ckpt = -1;
  int fit_chains = -1, fit_threads = -1, fit_interact = -2;
  std::optional<uint64_t> fit_seed;
  double fit_step_a = -1, fit_step_b = -1, fit_step_g = -1, fit_prior = -1,
         fit_diag = -1;
  bool fit_shared = false, fit_resume = false;
  fit->add_option("--manifest", fit_manifest, "store or run manifest")
      ->required();
  fit->add_option("--basis", fit_basis, "basis directory");
  fit->add_option("--algorithm", fit_alg, "gibbs | sgld0 | sgldimp");
  fit->add_option("--iterations", fit_iters, "total iterations T");
  fit->add_option("--burn-in", fit_burn, "burn-in iterations");
  fit->add_option("--subsample", fit_sub, "SGLD subsample size");
  fit->add_option("--eta-every", fit_eta, "eta update cadence t_I");
  fit->add_option("--seed", fit_seed, "rng seed");
  fit->add_option("--chains", fit_chains, "number of chains");
  fit->add_option("--threads", fit_threads,
                  "worker threads (SBIOS_THREADS as fallback)");
  fit->add_option("--thin-target", fit_thin, "max retained draws");
  fit->add_option("--step-a", fit_step_a, "step schedule a");
  fit->add_option("--step-b", fit_step_b, "step schedule b");
  fit->add_option("--step-gamma", fit_step_g, "step schedule gamma");
  fit->add_option("--init", fit_init, "zero | one | mua");
  fit->add_option("--sigma-beta", fit_sigma_beta,
                  "'sampled' or 'fixed:<value>'");
  fit->add_option("--prior-incl", fit_prior, "prior inclusion probability");
  fit->add_option("--interaction-confounder", fit_interact,
                  "confounder index for a second gated term");
  fit->add_flag("--shared-delta", fit_shared,
                "one selection indicator for both terms");
  fit->add_option("--checkpoint-every", fit_ckpt, "checkpoint cadence");
  fit->add_option("--diag-fraction", fit_diag, "residual-diagnostic fraction");
  fit->add_flag("--resume", fit_resume, "resume from the latest checkpoint");
  fit->add_option("--out", fit_out, "results directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "posterior summaries and metrics");
  std::vector<std::string> ev_results;
  std::string ev_truth, ev_out;
  double ev_pip = 0.95, ev_fpr = 0.1, ev_op = -1.0;
  ev->add_option("--results", ev_results, "results directories")
      ->required()
      ->expected(-1);
  ev->add_option("--truth", ev_truth, "ground-truth CSV");
  ev->add_option("--pip-cutoff", ev_pip, "PIP selection cutoff");
  ev->add_option("--target-fpr", ev_fpr, "FPR for the ROC read-off");
  ev->add_option("--op-threshold", ev_op, "group mask override");
  ev->add_option("--out", ev_out, "output directory")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "paired voxel estimates");
  std::string cmp_a, cmp_b, cmp_out;
  double cmp_pip = 0.95, cmp_op = -1.0;
  cmp->add_option("--a", cmp_a, "first results directory")->required();
  cmp->add_option("--b", cmp_b, "second results directory")->required();
  cmp->add_option("--pip-cutoff", cmp_pip, "PIP selection cutoff");
  cmp->add_option("--op-threshold", cmp_op, "group mask override");
  cmp->add_option("--out", cmp_out, "output CSV")->required();

  // report
  auto* rep = app.add_subcommand("report", "markdown run report");
  std::string rep_results, rep_out;
  rep->add_option("--results", rep_results, "results directory")->required();
  rep->add_option("--out", rep_out, "output markdown path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_seed);
    if (ing->parsed())
      return cmd_ingest(ing_y, ing_mask, ing_cov, ing_map, ing_batch, ing_op,
                        ing_std, ing_out);
    if (bas->parsed())
      return cmd_basis(bas_manifest, bas_out, bas_kernel, bas_rho, bas_nu,
                       bas_tune, bas_rho_grid, bas_nu_grid, bas_tune_subjects,
                       bas_trunc, bas_energy, bas_count, bas_distance,
                       bas_se_a, bas_se_b, bas_degree);
    if (fit->parsed()) {
      json o;
      if (!fit_alg.empty()) o["algorithm"] = fit_alg;
      if (fit_iters >= 0) o["iterations"] = fit_iters;
      if (fit_burn >= 0) o["burn_in"] = fit_burn;
      if (fit_sub >= 0) o["subsample"] = fit_sub;
      if (fit_eta >= 0) o["eta_every"] = fit_eta;
      if (fit_seed) o["seed"] = *fit_seed;
      if (fit_chains >= 0) o["chains"] = fit_chains;
      if (fit_threads >= 0) o["threads"] = fit_threads;
      if (fit_thin >= 0) o["thin_target"] = fit_thin;
      if (!fit_init.empty()) o["init"] = fit_init;
      if (fit_prior >= 0) o["hyper"]["prior_incl"] = fit_prior;
      if (fit_interact >= -1) o["interaction_confounder"] = fit_interact;
      if (fit_shared) o["shared_delta"] = true;
      if (fit_ckpt >= 0) o["checkpoint_every"] = fit_ckpt;
      if (fit_diag > 0) o["diag_fraction"] = fit_diag;
      if (fit_step_a > 0) o["step"]["a"] = fit_step_a;
      if (fit_step_b > 0) o["step"]["b"] = fit_step_b;
      if (fit_step_g > 0) o["step"]["gamma"] = fit_step_g;
      if (!fit_basis.empty()) o["basis"] = fit_basis;
      if (!fit_sigma_beta.empty()) {
        if (fit_sigma_beta == "sampled") {
          o["hyper"]["sigma_beta_sampled"] = true;
        } else if (fit_sigma_beta.rfind("fixed:", 0) == 0) {
          o["hyper"]["sigma_beta_sampled"] = false;
          o["hyper"]["sigma_beta2_fixed"] =
              std::stod(fit_sigma_beta.substr(6));
        } else {
          throw config_error("--sigma-beta takes 'sampled' or 'fixed:<v>'");
        }
      }
      if (!o.contains("threads")) o["threads"] = env_threads_default();
      json summary = fit_run(fit_manifest, o, fit_out, fit_resume);
      std::cout << "fit " << summary.at("algorithm").get<std::string>()
                << " done in "
                << summary.at("elapsed_ms").get<double>() / 1000.0
                << " s, peak rss "
                << summary.at("peak_rss_bytes").get<int64_t>() /
                       (1024.0 * 1024.0)
                << " MiB\n";
      return 0;
    }
    if (ev->parsed()) {
      evaluate_run(ev_results, ev_truth, ev_pip, ev_fpr, ev_op, ev_out);
      std::cout << "evaluation written to " << ev_out << "\n";
      return 0;
    }
    if (cmp->parsed()) {
      compare_run(cmp_a, cmp_b, cmp_pip, cmp_op, cmp_out);
      std::cout << "comparison written to " << cmp_out << "\n";
      return 0;
    }
    if (rep->parsed()) {
      report_run(rep_results, rep_out);
      std::cout << "report written to " << rep_out << "\n";
      return 0;
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const divergence_error& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
