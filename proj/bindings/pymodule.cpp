#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "json.hpp"

#include "sbios/basis.hpp"
#include "sbios/binio.hpp"
#include "sbios/datastore.hpp"
#include "sbios/driver.hpp"
#include "sbios/errors.hpp"
#include "sbios/eval.hpp"
#include "sbios/matern.hpp"
#include "sbios/sampler.hpp"
#include "sbios/simgen.hpp"

namespace py = pybind11;
using namespace sbios;
using nlohmann::json;

namespace {

VoxelGrid grid_from_arrays(const Eigen::MatrixXd& coords,
                           const std::vector<int>& labels) {
  VoxelGrid g;
  g.coords = coords;
  g.region_labels = labels;
  g.validate();
  return g;
}

json json_from_pystr(const std::string& s) {
  try {
    return json::parse(s);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("bad json: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_sbios, m) {
  m.doc() = "Scalable Bayesian image-on-scalar regression core";

  py::register_exception<config_error>(m, "ConfigError");
  py::register_exception<data_error>(m, "DataError");
  py::register_exception<divergence_error>(m, "DivergenceError");

  // kernel / basis
  m.def("matern_cnu", &matern_cnu, py::arg("d"), py::arg("nu"),
        "Matern correlation C_nu(d)");
  m.def(
      "build_region_kernel",
      [](const Eigen::MatrixXd& coords, const std::vector<int>& labels,
         int region_id, double rho, double nu, bool squared) {
        VoxelGrid g = grid_from_arrays(coords, labels);
        return build_region_kernel(
            g, region_id, {rho, nu},
            squared ? DistanceMode::Squared : DistanceMode::Plain);
      },
      py::arg("coords"), py::arg("region_labels"), py::arg("region_id"),
      py::arg("rho"), py::arg("nu"), py::arg("squared") = true);
  m.def(
      "eigenbasis",
      [](const Eigen::MatrixXd& kernel, double value, const std::string& mode) {
        TruncationSpec spec;
        if (mode == "energy")
          spec = {TruncationMode::EnergyFraction, value};
        else if (mode == "count")
          spec = {TruncationMode::CountFraction, value};
        else
          throw config_error("mode must be 'energy' or 'count'");
        RegionBasis b = eigenbasis_truncated(kernel, spec);
        return py::make_tuple(b.Q, b.lambda);
      },
      py::arg("kernel"), py::arg("value") = 0.9, py::arg("mode") = "energy");
  m.def(
      "modified_se_basis",
      [](const Eigen::MatrixXd& coords, double a, double b, int degree) {
        RegionBasis rb = modified_se_basis(coords, a, b, degree);
        return py::make_tuple(rb.Q, rb.lambda);
      },
      py::arg("coords"), py::arg("a"), py::arg("b"), py::arg("degree"));
  m.def(
      "tune_kernel_params",
      [](const Eigen::MatrixXd& emp, const std::vector<double>& rhos,
         const std::vector<double>& nus, const Eigen::MatrixXd& coords,
         const std::vector<int>& labels, int region_id) {
        VoxelGrid g = grid_from_arrays(coords, labels);
        MaternParams p = tune_kernel_params(emp, rhos, nus, g, region_id);
        return py::make_tuple(p.rho, p.nu);
      },
      py::arg("empirical_cov"), py::arg("rho_grid"), py::arg("nu_grid"),
      py::arg("coords"), py::arg("region_labels"), py::arg("region_id") = 1);

  // sampler pieces
  m.def(
      "step_size",
      [](int64_t t, double a, double b, double gamma) {
        return step_size(t, {a, b, gamma});
      },
      py::arg("t"), py::arg("a") = 1e-4, py::arg("b") = 1.0,
      py::arg("gamma") = 0.35);

  // evaluation
  m.def("bh_adjust", &bh_adjust, py::arg("p_values"));
  m.def(
      "tpr_at_fpr",
      [](const Eigen::VectorXd& scores, const std::vector<uint8_t>& truth,
         double target, int thresholds, bool pvalues) {
        return tpr_at_fpr(scores, truth, target, thresholds, pvalues);
      },
      py::arg("scores"), py::arg("truth"), py::arg("target_fpr") = 0.1,
      py::arg("thresholds") = 20, py::arg("scores_are_pvalues") = false);
  m.def(
      "fdr_tpr_at_pip",
      [](const Eigen::VectorXd& pip, const std::vector<uint8_t>& truth,
         double cutoff) {
        FdrTpr r = fdr_tpr_at_pip(pip, truth, cutoff);
        return py::make_tuple(r.fdr, r.tpr, r.selected);
      },
      py::arg("pip"), py::arg("truth"), py::arg("cutoff") = 0.95);
  m.def(
      "gelman_rubin",
      [](const std::vector<Eigen::VectorXd>& chains) {
        GelmanRubin gr = gelman_rubin(chains);
        return py::make_tuple(gr.psrf, gr.upper);
      },
      py::arg("chains"));
  m.def(
      "percentage_decline",
      [](double beta, double beta_tilde, double g1, double g2, double c1,
         double c2, double age_mean, double age_sd, double a0, double a1) {
        PercentDecline d = percentage_decline(beta, beta_tilde, g1, g2, c1,
                                              c2, age_mean, age_sd, a0, a1);
        return py::make_tuple(d.percent, d.defined);
      },
      py::arg("beta"), py::arg("beta_tilde"), py::arg("gamma1"),
      py::arg("gamma2"), py::arg("c1_mean"), py::arg("c2_mean"),
      py::arg("age_mean"), py::arg("age_sd"), py::arg("a0_years") = 50.0,
      py::arg("a1_years") = 60.0);
  m.def(
      "mua_fit",
      [](const std::string& manifest) {
        BatchStore store = BatchStore::open(manifest);
        MuaResult r = mua_fit(store, {});
        return py::make_tuple(r.coefficient, r.t_stat, r.p_value, r.p_bh);
      },
      py::arg("manifest"), "per-voxel OLS on a store; returns "
                           "(coef, t, p, p_bh)");

  // pipeline
  m.def(
      "simulate",
      [](const std::string& config_json, const std::string& out_dir) {
        SimConfig cfg;
        {
          // route through the shared config parser for identical semantics
          const std::string tmp = out_dir + "/.sim_config_input.json";
          std::filesystem::create_directories(out_dir);
          write_text_file(tmp, config_json);
          cfg = load_sim_config(tmp);
          std::filesystem::remove(tmp);
        }
        SimOutput out = generate(cfg, out_dir);
        py::dict d;
        d["manifest"] = out.store.dir + "/manifest.json";
        d["basis"] = out.basis_dir;
        d["truth"] = out.store.dir + "/truth.csv";
        d["p"] = out.store.p;
        d["n"] = out.store.n;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir"));
  m.def(
      "fit",
      [](const std::string& manifest, const std::string& overrides_json,
         const std::string& out_dir, bool resume) {
        json summary =
            fit_run(manifest, json_from_pystr(overrides_json), out_dir, resume);
        return summary.dump();
      },
      py::arg("manifest"), py::arg("overrides_json") = "{}",
      py::arg("out_dir") = "", py::arg("resume") = false);
  m.def(
      "evaluate",
      [](const std::vector<std::string>& results, const std::string& truth,
         double pip_cutoff, double target_fpr, double op_threshold,
         const std::string& out_dir) {
        json metrics = evaluate_run(results, truth, pip_cutoff, target_fpr,
                                    op_threshold, out_dir);
        return metrics.dump();
      },
      py::arg("results"), py::arg("truth") = "", py::arg("pip_cutoff") = 0.95,
      py::arg("target_fpr") = 0.1, py::arg("op_threshold") = -1.0,
      py::arg("out_dir") = "eval");
  m.def("compare", &compare_run, py::arg("results_a"), py::arg("results_b"),
        py::arg("pip_cutoff") = 0.95, py::arg("op_threshold") = -1.0,
        py::arg("out_csv") = "compare.csv");
  m.def("report", &report_run, py::arg("results"), py::arg("out_path"));

  // store introspection for smoke tests
  m.def(
      "load_pip",
      [](const std::string& results_dir) {
        LoadedResults r = load_results(results_dir);
        return r.pip;
      },
      py::arg("results_dir"));
  m.def(
      "observed_proportion",
      [](const std::string& manifest) {
        BatchStore store = BatchStore::open(manifest);
        return store.load_observed_proportion();
      },
      py::arg("manifest"));
}
