#include "sbios/simgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"

namespace sbios {

void SimConfig::validate() const {
  if (dims.size() != region_splits.size() ||
      (dims.size() != 2 && dims.size() != 3))
    throw config_error("sim dims/region_splits must both be 2D or 3D");
  if (n < 2) throw config_error("sim needs n >= 2");
  if (batch_size <= 0) throw config_error("batch_size must be positive");
  if (m < 0) throw config_error("negative confounder count");
  if (sigma_y < 0.0) throw config_error("sigma_y must be nonnegative");
  if (op_level <= 0.0 || op_level > 1.0)
    throw config_error("op_level must be in (0,1]");
  if (beta_amplitude <= 0.0) throw config_error("beta_amplitude must be positive");
  if (basis_count_fraction <= 0.0 || basis_count_fraction > 1.0)
    throw config_error("basis_count_fraction must be in (0,1]");
  if (kernel == SimKernel::ModifiedSE)
    for (int s : region_splits)
      if (s != 1)
        throw config_error("modified-SE kernel runs single-region (splits = 1)");
}

Eigen::VectorXd beta_preset_bumps(const VoxelGrid& grid, double amplitude,
                                  double threshold, double width_frac) {
  const int d = grid.dim();
  Eigen::RowVectorXd lo = grid.coords.colwise().minCoeff();
  Eigen::RowVectorXd hi = grid.coords.colwise().maxCoeff();
  Eigen::RowVectorXd span = hi - lo;
  const double scale = span.maxCoeff();

  // relative centers chosen to cross region boundaries and to stick out of
  // the 40% commonly observed core
  std::vector<std::vector<double>> centers_rel;
  if (d == 2)
    centers_rel = {{0.24, 0.24}, {0.66, 0.50}, {0.50, 0.82}};
  else
    centers_rel = {{0.26, 0.26, 0.40}, {0.66, 0.50, 0.55}, {0.50, 0.80, 0.60}};
  const double width = width_frac * scale;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(grid.num_voxels());
  for (const auto& c_rel : centers_rel) {
    Eigen::RowVectorXd c(d);
    for (int k = 0; k < d; ++k) c[k] = lo[k] + c_rel[k] * span[k];
    for (Eigen::Index j = 0; j < grid.num_voxels(); ++j) {
      const double r2 = (grid.coords.row(j) - c).squaredNorm();
      beta[j] += amplitude * std::exp(-r2 / (2.0 * width * width));
    }
  }
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta[j] < threshold) beta[j] = 0.0;
  return beta;
}

std::vector<uint8_t> common_core(const VoxelGrid& grid,
                                 const std::vector<int>& dims) {
  const int d = static_cast<int>(dims.size());
  const double frac = std::pow(0.4, 1.0 / d);
  std::vector<double> lo(d), hi(d);
  for (int k = 0; k < d; ++k) {
    const double extent = frac * dims[k];
    lo[k] = 0.5 * (dims[k] - 1) - 0.5 * extent;
    hi[k] = 0.5 * (dims[k] - 1) + 0.5 * extent;
  }
  std::vector<uint8_t> core(grid.num_voxels(), 1);
  for (Eigen::Index j = 0; j < grid.num_voxels(); ++j)
    for (int k = 0; k < d; ++k)
      if (grid.coords(j, k) < lo[k] || grid.coords(j, k) > hi[k]) {
        core[j] = 0;
        break;
      }
  return core;
}

std::vector<std::vector<uint8_t>> make_missing_masks(
    const VoxelGrid& grid, const std::vector<int>& dims,
    const std::vector<uint8_t>& active, MissingPattern pattern,
    double op_level, int64_t n, uint64_t seed) {
  const Eigen::Index p = grid.num_voxels();
  std::vector<std::vector<uint8_t>> masks(n, std::vector<uint8_t>(p, 1));
  if (pattern == MissingPattern::None || op_level >= 1.0) return masks;

  std::vector<uint8_t> core = common_core(grid, dims);
  std::vector<uint8_t> zone(p, 0);
  bool zone_hits_active = false;
  for (Eigen::Index j = 0; j < p; ++j) {
    bool in_zone = !core[j];
    if (pattern == MissingPattern::II && active[j]) in_zone = false;
    zone[j] = in_zone ? 1 : 0;
    if (in_zone && active[j]) zone_hits_active = true;
  }
  if (pattern == MissingPattern::I && !zone_hits_active)
    throw config_error(
        "missing pattern I requires the active area to reach outside the core");

  for (int64_t i = 0; i < n; ++i) {
    KeyedRng rng(seed, 0, static_cast<uint64_t>(i), 7001);
    for (Eigen::Index j = 0; j < p; ++j)
      if (zone[j] && rng.uniform() >= op_level) masks[i][j] = 0;
  }
  return masks;
}

SimOutput generate(const SimConfig& config, const std::string& out_dir) {
  config.validate();
  VoxelGrid grid = make_lattice_grid(config.dims, config.region_splits);
  RegionIndex regions = RegionIndex::build(grid);
  const Eigen::Index p = grid.num_voxels();

  // basis (also used by the fit; all Bayesian variants share it)
  BasisSet basis;
  if (config.kernel == SimKernel::Matern) {
    for (int r = 0; r < regions.num_regions(); ++r) {
      Eigen::MatrixXd k = build_region_kernel(grid, r + 1, config.matern);
      RegionBasis rb = eigenbasis_truncated(
          k, {TruncationMode::CountFraction, config.basis_count_fraction});
      rb.region_id = r + 1;
      basis.regions.push_back(std::move(rb));
    }
  } else {
    RegionBasis rb =
        modified_se_basis(grid.coords, config.se_a, config.se_b, config.se_degree);
    basis.regions.push_back(std::move(rb));
  }
  basis.rebuild_offsets();

  GroundTruth truth;
  truth.beta_true = beta_preset_bumps(grid, config.beta_amplitude,
                                      config.beta_threshold, config.beta_width);
  truth.delta_true.resize(p);
  int64_t n_active = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    truth.delta_true[j] = truth.beta_true[j] != 0.0 ? 1 : 0;
    n_active += truth.delta_true[j];
  }
  if (config.pattern == MissingPattern::I && n_active == 0)
    throw config_error("missing pattern I needs a nonempty active area");

  auto masks = make_missing_masks(grid, config.dims, truth.delta_true,
                                  config.pattern, config.op_level, config.n,
                                  config.seed);

  // fixed confounder fields: gamma_k = Q theta_gamma_k, coefficients N(0,1)
  const Eigen::Index L = basis.total_L();
  KeyedRng coef_rng(config.seed, 0, 0, 7002);
  Eigen::MatrixXd theta_gamma(L, config.m);
  for (int k = 0; k < config.m; ++k) theta_gamma.col(k) = coef_rng.normals(L);
  Eigen::MatrixXd gamma_img(p, config.m);
  for (int r = 0; r < regions.num_regions(); ++r) {
    const auto& ids = regions.voxels[r];
    Eigen::MatrixXd block =
        basis.regions[r].Q *
        theta_gamma.middleRows(basis.offsets[r], basis.regions[r].L_r());
    for (size_t jj = 0; jj < ids.size(); ++jj)
      gamma_img.row(ids[jj]) = block.row(static_cast<Eigen::Index>(jj));
  }

  StoreWriter writer(out_dir, p, config.m);
  Eigen::VectorXd y(p);
  Eigen::VectorXd cov(1 + config.m);
  for (int64_t i = 0; i < config.n; ++i) {
    KeyedRng rng(config.seed, 0, static_cast<uint64_t>(i), 7003);
    const double x = rng.normal();
    Eigen::VectorXd z = rng.normals(config.m);
    Eigen::VectorXd theta_eta = rng.normals(L);

    y = truth.beta_true * x;
    y.noalias() += gamma_img * z;
    for (int r = 0; r < regions.num_regions(); ++r) {
      const auto& ids = regions.voxels[r];
      Eigen::VectorXd eta_block =
          basis.regions[r].Q *
          theta_eta.segment(basis.offsets[r], basis.regions[r].L_r());
      for (size_t jj = 0; jj < ids.size(); ++jj)
        y[ids[jj]] += eta_block[static_cast<Eigen::Index>(jj)];
    }
    if (config.sigma_y > 0.0)
      for (Eigen::Index j = 0; j < p; ++j)
        y[j] += config.sigma_y * rng.normal();
    // store zero-imputed values at missing voxels
    for (Eigen::Index j = 0; j < p; ++j)
      if (!masks[i][j]) y[j] = 0.0;

    cov[0] = x;
    cov.tail(config.m) = z;
    writer.add_subject(y, masks[i], cov, config.batch_size);
  }
  StoreManifest& meta = writer.manifest();
  meta.dims = config.dims;
  meta.ground_truth = "truth.csv";
  SimOutput out;
  out.store = writer.finalize(grid, /*op_threshold=*/0.0);
  out.truth = std::move(truth);

  save_truth_csv(out_dir + "/truth.csv", out.truth);
  out.basis_dir = out_dir + "/basis";
  save_basis_set(out.basis_dir, basis);

  nlohmann::json echo;
  echo["dims"] = config.dims;
  echo["region_splits"] = config.region_splits;
  echo["n"] = config.n;
  echo["batch_size"] = config.batch_size;
  echo["m"] = config.m;
  echo["sigma_y"] = config.sigma_y;
  echo["op_level"] = config.op_level;
  echo["pattern"] = config.pattern == MissingPattern::None
                        ? "none"
                        : (config.pattern == MissingPattern::I ? "I" : "II");
  echo["beta_amplitude"] = config.beta_amplitude;
  echo["beta_threshold"] = config.beta_threshold;
  echo["beta_width"] = config.beta_width;
  echo["kernel"] = config.kernel == SimKernel::Matern ? "matern" : "modified_se";
  echo["rho"] = config.matern.rho;
  echo["nu"] = config.matern.nu;
  echo["basis_count_fraction"] = config.basis_count_fraction;
  echo["se_a"] = config.se_a;
  echo["se_b"] = config.se_b;
  echo["se_degree"] = config.se_degree;
  echo["seed"] = config.seed;
  write_text_file(out_dir + "/sim_config.json", echo.dump(2) + "\n");
  return out;
}

SimConfig load_sim_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("bad sim config json: " + std::string(e.what()));
  }
  SimConfig c;
  c.dims = j.value("dims", c.dims);
  c.region_splits = j.value("region_splits", c.region_splits);
  c.n = j.value("n", c.n);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.m = j.value("m", c.m);
  c.sigma_y = j.value("sigma_y", c.sigma_y);
  c.op_level = j.value("op_level", c.op_level);
  const std::string pat = j.value("pattern", std::string("I"));
  if (pat == "none")
    c.pattern = MissingPattern::None;
  else if (pat == "I")
    c.pattern = MissingPattern::I;
  else if (pat == "II")
    c.pattern = MissingPattern::II;
  else
    throw config_error("pattern must be none, I, or II");
  c.beta_amplitude = j.value("beta_amplitude", c.beta_amplitude);
  c.beta_threshold = j.value("beta_threshold", c.beta_threshold);
  c.beta_width = j.value("beta_width", c.beta_width);
  const std::string kern = j.value("kernel", std::string("matern"));
  if (kern == "matern")
    c.kernel = SimKernel::Matern;
  else if (kern == "modified_se")
    c.kernel = SimKernel::ModifiedSE;
  else
    throw config_error("kernel must be matern or modified_se");
  c.matern.rho = j.value("rho", c.matern.rho);
  c.matern.nu = j.value("nu", c.matern.nu);
  c.basis_count_fraction = j.value("basis_count_fraction", c.basis_count_fraction);
  c.se_a = j.value("se_a", c.se_a);
  c.se_b = j.value("se_b", c.se_b);
  c.se_degree = j.value("se_degree", c.se_degree);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void save_truth_csv(const std::string& path, const GroundTruth& truth) {
  std::ostringstream out;
  out << "voxel_id,beta_true,delta_true\n";
  out.precision(17);
  for (Eigen::Index j = 0; j < truth.beta_true.size(); ++j)
    out << j << ',' << truth.beta_true[j] << ','
        << static_cast<int>(truth.delta_true[j]) << '\n';
  write_text_file(path, out.str());
}

GroundTruth load_truth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> beta;
  std::vector<uint8_t> delta;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    std::getline(ss, tok, ',');
    beta.push_back(std::stod(tok));
    std::getline(ss, tok, ',');
    delta.push_back(static_cast<uint8_t>(std::stoi(tok)));
  }
  GroundTruth t;
  t.beta_true = Eigen::Map<Eigen::VectorXd>(beta.data(),
                                            static_cast<Eigen::Index>(beta.size()));
  t.delta_true = std::move(delta);
  return t;
}

}  // namespace sbios
