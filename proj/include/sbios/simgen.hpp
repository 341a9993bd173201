#ifndef SBIOS_SIMGEN_HPP
#define SBIOS_SIMGEN_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/basis.hpp"
#include "sbios/datastore.hpp"
#include "sbios/grid.hpp"
#include "sbios/rng.hpp"

namespace sbios {

enum class MissingPattern { None, I, II };

enum class SimKernel { Matern, ModifiedSE };

struct SimConfig {
  std::vector<int> dims{90, 90};
  std::vector<int> region_splits{3, 3};
  int64_t n = 1000;
  int64_t batch_size = 500;
  int m = 2;  // confounders
  double sigma_y = 1.0;
  double op_level = 0.5;
  MissingPattern pattern = MissingPattern::I;
  double beta_amplitude = 1.0;  // bump peak before the 0.1 threshold
  double beta_threshold = 0.1;
  double beta_width = 0.085;  // bump sd as a fraction of the grid extent
  SimKernel kernel = SimKernel::Matern;
  MaternParams matern{2.0, 0.2};
  double basis_count_fraction = 0.10;
  // modified squared-exponential settings (single kernel over the grid)
  double se_a = 0.01;
  double se_b = 1.0;
  int se_degree = 7;
  uint64_t seed = 1;

  void validate() const;
};

struct GroundTruth {
  Eigen::VectorXd beta_true;        // per voxel
  std::vector<uint8_t> delta_true;  // 1{beta_true != 0}
};

// Smooth radial bumps thresholded at `threshold`, placed to span region
// boundaries and to stick out of the commonly observed core.
Eigen::VectorXd beta_preset_bumps(const VoxelGrid& grid, double amplitude,
                                  double threshold, double width_frac = 0.085);

// Largest centered rectangle (box in 3D) covering ~40% of the area.
std::vector<uint8_t> common_core(const VoxelGrid& grid,
                                 const std::vector<int>& dims);

// Per-subject masks: core voxels always observed; in-zone voxels observed
// independently with probability op_level. Pattern I's zone overlaps the
// active set, pattern II's zone excludes it.
std::vector<std::vector<uint8_t>> make_missing_masks(
    const VoxelGrid& grid, const std::vector<int>& dims,
    const std::vector<uint8_t>& active, MissingPattern pattern,
    double op_level, int64_t n, uint64_t seed);

struct SimOutput {
  StoreManifest store;
  GroundTruth truth;
  std::string basis_dir;
};

// Generates the dataset, writes the store + basis + ground-truth CSV.
SimOutput generate(const SimConfig& config, const std::string& out_dir);

SimConfig load_sim_config(const std::string& path);
void save_truth_csv(const std::string& path, const GroundTruth& truth);
GroundTruth load_truth_csv(const std::string& path);

}  // namespace sbios

#endif
