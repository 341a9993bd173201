#ifndef SBIOS_MANIFEST_HPP
#define SBIOS_MANIFEST_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace sbios {

struct BatchEntry {
  std::string outcome;     // SBIO file, relative to store dir
  std::string mask;        // SBMK file
  std::string covariates;  // SBCV file
  int64_t n_b = 0;
};

// JSON manifest describing one data store directory.
struct StoreManifest {
  int schema_version = 1;
  int64_t p = 0;  // voxels
  int64_t n = 0;  // subjects
  int m = 0;      // confounders (covariate width is 1 + m)
  std::vector<int> dims;  // image dims when the grid is a full lattice
  std::vector<BatchEntry> batches;
  std::string region_map = "region_map.csv";
  std::string observed_proportion = "observed_proportion.bin";
  double op_threshold = 0.5;
  bool standardized = false;
  std::string voxel_stats;  // per-voxel mean/sd blob when standardized
  bool has_exposure_stats = false;
  double exposure_mean = 0.0;
  double exposure_sd = 1.0;
  std::vector<double> confounder_means;
  std::string ground_truth;  // optional CSV

  std::string dir;  // runtime only; directory holding the manifest

  std::string resolve(const std::string& rel) const { return dir + "/" + rel; }
};

StoreManifest load_store_manifest(const std::string& manifest_path);
void save_store_manifest(const StoreManifest& m);

}  // namespace sbios

#endif
