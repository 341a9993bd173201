#ifndef SBIOS_GRID_HPP
#define SBIOS_GRID_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace sbios {

// Fixed voxel grid with a region-label partition. Labels are 1..R and every
// region must be nonempty; coordinates are lattice positions (2D or 3D).
struct VoxelGrid {
  Eigen::MatrixXd coords;          // p x d
  std::vector<int> region_labels;  // p, values in 1..R

  Eigen::Index num_voxels() const { return coords.rows(); }
  int dim() const { return static_cast<int>(coords.cols()); }
  int num_regions() const;

  // throws config_error on label gaps, empty regions, or duplicate coords
  void validate() const;
};

// Voxel ids grouped by region, in label order (region r at index r-1).
struct RegionIndex {
  std::vector<std::vector<int>> voxels;

  int num_regions() const { return static_cast<int>(voxels.size()); }
  static RegionIndex build(const VoxelGrid& grid);
};

VoxelGrid load_region_map_csv(const std::string& path);
void save_region_map_csv(const std::string& path, const VoxelGrid& grid);

// Regular 2D/3D lattice split into an even grid of rectangular regions.
VoxelGrid make_lattice_grid(const std::vector<int>& dims,
                            const std::vector<int>& region_splits);

}  // namespace sbios

#endif
