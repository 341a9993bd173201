#include "sbios/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"

namespace sbios {

int VoxelGrid::num_regions() const {
  int r = 0;
  for (int lab : region_labels) r = std::max(r, lab);
  return r;
}

void VoxelGrid::validate() const {
  const Eigen::Index p = coords.rows();
  if (p == 0) throw config_error("empty voxel grid");
  if (static_cast<Eigen::Index>(region_labels.size()) != p)
    throw config_error("region label count does not match voxel count");
  const int R = num_regions();
  std::vector<int> counts(R, 0);
  for (int lab : region_labels) {
    if (lab < 1 || lab > R) throw config_error("region label out of range");
    counts[lab - 1]++;
  }
  for (int r = 0; r < R; ++r)
    if (counts[r] == 0)
      throw config_error("region " + std::to_string(r + 1) + " is empty");
  std::set<std::vector<double>> seen;
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> c(coords.cols());
    for (Eigen::Index k = 0; k < coords.cols(); ++k) c[k] = coords(j, k);
    if (!seen.insert(c).second) throw config_error("duplicate voxel coordinates");
  }
}

RegionIndex RegionIndex::build(const VoxelGrid& grid) {
  RegionIndex idx;
  idx.voxels.resize(grid.num_regions());
  for (Eigen::Index j = 0; j < grid.num_voxels(); ++j)
    idx.voxels[grid.region_labels[j] - 1].push_back(static_cast<int>(j));
  return idx;
}

VoxelGrid load_region_map_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw schema_error("empty region map: " + path);
  // header: voxel_id,c0,c1[,c2],region
  int ncols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  const int d = ncols - 2;
  if (d != 2 && d != 3) throw schema_error("region map must have 2 or 3 coordinate columns");
  std::vector<std::array<double, 3>> cs;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');  // voxel_id, implicit row order
    std::array<double, 3> c{0, 0, 0};
    for (int k = 0; k < d; ++k) {
      std::getline(ss, tok, ',');
      c[k] = std::stod(tok);
    }
    std::getline(ss, tok, ',');
    labels.push_back(std::stoi(tok));
    cs.push_back(c);
  }
  VoxelGrid g;
  g.coords.resize(static_cast<Eigen::Index>(cs.size()), d);
  for (size_t j = 0; j < cs.size(); ++j)
    for (int k = 0; k < d; ++k) g.coords(static_cast<Eigen::Index>(j), k) = cs[j][k];
  g.region_labels = std::move(labels);
  g.validate();
  return g;
}

void save_region_map_csv(const std::string& path, const VoxelGrid& grid) {
  std::ostringstream out;
  const int d = grid.dim();
  out << "voxel_id";
  for (int k = 0; k < d; ++k) out << ",c" << k;
  out << ",region\n";
  for (Eigen::Index j = 0; j < grid.num_voxels(); ++j) {
    out << j;
    for (int k = 0; k < d; ++k) out << ',' << static_cast<long long>(grid.coords(j, k));
    out << ',' << grid.region_labels[j] << '\n';
  }
  write_text_file(path, out.str());
}

VoxelGrid make_lattice_grid(const std::vector<int>& dims,
                            const std::vector<int>& region_splits) {
  if (dims.size() != region_splits.size() || (dims.size() != 2 && dims.size() != 3))
    throw config_error("lattice grid needs matching 2D or 3D dims and splits");
  const int d = static_cast<int>(dims.size());
  long long p = 1;
  for (int k = 0; k < d; ++k) {
    if (dims[k] <= 0 || region_splits[k] <= 0 || dims[k] % region_splits[k] != 0)
      throw config_error("each dim must be a positive multiple of its region split");
    p *= dims[k];
  }
  VoxelGrid g;
  g.coords.resize(p, d);
  g.region_labels.resize(p);
  // x fastest (column-major voxel order)
  for (long long j = 0; j < p; ++j) {
    long long rem = j;
    int region = 0;
    for (int k = 0; k < d; ++k) {
      const int c = static_cast<int>(rem % dims[k]);
      rem /= dims[k];
      g.coords(j, k) = c;
      const int block = c / (dims[k] / region_splits[k]);
      region = region * region_splits[k] + block;
    }
    g.region_labels[j] = region + 1;
  }
  return g;
}

}  // namespace sbios
