#ifndef SBIOS_DATASTORE_HPP
#define SBIOS_DATASTORE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/grid.hpp"
#include "sbios/manifest.hpp"
#include "sbios/memmap.hpp"

namespace sbios {

// Read-only view of one batch outcome file (SBIO), p x n_b column-major.
class OutcomeView {
 public:
  OutcomeView(MappedFile file, int64_t p, int64_t n_b);
  Eigen::Map<const Eigen::MatrixXd> matrix() const;
  int64_t n_b() const { return n_b_; }

 private:
  MappedFile file_;
  int64_t p_, n_b_;
};

// Bit-packed mask view (SBMK), column-major, LSB-first, byte-aligned columns.
class MaskView {
 public:
  MaskView(MappedFile file, int64_t p, int64_t n_b);
  bool observed(int64_t voxel, int64_t subject) const {
    const uint8_t byte =
        file_.data()[kHeaderBytes + subject * stride_ + (voxel >> 3)];
    return (byte >> (voxel & 7)) & 1;
  }
  int64_t n_b() const { return n_b_; }
  static constexpr int64_t kHeaderBytes = 24;

 private:
  MappedFile file_;
  int64_t p_, n_b_, stride_;
};

struct ObservedProportion {
  Eigen::VectorXd h;               // per voxel, exact count / n
  std::vector<uint8_t> group_mask;  // h >= threshold and not zero-variance
};

// Out-of-core batch store. Batch files are immutable after ingest; all
// access goes through memory-mapped views.
class BatchStore {
 public:
  static BatchStore open(const std::string& manifest_path);

  const StoreManifest& meta() const { return meta_; }
  int num_batches() const { return static_cast<int>(meta_.batches.size()); }
  int64_t batch_size(int b) const { return meta_.batches[b].n_b; }
  int64_t subject_offset(int b) const { return offsets_[b]; }
  int64_t max_batch_size() const;

  OutcomeView map_outcomes(int b) const;
  MaskView map_masks(int b) const;
  // n_b x (1 + m): exposure first, then confounders
  Eigen::MatrixXd covariates(int b) const;

  VoxelGrid load_grid() const;
  Eigen::VectorXd load_observed_proportion() const;
  // per-voxel (mean, sd) from standardization; empty if not standardized
  Eigen::MatrixXd load_voxel_stats() const;

 private:
  StoreManifest meta_;
  std::vector<int64_t> offsets_;
};

// Streaming writer used by ingest and the simulator.
class StoreWriter {
 public:
  StoreWriter(const std::string& dir, int64_t p, int m);
  // one subject: outcome length p, mask length p (0/1), covariates length 1+m
  void add_subject(const Eigen::VectorXd& outcome,
                   const std::vector<uint8_t>& mask,
                   const Eigen::VectorXd& covariates, int64_t batch_capacity);
  // flush pending subjects and write manifest + derived files
  StoreManifest finalize(const VoxelGrid& grid, double op_threshold);

  StoreManifest& manifest() { return meta_; }

 private:
  void flush_batch();
  std::string dir_;
  StoreManifest meta_;
  std::vector<Eigen::VectorXd> pending_y_;
  std::vector<std::vector<uint8_t>> pending_mask_;
  std::vector<Eigen::VectorXd> pending_cov_;
  Eigen::VectorXd observed_count_;
};

struct SubjectRecord {
  Eigen::VectorXd outcome;
  std::vector<uint8_t> mask;
  Eigen::VectorXd covariates;
};

// Batched ingest of a subject stream; returns the written store.
StoreManifest ingest(const std::string& out_dir,
                     const std::function<bool(SubjectRecord&)>& next_subject,
                     int64_t p, int m, int64_t batch_size,
                     const VoxelGrid& grid, double op_threshold);

// Standardize outcomes per voxel over observed entries (n-1 denominator)
// and the exposure column; missing entries become 0 afterwards.
// Zero-variance voxels keep raw values and are dropped from the group mask.
StoreManifest standardize(const BatchStore& store, const std::string& out_dir);

ObservedProportion observed_proportion(const BatchStore& store,
                                       double threshold);

// Per-subject missing-voxel index sets plus the flat imputed-value store.
struct MissingIndex {
  std::vector<int64_t> offsets;  // n + 1
  std::vector<int32_t> voxels;   // concatenated sorted V_i^c
  std::vector<double> y_imp;     // aligned with voxels, initialized to 0

  int64_t total() const { return static_cast<int64_t>(voxels.size()); }
  int64_t count(int64_t subject) const {
    return offsets[subject + 1] - offsets[subject];
  }
  // flat position of voxel j in subject i's list; throws index_error if observed
  int64_t find(int64_t subject, int32_t voxel) const;

  static MissingIndex build(const BatchStore& store);
};

}  // namespace sbios

#endif
