#ifndef SBIOS_STATS_HPP
#define SBIOS_STATS_HPP

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/basis.hpp"
#include "sbios/datastore.hpp"
#include "sbios/grid.hpp"

namespace sbios {

// global voxel id -> (region index, local row within region)
struct RegionLookup {
  std::vector<int32_t> region_of;
  std::vector<int32_t> local_of;
  static RegionLookup build(const RegionIndex& regions, int64_t p);
};

// Exposure layout: term 0 is the stored exposure column; an optional second
// term is its interaction with one confounder (both gated by delta).
struct ExposureSpec {
  int interaction_confounder = -1;
  int H() const { return interaction_confounder >= 0 ? 2 : 1; }
  // n_b x H from a covariate block [X, Z]
  Eigen::MatrixXd exposures(const Eigen::MatrixXd& cov) const;
  // n_b x m
  static Eigen::MatrixXd confounders(const Eigen::MatrixXd& cov);
};

// L x n matrix stored in per-batch blocks, either in RAM (gibbs) or as
// files under a scratch directory (sgld modes keep one block resident).
class BlockMatrixStore {
 public:
  BlockMatrixStore(bool file_backed, std::string path_prefix,
                   Eigen::Index rows, std::vector<int64_t> block_cols);

  Eigen::Index rows() const { return rows_; }
  int num_blocks() const { return static_cast<int>(block_cols_.size()); }
  int64_t block_cols(int b) const { return block_cols_[b]; }

  void zero_all();
  Eigen::MatrixXd load(int b) const;
  // zero-copy access, RAM mode only
  const Eigen::MatrixXd& ram_block(int b) const;
  void store(int b, const Eigen::MatrixXd& m);
  // gather specific columns of block b into out (rows x idx.size())
  void load_columns(int b, const std::vector<int>& idx,
                    Eigen::MatrixXd& out) const;

 private:
  std::string block_path(int b) const;
  bool file_backed_;
  std::string prefix_;
  Eigen::Index rows_;
  std::vector<int64_t> block_cols_;
  std::vector<Eigen::MatrixXd> ram_;
};

// Precomputed summary statistics; incremental updates keep them exact under
// imputation events.
struct SufficientStats {
  int H = 1;
  int m = 0;
  int64_t p = 0;
  Eigen::Index L = 0;

  std::vector<Eigen::VectorXd> xy_term;  // H of p: sum_i X_hi Y_i(s)
  std::vector<Eigen::VectorXd> xy_proj;  // H of L: sum_i X_hi Y*_i
  Eigen::MatrixXd yz_proj;               // L x m:  sum_i Y*_i Z_i'
  Eigen::MatrixXd xz_cross;              // H x m
  Eigen::MatrixXd xx_cross;              // H x H
  Eigen::MatrixXd z_cross;               // m x m
  std::vector<Eigen::VectorXd> eta_x;    // H of L: sum_i X_hi theta_eta_i
  Eigen::MatrixXd eta_z;                 // L x m

  void init(int H_, int m_, int64_t p_, Eigen::Index L_);
};

// One pass over all batches; fills Y* blocks and the data-side aggregates.
// Missing entries take their current imputed value (zeros for a fresh index
// or when `missing` is null).
SufficientStats compute_stats(const BatchStore& store, const BasisSet& basis,
                              const RegionIndex& regions,
                              const ExposureSpec& exposures,
                              const MissingIndex* missing,
                              BlockMatrixStore* ystar);

// Incremental update for one imputed value change. ystar_col is subject i's
// stacked Y* column (updated in place). O(L_r (1 + H + m)).
void apply_imputation_update(SufficientStats& stats, const BasisSet& basis,
                             const RegionLookup& lookup,
                             Eigen::Ref<Eigen::VectorXd> ystar_col,
                             const Eigen::VectorXd& x_row,
                             const Eigen::VectorXd& z_row, int32_t voxel,
                             double old_value, double new_value);

}  // namespace sbios

#endif
