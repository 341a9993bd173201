#include "sbios/stats.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"
#include "sbios/memmap.hpp"

namespace sbios {

RegionLookup RegionLookup::build(const RegionIndex& regions, int64_t p) {
  RegionLookup lk;
  lk.region_of.assign(p, -1);
  lk.local_of.assign(p, -1);
  for (size_t r = 0; r < regions.voxels.size(); ++r) {
    const auto& ids = regions.voxels[r];
    for (size_t local = 0; local < ids.size(); ++local) {
      lk.region_of[ids[local]] = static_cast<int32_t>(r);
      lk.local_of[ids[local]] = static_cast<int32_t>(local);
    }
  }
  return lk;
}

Eigen::MatrixXd ExposureSpec::exposures(const Eigen::MatrixXd& cov) const {
  Eigen::MatrixXd x(cov.rows(), H());
  x.col(0) = cov.col(0);
  if (interaction_confounder >= 0) {
    if (1 + interaction_confounder >= cov.cols())
      throw config_error("interaction confounder index out of range");
    x.col(1) =
        cov.col(0).cwiseProduct(cov.col(1 + interaction_confounder));
  }
  return x;
}

Eigen::MatrixXd ExposureSpec::confounders(const Eigen::MatrixXd& cov) {
  return cov.rightCols(cov.cols() - 1);
}

// ---------------------------------------------------------------------------

BlockMatrixStore::BlockMatrixStore(bool file_backed, std::string path_prefix,
                                   Eigen::Index rows,
                                   std::vector<int64_t> block_cols)
    : file_backed_(file_backed),
      prefix_(std::move(path_prefix)),
      rows_(rows),
      block_cols_(std::move(block_cols)) {
  if (!file_backed_) {
    ram_.resize(block_cols_.size());
    for (size_t b = 0; b < block_cols_.size(); ++b)
      ram_[b] = Eigen::MatrixXd::Zero(rows_, block_cols_[b]);
  } else {
    std::filesystem::create_directories(
        std::filesystem::path(prefix_).parent_path());
    zero_all();
  }
}

std::string BlockMatrixStore::block_path(int b) const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04d.bin", b);
  return prefix_ + buf;
}

void BlockMatrixStore::zero_all() {
  if (!file_backed_) {
    for (auto& m : ram_) m.setZero();
    return;
  }
  for (int b = 0; b < num_blocks(); ++b)
    store(b, Eigen::MatrixXd::Zero(rows_, block_cols_[b]));
}

const Eigen::MatrixXd& BlockMatrixStore::ram_block(int b) const {
  if (file_backed_) throw index_error("ram_block on a file-backed store");
  return ram_[b];
}

Eigen::MatrixXd BlockMatrixStore::load(int b) const {
  if (!file_backed_) return ram_[b];
  MappedFile map(block_path(b));
  Eigen::MatrixXd m(rows_, block_cols_[b]);
  const size_t want = static_cast<size_t>(m.size()) * 8;
  if (map.size() != want) throw io_error("block size mismatch: " + block_path(b));
  std::memcpy(m.data(), map.data(), want);
  return m;
}

void BlockMatrixStore::store(int b, const Eigen::MatrixXd& m) {
  if (m.rows() != rows_ || m.cols() != block_cols_[b])
    throw index_error("block shape mismatch");
  if (!file_backed_) {
    ram_[b] = m;
    return;
  }
  std::FILE* f = std::fopen(block_path(b).c_str(), "wb");
  if (!f) throw io_error("cannot open block for write: " + block_path(b));
  const size_t want = static_cast<size_t>(m.size());
  if (std::fwrite(m.data(), 8, want, f) != want) {
    std::fclose(f);
    throw io_error("short write: " + block_path(b));
  }
  std::fclose(f);
}

void BlockMatrixStore::load_columns(int b, const std::vector<int>& idx,
                                    Eigen::MatrixXd& out) const {
  out.resize(rows_, static_cast<Eigen::Index>(idx.size()));
  if (!file_backed_) {
    for (size_t k = 0; k < idx.size(); ++k) out.col(k) = ram_[b].col(idx[k]);
    return;
  }
  MappedFile map(block_path(b));
  for (size_t k = 0; k < idx.size(); ++k) {
    const size_t off = static_cast<size_t>(idx[k]) * rows_ * 8;
    std::memcpy(out.col(k).data(), map.data() + off,
                static_cast<size_t>(rows_) * 8);
  }
}

// ---------------------------------------------------------------------------

void SufficientStats::init(int H_, int m_, int64_t p_, Eigen::Index L_) {
  H = H_;
  m = m_;
  p = p_;
  L = L_;
  xy_term.assign(H, Eigen::VectorXd::Zero(p));
  xy_proj.assign(H, Eigen::VectorXd::Zero(L));
  yz_proj = Eigen::MatrixXd::Zero(L, m);
  xz_cross = Eigen::MatrixXd::Zero(H, m);
  xx_cross = Eigen::MatrixXd::Zero(H, H);
  z_cross = Eigen::MatrixXd::Zero(m, m);
  eta_x.assign(H, Eigen::VectorXd::Zero(L));
  eta_z = Eigen::MatrixXd::Zero(L, m);
}

SufficientStats compute_stats(const BatchStore& store, const BasisSet& basis,
                              const RegionIndex& regions,
                              const ExposureSpec& exposures,
                              const MissingIndex* missing,
                              BlockMatrixStore* ystar) {
  const int64_t p = store.meta().p;
  if (static_cast<int>(basis.regions.size()) != regions.num_regions())
    throw schema_error("basis does not match region partition");
  for (int r = 0; r < regions.num_regions(); ++r)
    if (basis.regions[r].p_r() !=
        static_cast<Eigen::Index>(regions.voxels[r].size()))
      throw schema_error("basis region size does not match region map");

  SufficientStats s;
  s.init(exposures.H(), store.meta().m, p, basis.total_L());

  Eigen::MatrixXd ybuf;  // one batch with imputations substituted
  for (int b = 0; b < store.num_batches(); ++b) {
    OutcomeView yv = store.map_outcomes(b);
    ybuf = yv.matrix();
    const int64_t n_b = yv.n_b();
    const int64_t base = store.subject_offset(b);
    if (missing) {
      for (int64_t i = 0; i < n_b; ++i) {
        const int64_t gi = base + i;
        for (int64_t k = missing->offsets[gi]; k < missing->offsets[gi + 1]; ++k)
          ybuf(missing->voxels[k], i) = missing->y_imp[k];
      }
    }

    const Eigen::MatrixXd cov = store.covariates(b);
    const Eigen::MatrixXd x = exposures.exposures(cov);   // n_b x H
    const Eigen::MatrixXd z = ExposureSpec::confounders(cov);  // n_b x m

    Eigen::MatrixXd ystar_b(s.L, n_b);
    for (int r = 0; r < regions.num_regions(); ++r) {
      const auto& ids = regions.voxels[r];
      const Eigen::Index pr = static_cast<Eigen::Index>(ids.size());
      Eigen::MatrixXd yreg(pr, n_b);
      for (Eigen::Index jj = 0; jj < pr; ++jj) yreg.row(jj) = ybuf.row(ids[jj]);
      ystar_b.middleRows(basis.offsets[r], basis.regions[r].L_r()).noalias() =
          basis.regions[r].Qt * yreg;
    }
    if (ystar) ystar->store(b, ystar_b);

    for (int h = 0; h < s.H; ++h) {
      s.xy_term[h].noalias() += ybuf * x.col(h);
      s.xy_proj[h].noalias() += ystar_b * x.col(h);
    }
    s.yz_proj.noalias() += ystar_b * z;
    s.xz_cross.noalias() += x.transpose() * z;
    s.xx_cross.noalias() += x.transpose() * x;
    s.z_cross.noalias() += z.transpose() * z;
  }
  return s;
}

void apply_imputation_update(SufficientStats& stats, const BasisSet& basis,
                             const RegionLookup& lookup,
                             Eigen::Ref<Eigen::VectorXd> ystar_col,
                             const Eigen::VectorXd& x_row,
                             const Eigen::VectorXd& z_row, int32_t voxel,
                             double old_value, double new_value) {
  const double delta = new_value - old_value;
  if (delta == 0.0) return;
  const int r = lookup.region_of[voxel];
  const int local = lookup.local_of[voxel];
  const RegionBasis& rb = basis.regions[r];
  const Eigen::Index off = basis.offsets[r];
  const auto qcol = rb.Qt.col(local);  // L_r, contiguous

  for (int h = 0; h < stats.H; ++h) {
    stats.xy_term[h][voxel] += x_row[h] * delta;
    stats.xy_proj[h].segment(off, rb.L_r()).noalias() += (x_row[h] * delta) * qcol;
  }
  ystar_col.segment(off, rb.L_r()).noalias() += delta * qcol;
  for (int k = 0; k < stats.m; ++k)
    stats.yz_proj.col(k).segment(off, rb.L_r()).noalias() +=
        (z_row[k] * delta) * qcol;
}

}  // namespace sbios
