#include "sbios/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"

namespace sbios {

namespace fs = std::filesystem;

OutcomeView::OutcomeView(MappedFile file, int64_t p, int64_t n_b)
    : file_(std::move(file)), p_(p), n_b_(n_b) {
  const size_t expect = 24 + static_cast<size_t>(p) * n_b * 8;
  if (file_.size() != expect) throw schema_error("outcome file size mismatch");
}

Eigen::Map<const Eigen::MatrixXd> OutcomeView::matrix() const {
  return {file_.f64_at(24), p_, n_b_};
}

MaskView::MaskView(MappedFile file, int64_t p, int64_t n_b)
    : file_(std::move(file)), p_(p), n_b_(n_b), stride_((p + 7) / 8) {
  const size_t expect = kHeaderBytes + static_cast<size_t>(stride_) * n_b;
  if (file_.size() != expect) throw schema_error("mask file size mismatch");
}

BatchStore BatchStore::open(const std::string& manifest_path) {
  BatchStore s;
  s.meta_ = load_store_manifest(manifest_path);
  s.offsets_.assign(1, 0);
  for (const auto& b : s.meta_.batches)
    s.offsets_.push_back(s.offsets_.back() + b.n_b);
  return s;
}

int64_t BatchStore::max_batch_size() const {
  int64_t m = 0;
  for (const auto& b : meta_.batches) m = std::max(m, b.n_b);
  return m;
}

OutcomeView BatchStore::map_outcomes(int b) const {
  const auto& e = meta_.batches[b];
  MappedFile f(meta_.resolve(e.outcome));
  BinReader hdr(meta_.resolve(e.outcome));
  hdr.expect_magic("SBIO");
  if (hdr.u32() != 1) throw schema_error("unsupported SBIO version");
  const int64_t p = static_cast<int64_t>(hdr.u64());
  const int64_t n_b = static_cast<int64_t>(hdr.u64());
  if (p != meta_.p || n_b != e.n_b)
    throw schema_error("outcome header disagrees with manifest");
  return OutcomeView(std::move(f), p, n_b);
}

MaskView BatchStore::map_masks(int b) const {
  const auto& e = meta_.batches[b];
  MappedFile f(meta_.resolve(e.mask));
  BinReader hdr(meta_.resolve(e.mask));
  hdr.expect_magic("SBMK");
  if (hdr.u32() != 1) throw schema_error("unsupported SBMK version");
  const int64_t p = static_cast<int64_t>(hdr.u64());
  const int64_t n_b = static_cast<int64_t>(hdr.u64());
  if (p != meta_.p || n_b != e.n_b)
    throw schema_error("mask header disagrees with manifest");
  return MaskView(std::move(f), p, n_b);
}

Eigen::MatrixXd BatchStore::covariates(int b) const {
  const auto& e = meta_.batches[b];
  BinReader r(meta_.resolve(e.covariates));
  r.expect_magic("SBCV");
  const int64_t n_b = static_cast<int64_t>(r.u64());
  const int64_t width = static_cast<int64_t>(r.u64());
  if (n_b != e.n_b || width != 1 + meta_.m)
    throw schema_error("covariate header disagrees with manifest");
  // row-major on disk
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(
      n_b, width);
  r.f64_array(tmp.data(), static_cast<size_t>(n_b * width));
  return tmp;
}

VoxelGrid BatchStore::load_grid() const {
  VoxelGrid g = load_region_map_csv(meta_.resolve(meta_.region_map));
  if (g.num_voxels() != meta_.p)
    throw schema_error("region map voxel count disagrees with manifest");
  return g;
}

Eigen::VectorXd BatchStore::load_observed_proportion() const {
  Eigen::MatrixXd m =
      read_f64_blob(meta_.resolve(meta_.observed_proportion), "SBOP");
  return m.col(0);
}

Eigen::MatrixXd BatchStore::load_voxel_stats() const {
  if (meta_.voxel_stats.empty()) return {};
  return read_f64_blob(meta_.resolve(meta_.voxel_stats), "SBVS");
}

// ---------------------------------------------------------------------------

StoreWriter::StoreWriter(const std::string& dir, int64_t p, int m) : dir_(dir) {
  fs::create_directories(dir);
  meta_.p = p;
  meta_.m = m;
  meta_.dir = fs::absolute(dir).string();
  observed_count_ = Eigen::VectorXd::Zero(p);
}

void StoreWriter::add_subject(const Eigen::VectorXd& outcome,
                              const std::vector<uint8_t>& mask,
                              const Eigen::VectorXd& covariates,
                              int64_t batch_capacity) {
  if (outcome.size() != meta_.p)
    throw schema_error("subject outcome length != p");
  if (static_cast<int64_t>(mask.size()) != meta_.p)
    throw schema_error("subject mask length != p");
  if (covariates.size() != 1 + meta_.m)
    throw schema_error("covariate width != 1 + m");
  pending_y_.push_back(outcome);
  pending_mask_.push_back(mask);
  pending_cov_.push_back(covariates);
  for (int64_t j = 0; j < meta_.p; ++j)
    if (mask[j]) observed_count_[j] += 1.0;
  meta_.n++;
  if (static_cast<int64_t>(pending_y_.size()) >= batch_capacity) flush_batch();
}

void StoreWriter::flush_batch() {
  if (pending_y_.empty()) return;
  const int64_t n_b = static_cast<int64_t>(pending_y_.size());
  const int b = static_cast<int>(meta_.batches.size());
  char buf[64];

  std::snprintf(buf, sizeof(buf), "batch_%04d.y", b);
  BatchEntry entry;
  entry.outcome = buf;
  entry.n_b = n_b;
  {
    BinWriter w(dir_ + "/" + buf);
    w.magic("SBIO");
    w.u32(1);
    w.u64(static_cast<uint64_t>(meta_.p));
    w.u64(static_cast<uint64_t>(n_b));
    for (const auto& y : pending_y_)
      w.f64_array(y.data(), static_cast<size_t>(meta_.p));
    w.close();
  }

  std::snprintf(buf, sizeof(buf), "batch_%04d.mask", b);
  entry.mask = buf;
  {
    BinWriter w(dir_ + "/" + buf);
    w.magic("SBMK");
    w.u32(1);
    w.u64(static_cast<uint64_t>(meta_.p));
    w.u64(static_cast<uint64_t>(n_b));
    const int64_t stride = (meta_.p + 7) / 8;
    std::vector<uint8_t> packed(static_cast<size_t>(stride), 0);
    for (const auto& mask : pending_mask_) {
      std::fill(packed.begin(), packed.end(), 0);
      for (int64_t j = 0; j < meta_.p; ++j)
        if (mask[j]) packed[j >> 3] |= static_cast<uint8_t>(1u << (j & 7));
      w.bytes(packed.data(), packed.size());
    }
    w.close();
  }

  std::snprintf(buf, sizeof(buf), "batch_%04d.cov", b);
  entry.covariates = buf;
  {
    BinWriter w(dir_ + "/" + buf);
    w.magic("SBCV");
    w.u64(static_cast<uint64_t>(n_b));
    w.u64(static_cast<uint64_t>(1 + meta_.m));
    for (const auto& c : pending_cov_)
      w.f64_array(c.data(), static_cast<size_t>(1 + meta_.m));
    w.close();
  }

  meta_.batches.push_back(entry);
  pending_y_.clear();
  pending_mask_.clear();
  pending_cov_.clear();
}

StoreManifest StoreWriter::finalize(const VoxelGrid& grid,
                                    double op_threshold) {
  flush_batch();
  if (meta_.n == 0) throw data_error("store has no subjects");
  save_region_map_csv(dir_ + "/" + meta_.region_map, grid);
  Eigen::MatrixXd h = observed_count_ / static_cast<double>(meta_.n);
  write_f64_blob(dir_ + "/" + meta_.observed_proportion, "SBOP", h);
  meta_.op_threshold = op_threshold;
  save_store_manifest(meta_);
  return meta_;
}

StoreManifest ingest(const std::string& out_dir,
                     const std::function<bool(SubjectRecord&)>& next_subject,
                     int64_t p, int m, int64_t batch_size,
                     const VoxelGrid& grid, double op_threshold) {
  if (batch_size <= 0) throw config_error("batch_size must be positive");
  StoreWriter w(out_dir, p, m);
  SubjectRecord rec;
  while (next_subject(rec))
    w.add_subject(rec.outcome, rec.mask, rec.covariates, batch_size);
  return w.finalize(grid, op_threshold);
}

// ---------------------------------------------------------------------------

ObservedProportion observed_proportion(const BatchStore& store,
                                       double threshold) {
  const int64_t p = store.meta().p;
  Eigen::VectorXd count = Eigen::VectorXd::Zero(p);
  for (int b = 0; b < store.num_batches(); ++b) {
    MaskView mask = store.map_masks(b);
    for (int64_t i = 0; i < mask.n_b(); ++i)
      for (int64_t j = 0; j < p; ++j)
        if (mask.observed(j, i)) count[j] += 1.0;
  }
  ObservedProportion out;
  out.h = count / static_cast<double>(store.meta().n);
  out.group_mask.resize(p);
  Eigen::MatrixXd vs = store.load_voxel_stats();
  for (int64_t j = 0; j < p; ++j) {
    bool ok = out.h[j] >= threshold;
    if (vs.size() > 0 && vs(j, 1) <= 0.0) ok = false;  // zero-variance voxel
    out.group_mask[j] = ok ? 1 : 0;
  }
  return out;
}

StoreManifest standardize(const BatchStore& store, const std::string& out_dir) {
  const int64_t p = store.meta().p;
  const int64_t n = store.meta().n;
  if (n < 2) throw data_error("standardize needs n >= 2");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sumsq = Eigen::VectorXd::Zero(p),
                  count = Eigen::VectorXd::Zero(p);
  double xsum = 0.0, xsumsq = 0.0;
  std::vector<double> zsum(store.meta().m, 0.0);
  for (int b = 0; b < store.num_batches(); ++b) {
    OutcomeView yv = store.map_outcomes(b);
    MaskView mask = store.map_masks(b);
    auto y = yv.matrix();
    for (int64_t i = 0; i < yv.n_b(); ++i) {
      for (int64_t j = 0; j < p; ++j) {
        if (mask.observed(j, i)) {
          const double v = y(j, i);
          sum[j] += v;
          sumsq[j] += v * v;
          count[j] += 1.0;
        }
      }
    }
    Eigen::MatrixXd cov = store.covariates(b);
    xsum += cov.col(0).sum();
    xsumsq += cov.col(0).squaredNorm();
    for (int k = 0; k < store.meta().m; ++k) zsum[k] += cov.col(1 + k).sum();
  }

  Eigen::MatrixXd stats(p, 2);  // mean, sd (sd = 0 flags zero variance)
  for (int64_t j = 0; j < p; ++j) {
    const double c = count[j];
    const double mean = c > 0 ? sum[j] / c : 0.0;
    double sd = 0.0;
    if (c >= 2) {
      const double ss = std::max(0.0, sumsq[j] - c * mean * mean);
      sd = std::sqrt(ss / (c - 1.0));
    }
    if (sd < 1e-12) sd = 0.0;
    stats(j, 0) = mean;
    stats(j, 1) = sd;
  }
  const double xmean = xsum / static_cast<double>(n);
  double xsd = std::sqrt(
      std::max(0.0, xsumsq - n * xmean * xmean) / static_cast<double>(n - 1));
  if (xsd < 1e-12) throw data_error("exposure has zero variance");

  StoreWriter w(out_dir, p, store.meta().m);
  for (int b = 0; b < store.num_batches(); ++b) {
    OutcomeView yv = store.map_outcomes(b);
    MaskView mask = store.map_masks(b);
    Eigen::MatrixXd cov = store.covariates(b);
    auto y = yv.matrix();
    for (int64_t i = 0; i < yv.n_b(); ++i) {
      Eigen::VectorXd ynew(p);
      std::vector<uint8_t> msk(p);
      for (int64_t j = 0; j < p; ++j) {
        const bool obs = mask.observed(j, i);
        msk[j] = obs ? 1 : 0;
        if (obs && stats(j, 1) > 0.0)
          ynew[j] = (y(j, i) - stats(j, 0)) / stats(j, 1);
        else if (obs)
          ynew[j] = y(j, i);  // zero-variance voxel, kept raw and masked out
        else
          ynew[j] = 0.0;
      }
      Eigen::VectorXd c = cov.row(i);
      c[0] = (c[0] - xmean) / xsd;
      w.add_subject(ynew, msk, c, store.batch_size(b));
    }
  }
  StoreManifest& meta = w.manifest();
  meta.dims = store.meta().dims;
  meta.standardized = true;
  meta.voxel_stats = "voxel_stats.bin";
  meta.has_exposure_stats = true;
  meta.exposure_mean = xmean;
  meta.exposure_sd = xsd;
  meta.confounder_means.resize(store.meta().m);
  for (int k = 0; k < store.meta().m; ++k)
    meta.confounder_means[k] = zsum[k] / static_cast<double>(n);
  write_f64_blob(out_dir + "/voxel_stats.bin", "SBVS", stats);
  return w.finalize(store.load_grid(), store.meta().op_threshold);
}

// ---------------------------------------------------------------------------

int64_t MissingIndex::find(int64_t subject, int32_t voxel) const {
  const int64_t lo = offsets[subject], hi = offsets[subject + 1];
  auto begin = voxels.begin() + lo, end = voxels.begin() + hi;
  auto it = std::lower_bound(begin, end, voxel);
  if (it == end || *it != voxel)
    throw index_error("voxel " + std::to_string(voxel) +
                      " is observed for subject " + std::to_string(subject));
  return lo + (it - begin);
}

MissingIndex MissingIndex::build(const BatchStore& store) {
  MissingIndex idx;
  idx.offsets.assign(1, 0);
  const int64_t p = store.meta().p;
  for (int b = 0; b < store.num_batches(); ++b) {
    MaskView mask = store.map_masks(b);
    for (int64_t i = 0; i < mask.n_b(); ++i) {
      for (int64_t j = 0; j < p; ++j)
        if (!mask.observed(j, i))
          idx.voxels.push_back(static_cast<int32_t>(j));
      idx.offsets.push_back(static_cast<int64_t>(idx.voxels.size()));
    }
  }
  idx.y_imp.assign(idx.voxels.size(), 0.0);
  return idx;
}

}  // namespace sbios
