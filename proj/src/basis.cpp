#include "sbios/basis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <Eigen/Dense>

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"

#include "json.hpp"

namespace sbios {

namespace {

void fix_column_signs(Eigen::MatrixXd& q) {
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      const double v = q(r, c);
      if (std::abs(v) > 1e-14) {
        if (v < 0.0) q.col(c) = -q.col(c);
        break;
      }
    }
  }
}

RegionBasis orthonormalize(const Eigen::MatrixXd& raw,
                           const Eigen::VectorXd& lambda) {
  RegionBasis b;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  b.Q = qr.householderQ() * Eigen::MatrixXd::Identity(raw.rows(), raw.cols());
  fix_column_signs(b.Q);
  b.lambda = lambda;
  b.finalize();
  return b;
}

}  // namespace

RegionBasis eigenbasis(const Eigen::MatrixXd& kernel, double energy) {
  return eigenbasis_truncated(kernel,
                              {TruncationMode::EnergyFraction, energy});
}

RegionBasis eigenbasis_truncated(const Eigen::MatrixXd& kernel,
                                 const TruncationSpec& spec) {
  if (kernel.rows() != kernel.cols())
    throw config_error("eigenbasis: kernel not square");
  if (spec.value <= 0.0 || spec.value > 1.0)
    throw config_error("eigenbasis: truncation value must be in (0,1]");
  const Eigen::Index p = kernel.rows();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel);
  if (es.info() != Eigen::Success)
    throw data_error("eigenbasis: eigendecomposition failed");
  // descending order
  Eigen::VectorXd evals = es.eigenvalues().reverse();
  Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();

  const double total = evals.sum();
  if (!(total > 0.0)) throw data_error("eigenbasis: degenerate kernel (zero trace)");

  Eigen::Index positive = 0;
  while (positive < p && evals[positive] > 1e-12 * evals[0]) ++positive;
  if (positive == 0) throw data_error("eigenbasis: degenerate kernel");

  Eigen::Index L = 0;
  if (spec.mode == TruncationMode::EnergyFraction) {
    double acc = 0.0;
    while (L < positive) {
      acc += evals[L];
      ++L;
      if (acc >= spec.value * total) break;
    }
  } else {
    L = static_cast<Eigen::Index>(std::llround(spec.value * static_cast<double>(p)));
    L = std::max<Eigen::Index>(1, std::min(L, positive));
  }

  return orthonormalize(evecs.leftCols(L), evals.head(L));
}

RegionBasis modified_se_basis(const Eigen::MatrixXd& coords, double a, double b,
                              int degree) {
  if (a <= 0.0 || b <= 0.0) throw config_error("modified_se_basis: a, b must be positive");
  if (degree < 0) throw config_error("modified_se_basis: negative degree");
  const Eigen::Index p = coords.rows();
  const int d = static_cast<int>(coords.cols());

  // center, scale to unit half-width
  Eigen::RowVectorXd lo = coords.colwise().minCoeff();
  Eigen::RowVectorXd hi = coords.colwise().maxCoeff();
  Eigen::RowVectorXd mid = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo).maxCoeff();
  if (half <= 0.0) half = 1.0;
  Eigen::MatrixXd x = (coords.rowwise() - mid) / half;

  // 1D eigenpairs of exp(-b (x-z)^2) under a N(0, 1/(4a)) weight:
  //   c = sqrt(a^2 + 2ab), A = a + b + c
  //   lambda_k = sqrt(2a/A) (b/A)^k
  // the exp(-a x^2) prefactors fold into the eigenfunctions, giving
  //   phi_k(x) = exp(-c x^2) H_k(sqrt(2c) x)
  const double c = std::sqrt(a * a + 2.0 * a * b);
  const double bigA = a + b + c;
  const double lambda0 = std::sqrt(2.0 * a / bigA);
  const double q = b / bigA;
  const double s = std::sqrt(2.0 * c);

  // Hermite values H_k(s x) per dimension, k = 0..degree
  std::vector<Eigen::MatrixXd> herm(d, Eigen::MatrixXd(p, degree + 1));
  for (int k = 0; k < d; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double t = s * x(j, k);
      herm[k](j, 0) = 1.0;
      if (degree >= 1) herm[k](j, 1) = 2.0 * t;
      for (int n = 2; n <= degree; ++n)
        herm[k](j, n) = 2.0 * t * herm[k](j, n - 1) - 2.0 * (n - 1) * herm[k](j, n - 2);
    }
  }
  Eigen::VectorXd envelope(p);
  for (Eigen::Index j = 0; j < p; ++j)
    envelope[j] = std::exp(-c * x.row(j).squaredNorm());

  // multi-indices with total degree <= degree, ordered by total degree so
  // the eigenvalue products come out nonincreasing
  std::vector<std::vector<int>> multis;
  std::vector<int> idx(d, 0);
  for (int total = 0; total <= degree; ++total) {
    std::vector<int> k(d, 0);
    // enumerate compositions of `total` into d parts
    std::function<void(int, int)> rec = [&](int pos, int rem) {
      if (pos == d - 1) {
        k[pos] = rem;
        multis.push_back(k);
        return;
      }
      for (int v = 0; v <= rem; ++v) {
        k[pos] = v;
        rec(pos + 1, rem - v);
      }
    };
    rec(0, total);
  }

  const Eigen::Index L = static_cast<Eigen::Index>(multis.size());
  Eigen::MatrixXd raw(p, L);
  Eigen::VectorXd lambda(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    int total = 0;
    Eigen::VectorXd col = envelope;
    for (int k = 0; k < d; ++k) {
      col.array() *= herm[k].col(multis[l][k]).array();
      total += multis[l][k];
    }
    raw.col(l) = col;
    lambda[l] = std::pow(lambda0, d) * std::pow(q, total);
  }
  RegionBasis b_out = orthonormalize(raw, lambda);
  b_out.region_id = 1;
  return b_out;
}

void BasisSet::rebuild_offsets() {
  offsets.assign(1, 0);
  for (const auto& r : regions) offsets.push_back(offsets.back() + r.L_r());
}

Eigen::VectorXd BasisSet::stacked_lambda() const {
  Eigen::VectorXd out(total_L());
  for (size_t r = 0; r < regions.size(); ++r)
    out.segment(offsets[r], regions[r].L_r()) = regions[r].lambda;
  return out;
}

void save_region_basis(const std::string& path, const RegionBasis& basis) {
  BinWriter w(path);
  w.magic("SBQR");
  w.u32(1);
  w.u64(static_cast<uint64_t>(basis.p_r()));
  w.u64(static_cast<uint64_t>(basis.L_r()));
  w.f64_array(basis.lambda.data(), static_cast<size_t>(basis.L_r()));
  w.f64_array(basis.Q.data(), static_cast<size_t>(basis.Q.size()));
  w.close();
}

RegionBasis load_region_basis(const std::string& path, int region_id) {
  BinReader r(path);
  r.expect_magic("SBQR");
  if (r.u32() != 1) throw schema_error("unsupported SBQR version: " + path);
  const uint64_t p = r.u64();
  const uint64_t L = r.u64();
  RegionBasis b;
  b.region_id = region_id;
  b.lambda.resize(static_cast<Eigen::Index>(L));
  r.f64_array(b.lambda.data(), L);
  b.Q.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(L));
  r.f64_array(b.Q.data(), p * L);
  b.finalize();
  return b;
}

void save_basis_set(const std::string& dir, const BasisSet& basis) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["schema_version"] = 1;
  meta["num_regions"] = basis.regions.size();
  nlohmann::json files = nlohmann::json::array();
  for (size_t r = 0; r < basis.regions.size(); ++r) {
    char name[64];
    std::snprintf(name, sizeof(name), "region_%04zu.sbqr", r + 1);
    save_region_basis(dir + "/" + name, basis.regions[r]);
    files.push_back({{"region_id", basis.regions[r].region_id}, {"file", name}});
  }
  meta["regions"] = files;
  write_text_file(dir + "/basis.json", meta.dump(2) + "\n");
}

BasisSet load_basis_set(const std::string& dir) {
  const auto meta = nlohmann::json::parse(read_text_file(dir + "/basis.json"));
  BasisSet out;
  for (const auto& entry : meta.at("regions")) {
    out.regions.push_back(load_region_basis(
        dir + "/" + entry.at("file").get<std::string>(),
        entry.at("region_id").get<int>()));
  }
  out.rebuild_offsets();
  return out;
}

}  // namespace sbios
