#include "sbios/manifest.hpp"

#include <filesystem>

#include "json.hpp"

#include "sbios/binio.hpp"
#include "sbios/errors.hpp"

namespace sbios {

using nlohmann::json;

StoreManifest load_store_manifest(const std::string& manifest_path) {
  json j;
  try {
    j = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw schema_error("bad manifest json: " + std::string(e.what()));
  }
  StoreManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1)
      throw schema_error("unsupported manifest schema_version");
    m.p = j.at("p").get<int64_t>();
    m.n = j.at("n").get<int64_t>();
    m.m = j.at("m").get<int>();
    m.dims = j.value("dims", std::vector<int>{});
    for (const auto& b : j.at("batches")) {
      BatchEntry e;
      e.outcome = b.at("outcome").get<std::string>();
      e.mask = b.at("mask").get<std::string>();
      e.covariates = b.at("covariates").get<std::string>();
      e.n_b = b.at("n_b").get<int64_t>();
      m.batches.push_back(e);
    }
    m.region_map = j.value("region_map", std::string("region_map.csv"));
    m.observed_proportion =
        j.value("observed_proportion", std::string("observed_proportion.bin"));
    m.op_threshold = j.value("op_threshold", 0.5);
    m.standardized = j.value("standardized", false);
    m.voxel_stats = j.value("voxel_stats", std::string());
    m.has_exposure_stats = j.value("has_exposure_stats", false);
    m.exposure_mean = j.value("exposure_mean", 0.0);
    m.exposure_sd = j.value("exposure_sd", 1.0);
    m.confounder_means = j.value("confounder_means", std::vector<double>{});
    m.ground_truth = j.value("ground_truth", std::string());
  } catch (const json::exception& e) {
    throw schema_error("manifest missing fields: " + std::string(e.what()));
  }
  int64_t total = 0;
  for (const auto& b : m.batches) total += b.n_b;
  if (total != m.n) throw schema_error("manifest batch sizes do not sum to n");
  m.dir = std::filesystem::absolute(manifest_path).parent_path().string();
  return m;
}

void save_store_manifest(const StoreManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["p"] = m.p;
  j["n"] = m.n;
  j["m"] = m.m;
  if (!m.dims.empty()) j["dims"] = m.dims;
  json batches = json::array();
  for (const auto& b : m.batches)
    batches.push_back({{"outcome", b.outcome},
                       {"mask", b.mask},
                       {"covariates", b.covariates},
                       {"n_b", b.n_b}});
  j["batches"] = batches;
  j["region_map"] = m.region_map;
  j["observed_proportion"] = m.observed_proportion;
  j["op_threshold"] = m.op_threshold;
  j["standardized"] = m.standardized;
  if (!m.voxel_stats.empty()) j["voxel_stats"] = m.voxel_stats;
  j["has_exposure_stats"] = m.has_exposure_stats;
  j["exposure_mean"] = m.exposure_mean;
  j["exposure_sd"] = m.exposure_sd;
  j["confounder_means"] = m.confounder_means;
  if (!m.ground_truth.empty()) j["ground_truth"] = m.ground_truth;
  write_text_file(m.dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace sbios
