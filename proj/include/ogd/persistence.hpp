#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ogd/denoiser.hpp"
#include "ogd/latent.hpp"
#include "ogd/prior.hpp"
#include "ogd/scenario.hpp"

namespace ogd {

using Json = nlohmann::json;

enum class Encoding { text, binary };

/// Write-to-temp-then-rename so readers never observe partial files.
void atomic_write(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

/// FNV-1a 64 over the canonical (key-sorted) dump; stable under reordering.
std::string config_hash(const Json& config);

void save_scene(const JointGmm& scene, const std::string& path, Encoding enc = Encoding::text);
JointGmm load_scene(const std::string& path);

void save_batch(const Mat& samples, const std::string& path, Encoding enc = Encoding::text);
Mat load_batch(const std::string& path);

void save_mlp(const MlpDenoiser& model, const std::string& path, Encoding enc = Encoding::text);
MlpDenoiser load_mlp(const std::string& path);

void save_linear_map(const LinearMap& map, const std::string& path,
                     Encoding enc = Encoding::text);
LinearMap load_linear_map(const std::string& path);

struct RunManifest {
    Json config;  // full config snapshot, hash source
    std::uint64_t seed = 0;
    std::string code_version;

    std::string hash() const { return config_hash(config); }
};

void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);

/// Flat key=value rows, keys sorted, one row per line.
using MetricRow = std::map<std::string, std::string>;

std::string format_double(double v);  // round-trip decimal
void put_metric(MetricRow& row, const std::string& key, double v);

void save_metric_rows(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> load_metric_rows(const std::string& path);

/// Plot-ready two-column series.
void save_series(const std::vector<std::pair<double, double>>& series, const std::string& path);

void save_report(const OptimalityReport& report, const std::string& path);
Json report_to_json(const OptimalityReport& report);

}  // namespace ogd
