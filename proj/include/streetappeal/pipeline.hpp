#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "streetappeal/backend.hpp"
#include "streetappeal/spatial.hpp"
#include "streetappeal/stats.hpp"

namespace streetappeal::pipeline {

namespace fs = std::filesystem;

struct Paths {
  fs::path network;    // GeoJSON LineStrings
  fs::path landmarks;  // optional; CSV id,lon,lat or GeoJSON points
  fs::path tiles;      // directory of <id>_<heading>.png for the local tile source
  fs::path raters;     // CSV rater_id,group
  fs::path ratings;    // CSV rater_id,point_id,score
  fs::path output = "out";
};

struct SamplingConfig {
  double interval_m = 20.0;
  std::size_t random_n = 1000;
  double landmark_radius_m = 50.0;
  double dedup_epsilon_m = 1.0;
  bool augment = true;
};

struct ImageryConfig {
  std::string source = "local";  // local | remote
  std::string endpoint = "https://maps.googleapis.com/maps/api/streetview";
  std::string api_key_env = "STREETVIEW_API_KEY";
};

struct PanelConfig {
  int coverage = 9;
  int per_rater_min = 500;
};

enum class WilcoxonChoice { auto_, signed_rank, rank_sum };

struct StatsConfig {
  spatial::WeightScheme weights = spatial::WeightScheme::knn(8);
  int permutations = 999;
  double alpha = 0.05;
  stats::TVariant t_variant = stats::TVariant::pooled;
  WilcoxonChoice wilcoxon = WilcoxonChoice::auto_;
  /// A surface counts as non-normal when its Shapiro-Wilk W falls below this.
  double normality_w_threshold = 0.8;
  /// 0 labels Gi* by z threshold; otherwise by conditional permutation.
  int gstar_permutations = 0;
};

struct PipelineConfig {
  Paths paths;
  SamplingConfig sampling;
  ImageryConfig imagery;
  backend::BackendConfig backend;
  PanelConfig panel;
  StatsConfig stats;
  std::uint64_t seed = 0;
  bool strict = true;

  /// Throws ConfigError naming the first out-of-range field.
  void validate() const;
};

/// JSON config. Relative paths resolve against `base_dir`; unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir = {});
PipelineConfig load_config(const fs::path& file);
/// Every field, defaults included, as pretty JSON.
std::string config_json(const PipelineConfig& config);

/// File locations under the output directory.
struct Layout {
  fs::path root;

  fs::path points_csv() const { return root / "points.csv"; }
  fs::path points_geojson() const { return root / "points.geojson"; }
  fs::path sample_manifest() const { return root / "sample_manifest.json"; }
  fs::path panoramas() const { return root / "panoramas"; }
  fs::path panorama(const std::string& id) const { return panoramas() / (id + ".png"); }
  fs::path luminosity_csv() const { return root / "luminosity.csv"; }
  fs::path fetch_manifest() const { return root / "fetch_manifest.json"; }
  fs::path model_ratings() const { return root / "model_ratings.csv"; }
  fs::path rating_audit() const { return root / "rating_audit.jsonl"; }
  fs::path rate_manifest() const { return root / "rate_manifest.json"; }
  fs::path assignment_csv() const { return root / "assignment.csv"; }
  fs::path assign_manifest() const { return root / "assign_manifest.json"; }
  fs::path human_ratings() const { return root / "human_ratings.csv"; }
  fs::path panel_summary() const { return root / "panel_summary.json"; }
  fs::path panel_manifest() const { return root / "panel_manifest.json"; }
  fs::path surfaces() const { return root / "surfaces"; }
  fs::path results() const { return root / "results" / "results.json"; }
  fs::path report() const { return root / "report"; }
};

void cmd_sample(const PipelineConfig& config, std::ostream& log);
void cmd_fetch(const PipelineConfig& config, std::ostream& log);
/// Throws BackendExhausted after writing the successful rows when strict and
/// any item failed permanently.
void cmd_rate(const PipelineConfig& config, std::ostream& log, backend::Clock* clock = nullptr);
void cmd_panel_assign(const PipelineConfig& config, std::ostream& log);
void cmd_panel_ingest(const PipelineConfig& config, std::ostream& log);
void cmd_adjust(const PipelineConfig& config, std::ostream& log);
void cmd_analyze(const PipelineConfig& config, std::ostream& log);
void cmd_report(const PipelineConfig& config, std::ostream& log);

}  // namespace streetappeal::pipeline
