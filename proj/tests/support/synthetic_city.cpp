#include "synthetic_city.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "streetappeal/geo.hpp"
#include "streetappeal/imagery.hpp"
#include "streetappeal/io.hpp"
#include "streetappeal/pipeline.hpp"
#include "streetappeal/random.hpp"

namespace streetappeal::testing {

namespace {

constexpr double kLon0 = 24.93;
constexpr double kLat0 = 60.165;
constexpr int kStreets = 10;
constexpr double kStreetLengthM = 380.0;
constexpr double kSpacingM = 100.0;

double metres_per_degree_lat() { return geo::kEarthRadiusM * geo::deg2rad(1.0); }
double metres_per_degree_lon(double lat) { return metres_per_degree_lat() * std::cos(geo::deg2rad(lat)); }

// Local planar offsets in metres from the south-west corner.
std::pair<double, double> local_xy(double lon, double lat) {
  return {(lon - kLon0) * metres_per_degree_lon(kLat0), (lat - kLat0) * metres_per_degree_lat()};
}

}  // namespace

double greenness(double lon, double lat) {
  const auto [x, y] = local_xy(lon, lat);
  const double dx = x - 300.0, dy = y - 700.0;
  const double park = std::exp(-(dx * dx + dy * dy) / (2.0 * 150.0 * 150.0));
  return std::clamp(0.8 * park + 0.2 * x / kStreetLengthM, 0.0, 1.0);
}

SyntheticCity make_synthetic_city(const fs::path& root, std::uint64_t seed) {
  using nlohmann::json;
  fs::create_directories(root / "tiles");
  SyntheticCity city{root, root / "config.json", root / "out"};

  geo::StreetNetwork net;
  json features = json::array();
  for (int s = 0; s < kStreets; ++s) {
    const double lat = kLat0 + s * kSpacingM / metres_per_degree_lat();
    const double lon1 = kLon0 + kStreetLengthM / metres_per_degree_lon(lat);
    char id[16];
    std::snprintf(id, sizeof id, "street_%02d", s);
    net.segments.push_back({id, {{kLon0, lat}, {lon1, lat}}});
    features.push_back({{"type", "Feature"},
                        {"id", id},
                        {"geometry", {{"type", "LineString"}, {"coordinates", {{kLon0, lat}, {lon1, lat}}}}},
                        {"properties", json::object()}});
  }
  io::write_text(root / "network.geojson", json{{"type", "FeatureCollection"}, {"features", features}}.dump(1));

  // Landmarks sit on sample points, so their neighbourhoods duplicate random picks.
  const auto points = geo::sample_along_network(net, 20.0);
  std::string landmarks = "id,lon,lat\n";
  for (std::size_t i : {std::size_t(23), std::size_t(101), std::size_t(177)}) {
    landmarks += "lm" + std::to_string(i) + "," + io::fmt(points[i].lon, 15) + "," + io::fmt(points[i].lat, 15) + "\n";
  }
  io::write_text(root / "landmarks.csv", landmarks);

  for (const auto& p : points) {
    const double h = greenness(p.lon, p.lat);
    for (int heading : imagery::kHeadings) {
      const int tint = (heading / 60) % 2 == 0 ? 0 : 6;
      const std::array<std::uint8_t, 3> rgb = {std::uint8_t(120 - 60 * h + tint), std::uint8_t(60 + 150 * h),
                                               std::uint8_t(100 - 40 * h)};
      imagery::write_png(root / "tiles" / (p.id + "_" + std::to_string(heading) + ".png"),
                         imagery::Raster(imagery::kTileSize, imagery::kTileSize, rgb));
    }
  }

  io::write_text(root / "raters.csv", "rater_id,group\nr1,local_resident\nr2,non_resident\nr3,local_resident\n"
                                      "r4,non_resident\n");

  const json config = {
      {"seed", seed},
      {"paths",
       {{"network", "network.geojson"},
        {"landmarks", "landmarks.csv"},
        {"tiles", "tiles"},
        {"raters", "raters.csv"},
        {"ratings", "ratings.csv"},
        {"output", "out"}}},
      {"backend", {{"kind", "mock"}}},
      {"panel", {{"coverage", 2}, {"per_rater_min", 100}}},
  };
  io::write_text(city.config, config.dump(2) + "\n");
  return city;
}

void write_synthetic_ratings(const SyntheticCity& city, std::uint64_t seed) {
  const auto points = io::read_points_csv(city.output / "points.csv");
  std::map<std::string, std::pair<std::size_t, geo::LonLat>> where;
  for (std::size_t i = 0; i < points.size(); ++i) where[points[i].id] = {i, points[i].position()};
  const std::map<std::string, std::pair<std::size_t, double>> raters = {
      {"r1", {0, -0.5}}, {"r2", {1, 0.3}}, {"r3", {2, 0.6}}, {"r4", {3, -0.2}}};

  const io::CsvTable t = io::read_csv(city.output / "assignment.csv");
  const auto cr = t.column("rater_id"), cp = t.column("point_id");
  std::string csv = "rater_id,point_id,score\n";
  for (const auto& row : t.rows) {
    const auto& [ri, bias] = raters.at(row.fields[cr]);
    const auto& [pi, loc] = where.at(row.fields[cp]);
    auto rng = substream(seed, ri, pi);
    const double noise = 2.0 * uniform_unit(rng) - 1.0;
    const double raw = 2.0 + 4.0 * greenness(loc.lon, loc.lat) + bias + noise;
    const long score = std::clamp(std::lround(raw), 1L, 7L);
    csv += row.fields[cr] + "," + row.fields[cp] + "," + std::to_string(score) + "\n";
  }
  io::write_text(city.root / "ratings.csv", csv);
}

void run_full_pipeline(const SyntheticCity& city) {
  const auto cfg = pipeline::load_config(city.config);
  std::ostringstream log;
  pipeline::cmd_sample(cfg, log);
  pipeline::cmd_fetch(cfg, log);
  pipeline::cmd_rate(cfg, log);
  pipeline::cmd_panel_assign(cfg, log);
  write_synthetic_ratings(city, cfg.seed);
  pipeline::cmd_panel_ingest(cfg, log);
  pipeline::cmd_adjust(cfg, log);
  pipeline::cmd_analyze(cfg, log);
  pipeline::cmd_report(cfg, log);
}

std::string directory_fingerprint(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, dir).string() + "\n" + io::read_text(f) + "\n";
  return out;
}

}  // namespace streetappeal::testing
