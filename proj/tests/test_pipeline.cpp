#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "streetappeal/errors.hpp"
#include "streetappeal/io.hpp"
#include "streetappeal/pipeline.hpp"
#include "synthetic_city.hpp"
#include "test_support.hpp"

using namespace streetappeal;
using namespace streetappeal::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// One fully processed city shared by the read-only checks below.
const testing::SyntheticCity& processed_city() {
  static testing::TempDir dir("pipeline_shared");
  static const testing::SyntheticCity city = [] {
    auto c = testing::make_synthetic_city(dir.path() / "city");
    testing::run_full_pipeline(c);
    return c;
  }();
  return city;
}

testing::SyntheticCity fresh_city(const testing::TempDir& dir, const std::string& name) {
  return testing::make_synthetic_city(dir.path() / name);
}

std::size_t line_count(const fs::path& file) {
  const auto text = io::read_text(file);
  return std::size_t(std::count(text.begin(), text.end(), '\n'));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STREETAPPEAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults, overrides and rejection") {
  const auto d = parse_config("{}");
  CHECK(d.sampling.interval_m == 20.0);
  CHECK(d.sampling.random_n == 1000);
  CHECK(d.panel.coverage == 9);
  CHECK(d.panel.per_rater_min == 500);
  CHECK(d.stats.permutations == 999);
  CHECK(d.stats.alpha == 0.05);
  CHECK(d.stats.weights.kind == spatial::WeightScheme::Kind::knn);
  CHECK(d.stats.weights.k == 8);
  CHECK(d.backend.kind == backend::Kind::mock);

  const auto c = parse_config(R"({"seed": 5, "paths": {"network": "net.geojson", "output": "/abs/out"},
                                  "stats": {"weights": "distance_band", "band_m": 150}})",
                              "/base");
  CHECK(c.seed == 5);
  CHECK(c.backend.seed == 5);
  CHECK(c.paths.network == fs::path("/base/net.geojson"));
  CHECK(c.paths.output == fs::path("/abs/out"));
  CHECK(c.stats.weights.kind == spatial::WeightScheme::Kind::distance_band);

  CHECK_THROWS_WITH_AS(parse_config(R"({"stats": {"permutatons": 9}})"), doctest::Contains("permutatons"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"stats": {"alpha": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"stats": {"weights": "queen"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sampling": {"random_n": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"panel": {"coverage": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"imagery": {"headings": [0, 90, 180, 270]}})"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config_json round-trips") {
  const auto c = parse_config(R"({"seed": 3, "stats": {"t_variant": "welch", "gstar_permutations": 99},
                                  "backend": {"temperature": 0.2}})");
  const std::string text = config_json(c);
  CHECK(config_json(parse_config(text)) == text);
  const auto j = json::parse(text);
  CHECK(j.at("stats").at("t_variant") == "welch");
  CHECK(j.at("backend").at("temperature") == 0.2);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const auto shipped = load_config(fs::path(STREETAPPEAL_CONFIG_DIR) / "default.json");
  auto got = json::parse(config_json(shipped));
  auto want = json::parse(io::read_text(fs::path(STREETAPPEAL_FIXTURES) / "default_config.json"));
  got.erase("paths");
  want.erase("paths");
  CHECK(got == want);
  CHECK(config_json(parse_config("{}")) == io::read_text(fs::path(STREETAPPEAL_FIXTURES) / "default_config.json"));
}

TEST_CASE("sampling is deterministic") {
  testing::TempDir dir("pipeline_sample");
  const auto a = fresh_city(dir, "a"), b = fresh_city(dir, "b");
  std::ostringstream log;
  cmd_sample(load_config(a.config), log);
  cmd_sample(load_config(b.config), log);
  CHECK(io::read_text(a.output / "points.csv") == io::read_text(b.output / "points.csv"));
  CHECK(line_count(a.output / "points.csv") == 201);
  CHECK(fs::exists(a.output / "points.geojson"));
  CHECK(fs::exists(a.output / "sample_manifest.json"));
}

TEST_CASE("stages refuse to run out of order") {
  testing::TempDir dir("pipeline_order");
  const auto city = fresh_city(dir, "c");
  const auto cfg = load_config(city.config);
  std::ostringstream log;
  CHECK_THROWS_WITH_AS(cmd_rate(cfg, log), doctest::Contains("run 'sample' first"), ValidationError);
  CHECK_THROWS_AS(cmd_analyze(cfg, log), ValidationError);
  CHECK_THROWS_AS(cmd_report(cfg, log), ValidationError);
}

TEST_CASE("rating resumes without redoing work") {
  testing::TempDir dir("pipeline_rate");
  const auto city = fresh_city(dir, "c");
  const auto cfg = load_config(city.config);
  std::ostringstream log;
  cmd_sample(cfg, log);
  cmd_fetch(cfg, log);
  cmd_rate(cfg, log);
  const Layout L{cfg.paths.output};
  const std::string first = io::read_text(L.model_ratings());
  CHECK(line_count(L.model_ratings()) == 1 + 6 * 200);

  cmd_rate(cfg, log);
  CHECK(io::read_text(L.model_ratings()) == first);
  CHECK(json::parse(io::read_text(L.rate_manifest())).at("counts").at("requested") == 0);

  // Drop the last 50 rows and resume.
  std::string truncated = first;
  for (int i = 0; i < 51; ++i) truncated.erase(truncated.rfind('\n', truncated.size() - 2) + 1);
  io::write_text(L.model_ratings(), truncated);
  cmd_rate(cfg, log);
  CHECK(io::read_text(L.model_ratings()) == first);
  CHECK(json::parse(io::read_text(L.rate_manifest())).at("counts").at("requested") == 51);

  SUBCASE("a different sample set is refused") {
    std::string pts = io::read_text(L.points_csv());
    pts.erase(pts.rfind('\n', pts.size() - 2) + 1);
    io::write_text(L.points_csv(), pts);
    CHECK_THROWS_WITH_AS(cmd_rate(cfg, log), doctest::Contains("different sample set"), ValidationError);
  }
}

TEST_CASE("empty ratings file is named in the error") {
  testing::TempDir dir("pipeline_ingest");
  const auto city = fresh_city(dir, "c");
  const auto cfg = load_config(city.config);
  std::ostringstream log;
  cmd_sample(cfg, log);
  io::write_text(city.root / "ratings.csv", "rater_id,point_id,score\n");
  CHECK_THROWS_WITH_AS(cmd_panel_ingest(cfg, log), doctest::Contains("ratings.csv"), ValidationError);
}

TEST_CASE("full pipeline outputs") {
  const auto& city = processed_city();
  const Layout L{city.output};
  const auto results = json::parse(io::read_text(L.results()));
  CHECK(results.at("moran_ratings").size() == 8);
  CHECK(results.at("moran_differences").size() == 6);
  CHECK(results.at("pearson").size() == 28);  // every pair of the 8 surfaces
  for (const auto& g : results.at("moran_ratings")) {
    CHECK(g.at("permutations") == 999);
    CHECK(g.at("pseudo_p").get<double>() >= 0.001);
  }

  const std::set<std::string> gstar_labels{"hot", "cold", "ns"};
  const std::set<std::string> lisa_labels{"HH", "LL", "HL", "LH", "NS"};
  int layers = 0;
  for (const auto& e : fs::directory_iterator(L.report() / "maps")) {
    if (e.path().extension() != ".geojson") continue;
    ++layers;
    const auto gj = json::parse(io::read_text(e.path()));
    const bool is_gstar = e.path().filename().string().rfind("gstar_", 0) == 0;
    for (const auto& f : gj.at("features")) {
      const auto label = f.at("properties").at("label").get<std::string>();
      CHECK((is_gstar ? gstar_labels : lisa_labels).contains(label));
    }
  }
  CHECK(layers == 12);
  CHECK(fs::exists(L.report() / "palette.json"));
}

TEST_CASE("report regenerates byte-identically") {
  const auto& city = processed_city();
  const Layout L{city.output};
  const auto before = testing::directory_fingerprint(L.report());
  std::ostringstream log;
  cmd_report(load_config(city.config), log);
  CHECK(testing::directory_fingerprint(L.report()) == before);
}

TEST_CASE("cli exit codes") {
  testing::TempDir dir("pipeline_cli");
  const auto city = fresh_city(dir, "c");
  const std::string cfg = " -c " + city.config.string();

  CHECK(run_cli("sample") == 1);
  CHECK(run_cli("nonsense" + cfg) == 1);
  CHECK(run_cli("sample -c " + (dir.path() / "missing.json").string()) == 1);

  io::write_text(dir.path() / "unknown.json", R"({"stats": {"bogus": 1}})");
  CHECK(run_cli("sample -c " + (dir.path() / "unknown.json").string()) == 1);
  CHECK(run_cli("analyze" + cfg + " --permutations -5") == 1);

  CHECK(run_cli("analyze" + cfg) == 2);
  CHECK(run_cli("sample" + cfg) == 0);
  CHECK(run_cli("fetch" + cfg) == 0);
  CHECK(fs::exists(city.output / "luminosity.csv"));

  auto j = json::parse(io::read_text(city.config));
  j["backend"] = {{"kind", "remote"}, {"api_key_env", "STREETAPPEAL_TEST_KEY_THAT_IS_NEVER_SET"}};
  io::write_text(city.config, j.dump(2));
  CHECK(run_cli("rate" + cfg) == 3);
  CHECK(run_cli("rate" + cfg + " --backend mock") == 0);
}
