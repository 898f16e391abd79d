#include "streetappeal/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "streetappeal/adjust.hpp"
#include "streetappeal/errors.hpp"
#include "streetappeal/imagery.hpp"
#include "streetappeal/io.hpp"
#include "streetappeal/panel.hpp"
#include "streetappeal/prompt.hpp"

namespace streetappeal::pipeline {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config reading

class Section {
 public:
  Section(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  void get_path(const char* key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (!obj_.contains(key)) return;
    fs::path p(s);
    out = (s.empty() || p.is_absolute() || base.empty()) ? p : base / p;
  }

  std::optional<Section> section(const char* key) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return std::nullopt;
    return Section(*it, where_ + "." + key);
  }

  bool has(const char* key) const { return obj_.contains(key); }
  // Marks key as known; true when it is present and not null.
  bool present(const char* key) {
    used_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  // Protocol constants are echoed by config_json; accept them only unchanged.
  void fixed(const char* key, const json& expected) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it != obj_.end() && *it != expected) {
      throw ConfigError(where_ + "." + key + " is fixed at " + expected.dump());
    }
  }

  void finish() const {
    for (const auto& [k, _] : obj_.items()) {
      if (!used_.contains(k)) throw ConfigError("unknown config key " + where_ + "." + k);
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> used_;
};

std::string to_string(WilcoxonChoice c) {
  switch (c) {
    case WilcoxonChoice::auto_: return "auto";
    case WilcoxonChoice::signed_rank: return "signed_rank";
    case WilcoxonChoice::rank_sum: return "rank_sum";
  }
  return "auto";
}

WilcoxonChoice wilcoxon_choice(const std::string& s) {
  if (s == "auto") return WilcoxonChoice::auto_;
  if (s == "signed_rank") return WilcoxonChoice::signed_rank;
  if (s == "rank_sum") return WilcoxonChoice::rank_sum;
  throw ConfigError("stats.wilcoxon_mode must be auto, signed_rank or rank_sum");
}

stats::TVariant t_variant(const std::string& s) {
  if (s == "pooled") return stats::TVariant::pooled;
  if (s == "welch") return stats::TVariant::welch;
  throw ConfigError("stats.t_variant must be pooled or welch");
}

// ---------------------------------------------------------------------------
// Files

void write_json(const fs::path& file, const ojson& j) { io::write_text(file, j.dump(2) + "\n"); }

json read_json(const fs::path& file) {
  try {
    return json::parse(io::read_text(file));
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void require_file(const fs::path& file, const std::string& what) {
  if (file.empty()) throw ConfigError(what + " path not configured");
  if (!fs::exists(file)) throw ConfigError(what + " not found: " + file.string());
}

void require_output(const fs::path& file, const std::string& stage) {
  if (!fs::exists(file)) throw ValidationError(file.string() + " missing; run '" + stage + "' first");
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(where + ": bad number '" + s + "'");
  return v;
}

std::vector<std::string> ids_of(const std::vector<geo::SamplePoint>& pts) {
  std::vector<std::string> ids;
  for (const auto& p : pts) ids.push_back(p.id);
  return ids;
}

ojson manifest_header(const std::string& stage, const PipelineConfig& c) {
  return ojson{{"stage", stage}, {"seed", c.seed}, {"tool_version", "1.0.0"}};
}

// Points hash recorded by a stage manifest.
std::string manifest_points_hash(const fs::path& manifest) {
  const json m = read_json(manifest);
  if (!m.contains("points_sha256")) throw ValidationError(manifest.string() + ": no points_sha256");
  return m.at("points_sha256").get<std::string>();
}

// ---------------------------------------------------------------------------
// Model ratings file: point_id,prompt,tier,persona,scores,aggregate,attempts

struct ModelRow {
  std::string point_id;
  prompt::PromptModel prompt;
  std::string scores;
  double aggregate = 0.0;
  int attempts = 0;
};

using ModelKey = std::pair<std::string, prompt::PromptModel>;

std::map<ModelKey, ModelRow> read_model_ratings(const fs::path& file) {
  const io::CsvTable t = io::read_csv(file);
  const auto cp = t.column("point_id"), cm = t.column("prompt"), cs = t.column("scores"),
             ca = t.column("aggregate"), cn = t.column("attempts");
  std::map<ModelKey, ModelRow> out;
  for (const auto& row : t.rows) {
    const std::string where = file.string() + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw ValidationError(where + ": wrong field count");
    ModelRow r;
    r.point_id = row.fields[cp];
    try {
      r.prompt = prompt::model_from_key(row.fields[cm]);
      r.scores = row.fields[cs];
      prompt::parse_response(r.scores, r.prompt.criteria_count());
    } catch (const Error& e) {
      throw ValidationError(where + ": " + e.what());
    }
    r.aggregate = parse_number(row.fields[ca], where);
    r.attempts = int(parse_number(row.fields[cn], where));
    if (!out.emplace(ModelKey{r.point_id, r.prompt}, r).second) {
      throw ValidationError(where + ": duplicate rating for (" + r.point_id + ", " + r.prompt.key() + ")");
    }
  }
  return out;
}

std::string model_ratings_csv(const std::map<ModelKey, ModelRow>& rows) {
  std::string out = "point_id,prompt,tier,persona,scores,aggregate,attempts\n";
  for (const auto& [_, r] : rows) {
    const std::string fields[] = {r.point_id,
                                  r.prompt.key(),
                                  std::to_string(int(r.prompt.tier)),
                                  prompt::to_string(r.prompt.persona),
                                  r.scores,
                                  io::fmt(r.aggregate, 15),
                                  std::to_string(r.attempts)};
    out += io::csv_line(fields);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surfaces shared by adjust and analyze

const char* kLocalLabel = "local_residents";
const char* kNonLocalLabel = "non_residents";

struct Surfaces {
  std::vector<geo::SamplePoint> points;
  adjust::LocationMap locations;
  std::vector<adjust::ScoreSurface> participants;  // local_residents, non_residents
  std::vector<adjust::ScoreSurface> models;        // all_models() order
  std::vector<adjust::CenteredScore> human_centered;
  std::map<std::string, std::set<std::string>> members;  // participant label -> rater ids
  std::map<std::string, std::vector<std::string>> excluded;
  std::string points_sha, model_sha, human_sha;
};

Surfaces build_surfaces(const PipelineConfig& c, std::ostream& log) {
  const Layout L{c.paths.output};
  require_output(L.points_csv(), "sample");
  require_output(L.model_ratings(), "rate");
  require_output(L.human_ratings(), "panel-ingest");
  require_output(L.rate_manifest(), "rate");
  require_output(L.panel_manifest(), "panel-ingest");

  Surfaces s;
  s.points_sha = io::sha256_file(L.points_csv());
  if (manifest_points_hash(L.rate_manifest()) != s.points_sha) {
    throw ValidationError(L.model_ratings().string() + " was produced for a different sample set than " +
                          L.points_csv().string());
  }
  if (manifest_points_hash(L.panel_manifest()) != s.points_sha) {
    throw ValidationError(L.human_ratings().string() + " was produced for a different sample set than " +
                          L.points_csv().string());
  }
  s.model_sha = io::sha256_file(L.model_ratings());
  s.human_sha = io::sha256_file(L.human_ratings());
  s.points = io::read_points_csv(L.points_csv());
  for (const auto& p : s.points) s.locations[p.id] = p.position();

  const auto model_rows = read_model_ratings(L.model_ratings());
  if (model_rows.empty()) throw ValidationError(L.model_ratings().string() + ": no ratings");
  std::vector<adjust::ModelScore> model_scores;
  for (const auto& [_, r] : model_rows) model_scores.push_back({r.point_id, r.prompt, r.aggregate});
  const auto model_centered = adjust::center_model(model_scores);
  for (const auto& m : prompt::all_models()) {
    std::vector<std::string> excluded;
    s.models.push_back(adjust::per_group_mean(model_centered, {m.key()}, m.key(), s.locations, &excluded));
    if (s.models.back().size() == 0) throw ValidationError(L.model_ratings().string() + ": no ratings for " + m.key());
    s.excluded[m.key()] = std::move(excluded);
  }

  panel::IngestOptions opts;
  opts.strict = true;
  const auto human = panel::ingest_ratings(L.human_ratings(), opts).records;
  if (human.empty()) throw ValidationError(L.human_ratings().string() + ": no ratings");
  require_file(c.paths.raters, "raters file");
  for (const auto& r : panel::read_raters(c.paths.raters)) {
    s.members[r.group == panel::RaterGroup::local_resident ? kLocalLabel : kNonLocalLabel].insert(r.id);
  }
  s.human_centered = adjust::center_raters(human);
  for (const char* label : {kLocalLabel, kNonLocalLabel}) {
    std::vector<std::string> excluded;
    s.participants.push_back(adjust::per_group_mean(s.human_centered, s.members[label], label, s.locations, &excluded));
    if (s.participants.back().size() == 0) throw ValidationError("no ratings from group " + std::string(label));
    if (!excluded.empty()) log << label << ": " << excluded.size() << " images without ratings excluded\n";
    s.excluded[label] = std::move(excluded);
  }
  return s;
}

// Participant surface matching a model's persona.
const adjust::ScoreSurface& matching_participant(const Surfaces& s, const prompt::PromptModel& m) {
  return s.participants[m.persona == prompt::Persona::LR ? 0 : 1];
}

template <typename Fn>
auto named(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const Error& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

ojson surface_json(const adjust::ScoreSurface& s) {
  ojson lon = ojson::array(), lat = ojson::array(), val = ojson::array();
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    lon.push_back(s.locations[i].lon);
    lat.push_back(s.locations[i].lat);
    val.push_back(s.values[Eigen::Index(i)]);
  }
  return ojson{{"label", s.label}, {"ids", s.ids}, {"lon", lon}, {"lat", lat}, {"values", val}};
}

ojson stat_json(const stats::StatResult& r) {
  return ojson{{"method", r.method}, {"statistic", r.statistic}, {"p_value", r.p_value}, {"n", r.n}};
}

ojson global_json(const std::string& label, const spatial::GlobalStat& g) {
  return ojson{{"label", label},           {"I", g.I},   {"z", g.z}, {"pseudo_p", g.pseudo_p},
               {"permutations", g.permutations}, {"n", g.n}};
}

ojson labels_json(const std::vector<spatial::SiteLabel>& labels, const adjust::ScoreSurface& s) {
  ojson out = ojson::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back({{"point_id", labels[i].point_id},
                   {"lon", s.locations[i].lon},
                   {"lat", s.locations[i].lat},
                   {"statistic", labels[i].statistic},
                   {"p_value", labels[i].p_value},
                   {"label", labels[i].label}});
  }
  return out;
}

// Weights are reused across surfaces on the same domain.
class WeightsCache {
 public:
  WeightsCache(const StatsConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log) {}

  const spatial::SpatialWeights& get(const adjust::ScoreSurface& s) {
    auto it = cache_.find(s.ids);
    if (it == cache_.end()) {
      std::vector<std::string> warnings;
      auto w = spatial::build_weights(s, cfg_.weights, true, false, &warnings);
      for (const auto& msg : warnings) log_ << "warning: " << msg << "\n";
      it = cache_.emplace(s.ids, std::move(w)).first;
    }
    return it->second;
  }

 private:
  const StatsConfig& cfg_;
  std::ostream& log_;
  std::map<std::vector<std::string>, spatial::SpatialWeights> cache_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (!(sampling.interval_m > 0.0)) throw ConfigError("sampling.interval_m must be > 0");
  if (sampling.random_n < 1) throw ConfigError("sampling.random_n must be >= 1");
  if (!(sampling.landmark_radius_m >= 0.0)) throw ConfigError("sampling.landmark_radius_m must be >= 0");
  if (!(sampling.dedup_epsilon_m >= 0.0)) throw ConfigError("sampling.dedup_epsilon_m must be >= 0");
  if (imagery.source != "local" && imagery.source != "remote") {
    throw ConfigError("imagery.source must be local or remote");
  }
  backend.validate();
  if (panel.coverage < 1) throw ConfigError("panel.coverage must be >= 1");
  if (panel.per_rater_min < 0) throw ConfigError("panel.per_rater_min must be >= 0");
  if (stats.weights.kind == spatial::WeightScheme::Kind::knn && stats.weights.k < 1) {
    throw ConfigError("stats.k must be >= 1");
  }
  if (stats.weights.kind == spatial::WeightScheme::Kind::distance_band && !(stats.weights.band_m > 0.0)) {
    throw ConfigError("stats.band_m must be > 0");
  }
  if (stats.permutations < 0 || stats.permutations > 1'000'000) {
    throw ConfigError("stats.permutations must be in [0, 1000000]");
  }
  if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) throw ConfigError("stats.alpha must be in (0, 1)");
  if (!(stats.normality_w_threshold > 0.0 && stats.normality_w_threshold <= 1.0)) {
    throw ConfigError("stats.normality_w_threshold must be in (0, 1]");
  }
  if (stats.gstar_permutations < 0) throw ConfigError("stats.gstar_permutations must be >= 0");
}

PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section top(root, "config");
  top.get("seed", c.seed);
  top.get("strict", c.strict);
  if (auto s = top.section("paths")) {
    s->get_path("network", c.paths.network, base_dir);
    s->get_path("landmarks", c.paths.landmarks, base_dir);
    s->get_path("tiles", c.paths.tiles, base_dir);
    s->get_path("raters", c.paths.raters, base_dir);
    s->get_path("ratings", c.paths.ratings, base_dir);
    s->get_path("output", c.paths.output, base_dir);
    s->finish();
  } else if (!base_dir.empty()) {
    c.paths.output = base_dir / c.paths.output;
  }
  if (auto s = top.section("sampling")) {
    long long n = static_cast<long long>(c.sampling.random_n);
    s->get("interval_m", c.sampling.interval_m);
    s->get("random_n", n);
    s->get("landmark_radius_m", c.sampling.landmark_radius_m);
    s->get("dedup_epsilon_m", c.sampling.dedup_epsilon_m);
    s->get("augment", c.sampling.augment);
    if (n < 1) throw ConfigError("sampling.random_n must be >= 1");
    c.sampling.random_n = std::size_t(n);
    s->finish();
  }
  if (auto s = top.section("imagery")) {
    s->get("source", c.imagery.source);
    s->get("endpoint", c.imagery.endpoint);
    s->get("api_key_env", c.imagery.api_key_env);
    s->fixed("headings", imagery::kHeadings);
    s->fixed("fov", imagery::kFieldOfView);
    s->fixed("pitch", imagery::kPitch);
    s->fixed("tile_width", imagery::kTileSize);
    s->fixed("tile_height", imagery::kTileSize);
    s->finish();
  }
  if (auto s = top.section("prompts")) {
    json counts = json::object();
    for (const auto& m : prompt::all_models()) counts[m.key()] = m.criteria_count();
    s->fixed("template_version", std::string(prompt::kTemplateVersion));
    s->fixed("criteria_counts", counts);
    s->finish();
  }
  bool backend_seed_set = false;
  if (auto s = top.section("backend")) {
    std::string kind = backend::to_string(c.backend.kind);
    s->get("kind", kind);
    c.backend.kind = backend::kind_from_string(kind);
    s->get("endpoint", c.backend.endpoint);
    s->get("model", c.backend.model);
    s->get("api_key_env", c.backend.api_key_env);
    s->get("max_in_flight", c.backend.max_in_flight);
    s->get("requests_per_minute", c.backend.requests_per_minute);
    s->get("max_retries", c.backend.max_retries);
    backend_seed_set = s->has("seed");
    s->get("seed", c.backend.seed);
    double temperature = 0.0;
    if (s->present("temperature")) {
      s->get("temperature", temperature);
      c.backend.temperature = temperature;
    }
    s->get("max_tokens", c.backend.max_tokens);
    s->get("image_detail", c.backend.image_detail);
    s->get("timeout_s", c.backend.timeout_s);
    s->get("backoff_base_s", c.backend.backoff_base_s);
    s->get("backoff_factor", c.backend.backoff_factor);
    s->finish();
  }
  if (!backend_seed_set) c.backend.seed = c.seed;
  if (auto s = top.section("panel")) {
    s->get("coverage", c.panel.coverage);
    s->get("per_rater_min", c.panel.per_rater_min);
    s->finish();
  }
  if (auto s = top.section("stats")) {
    std::string scheme = "knn", tv = stats::to_string(c.stats.t_variant), wm = to_string(c.stats.wilcoxon);
    s->get("weights", scheme);
    s->get("k", c.stats.weights.k);
    s->get("band_m", c.stats.weights.band_m);
    if (scheme == "knn") {
      c.stats.weights.kind = spatial::WeightScheme::Kind::knn;
    } else if (scheme == "distance_band") {
      c.stats.weights.kind = spatial::WeightScheme::Kind::distance_band;
    } else {
      throw ConfigError("stats.weights must be knn or distance_band");
    }
    s->get("permutations", c.stats.permutations);
    s->get("alpha", c.stats.alpha);
    s->get("t_variant", tv);
    s->get("wilcoxon_mode", wm);
    s->get("normality_w_threshold", c.stats.normality_w_threshold);
    s->get("gstar_permutations", c.stats.gstar_permutations);
    c.stats.t_variant = t_variant(tv);
    c.stats.wilcoxon = wilcoxon_choice(wm);
    s->finish();
  }
  top.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& file) {
  if (!fs::exists(file)) throw ConfigError("config file not found: " + file.string());
  return parse_config(io::read_text(file), file.parent_path());
}

std::string config_json(const PipelineConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["strict"] = c.strict;
  j["paths"] = {{"network", c.paths.network.string()}, {"landmarks", c.paths.landmarks.string()},
                {"tiles", c.paths.tiles.string()},     {"raters", c.paths.raters.string()},
                {"ratings", c.paths.ratings.string()}, {"output", c.paths.output.string()}};
  j["sampling"] = {{"interval_m", c.sampling.interval_m},
                   {"random_n", c.sampling.random_n},
                   {"landmark_radius_m", c.sampling.landmark_radius_m},
                   {"dedup_epsilon_m", c.sampling.dedup_epsilon_m},
                   {"augment", c.sampling.augment}};
  j["imagery"] = {{"source", c.imagery.source},
                  {"endpoint", c.imagery.endpoint},
                  {"api_key_env", c.imagery.api_key_env},
                  {"headings", imagery::kHeadings},
                  {"fov", imagery::kFieldOfView},
                  {"pitch", imagery::kPitch},
                  {"tile_width", imagery::kTileSize},
                  {"tile_height", imagery::kTileSize}};
  ojson counts = ojson::object();
  for (const auto& m : prompt::all_models()) counts[m.key()] = m.criteria_count();
  j["prompts"] = {{"template_version", prompt::kTemplateVersion}, {"criteria_counts", counts}};
  j["backend"] = {{"kind", backend::to_string(c.backend.kind)},
                  {"endpoint", c.backend.endpoint},
                  {"model", c.backend.model},
                  {"api_key_env", c.backend.api_key_env},
                  {"max_in_flight", c.backend.max_in_flight},
                  {"requests_per_minute", c.backend.requests_per_minute},
                  {"max_retries", c.backend.max_retries},
                  {"seed", c.backend.seed},
                  {"temperature", c.backend.temperature ? ojson(*c.backend.temperature) : ojson(nullptr)},
                  {"max_tokens", c.backend.max_tokens},
                  {"image_detail", c.backend.image_detail},
                  {"timeout_s", c.backend.timeout_s},
                  {"backoff_base_s", c.backend.backoff_base_s},
                  {"backoff_factor", c.backend.backoff_factor}};
  j["panel"] = {{"coverage", c.panel.coverage}, {"per_rater_min", c.panel.per_rater_min}};
  j["stats"] = {{"weights", c.stats.weights.kind == spatial::WeightScheme::Kind::knn ? "knn" : "distance_band"},
                {"k", c.stats.weights.k},
                {"band_m", c.stats.weights.band_m},
                {"permutations", c.stats.permutations},
                {"alpha", c.stats.alpha},
                {"t_variant", stats::to_string(c.stats.t_variant)},
                {"wilcoxon_mode", to_string(c.stats.wilcoxon)},
                {"normality_w_threshold", c.stats.normality_w_threshold},
                {"gstar_permutations", c.stats.gstar_permutations}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// sample

void cmd_sample(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  require_file(c.paths.network, "network file");
  const auto net = io::read_network_geojson(c.paths.network);
  const auto all = geo::sample_along_network(net, c.sampling.interval_m);
  if (all.size() < c.sampling.random_n) {
    log << "warning: network yields " << all.size() << " points, fewer than random_n = " << c.sampling.random_n
        << "; keeping all\n";
  }
  const auto random = geo::random_subsample(all, std::min(all.size(), c.sampling.random_n), c.seed);

  std::vector<geo::SamplePoint> augmented;
  ojson inputs = {{"network", io::sha256_file(c.paths.network)}};
  if (c.sampling.augment && !c.paths.landmarks.empty()) {
    require_file(c.paths.landmarks, "landmarks file");
    const auto landmarks = io::read_landmarks(c.paths.landmarks);
    augmented = geo::augment_near_landmarks(all, landmarks, c.sampling.landmark_radius_m);
    inputs["landmarks"] = io::sha256_file(c.paths.landmarks);
  } else {
    log << "landmark augmentation skipped\n";
  }
  const auto final_points = geo::merge_samples(random, augmented, c.sampling.dedup_epsilon_m);

  const std::string csv = io::points_csv(final_points);
  io::write_text(L.points_csv(), csv);
  io::write_text(L.points_geojson(), io::points_geojson(final_points));

  ojson m = manifest_header("sample", c);
  m["inputs"] = inputs;
  m["parameters"] = {{"interval_m", c.sampling.interval_m},
                     {"random_n", c.sampling.random_n},
                     {"landmark_radius_m", c.sampling.landmark_radius_m},
                     {"dedup_epsilon_m", c.sampling.dedup_epsilon_m},
                     {"augment", c.sampling.augment}};
  m["counts"] = {{"interval_points", all.size()},
                 {"random_sample", random.size()},
                 {"landmark_candidates", augmented.size()},
                 {"before_dedup", random.size() + augmented.size()},
                 {"removed_by_dedup", random.size() + augmented.size() - final_points.size()},
                 {"final", final_points.size()}};
  m["points_sha256"] = io::sha256_hex(csv);
  write_json(L.sample_manifest(), m);
  log << "sample: " << final_points.size() << " points (" << random.size() << " random, " << augmented.size()
      << " near landmarks) -> " << L.points_csv().string() << "\n";
}

// ---------------------------------------------------------------------------
// fetch

void cmd_fetch(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  require_output(L.points_csv(), "sample");
  const auto points = io::read_points_csv(L.points_csv());

  std::unique_ptr<imagery::TileSource> source;
  if (c.imagery.source == "local") {
    require_file(c.paths.tiles, "tiles directory");
    source = std::make_unique<imagery::LocalTileSource>(c.paths.tiles);
  } else {
    const char* key = std::getenv(c.imagery.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw AuthError("environment variable " + c.imagery.api_key_env + " is not set");
    source = std::make_unique<imagery::RemoteTileSource>(c.imagery.endpoint, key, points);
  }

  fs::create_directories(L.panoramas());
  std::string lum = "point_id,L\n";
  std::size_t fetched = 0, reused = 0;
  ojson failures = ojson::array();
  for (const auto& p : points) {
    imagery::Panorama pan;
    const auto file = L.panorama(p.id);
    try {
      if (fs::exists(file)) {
        pan = {p.id, imagery::read_image(file)};
        ++reused;
      } else {
        pan = imagery::fetch_panorama(*source, p);
        imagery::write_png(file, pan.image);
        ++fetched;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const AuthError&) {
      throw;
    } catch (const Error& e) {
      if (c.strict) throw ValidationError(p.id + ": " + e.what());
      log << "warning: " << p.id << ": " << e.what() << "\n";
      failures.push_back({{"point_id", p.id}, {"error", e.what()}});
      continue;
    }
    const std::string fields[] = {p.id, io::fmt(imagery::mean_luminosity(pan).luminosity, 15)};
    lum += io::csv_line(fields);
  }
  io::write_text(L.luminosity_csv(), lum);

  ojson m = manifest_header("fetch", c);
  m["points_sha256"] = io::sha256_file(L.points_csv());
  m["source"] = c.imagery.source;
  m["counts"] = {{"points", points.size()}, {"fetched", fetched}, {"reused", reused}, {"failed", failures.size()}};
  m["failures"] = failures;
  write_json(L.fetch_manifest(), m);
  log << "fetch: " << fetched << " fetched, " << reused << " reused, " << failures.size() << " failed\n";
}

// ---------------------------------------------------------------------------
// rate

void cmd_rate(const PipelineConfig& c, std::ostream& log, backend::Clock* clock) {
  c.validate();
  const Layout L{c.paths.output};
  require_output(L.points_csv(), "sample");
  const auto points = io::read_points_csv(L.points_csv());
  const std::string points_sha = io::sha256_file(L.points_csv());

  std::map<ModelKey, ModelRow> rows;
  if (fs::exists(L.model_ratings())) {
    if (!fs::exists(L.rate_manifest()) || manifest_points_hash(L.rate_manifest()) != points_sha) {
      throw ValidationError(L.model_ratings().string() +
                            " belongs to a different sample set; move it away to rate from scratch");
    }
    rows = read_model_ratings(L.model_ratings());
  }
  const std::size_t reused = rows.size();

  std::vector<std::pair<std::string, prompt::PromptModel>> work;
  std::size_t missing_panoramas = 0;
  for (const auto& p : points) {
    if (!fs::exists(L.panorama(p.id))) {
      if (c.strict) throw ValidationError("panorama missing: " + L.panorama(p.id).string());
      ++missing_panoramas;
      continue;
    }
    for (const auto& m : prompt::all_models()) {
      if (!rows.contains({p.id, m})) work.emplace_back(p.id, m);
    }
  }

  std::size_t failed = 0;
  std::optional<backend::BatchItem> first_failure;
  if (!work.empty()) {
    // A mock backend never leaves the process, so pacing it is pointless.
    backend::SteadyClock steady;
    backend::ManualClock virtual_time;
    backend::Clock& clk = clock != nullptr ? *clock
                          : c.backend.kind == backend::Kind::mock ? static_cast<backend::Clock&>(virtual_time)
                                                                  : steady;
    auto be = backend::make_backend(c.backend, clk);
    auto loader = [&](const std::string& id) { return imagery::Panorama{id, imagery::read_image(L.panorama(id))}; };
    const auto items = backend::batch_rate(*be, work, loader, c.backend, clk);

    std::ofstream audit(L.rating_audit(), std::ios::app | std::ios::binary);
    if (!audit) throw ConfigError("cannot open " + L.rating_audit().string());
    for (const auto& item : items) {
      ojson a = {{"point_id", item.point_id},
                 {"prompt", item.prompt.key()},
                 {"template_version", prompt::kTemplateVersion},
                 {"backend", backend::to_string(c.backend.kind)},
                 {"model", c.backend.kind == backend::Kind::mock ? "mock" : c.backend.model},
                 {"temperature", c.backend.temperature ? ojson(*c.backend.temperature) : ojson(nullptr)},
                 {"max_tokens", c.backend.max_tokens},
                 {"attempts", item.attempts},
                 {"ok", item.ok()},
                 {"raw_text", item.last_raw_text}};
      if (!item.ok()) a["error"] = item.error;
      audit << a.dump() << "\n";
      if (item.ok()) {
        const auto& r = *item.rating;
        rows[{r.point_id, r.prompt}] = {r.point_id, r.prompt, prompt::format_vector(r.vector), r.aggregate,
                                        r.attempt_count};
      } else {
        ++failed;
        if (!first_failure) first_failure = item;
        log << "warning: " << item.point_id << " " << item.prompt.key() << ": " << item.error << "\n";
      }
    }
  }

  const std::string csv = model_ratings_csv(rows);
  io::write_text(L.model_ratings(), csv);
  ojson m = manifest_header("rate", c);
  m["points_sha256"] = points_sha;
  m["backend"] = {{"kind", backend::to_string(c.backend.kind)},
                  {"model", c.backend.model},
                  {"template_version", prompt::kTemplateVersion}};
  m["counts"] = {{"rows", rows.size()},
                 {"reused", reused},
                 {"requested", work.size()},
                 {"failed", failed},
                 {"missing_panoramas", missing_panoramas}};
  m["model_ratings_sha256"] = io::sha256_hex(csv);
  write_json(L.rate_manifest(), m);
  log << "rate: " << rows.size() << " rows (" << work.size() - failed << " new, " << reused << " reused, " << failed
      << " failed)\n";
  if (failed > 0 && c.strict) {
    throw BackendExhausted(std::to_string(failed) + " ratings failed permanently; first: " + first_failure->point_id +
                               " " + first_failure->prompt.key() + ": " + first_failure->error,
                           first_failure->last_raw_text, first_failure->attempts);
  }
}

// ---------------------------------------------------------------------------
// panel

void cmd_panel_assign(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  require_output(L.points_csv(), "sample");
  require_file(c.paths.raters, "raters file");
  const auto images = ids_of(io::read_points_csv(L.points_csv()));
  const auto raters = panel::read_raters(c.paths.raters);
  const auto assignment = panel::assign_batches(images, raters, c.panel.coverage, c.panel.per_rater_min, c.seed);

  std::string csv = "rater_id,point_id,sequence_index\n";
  std::size_t total = 0;
  for (const auto& [rater, ids] : assignment) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::string fields[] = {rater, ids[i], std::to_string(i)};
      csv += io::csv_line(fields);
    }
    total += ids.size();
  }
  io::write_text(L.assignment_csv(), csv);
  ojson m = manifest_header("panel-assign", c);
  m["points_sha256"] = io::sha256_file(L.points_csv());
  m["raters_sha256"] = io::sha256_file(c.paths.raters);
  m["parameters"] = {{"coverage", c.panel.coverage}, {"per_rater_min", c.panel.per_rater_min}};
  m["counts"] = {{"images", images.size()}, {"raters", raters.size()}, {"assignments", total}};
  write_json(L.assign_manifest(), m);
  log << "panel-assign: " << total << " assignments for " << raters.size() << " raters\n";
}

void cmd_panel_ingest(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  require_output(L.points_csv(), "sample");
  require_file(c.paths.ratings, "ratings file");
  require_file(c.paths.raters, "raters file");
  const auto raters = panel::read_raters(c.paths.raters);

  panel::IngestOptions opts;
  opts.strict = c.strict;
  for (const auto& id : ids_of(io::read_points_csv(L.points_csv()))) opts.known_points.insert(id);
  for (const auto& r : raters) opts.known_raters.insert(r.id);
  auto result = panel::ingest_ratings(c.paths.ratings, opts);
  if (result.records.empty()) throw ValidationError(c.paths.ratings.string() + ": no ratings");
  std::sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.rater_id, a.point_id) < std::tie(b.rater_id, b.point_id);
  });

  std::string csv = "rater_id,point_id,score\n";
  for (const auto& r : result.records) {
    const std::string fields[] = {r.rater_id, r.point_id, std::to_string(r.score)};
    csv += io::csv_line(fields);
  }
  io::write_text(L.human_ratings(), csv);

  const auto s = panel::panel_summary(result.records);
  std::map<std::string, std::size_t> per_group;
  for (const auto& r : raters) {
    const auto it = s.per_rater.find(r.id);
    per_group[panel::to_string(r.group)] += it == s.per_rater.end() ? 0 : it->second;
  }
  std::size_t below_coverage = 0;
  for (const auto& [_, n] : s.per_image) below_coverage += n < std::size_t(c.panel.coverage) ? 1 : 0;
  ojson summary = {{"total", s.total},
                   {"raters", s.per_rater.size()},
                   {"images", s.per_image.size()},
                   {"min_per_image", s.min_per_image},
                   {"mean_per_image", s.mean_per_image},
                   {"mean_per_rater", s.mean_per_rater},
                   {"images_below_coverage", below_coverage},
                   {"per_group", per_group},
                   {"per_rater", s.per_rater}};
  write_json(L.panel_summary(), summary);

  ojson skipped = ojson::array();
  for (const auto& issue : result.skipped) {
    skipped.push_back({{"line", issue.line}, {"kind", panel::to_string(issue.kind)}, {"message", issue.message}});
    log << "warning: line " << issue.line << ": " << panel::to_string(issue.kind) << ": " << issue.message << "\n";
  }
  ojson m = manifest_header("panel-ingest", c);
  m["points_sha256"] = io::sha256_file(L.points_csv());
  m["ratings_sha256"] = io::sha256_file(c.paths.ratings);
  m["raters_sha256"] = io::sha256_file(c.paths.raters);
  m["human_ratings_sha256"] = io::sha256_hex(csv);
  m["counts"] = {{"accepted", result.records.size()}, {"skipped", result.skipped.size()}};
  m["skipped"] = skipped;
  write_json(L.panel_manifest(), m);
  if (below_coverage > 0) {
    log << "warning: " << below_coverage << " images have fewer than " << c.panel.coverage << " ratings\n";
  }
  log << "panel-ingest: " << result.records.size() << " ratings accepted, " << result.skipped.size() << " skipped\n";
}

// ---------------------------------------------------------------------------
// adjust

void cmd_adjust(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  const Surfaces s = build_surfaces(c, log);
  ojson excluded = ojson::object();
  auto emit = [&](const adjust::ScoreSurface& surface) {
    io::write_text(L.surfaces() / (surface.label + ".csv"), adjust::surface_csv(surface));
    io::write_text(L.surfaces() / (surface.label + ".geojson"), adjust::surface_geojson(surface));
    excluded[surface.label] = s.excluded.at(surface.label);
  };
  for (const auto& p : s.participants) emit(p);
  for (const auto& m : s.models) emit(m);
  write_json(L.surfaces() / "exclusions.json", excluded);
  log << "adjust: " << s.participants.size() + s.models.size() << " surfaces -> " << L.surfaces().string() << "\n";
}

// ---------------------------------------------------------------------------
// analyze

void cmd_analyze(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  const Layout L{c.paths.output};
  const Surfaces s = build_surfaces(c, log);
  const StatsConfig& sc = c.stats;

  std::vector<const adjust::ScoreSurface*> all;
  for (const auto& p : s.participants) all.push_back(&p);
  for (const auto& m : s.models) all.push_back(&m);

  ojson results;
  results["config"] = ojson::parse(config_json(c)).at("stats");
  results["seed"] = c.seed;
  results["inputs"] = {{"points_sha256", s.points_sha},
                       {"model_ratings_sha256", s.model_sha},
                       {"human_ratings_sha256", s.human_sha}};

  ojson surfaces = ojson::array();
  ojson summary = ojson::array();
  ojson normality = ojson::array();
  std::map<std::string, bool> non_normal;
  for (const auto* sf : all) {
    ojson sj = surface_json(*sf);
    sj["excluded"] = s.excluded.at(sf->label);
    surfaces.push_back(sj);
    const auto st = named(sf->label + " summary", [&] { return stats::summary_stats(sf->values); });
    summary.push_back({{"label", sf->label}, {"n", st.n},     {"mean", st.mean}, {"std", st.std}, {"min", st.min},
                       {"q25", st.q25},      {"q50", st.q50}, {"q75", st.q75},   {"max", st.max}});
    const auto sw = named(sf->label + " normality", [&] { return stats::shapiro_wilk(sf->values); });
    non_normal[sf->label] = sw.statistic < sc.normality_w_threshold;
    ojson nj = stat_json(sw);
    nj["label"] = sf->label;
    nj["non_normal"] = non_normal[sf->label];
    normality.push_back(nj);
  }
  results["surfaces"] = surfaces;
  results["summary"] = summary;
  results["normality"] = normality;

  // Model vs participant distributions, by image-aligned surfaces and pooled ratings.
  ojson tests = ojson::array();
  for (const auto& model : s.models) {
    const auto m = prompt::model_from_key(model.label);
    for (const auto& part : s.participants) {
      const std::string label = model.label + " vs " + part.label;
      const bool nn = non_normal.at(model.label) || non_normal.at(part.label);
      const auto al = adjust::align(model, part);
      const auto surface_result = named(label + " (surface)", [&] {
        if (!nn) return stats::t_test_two_sample(al.a, al.b, sc.t_variant);
        const auto mode = sc.wilcoxon == WilcoxonChoice::rank_sum ? stats::WilcoxonMode::rank_sum
                                                                  : stats::WilcoxonMode::signed_rank;
        return stats::wilcoxon(al.a, al.b, mode);
      });
      std::vector<double> pooled;
      for (const auto& r : s.human_centered) {
        if (s.members.at(part.label).contains(r.rater_id)) pooled.push_back(r.adjusted);
      }
      const Eigen::Map<const Eigen::VectorXd> pv(pooled.data(), Eigen::Index(pooled.size()));
      const auto pooled_result = named(label + " (pooled)", [&] {
        if (!nn) return stats::t_test_two_sample(model.values, pv, sc.t_variant);
        return stats::wilcoxon(model.values, pv, stats::WilcoxonMode::rank_sum);
      });
      for (const auto& [pathway, r] : {std::pair{"surface", surface_result}, std::pair{"pooled", pooled_result}}) {
        ojson tj = stat_json(r);
        tj["comparison"] = label;
        tj["model"] = model.label;
        tj["participant"] = part.label;
        tj["matched"] = &part == &matching_participant(s, m);
        tj["pathway"] = pathway;
        tj["non_normal"] = nn;
        tests.push_back(tj);
      }
    }
  }
  results["distribution_tests"] = tests;

  ojson pearson = ojson::array();
  double best_r = -2.0;
  std::string best_label;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const std::string label = all[i]->label + " vs " + all[j]->label;
      const auto al = adjust::align(*all[i], *all[j]);
      const auto r = named(label + " (pearson)", [&] { return stats::pearson(al.a, al.b); });
      ojson pj = stat_json(r);
      pj["x"] = all[i]->label;
      pj["y"] = all[j]->label;
      pearson.push_back(pj);
      const bool model_vs_participant = i < s.participants.size() && j >= s.participants.size();
      if (model_vs_participant && r.statistic > best_r) {
        best_r = r.statistic;
        best_label = all[j]->label + " vs " + all[i]->label;
      }
    }
  }
  results["pearson"] = pearson;
  results["headline"] = {{"max_model_participant_r", best_r}, {"comparison", best_label}};

  WeightsCache weights(sc, log);
  ojson moran_ratings = ojson::array();
  for (const auto* sf : all) {
    const auto g = named(sf->label + " (Moran's I)",
                         [&] { return spatial::morans_i(*sf, weights.get(*sf), sc.permutations, c.seed); });
    moran_ratings.push_back(global_json(sf->label, g));
  }
  results["moran_ratings"] = moran_ratings;

  ojson moran_diffs = ojson::array();
  ojson gstar = ojson::object();
  ojson lisa = ojson::object();
  ojson diff_surfaces = ojson::array();
  spatial::GstarOptions gopt{sc.alpha, sc.gstar_permutations, c.seed};
  for (const auto& model : s.models) {
    const auto& part = matching_participant(s, prompt::model_from_key(model.label));
    const std::string label = model.label + "-" + part.label;
    const auto analysis = named(label + " (difference surface)", [&] {
      const auto diff = adjust::difference_surface(model, part);
      const auto& w = weights.get(diff.surface);
      const auto w_star = spatial::self_inclusive_binary(w);
      return std::pair{diff, spatial::analyze_differences(diff, w, w_star, sc.permutations, c.seed, sc.alpha, gopt)};
    });
    const auto& [diff, a] = analysis;
    ojson gj = global_json(label, a.global);
    gj["model"] = model.label;
    gj["participant"] = part.label;
    moran_diffs.push_back(gj);
    gstar[label] = labels_json(a.gstar, diff.surface);
    lisa[label] = labels_json(a.local, diff.surface);
    diff_surfaces.push_back(surface_json(diff.surface));
  }
  results["moran_differences"] = moran_diffs;
  results["gstar"] = gstar;
  results["local_moran"] = lisa;
  results["difference_surfaces"] = diff_surfaces;

  if (fs::exists(L.luminosity_csv())) {
    const io::CsvTable t = io::read_csv(L.luminosity_csv());
    const auto ci = t.column("point_id"), cl = t.column("L");
    adjust::ScoreSurface lum;
    lum.label = "luminosity";
    std::map<std::string, double> by_id;
    for (const auto& row : t.rows) {
      by_id[row.fields.at(ci)] = parse_number(row.fields.at(cl), L.luminosity_csv().string());
    }
    lum.values.resize(Eigen::Index(by_id.size()));
    for (const auto& [id, v] : by_id) {
      lum.values[Eigen::Index(lum.ids.size())] = v;
      lum.ids.push_back(id);
      lum.locations.push_back(s.locations.count(id) ? s.locations.at(id) : geo::LonLat{});
    }
    ojson lj = ojson::array();
    for (const auto* sf : all) {
      const auto al = adjust::align(*sf, lum);
      const auto r = named(sf->label + " vs luminosity", [&] { return stats::pearson(al.a, al.b); });
      ojson rj = stat_json(r);
      rj["label"] = sf->label;
      lj.push_back(rj);
    }
    results["luminosity"] = lj;
  } else {
    log << "warning: " << L.luminosity_csv().string() << " missing; luminosity correlation skipped\n";
    results["luminosity"] = nullptr;
  }

  write_json(L.results(), results);
  log << "analyze: results -> " << L.results().string() << "\n";
}

// ---------------------------------------------------------------------------
// report

namespace {

std::string num(const json& v) {
  if (v.is_null()) return "nan";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  return io::fmt(v.get<double>(), 10);
}

std::string join_n(const json& n) {
  std::string out;
  for (const auto& v : n) out += (out.empty() ? "" : ";") + v.dump();
  return out;
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = io::csv_line(header);
  for (const auto& r : rows) out += io::csv_line(r);
  return out;
}

void label_layer(const fs::path& dir, const std::string& name, const json& labels) {
  std::vector<spatial::SiteLabel> site;
  std::vector<geo::LonLat> where;
  for (const auto& l : labels) {
    site.push_back({l.at("point_id").get<std::string>(), l.at("statistic").get<double>(),
                    l.at("p_value").get<double>(), l.at("label").get<std::string>()});
    where.push_back({l.at("lon").get<double>(), l.at("lat").get<double>()});
  }
  io::write_text(dir / (name + ".csv"), spatial::labels_csv(site, where));
  io::write_text(dir / (name + ".geojson"), spatial::labels_geojson(site, where, name));
}

}  // namespace

void cmd_report(const PipelineConfig& c, std::ostream& log) {
  const Layout L{c.paths.output};
  require_output(L.results(), "analyze");
  const json r = read_json(L.results());
  const fs::path dir = L.report();
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir / "maps");

  std::vector<std::vector<std::string>> rows;
  for (const auto& s : r.at("summary")) {
    rows.push_back({s.at("label").get<std::string>(), num(s.at("n")), num(s.at("mean")), num(s.at("std")),
                    num(s.at("min")), num(s.at("q25")), num(s.at("q50")), num(s.at("q75")), num(s.at("max"))});
  }
  io::write_text(dir / "summary.csv", table({"label", "n", "mean", "std", "min", "q25", "q50", "q75", "max"}, rows));

  rows.clear();
  for (const auto& t : r.at("distribution_tests")) {
    rows.push_back({t.at("comparison").get<std::string>(), t.at("pathway").get<std::string>(),
                    t.at("method").get<std::string>(), num(t.at("statistic")), num(t.at("p_value")),
                    join_n(t.at("n")), t.at("matched").get<bool>() ? "yes" : "no"});
  }
  io::write_text(dir / "distribution_tests.csv",
                 table({"comparison_label", "pathway", "method", "statistic", "p_value", "n", "matched"}, rows));

  rows.clear();
  for (const auto& t : r.at("normality")) {
    rows.push_back({t.at("label").get<std::string>(), t.at("method").get<std::string>(), num(t.at("statistic")),
                    num(t.at("p_value")), join_n(t.at("n")), t.at("non_normal").get<bool>() ? "yes" : "no"});
  }
  io::write_text(dir / "normality.csv",
                 table({"comparison_label", "method", "statistic", "p_value", "n", "non_normal"}, rows));

  rows.clear();
  for (const auto& t : r.at("pearson")) {
    rows.push_back({t.at("x").get<std::string>(), t.at("y").get<std::string>(), num(t.at("statistic")),
                    num(t.at("p_value")), join_n(t.at("n"))});
  }
  io::write_text(dir / "pearson.csv", table({"x", "y", "r", "p_value", "n"}, rows));

  auto moran_table = [&](const json& arr, const fs::path& file) {
    std::vector<std::vector<std::string>> out;
    for (const auto& g : arr) {
      out.push_back({g.at("label").get<std::string>(), num(g.at("I")), num(g.at("z")), num(g.at("pseudo_p")),
                     num(g.at("permutations")), num(g.at("n"))});
    }
    io::write_text(file, table({"label", "I", "z", "pseudo_p", "permutations", "n"}, out));
  };
  moran_table(r.at("moran_ratings"), dir / "moran_ratings.csv");
  moran_table(r.at("moran_differences"), dir / "moran_differences.csv");

  rows.clear();
  if (!r.at("luminosity").is_null()) {
    for (const auto& t : r.at("luminosity")) {
      rows.push_back({t.at("label").get<std::string>(), num(t.at("statistic")), num(t.at("p_value")),
                      join_n(t.at("n"))});
    }
  }
  io::write_text(dir / "luminosity.csv", table({"label", "r", "p_value", "n"}, rows));

  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& [label, labels] : r.at("gstar").items()) {
    label_layer(dir / "maps", "gstar_" + label, labels);
    for (const auto& l : labels) ++counts["gstar_" + label][l.at("label").get<std::string>()];
  }
  for (const auto& [label, labels] : r.at("local_moran").items()) {
    label_layer(dir / "maps", "local_moran_" + label, labels);
    for (const auto& l : labels) ++counts["local_moran_" + label][l.at("label").get<std::string>()];
  }
  io::write_text(dir / "palette.json", spatial::palette_json());

  // Scatter data: every model surface against each participant surface.
  std::map<std::string, std::map<std::string, double>> values;
  for (const auto& s : r.at("surfaces")) {
    auto& m = values[s.at("label").get<std::string>()];
    for (std::size_t i = 0; i < s.at("ids").size(); ++i) {
      m[s.at("ids")[i].get<std::string>()] = s.at("values")[i].get<double>();
    }
  }
  std::string scatter = "comparison,x,y\n";
  for (const auto& part : {kLocalLabel, kNonLocalLabel}) {
    for (const auto& m : prompt::all_models()) {
      const auto& xs = values.at(part);
      const auto& ys = values.at(m.key());
      for (const auto& [id, x] : xs) {
        const auto it = ys.find(id);
        if (it == ys.end()) continue;
        const std::string fields[] = {m.key() + " vs " + part, io::fmt(x, 10), io::fmt(it->second, 10)};
        scatter += io::csv_line(fields);
      }
    }
  }
  io::write_text(dir / "plot_scatter.csv", scatter);

  std::string text;
  text += "surfaces analysed: " + std::to_string(r.at("surfaces").size()) + "\n";
  for (const auto& s : r.at("summary")) {
    text += "  " + s.at("label").get<std::string>() + ": n = " + num(s.at("n")) + ", std = " + num(s.at("std")) + "\n";
  }
  text += "highest model-participant Pearson r: " + num(r.at("headline").at("max_model_participant_r")) + " (" +
          r.at("headline").at("comparison").get<std::string>() + ")\n";
  text += "global Moran's I of ratings:\n";
  for (const auto& g : r.at("moran_ratings")) {
    text += "  " + g.at("label").get<std::string>() + ": I = " + num(g.at("I")) + ", pseudo-p = " +
            num(g.at("pseudo_p")) + "\n";
  }
  text += "global Moran's I of differences:\n";
  for (const auto& g : r.at("moran_differences")) {
    text += "  " + g.at("label").get<std::string>() + ": I = " + num(g.at("I")) + ", pseudo-p = " +
            num(g.at("pseudo_p")) + "\n";
  }
  text += "label counts:\n";
  for (const auto& [layer, by_label] : counts) {
    text += "  " + layer + ":";
    for (const auto& [label, n] : by_label) text += " " + label + "=" + std::to_string(n);
    text += "\n";
  }
  io::write_text(dir / "summary.txt", text);
  log << "report -> " << dir.string() << "\n";
}

}  // namespace streetappeal::pipeline
