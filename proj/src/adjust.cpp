#include "streetappeal/adjust.hpp"

#include <algorithm>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "streetappeal/errors.hpp"
#include "streetappeal/io.hpp"

namespace streetappeal::adjust {

std::optional<Eigen::Index> ScoreSurface::find(const std::string& id) const {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return Eigen::Index(it - ids.begin());
}

namespace {

template <typename Record, typename KeyFn, typename ValueFn>
std::vector<CenteredScore> center_by(std::span<const Record> records, KeyFn key, ValueFn value) {
  std::unordered_map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& r : records) {
    auto& s = sums[key(r)];
    s.first += value(r);
    ++s.second;
  }
  std::vector<CenteredScore> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto& s = sums.at(key(r));
    out.push_back({key(r), r.point_id, value(r) - s.first / double(s.second)});
  }
  return out;
}

}  // namespace

std::vector<CenteredScore> center_raters(std::span<const panel::RatingRecord> records) {
  return center_by(
      records, [](const panel::RatingRecord& r) { return r.rater_id; },
      [](const panel::RatingRecord& r) { return double(r.score); });
}

std::vector<CenteredScore> center_model(std::span<const ModelScore> records) {
  return center_by(
      records, [](const ModelScore& r) { return r.prompt.key(); }, [](const ModelScore& r) { return r.aggregate; });
}

ScoreSurface per_group_mean(std::span<const CenteredScore> scores, const std::set<std::string>& members,
                            std::string label, const LocationMap& locations, std::vector<std::string>* excluded) {
  std::map<std::string, std::pair<double, std::size_t>> per_image;
  for (const auto& s : scores) {
    if (!members.contains(s.rater_id)) continue;
    auto& acc = per_image[s.point_id];
    acc.first += s.adjusted;
    ++acc.second;
  }
  ScoreSurface out;
  out.label = std::move(label);
  out.values.resize(Eigen::Index(per_image.size()));
  Eigen::Index i = 0;
  for (const auto& [id, acc] : per_image) {
    const auto loc = locations.find(id);
    if (loc == locations.end()) throw ValidationError(out.label + ": no location for point '" + id + "'");
    out.ids.push_back(id);
    out.locations.push_back(loc->second);
    out.values[i++] = acc.first / double(acc.second);
  }
  if (excluded != nullptr) {
    excluded->clear();
    for (const auto& [id, _] : locations) {
      if (!per_image.contains(id)) excluded->push_back(id);
    }
  }
  return out;
}

Aligned align(const ScoreSurface& a, const ScoreSurface& b) {
  Aligned out;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
  std::size_t i = 0, j = 0;
  while (i < a.ids.size() && j < b.ids.size()) {
    if (a.ids[i] < b.ids[j]) {
      ++i;
    } else if (b.ids[j] < a.ids[i]) {
      ++j;
    } else {
      out.ids.push_back(a.ids[i]);
      idx.emplace_back(Eigen::Index(i), Eigen::Index(j));
      ++i;
      ++j;
    }
  }
  out.a.resize(Eigen::Index(idx.size()));
  out.b.resize(Eigen::Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.a[Eigen::Index(k)] = a.values[idx[k].first];
    out.b[Eigen::Index(k)] = b.values[idx[k].second];
  }
  return out;
}

ScoreSurface restrict_to(const ScoreSurface& s, std::span<const std::string> ids) {
  ScoreSurface out;
  out.label = s.label;
  out.values.resize(Eigen::Index(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto i = s.find(ids[k]);
    if (!i) throw ValidationError(s.label + ": point '" + ids[k] + "' not in surface");
    out.ids.push_back(ids[k]);
    out.locations.push_back(s.locations[std::size_t(*i)]);
    out.values[Eigen::Index(k)] = s.values[*i];
  }
  return out;
}

DiffSurface difference_surface(const ScoreSurface& model, const ScoreSurface& participant) {
  const Aligned al = align(model, participant);
  if (al.ids.empty()) {
    throw ValidationError("surfaces " + model.label + " and " + participant.label + " do not overlap");
  }
  DiffSurface out;
  out.model_label = model.label;
  out.participant_label = participant.label;
  out.surface = restrict_to(model, al.ids);
  out.surface.label = model.label + "-" + participant.label;
  out.surface.values = al.a - al.b;
  return out;
}

std::string surface_csv(const ScoreSurface& s) {
  std::string out = "point_id,lon,lat,value\n";
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    const std::string fields[] = {s.ids[i], io::fmt(s.locations[i].lon, 15), io::fmt(s.locations[i].lat, 15),
                                  io::fmt(s.values[Eigen::Index(i)], 15)};
    out += io::csv_line(fields);
  }
  return out;
}

std::string surface_geojson(const ScoreSurface& s) {
  using nlohmann::json;
  json features = json::array();
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    features.push_back({{"type", "Feature"},
                        {"id", s.ids[i]},
                        {"geometry", {{"type", "Point"}, {"coordinates", {s.locations[i].lon, s.locations[i].lat}}}},
                        {"properties", {{"value", s.values[Eigen::Index(i)]}}}});
  }
  return json{{"type", "FeatureCollection"}, {"name", s.label}, {"features", features}}.dump(1) + "\n";
}

}  // namespace streetappeal::adjust
