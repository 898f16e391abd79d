#include "streetappeal/panel.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "streetappeal/io.hpp"
#include "streetappeal/random.hpp"

namespace streetappeal::panel {

std::string to_string(RaterGroup g) { return g == RaterGroup::local_resident ? "local_resident" : "non_resident"; }

RaterGroup rater_group_from_string(const std::string& s) {
  if (s == "local_resident" || s == "LR") return RaterGroup::local_resident;
  if (s == "non_resident" || s == "NR") return RaterGroup::non_resident;
  throw ValidationError("unknown rater group '" + s + "'");
}

Assignment assign_batches(std::span<const std::string> images, std::span<const Rater> raters, int coverage,
                          int per_rater_min, std::uint64_t seed) {
  if (raters.empty()) throw ConfigError("assign_batches: no raters");
  if (coverage < 1) throw ConfigError("assign_batches: coverage must be >= 1");
  if (per_rater_min < 0) throw ConfigError("assign_batches: per_rater_min must be >= 0");
  if (std::size_t(coverage) > raters.size()) {
    throw ConfigError("assign_batches: coverage " + std::to_string(coverage) + " exceeds rater count " +
                      std::to_string(raters.size()));
  }
  if (std::size_t(per_rater_min) > images.size()) {
    throw ConfigError("assign_batches: per_rater_min " + std::to_string(per_rater_min) + " exceeds image count " +
                      std::to_string(images.size()));
  }

  std::vector<std::string> rater_ids;
  for (const auto& r : raters) rater_ids.push_back(r.id);
  std::sort(rater_ids.begin(), rater_ids.end());
  if (std::adjacent_find(rater_ids.begin(), rater_ids.end()) != rater_ids.end()) {
    throw ValidationError("assign_batches: duplicate rater id");
  }

  // Image order is seeded but independent of the input order.
  std::vector<std::string> order(images.begin(), images.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw ValidationError("assign_batches: duplicate image id");
  }
  auto rng = substream(seed, 0xa551);
  shuffle(std::span(order), rng);

  const std::size_t n_raters = rater_ids.size();
  std::vector<std::vector<std::size_t>> lists(n_raters);
  std::vector<int> image_cover(order.size(), 0);
  std::size_t cursor = 0;
  for (std::size_t img = 0; img < order.size(); ++img) {
    for (int c = 0; c < coverage; ++c) {
      lists[cursor].push_back(img);
      cursor = (cursor + 1) % n_raters;
    }
    image_cover[img] = coverage;
  }

  for (auto& list : lists) {
    if (list.size() >= std::size_t(per_rater_min)) continue;
    std::vector<bool> has(order.size(), false);
    for (auto img : list) has[img] = true;
    std::vector<std::size_t> candidates;
    for (std::size_t img = 0; img < order.size(); ++img) {
      if (!has[img]) candidates.push_back(img);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return image_cover[a] < image_cover[b]; });
    for (std::size_t k = 0; list.size() < std::size_t(per_rater_min); ++k) {
      list.push_back(candidates[k]);
      ++image_cover[candidates[k]];
    }
  }

  Assignment out;
  for (std::size_t r = 0; r < n_raters; ++r) {
    auto& ids = out[rater_ids[r]];
    for (auto img : lists[r]) ids.push_back(order[img]);
  }
  return out;
}

std::string to_string(RowIssue::Kind k) {
  switch (k) {
    case RowIssue::Kind::parse: return "ParseError";
    case RowIssue::Kind::range: return "RangeError";
    case RowIssue::Kind::unknown_point: return "UnknownPoint";
    case RowIssue::Kind::unknown_rater: return "UnknownRater";
    case RowIssue::Kind::duplicate: return "DuplicateError";
  }
  return "Unknown";
}

IngestError::IngestError(RowIssue issue)
    : ValidationError("line " + std::to_string(issue.line) + ": " + to_string(issue.kind) + ": " + issue.message),
      issue_(std::move(issue)) {}

IngestResult ingest_ratings(std::istream& in, const IngestOptions& options) {
  const io::CsvTable table = io::read_csv(in);
  const auto c_rater = table.column("rater_id");
  const auto c_point = table.column("point_id");
  const auto c_score = table.column("score");

  IngestResult result;
  std::set<std::pair<std::string, std::string>> seen;
  auto reject = [&](std::size_t line, RowIssue::Kind kind, std::string message) {
    RowIssue issue{line, kind, std::move(message)};
    if (options.strict) throw IngestError(std::move(issue));
    result.skipped.push_back(std::move(issue));
  };

  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      reject(row.line, RowIssue::Kind::parse, "expected " + std::to_string(table.header.size()) + " fields");
      continue;
    }
    const std::string& rater = row.fields[c_rater];
    const std::string& point = row.fields[c_point];
    const std::string& text = row.fields[c_score];
    if (rater.empty() || point.empty()) {
      reject(row.line, RowIssue::Kind::parse, "empty rater_id or point_id");
      continue;
    }
    int score = 0;
    if (text.find('[') != std::string::npos) {
      reject(row.line, RowIssue::Kind::parse, "score '" + text + "' is not an integer");
      continue;
    }
    try {
      score = prompt::parse_response(text, 1).scores.front();
    } catch (const prompt::RangeError&) {
      reject(row.line, RowIssue::Kind::range, "score '" + text + "' outside [1, 7]");
      continue;
    } catch (const prompt::ResponseError&) {
      reject(row.line, RowIssue::Kind::parse, "score '" + text + "' is not an integer");
      continue;
    }
    if (!options.known_points.empty() && !options.known_points.contains(point)) {
      reject(row.line, RowIssue::Kind::unknown_point, "unknown point_id '" + point + "'");
      continue;
    }
    if (!options.known_raters.empty() && !options.known_raters.contains(rater)) {
      reject(row.line, RowIssue::Kind::unknown_rater, "unknown rater_id '" + rater + "'");
      continue;
    }
    if (!seen.emplace(rater, point).second) {
      reject(row.line, RowIssue::Kind::duplicate, "duplicate rating (" + rater + ", " + point + ")");
      continue;
    }
    result.records.push_back({rater, point, score, RaterKind::human, std::nullopt});
  }
  return result;
}

IngestResult ingest_ratings(const std::filesystem::path& file, const IngestOptions& options) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open ratings file " + file.string());
  try {
    return ingest_ratings(in, options);
  } catch (const IngestError& e) {
    RowIssue issue = e.issue();
    issue.message = file.string() + ": " + issue.message;
    throw IngestError(std::move(issue));
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

PanelSummary panel_summary(std::span<const RatingRecord> records) {
  PanelSummary s;
  s.total = records.size();
  for (const auto& r : records) {
    ++s.per_rater[r.rater_id];
    ++s.per_image[r.point_id];
  }
  if (!s.per_image.empty()) {
    s.min_per_image = std::min_element(s.per_image.begin(), s.per_image.end(), [](const auto& a, const auto& b) {
                        return a.second < b.second;
                      })->second;
    s.mean_per_image = double(s.total) / double(s.per_image.size());
  }
  if (!s.per_rater.empty()) s.mean_per_rater = double(s.total) / double(s.per_rater.size());
  return s;
}

std::vector<Rater> read_raters(const std::filesystem::path& file) {
  const io::CsvTable t = io::read_csv(file);
  const auto ci = t.column("rater_id"), cg = t.column("group");
  std::vector<Rater> out;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    const std::string where = file.string() + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw ValidationError(where + ": wrong field count");
    if (!seen.insert(row.fields[ci]).second) throw ValidationError(where + ": duplicate rater '" + row.fields[ci] + "'");
    try {
      out.push_back({row.fields[ci], rater_group_from_string(row.fields[cg])});
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace streetappeal::panel
