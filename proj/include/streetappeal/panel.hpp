#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "streetappeal/errors.hpp"
#include "streetappeal/prompt.hpp"

namespace streetappeal::panel {

enum class RaterGroup { local_resident, non_resident };
enum class RaterKind { human, model };

std::string to_string(RaterGroup g);
RaterGroup rater_group_from_string(const std::string& s);

struct Rater {
  std::string id;
  RaterGroup group = RaterGroup::local_resident;
};

struct RatingRecord {
  std::string rater_id;
  std::string point_id;
  int score = 0;
  RaterKind rater_kind = RaterKind::human;
  std::optional<prompt::PromptModel> prompt;
};

/// rater_id -> ordered point ids.
using Assignment = std::map<std::string, std::vector<std::string>>;

/// Each image goes to `coverage` distinct raters, dealt round-robin over a
/// seeded permutation of the images; raters are sorted by id first so the
/// result does not depend on their input order. Raters still below
/// per_rater_min afterwards are topped up with their least covered unseen
/// images. Throws ConfigError naming the violated bound.
Assignment assign_batches(std::span<const std::string> images, std::span<const Rater> raters, int coverage,
                          int per_rater_min, std::uint64_t seed);

/// Problem found in one row of a ratings file.
struct RowIssue {
  enum class Kind { parse, range, unknown_point, unknown_rater, duplicate };
  std::size_t line = 0;
  Kind kind = Kind::parse;
  std::string message;
};

std::string to_string(RowIssue::Kind k);

/// Row-level validation failure in strict mode; the issue names the line.
class IngestError : public ValidationError {
 public:
  explicit IngestError(RowIssue issue);
  const RowIssue& issue() const noexcept { return issue_; }

 private:
  RowIssue issue_;
};

struct IngestResult {
  std::vector<RatingRecord> records;
  std::vector<RowIssue> skipped;
};

struct IngestOptions {
  bool strict = true;
  /// Known point ids; empty means every id is accepted.
  std::set<std::string> known_points;
  /// Known rater ids; empty means every id is accepted.
  std::set<std::string> known_raters;
};

/// Parses a CSV with header rater_id,point_id,score. Strict mode throws
/// IngestError on the first bad row; lenient mode skips and reports.
IngestResult ingest_ratings(std::istream& in, const IngestOptions& options);
IngestResult ingest_ratings(const std::filesystem::path& file, const IngestOptions& options);

struct PanelSummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_rater;
  std::map<std::string, std::size_t> per_image;
  std::size_t min_per_image = 0;
  double mean_per_image = 0.0;
  double mean_per_rater = 0.0;
};

PanelSummary panel_summary(std::span<const RatingRecord> records);

/// Reads rater_id,group rows.
std::vector<Rater> read_raters(const std::filesystem::path& file);

}  // namespace streetappeal::panel
