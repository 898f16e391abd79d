#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streetappeal/geo.hpp"
#include "streetappeal/panel.hpp"
#include "streetappeal/prompt.hpp"

namespace streetappeal::adjust {

/// One mean-centered rating. For model ratings rater_id is the prompt key.
struct CenteredScore {
  std::string rater_id;
  std::string point_id;
  double adjusted = 0.0;
};

struct ModelScore {
  std::string point_id;
  prompt::PromptModel prompt;
  double aggregate = 0.0;
};

using LocationMap = std::map<std::string, geo::LonLat>;

/// Per-image values for one rater group or model, sorted by point id.
struct ScoreSurface {
  std::string label;
  std::vector<std::string> ids;
  std::vector<geo::LonLat> locations;
  Eigen::VectorXd values;

  Eigen::Index size() const { return values.size(); }
  std::optional<Eigen::Index> find(const std::string& id) const;
};

struct DiffSurface {
  ScoreSurface surface;
  std::string model_label;
  std::string participant_label;
};

/// raw - that rater's mean raw score.
std::vector<CenteredScore> center_raters(std::span<const panel::RatingRecord> records);

/// aggregate - mean aggregate of the same (tier, persona) over all images.
std::vector<CenteredScore> center_model(std::span<const ModelScore> records);

/// Mean centered score per image over the group's raters. Images in
/// `locations` with no rating from the group are reported in `excluded`.
/// Throws ValidationError when a rated image has no location.
ScoreSurface per_group_mean(std::span<const CenteredScore> scores, const std::set<std::string>& members,
                            std::string label, const LocationMap& locations,
                            std::vector<std::string>* excluded = nullptr);

/// model - participant on the intersection of the two domains.
DiffSurface difference_surface(const ScoreSurface& model, const ScoreSurface& participant);

/// Values of both surfaces on their common ids, in id order.
struct Aligned {
  std::vector<std::string> ids;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
};
Aligned align(const ScoreSurface& a, const ScoreSurface& b);

/// Restriction of a surface to the given ids (which must all be present).
ScoreSurface restrict_to(const ScoreSurface& s, std::span<const std::string> ids);

std::string surface_csv(const ScoreSurface& s);
std::string surface_geojson(const ScoreSurface& s);

}  // namespace streetappeal::adjust
