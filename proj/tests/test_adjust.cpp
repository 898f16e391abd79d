#include <doctest.h>

#include <map>

#include <nlohmann/json.hpp>

#include "streetappeal/adjust.hpp"
#include "streetappeal/errors.hpp"
#include "streetappeal/random.hpp"

using namespace streetappeal;
using namespace streetappeal::adjust;
using panel::RatingRecord;

namespace {

std::vector<double> adjusted_of(const std::vector<CenteredScore>& s) {
  std::vector<double> out;
  for (const auto& c : s) out.push_back(c.adjusted);
  return out;
}

LocationMap locations(int n) {
  LocationMap m;
  for (int i = 0; i < n; ++i) m["img" + std::to_string(i)] = {24.9 + 0.001 * i, 60.17};
  return m;
}

ScoreSurface surface(std::string label, std::vector<std::string> ids, std::vector<double> values) {
  ScoreSurface s;
  s.label = std::move(label);
  for (std::size_t i = 0; i < ids.size(); ++i) s.locations.push_back({24.9 + 0.001 * double(i), 60.17});
  s.ids = std::move(ids);
  s.values = Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
  return s;
}

std::map<std::string, double> means_by_key(const std::vector<CenteredScore>& s) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& c : s) {
    acc[c.rater_id].first += c.adjusted;
    ++acc[c.rater_id].second;
  }
  std::map<std::string, double> out;
  for (const auto& [k, a] : acc) out[k] = a.first / a.second;
  return out;
}

}  // namespace

TEST_CASE("center_raters examples") {
  const std::vector<RatingRecord> a{{"r", "i1", 3}, {"r", "i2", 4}, {"r", "i3", 5}};
  CHECK(adjusted_of(center_raters(a)) == std::vector<double>{-1, 0, 1});
  const std::vector<RatingRecord> flat{{"r", "i1", 4}, {"r", "i2", 4}, {"r", "i3", 4}, {"r", "i4", 4}};
  CHECK(adjusted_of(center_raters(flat)) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("center_model examples") {
  const prompt::PromptModel m1{prompt::Tier::Model1, prompt::Persona::LR};
  const prompt::PromptModel m3{prompt::Tier::Model3, prompt::Persona::NR};
  const std::vector<ModelScore> one{{"a", m1, 2}, {"b", m1, 4}, {"c", m1, 6}};
  CHECK(adjusted_of(center_model(one)) == std::vector<double>{-2, 0, 2});
  const std::vector<ModelScore> constant{{"a", m1, 5}, {"b", m1, 5}};
  CHECK(adjusted_of(center_model(constant)) == std::vector<double>{0, 0});

  const std::vector<ModelScore> two{{"a", m1, 1}, {"b", m1, 3}, {"a", m3, 6}, {"b", m3, 7}};
  const auto c = center_model(two);
  CHECK(c[2].rater_id == "model3_nr");
  for (const auto& [key, mean] : means_by_key(c)) CHECK(std::abs(mean) <= 1e-12);
}

TEST_CASE("centering properties on random panels") {
  auto rng = substream(41);
  std::vector<RatingRecord> recs;
  for (int r = 0; r < 20; ++r) {
    for (int i = 0; i < 150; ++i) {
      if (uniform_unit(rng) < 0.5) recs.push_back({"r" + std::to_string(r), "img" + std::to_string(i),
                                                    1 + int(uniform_below(rng, 7))});
    }
  }
  const auto c = center_raters(recs);
  for (const auto& [rater, mean] : means_by_key(c)) CHECK(std::abs(mean) <= 1e-12);

  // Translation equivariance: shifting one rater's raw scores changes nothing.
  auto shifted = recs;
  for (auto& r : shifted) {
    if (r.rater_id == "r3") r.score += 2;
  }
  const auto c2 = center_raters(shifted);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c2[i].adjusted == doctest::Approx(c[i].adjusted).epsilon(1e-12));
}

TEST_CASE("per_group_mean") {
  const auto locs = locations(4);
  const std::vector<CenteredScore> scores{{"lr1", "img0", -1.0}, {"lr2", "img0", 1.0}, {"lr1", "img1", 0.5},
                                          {"nr1", "img2", 2.0},  {"lr2", "img1", 1.5}};
  std::vector<std::string> excluded;
  const auto s = per_group_mean(scores, {"lr1", "lr2"}, "local_residents", locs, &excluded);
  CHECK(s.ids == std::vector<std::string>{"img0", "img1"});
  CHECK(s.values[0] == 0.0);
  CHECK(s.values[1] == 1.0);
  CHECK(s.locations[1] == locs.at("img1"));
  CHECK(excluded == std::vector<std::string>{"img2", "img3"});
  CHECK(s.find("img1") == 1);
  CHECK_FALSE(s.find("img3").has_value());

  const std::vector<CenteredScore> stray{{"lr1", "nowhere", 1.0}};
  CHECK_THROWS_AS(per_group_mean(stray, {"lr1"}, "x", locs), ValidationError);

  // Model surfaces pass through unchanged: one value per image.
  const std::vector<CenteredScore> model{{"model2_lr", "img3", 0.25}, {"model2_lr", "img1", -0.25}};
  const auto ms = per_group_mean(model, {"model2_lr"}, "model2_lr", locs);
  CHECK(ms.values[0] == -0.25);
  CHECK(ms.values[1] == 0.25);
}

TEST_CASE("per_group_mean equals brute-force per-image means") {
  auto rng = substream(42);
  const auto locs = locations(30);
  std::vector<CenteredScore> scores;
  for (int r = 0; r < 9; ++r) {
    for (int i = 0; i < 30; ++i) {
      if (uniform_unit(rng) < 0.6) {
        scores.push_back({"r" + std::to_string(r), "img" + std::to_string(i), uniform_unit(rng) * 4 - 2});
      }
    }
  }
  const std::set<std::string> members{"r0", "r2", "r4", "r6", "r8"};
  const auto s = per_group_mean(scores, members, "g", locs);
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : scores) {
      if (c.point_id == s.ids[std::size_t(k)] && members.contains(c.rater_id)) {
        sum += c.adjusted;
        ++n;
      }
    }
    CHECK(s.values[k] == doctest::Approx(sum / n).epsilon(1e-12));
  }
}

TEST_CASE("balanced groups give a zero grand mean") {
  // Two raters, each rating every image: per-image means average to zero.
  std::vector<RatingRecord> recs;
  auto rng = substream(43);
  for (const auto* r : {"a", "b"}) {
    for (int i = 0; i < 12; ++i) recs.push_back({r, "img" + std::to_string(i), 1 + int(uniform_below(rng, 7))});
  }
  const auto s = per_group_mean(center_raters(recs), {"a", "b"}, "g", locations(12));
  CHECK(std::abs(s.values.mean()) <= 1e-12);
}

TEST_CASE("difference_surface") {
  const auto a = surface("model", {"i1", "i2", "i3"}, {0.5, -0.5, 1.0});
  const auto zero = difference_surface(a, a);
  CHECK(zero.surface.values.isZero(0.0));
  CHECK(zero.surface.label == "model-model");

  const auto flat = surface("p", {"i2", "i3", "i4"}, {0.0, 0.0, 0.0});
  const auto plus = surface("m", {"i1", "i2", "i3"}, {0.5, 0.5, 0.5});
  const auto d = difference_surface(plus, flat);
  CHECK(d.surface.ids == std::vector<std::string>{"i2", "i3"});
  CHECK(d.surface.values[0] == 0.5);
  CHECK(d.surface.values[1] == 0.5);
  CHECK(d.model_label == "m");
  CHECK(d.participant_label == "p");

  const auto far = surface("q", {"z"}, {1.0});
  CHECK_THROWS_AS(difference_surface(a, far), ValidationError);

  const auto al = align(a, flat);
  CHECK(al.ids == std::vector<std::string>{"i2", "i3"});
  CHECK(al.a[1] == 1.0);
  const std::vector<std::string> keep{"i3"};
  CHECK(restrict_to(a, keep).values[0] == 1.0);
  const std::vector<std::string> missing{"nope"};
  CHECK_THROWS_AS(restrict_to(a, missing), ValidationError);
}

TEST_CASE("surface serialisation") {
  const auto s = surface("g", {"i1", "i2"}, {0.25, -1.0});
  CHECK(surface_csv(s) == "point_id,lon,lat,value\ni1,24.9,60.17,0.25\ni2,24.901,60.17,-1\n");
  const auto j = nlohmann::json::parse(surface_geojson(s));
  CHECK(j.at("name") == "g");
  CHECK(j.at("features").size() == 2);
  CHECK(j.at("features")[1].at("properties").at("value") == -1.0);
}
