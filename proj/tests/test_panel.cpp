#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "streetappeal/errors.hpp"
#include "streetappeal/io.hpp"
#include "streetappeal/panel.hpp"
#include "streetappeal/random.hpp"
#include "test_support.hpp"

using namespace streetappeal;
using namespace streetappeal::panel;

namespace {

std::vector<std::string> images(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("img" + std::to_string(i));
  return out;
}

std::vector<Rater> raters(int n) {
  std::vector<Rater> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"r" + std::to_string(i), i % 2 ? RaterGroup::non_resident : RaterGroup::local_resident});
  }
  return out;
}

std::map<std::string, std::set<std::string>> coverage_of(const Assignment& a) {
  std::map<std::string, std::set<std::string>> cov;
  for (const auto& [rater, list] : a) {
    for (const auto& img : list) cov[img].insert(rater);
  }
  return cov;
}

IngestResult ingest_text(const std::string& csv, IngestOptions options = {}) {
  std::istringstream in(csv);
  return ingest_ratings(in, options);
}

}  // namespace

TEST_CASE("assign_batches worked example: 4 raters, 8 images, coverage 2") {
  const auto a = assign_batches(images(8), raters(4), 2, 4, 17);
  REQUIRE(a.size() == 4);
  for (const auto& [rater, list] : a) {
    CHECK(list.size() == 4);
    CHECK(std::set(list.begin(), list.end()).size() == list.size());
  }
  const auto cov = coverage_of(a);
  REQUIRE(cov.size() == 8);
  for (const auto& [img, who] : cov) CHECK(who.size() == 2);
}

TEST_CASE("assign_batches saturation and errors") {
  const auto full = assign_batches(images(5), raters(3), 3, 0, 1);
  for (const auto& [rater, list] : full) CHECK(list.size() == 5);

  CHECK_THROWS_WITH_AS(assign_batches(images(5), raters(3), 4, 0, 1), doctest::Contains("coverage"), ConfigError);
  CHECK_THROWS_WITH_AS(assign_batches(images(5), raters(3), 1, 6, 1), doctest::Contains("per_rater_min"),
                       ConfigError);
  CHECK_THROWS_AS(assign_batches(images(5), {}, 1, 0, 1), ConfigError);
  CHECK_THROWS_AS(assign_batches(images(5), raters(3), 0, 0, 1), ConfigError);
}

TEST_CASE("assign_batches invariants over random parameters") {
  auto rng = substream(31);
  for (int t = 0; t < 60; ++t) {
    const int n_img = 1 + int(uniform_below(rng, 80));
    const int n_r = 1 + int(uniform_below(rng, 12));
    const int coverage = 1 + int(uniform_below(rng, std::uint64_t(n_r)));
    const int per_min = int(uniform_below(rng, std::uint64_t(n_img + 1)));
    const auto a = assign_batches(images(n_img), raters(n_r), coverage, per_min, std::uint64_t(t));
    CAPTURE(t);
    const auto cov = coverage_of(a);
    CHECK(cov.size() == std::size_t(n_img));
    for (const auto& [img, who] : cov) CHECK(who.size() >= std::size_t(coverage));
    for (const auto& [rater, list] : a) {
      CHECK(list.size() >= std::size_t(per_min));
      CHECK(std::set(list.begin(), list.end()).size() == list.size());
    }
  }
}

TEST_CASE("assign_batches is invariant to rater order and deterministic") {
  auto rs = raters(7);
  const auto a = assign_batches(images(40), rs, 3, 10, 5);
  std::reverse(rs.begin(), rs.end());
  CHECK(assign_batches(images(40), rs, 3, 10, 5) == a);
  auto imgs = images(40);
  std::reverse(imgs.begin(), imgs.end());
  CHECK(assign_batches(imgs, rs, 3, 10, 5) == a);
  CHECK(assign_batches(images(40), rs, 3, 10, 6) != a);
}

TEST_CASE("ingest_ratings") {
  SUBCASE("valid rows") {
    const auto r = ingest_text("rater_id,point_id,score\nr1,img1,5\nr1,img2, 7 \nr2,img1,1\n");
    REQUIRE(r.records.size() == 3);
    CHECK(r.records[0].score == 5);
    CHECK(r.records[1].score == 7);
    CHECK(r.records[0].rater_kind == RaterKind::human);
    CHECK(r.skipped.empty());
  }
  SUBCASE("out of range names the line") {
    try {
      ingest_text("rater_id,point_id,score\nr1,img1,5\nr1,img2,8\n");
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(e.issue().line == 3);
      CHECK(e.issue().kind == RowIssue::Kind::range);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("duplicates are an error, not last-wins") {
    try {
      ingest_text("rater_id,point_id,score\nr1,img7,5\nr1,img7,6\n");
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(e.issue().kind == RowIssue::Kind::duplicate);
      CHECK(to_string(e.issue().kind) == "DuplicateError");
    }
  }
  SUBCASE("lenient mode skips and reports") {
    IngestOptions opt;
    opt.strict = false;
    opt.known_points = {"a", "b"};
    opt.known_raters = {"r1"};
    const auto r = ingest_text(
        "rater_id,point_id,score\nr1,a,4\nr1,a,4\nr1,b,x\nr1,c,3\nr9,b,3\nr1,b,0\nr1,b\nr1,b,2.5\nr1,b,6\n", opt);
    CHECK(r.records.size() == 2);
    std::vector<RowIssue::Kind> kinds;
    for (const auto& s : r.skipped) kinds.push_back(s.kind);
    CHECK(kinds == std::vector<RowIssue::Kind>{RowIssue::Kind::duplicate, RowIssue::Kind::parse,
                                               RowIssue::Kind::unknown_point, RowIssue::Kind::unknown_rater,
                                               RowIssue::Kind::range, RowIssue::Kind::parse, RowIssue::Kind::parse});
    // Ingest-then-summarize counts equal the accepted rows.
    CHECK(panel_summary(r.records).total == r.records.size());
  }
  SUBCASE("missing column") {
    CHECK_THROWS_AS(ingest_text("rater,point_id,score\nr1,a,4\n"), ValidationError);
  }
}

TEST_CASE("panel_summary") {
  std::vector<RatingRecord> recs;
  for (const auto* r : {"a", "b"}) {
    for (const auto* i : {"x", "y", "z"}) recs.push_back({r, i, 4});
  }
  const auto s = panel_summary(recs);
  CHECK(s.total == 6);
  CHECK(s.per_image.at("y") == 2);
  CHECK(s.min_per_image == 2);
  CHECK(s.mean_per_image == 2.0);
  CHECK(s.mean_per_rater == 3.0);

  const auto empty = panel_summary({});
  CHECK(empty.total == 0);
  CHECK(empty.min_per_image == 0);
  CHECK(empty.mean_per_image == 0.0);
  CHECK(empty.per_rater.empty());
}

TEST_CASE("read_raters") {
  testing::TempDir dir("raters");
  io::write_text(dir.path() / "ok.csv", "rater_id,group\nr1,local_resident\nr2,NR\n");
  const auto rs = read_raters(dir.path() / "ok.csv");
  REQUIRE(rs.size() == 2);
  CHECK(rs[1].group == RaterGroup::non_resident);
  io::write_text(dir.path() / "dup.csv", "rater_id,group\nr1,LR\nr1,NR\n");
  CHECK_THROWS_AS(read_raters(dir.path() / "dup.csv"), ValidationError);
  io::write_text(dir.path() / "bad.csv", "rater_id,group\nr1,tourist\n");
  CHECK_THROWS_AS(read_raters(dir.path() / "bad.csv"), ValidationError);
}
