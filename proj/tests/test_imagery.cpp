#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "streetappeal/errors.hpp"
#include "streetappeal/imagery.hpp"
#include "streetappeal/io.hpp"
#include "test_support.hpp"

using namespace streetappeal;
using namespace streetappeal::imagery;

namespace {

std::vector<HeadingTile> six_tiles(std::array<std::uint8_t, 3> fill = {0, 0, 0}) {
  std::vector<HeadingTile> tiles;
  for (int h : kHeadings) tiles.push_back({h, Raster(kTileSize, kTileSize, fill)});
  return tiles;
}

Raster noise_raster(int w, int h, std::uint64_t seed) {
  auto rng = substream(seed);
  Raster r(w, h);
  for (auto& b : r.rgb) b = std::uint8_t(uniform_below(rng, 256));
  return r;
}

}  // namespace

TEST_CASE("tile requests") {
  const auto specs = tile_requests({"p7", 24.9, 60.2});
  REQUIRE(specs.size() == 6);
  std::vector<int> headings;
  for (const auto& s : specs) {
    headings.push_back(s.heading);
    CHECK(s.point_id == "p7");
    CHECK(s.fov == 60);
    CHECK(s.pitch == 0);
    CHECK(s.width == 640);
    CHECK(s.height == 640);
  }
  std::sort(headings.begin(), headings.end());
  CHECK(headings == std::vector<int>{0, 60, 120, 180, 240, 300});
}

TEST_CASE("compose_panorama") {
  SUBCASE("six tiles make a 3840x640 raster") {
    const auto pan = compose_panorama("p", six_tiles());
    CHECK(pan.image.width == 3840);
    CHECK(pan.image.height == 640);
    CHECK(pan.point_id == "p");
  }
  SUBCASE("red tile at heading 60 lands in columns 640-1279, whatever the input order") {
    auto tiles = six_tiles();
    tiles[1].raster = Raster(kTileSize, kTileSize, {255, 0, 0});
    std::reverse(tiles.begin(), tiles.end());
    const auto pan = compose_panorama("p", tiles);
    for (int x : {0, 639, 640, 900, 1279, 1280, 3839}) {
      for (int y : {0, 320, 639}) {
        const bool red = x >= 640 && x < 1280;
        CAPTURE(x);
        CHECK(pan.image.pixel(x, y)[0] == (red ? 255 : 0));
      }
    }
  }
  SUBCASE("lossless concatenation") {
    std::vector<HeadingTile> tiles;
    for (int h : kHeadings) tiles.push_back({h, noise_raster(kTileSize, kTileSize, std::uint64_t(h))});
    const auto pan = compose_panorama("p", tiles);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      for (int y = 0; y < kTileSize; y += 37) {
        for (int x = 0; x < kTileSize; x += 41) {
          const auto* a = tiles[t].raster.pixel(x, y);
          const auto* b = pan.image.pixel(int(t) * kTileSize + x, y);
          CHECK(std::equal(a, a + 3, b));
        }
      }
    }
  }
  SUBCASE("errors") {
    auto five = six_tiles();
    five.pop_back();
    CHECK_THROWS_WITH_AS(compose_panorama("p", five), doctest::Contains("missing heading"), ValidationError);
    auto dup = six_tiles();
    dup[5].heading = 0;
    CHECK_THROWS_AS(compose_panorama("p", dup), ValidationError);
    auto odd = six_tiles();
    odd[2].heading = 90;
    CHECK_THROWS_AS(compose_panorama("p", odd), ValidationError);
    auto small = six_tiles();
    small[3].raster = Raster(320, 640);
    CHECK_THROWS_AS(compose_panorama("p", small), ValidationError);
  }
}

TEST_CASE("pixel luminosity") {
  CHECK(pixel_luminosity(255.0, 255.0, 255.0) == 255.0);
  CHECK(pixel_luminosity(0.0, 0.0, 0.0) == 0.0);
  CHECK(pixel_luminosity(0.0, 255.0, 0.0) == 182.376);
  CHECK(pixel_luminosity(255.0, 0.0, 0.0) == 54.213);
  CHECK(pixel_luminosity(0.0, 0.0, 255.0) == 18.411);
  // Monotone in each channel and never above the brightest channel.
  auto rng = substream(12);
  for (int t = 0; t < 1000; ++t) {
    const double r = double(uniform_below(rng, 255)), g = double(uniform_below(rng, 255)),
                 b = double(uniform_below(rng, 255));
    const double l = pixel_luminosity(r, g, b);
    CHECK(pixel_luminosity(r + 1, g, b) > l);
    CHECK(pixel_luminosity(r, g + 1, b) > l);
    CHECK(pixel_luminosity(r, g, b + 1) > l);
    CHECK(l <= std::max({r, g, b}) + 1e-12);
  }
}

TEST_CASE("mean luminosity") {
  CHECK(mean_luminosity({"w", Raster(3840, 640, {255, 255, 255})}).luminosity == 255.0);
  CHECK(mean_luminosity({"b", Raster(3840, 640)}).luminosity == 0.0);

  Raster half(100, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 50; ++x) std::fill_n(half.pixel(x, y), 3, std::uint8_t(255));
  }
  CHECK(mean_luminosity({"h", half}).luminosity == 127.5);

  const Raster noise = noise_raster(173, 41, 5);
  double brute = 0.0;
  for (int y = 0; y < noise.height; ++y) {
    for (int x = 0; x < noise.width; ++x) {
      const auto* p = noise.pixel(x, y);
      brute += 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2];
    }
  }
  brute /= double(noise.pixel_count());
  const double l = mean_luminosity({"n", noise}).luminosity;
  CHECK(l == doctest::Approx(brute).epsilon(1e-9));
  CHECK(l >= 0.0);
  CHECK(l <= 255.0);

  // Pixel order does not matter.
  Raster reversed = noise;
  for (std::size_t i = 0, j = reversed.pixel_count() - 1; i < j; ++i, --j) {
    std::swap_ranges(reversed.rgb.begin() + std::ptrdiff_t(3 * i), reversed.rgb.begin() + std::ptrdiff_t(3 * i + 3),
                     reversed.rgb.begin() + std::ptrdiff_t(3 * j));
  }
  CHECK(mean_luminosity({"r", reversed}).luminosity == l);
  CHECK_THROWS_AS(mean_luminosity({"e", Raster()}), ValidationError);
}

TEST_CASE("PNG round trip and JPEG decoding") {
  const Raster noise = noise_raster(37, 19, 8);
  const auto bytes = encode_png(noise);
  CHECK(decode_image(bytes) == noise);

  const auto red = read_image(std::filesystem::path(STREETAPPEAL_FIXTURES) / "uniform_red.jpg");
  CHECK(red.width == 16);
  CHECK(red.height == 8);
  const auto* p = red.pixel(5, 5);
  CHECK(std::abs(int(p[0]) - 200) <= 2);
  CHECK(std::abs(int(p[1]) - 40) <= 2);
  CHECK(std::abs(int(p[2]) - 40) <= 2);

  const auto gray = read_image(std::filesystem::path(STREETAPPEAL_FIXTURES) / "gray.jpg");
  CHECK(gray.rgb.size() == 4 * 4 * 3);
  CHECK(std::abs(int(gray.pixel(1, 1)[0]) - 77) <= 2);
  CHECK(gray.pixel(1, 1)[0] == gray.pixel(1, 1)[2]);

  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(decode_image(junk), ValidationError);
}

TEST_CASE("local tile source") {
  testing::TempDir dir("tiles");
  const geo::SamplePoint p{"pt", 24.9, 60.2};
  for (int h : kHeadings) {
    write_png(dir.path() / ("pt_" + std::to_string(h) + ".png"),
              Raster(kTileSize, kTileSize, {std::uint8_t(h / 60 * 40), 0, 0}));
  }
  LocalTileSource src(dir.path());
  const auto pan = fetch_panorama(src, p);
  for (int i = 0; i < 6; ++i) CHECK(pan.image.pixel(i * kTileSize + 10, 10)[0] == i * 40);

  std::filesystem::remove(dir.path() / "pt_240.png");
  CHECK_THROWS_WITH_AS(fetch_panorama(src, p), doctest::Contains("pt_240"), ValidationError);
}

TEST_CASE("remote tile request target") {
  RemoteTileSource src("https://maps.example.com/api/streetview", "KEY", {{"a", 24.9412345, 60.1698765}});
  TileSpec spec;
  spec.point_id = "a";
  spec.heading = 120;
  const auto target = src.request_target(spec, {24.9412345, 60.1698765});
  CHECK(target ==
        "/api/streetview?size=640x640&location=60.1698765,24.9412345&heading=120&fov=60&pitch=0&key=KEY");
  spec.point_id = "unknown";
  CHECK_THROWS_AS(src.fetch(spec), ValidationError);
}
