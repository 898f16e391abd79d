#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streetappeal/geo.hpp"

namespace streetappeal::imagery {

inline constexpr std::array<int, 6> kHeadings{0, 60, 120, 180, 240, 300};
inline constexpr int kTileSize = 640;
inline constexpr int kFieldOfView = 60;
inline constexpr int kPitch = 0;

struct TileSpec {
  std::string point_id;
  int heading = 0;
  int fov = kFieldOfView;
  int pitch = kPitch;
  int width = kTileSize;
  int height = kTileSize;
};

/// 8-bit interleaved RGB raster, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Raster() = default;
  Raster(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (std::size_t(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (std::size_t(y) * width + x); }

  /// 3 x N view of the pixels, one column per pixel.
  Eigen::Map<const Eigen::Matrix<std::uint8_t, 3, Eigen::Dynamic>> channels() const {
    return {rgb.data(), 3, static_cast<Eigen::Index>(pixel_count())};
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

struct HeadingTile {
  int heading = 0;
  Raster raster;
};

struct Panorama {
  std::string point_id;
  Raster image;
};

struct LuminosityRecord {
  std::string point_id;
  double luminosity = 0.0;
};

/// The six directional requests for one location.
std::vector<TileSpec> tile_requests(const geo::SamplePoint& p);

/// Left-to-right concatenation in ascending heading order, north leftmost.
Panorama compose_panorama(std::string point_id, std::span<const HeadingTile> tiles);

/// Rec. 709 luma weights 0.2126, 0.7152, 0.0722, applied as integer
/// numerators over 10000 so integral channels give a correctly rounded result.
template <typename Scalar>
constexpr Scalar pixel_luminosity(Scalar r, Scalar g, Scalar b) {
  return (Scalar(2126) * r + Scalar(7152) * g + Scalar(722) * b) / Scalar(10000);
}

LuminosityRecord mean_luminosity(const Panorama& pan);

// Image codecs. Decoding drops alpha and expands gray/palette to RGB.
Raster decode_image(std::span<const std::uint8_t> bytes);
Raster read_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Raster& raster);
void write_png(const std::filesystem::path& path, const Raster& raster);

class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual Raster fetch(const TileSpec& spec) = 0;
};

/// Reads <point_id>_<heading>.png (or .jpg/.jpeg) from a directory.
class LocalTileSource final : public TileSource {
 public:
  explicit LocalTileSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  Raster fetch(const TileSpec& spec) override;

 private:
  std::filesystem::path dir_;
};

/// Street-level imagery HTTP API addressed by location, heading, fov and pitch.
/// Locations must be supplied up front since TileSpec carries only the id.
class RemoteTileSource final : public TileSource {
 public:
  RemoteTileSource(std::string endpoint, std::string api_key,
                   std::vector<geo::SamplePoint> points);
  Raster fetch(const TileSpec& spec) override;

  /// Request target (path + query) for a spec at a location.
  std::string request_target(const TileSpec& spec, const geo::LonLat& where) const;

 private:
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
  std::vector<geo::SamplePoint> points_;
};

/// Fetches and composes the panorama for one point.
Panorama fetch_panorama(TileSource& source, const geo::SamplePoint& p);

}  // namespace streetappeal::imagery
