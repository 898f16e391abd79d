#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streetappeal::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

template <typename Scalar>
constexpr Scalar deg2rad(Scalar deg) {
  return deg * Scalar(3.14159265358979323846) / Scalar(180);
}

/// Great-circle distance in metres on a sphere of radius kEarthRadiusM.
template <typename Scalar>
Scalar haversine_m(Scalar lon1, Scalar lat1, Scalar lon2, Scalar lat2) {
  using std::asin;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar dphi = deg2rad(lat2 - lat1);
  const Scalar dlam = deg2rad(lon2 - lon1);
  const Scalar s1 = sin(dphi / 2);
  const Scalar s2 = sin(dlam / 2);
  Scalar h = s1 * s1 + cos(deg2rad(lat1)) * cos(deg2rad(lat2)) * s2 * s2;
  if (h > Scalar(1)) h = Scalar(1);
  return Scalar(2 * kEarthRadiusM) * asin(sqrt(h));
}

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

inline double distance_m(const LonLat& a, const LonLat& b) {
  return haversine_m(a.lon, a.lat, b.lon, b.lat);
}

/// Point at fraction t in [0, 1] along the great circle from a to b.
LonLat interpolate(const LonLat& a, const LonLat& b, double t);

bool valid_wgs84(const LonLat& p);

struct YearMonth {
  int year = 0;
  int month = 0;

  friend bool operator==(const YearMonth&, const YearMonth&) = default;
};

enum class PointSource { interval_sample, landmark_augment };

std::string to_string(PointSource s);
PointSource point_source_from_string(const std::string& s);

struct SamplePoint {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  std::optional<YearMonth> captured;
  PointSource source = PointSource::interval_sample;

  LonLat position() const { return {lon, lat}; }
};

struct Polyline {
  std::string id;
  std::vector<LonLat> vertices;
};

struct StreetNetwork {
  std::vector<Polyline> segments;
};

struct Landmark {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
};

/// Total great-circle length of a polyline in metres.
double polyline_length_m(const Polyline& line);

/// Points at arc lengths 0, interval, 2*interval, ... along every polyline,
/// plus the final vertex when the length is not a multiple of the interval.
/// Ids are "<polyline id>_<index>" with a zero-padded four digit index.
std::vector<SamplePoint> sample_along_network(const StreetNetwork& net, double interval_m);

/// Uniform sample without replacement; deterministic for a seed, sorted by id.
std::vector<SamplePoint> random_subsample(std::span<const SamplePoint> points, std::size_t n,
                                          std::uint64_t seed);

/// Pool points within radius (closed ball) of any landmark, tagged landmark_augment.
std::vector<SamplePoint> augment_near_landmarks(std::span<const SamplePoint> pool,
                                                std::span<const Landmark> landmarks,
                                                double radius_m);

/// Greedy first-wins removal of points within epsilon of an already kept point.
std::vector<SamplePoint> dedup(std::span<const SamplePoint> points, double epsilon_m);

/// Random sample followed by landmark additions, then dedup.
std::vector<SamplePoint> merge_samples(std::span<const SamplePoint> random_sample,
                                       std::span<const SamplePoint> augmented, double epsilon_m);

}  // namespace streetappeal::geo
