#include "streetappeal/geo.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "streetappeal/errors.hpp"
#include "streetappeal/random.hpp"

namespace streetappeal::geo {

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 to_unit(const LonLat& p) {
  const double phi = deg2rad(p.lat);
  const double lam = deg2rad(p.lon);
  return {std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi)};
}

LonLat from_unit(const Vec3& v) {
  constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
  const double norm = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {std::atan2(v.y, v.x) * kRadToDeg, std::asin(std::clamp(v.z / norm, -1.0, 1.0)) * kRadToDeg};
}

std::string indexed_id(const std::string& base, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu", k);
  return base + buf;
}

// Slack for floating point when deciding whether the final vertex coincides
// with the last regular sample.
constexpr double kLengthSlackM = 1e-6;

// Metres per degree of latitude; a lower bound on distance for a lat delta.
constexpr double kMetresPerDegLat = kEarthRadiusM * 3.14159265358979323846 / 180.0;

}  // namespace

LonLat interpolate(const LonLat& a, const LonLat& b, double t) {
  if (t <= 0.0) return a;
  if (t >= 1.0) return b;
  const Vec3 u = to_unit(a);
  const Vec3 v = to_unit(b);
  const double dot = std::clamp(u.x * v.x + u.y * v.y + u.z * v.z, -1.0, 1.0);
  const double omega = std::acos(dot);
  if (omega < 1e-15) return a;
  const double s = std::sin(omega);
  const double wa = std::sin((1.0 - t) * omega) / s;
  const double wb = std::sin(t * omega) / s;
  return from_unit({wa * u.x + wb * v.x, wa * u.y + wb * v.y, wa * u.z + wb * v.z});
}

bool valid_wgs84(const LonLat& p) {
  return p.lon >= -180.0 && p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

std::string to_string(PointSource s) {
  return s == PointSource::interval_sample ? "interval_sample" : "landmark_augment";
}

PointSource point_source_from_string(const std::string& s) {
  if (s == "interval_sample") return PointSource::interval_sample;
  if (s == "landmark_augment") return PointSource::landmark_augment;
  throw ValidationError("unknown point source '" + s + "'");
}

double polyline_length_m(const Polyline& line) {
  double total = 0.0;
  for (std::size_t i = 1; i < line.vertices.size(); ++i) {
    total += distance_m(line.vertices[i - 1], line.vertices[i]);
  }
  return total;
}

std::vector<SamplePoint> sample_along_network(const StreetNetwork& net, double interval_m) {
  if (!(interval_m > 0.0)) throw ConfigError("sampling interval must be positive");
  if (net.segments.empty()) throw ValidationError("street network is empty");

  std::set<std::string> seen_ids;
  std::vector<SamplePoint> out;
  for (std::size_t s = 0; s < net.segments.size(); ++s) {
    const Polyline& line = net.segments[s];
    const std::string base = line.id.empty() ? "s" + std::to_string(s) : line.id;
    if (!seen_ids.insert(base).second) {
      throw ValidationError("duplicate polyline id '" + base + "'");
    }
    if (line.vertices.size() < 2) {
      throw ValidationError("polyline '" + base + "' has fewer than 2 vertices");
    }
    for (const auto& v : line.vertices) {
      if (!valid_wgs84(v)) throw ValidationError("polyline '" + base + "' has invalid coordinates");
    }

    std::vector<double> cumulative(line.vertices.size(), 0.0);
    for (std::size_t i = 1; i < line.vertices.size(); ++i) {
      cumulative[i] = cumulative[i - 1] + distance_m(line.vertices[i - 1], line.vertices[i]);
    }
    const double length = cumulative.back();
    if (!(length > 0.0)) throw ValidationError("polyline '" + base + "' has zero length");

    std::size_t k = 0;
    std::size_t seg = 1;
    auto emit = [&](const LonLat& p) {
      out.push_back({indexed_id(base, k), p.lon, p.lat, std::nullopt, PointSource::interval_sample});
      ++k;
    };
    double last = 0.0;
    for (double target = 0.0; target <= length + kLengthSlackM; target = interval_m * double(k)) {
      while (seg + 1 < cumulative.size() && cumulative[seg] < target) ++seg;
      const double seg_len = cumulative[seg] - cumulative[seg - 1];
      const double t = seg_len > 0.0 ? (target - cumulative[seg - 1]) / seg_len : 0.0;
      emit(interpolate(line.vertices[seg - 1], line.vertices[seg], std::clamp(t, 0.0, 1.0)));
      last = target;
    }
    if (length - last > kLengthSlackM) emit(line.vertices.back());
  }
  return out;
}

std::vector<SamplePoint> random_subsample(std::span<const SamplePoint> points, std::size_t n,
                                          std::uint64_t seed) {
  std::vector<SamplePoint> pool(points.begin(), points.end());
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (n < pool.size()) {
    auto rng = substream(seed, 0x5a3b1e);
    // Partial Fisher-Yates: the first n slots end up a uniform sample.
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  }
  return pool;
}

std::vector<SamplePoint> augment_near_landmarks(std::span<const SamplePoint> pool,
                                                std::span<const Landmark> landmarks,
                                                double radius_m) {
  if (!(radius_m > 0.0)) throw ConfigError("landmark radius must be positive");
  std::vector<Landmark> by_lat(landmarks.begin(), landmarks.end());
  std::sort(by_lat.begin(), by_lat.end(), [](const auto& a, const auto& b) { return a.lat < b.lat; });
  const double dlat = radius_m / kMetresPerDegLat * (1.0 + 1e-9);

  std::vector<SamplePoint> out;
  for (const auto& p : pool) {
    auto it = std::lower_bound(by_lat.begin(), by_lat.end(), p.lat - dlat,
                               [](const Landmark& l, double v) { return l.lat < v; });
    for (; it != by_lat.end() && it->lat <= p.lat + dlat; ++it) {
      if (haversine_m(p.lon, p.lat, it->lon, it->lat) <= radius_m) {
        SamplePoint q = p;
        q.source = PointSource::landmark_augment;
        out.push_back(std::move(q));
        break;
      }
    }
  }
  return out;
}

std::vector<SamplePoint> dedup(std::span<const SamplePoint> points, double epsilon_m) {
  if (epsilon_m < 0.0) throw ConfigError("dedup epsilon must be non-negative");
  const double dlat = epsilon_m / kMetresPerDegLat * (1.0 + 1e-9);
  // Kept points indexed by latitude; candidates lie within dlat.
  std::multimap<double, std::size_t> kept_by_lat;
  std::vector<SamplePoint> out;
  for (const auto& p : points) {
    bool duplicate = false;
    for (auto it = kept_by_lat.lower_bound(p.lat - dlat);
         it != kept_by_lat.end() && it->first <= p.lat + dlat; ++it) {
      const auto& q = out[it->second];
      if (haversine_m(p.lon, p.lat, q.lon, q.lat) <= epsilon_m) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      kept_by_lat.emplace(p.lat, out.size());
      out.push_back(p);
    }
  }
  return out;
}

std::vector<SamplePoint> merge_samples(std::span<const SamplePoint> random_sample,
                                       std::span<const SamplePoint> augmented, double epsilon_m) {
  std::vector<SamplePoint> all(random_sample.begin(), random_sample.end());
  all.insert(all.end(), augmented.begin(), augmented.end());
  return dedup(all, epsilon_m);
}

}  // namespace streetappeal::geo
