#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unistd.h>

#include "streetappeal/geo.hpp"
#include "streetappeal/random.hpp"
#include "streetappeal/spatial.hpp"
#include "streetappeal/stats.hpp"

namespace streetappeal::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("streetappeal_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct Sites {
  std::vector<std::string> ids;
  std::vector<geo::LonLat> points;
};

inline constexpr double kMetresPerDegreeLat = geo::kEarthRadiusM * geo::deg2rad(1.0);

/// rows x cols lattice with the given spacing, ids "s000" row-major from the south-west.
inline Sites grid_sites(int rows, int cols, double spacing_m = 100.0, double lon0 = 24.9, double lat0 = 60.17) {
  Sites s;
  const double dlat = spacing_m / kMetresPerDegreeLat;
  const double dlon = spacing_m / (kMetresPerDegreeLat * std::cos(geo::deg2rad(lat0)));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      char id[16];
      std::snprintf(id, sizeof id, "s%03d", r * cols + c);
      s.ids.emplace_back(id);
      s.points.push_back({lon0 + c * dlon, lat0 + r * dlat});
    }
  }
  return s;
}

/// n points scattered uniformly over roughly 1 km x 1 km.
inline Sites random_sites(int n, std::mt19937_64& rng) {
  Sites s;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03d", i);
    s.ids.emplace_back(id);
    s.points.push_back({24.9 + 0.018 * uniform_unit(rng), 60.17 + 0.009 * uniform_unit(rng)});
  }
  return s;
}

/// Box-Muller standard normal from the raw engine.
inline double normal_draw(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = mean + sd * normal_draw(rng);
  return v;
}

/// Dense n x n weights read back through the public neighbour lists.
inline Eigen::MatrixXd dense_weights(const spatial::SpatialWeights& w) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(w.size(), w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    for (const auto& [j, wij] : w.neighbors(i)) d(i, j) = wij;
  }
  return d;
}

/// Textbook double sum over all pairs.
inline double naive_morans_i(const Eigen::VectorXd& x, const Eigen::MatrixXd& w) {
  const Eigen::Index n = x.size();
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += x[i];
  mean /= double(n);
  double num = 0.0, den = 0.0, s0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    for (Eigen::Index j = 0; j < n; ++j) {
      num += w(i, j) * (x[i] - mean) * (x[j] - mean);
      s0 += w(i, j);
    }
  }
  return double(n) / s0 * num / den;
}

/// Midranks by counting: #smaller + (#equal + 1) / 2.
inline Eigen::VectorXd counting_midranks(const Eigen::VectorXd& a) {
  Eigen::VectorXd r(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double below = 0.0, equal = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      below += a[j] < a[i];
      equal += a[j] == a[i];
    }
    r[i] = below + (equal + 1.0) / 2.0;
  }
  return r;
}

/// Two-sided p by enumerating every sign assignment of the nonzero differences.
inline double enumerate_signed_rank_p(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  }
  Eigen::VectorXd a(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) a[Eigen::Index(i)] = std::abs(d[i]);
  const Eigen::VectorXd r = counting_midranks(a);
  double observed = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) observed += r[Eigen::Index(i)];
  }
  const std::uint64_t cases = std::uint64_t(1) << d.size();
  std::uint64_t lo = 0, hi = 0;
  for (std::uint64_t mask = 0; mask < cases; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (mask >> i & 1) w += r[Eigen::Index(i)];
    }
    if (w <= observed + 1e-9) ++lo;
    if (w >= observed - 1e-9) ++hi;
  }
  return std::min(1.0, 2.0 * double(std::min(lo, hi)) / double(cases));
}

/// Two-sided p of U by enumerating every split of the pooled ranks.
inline double enumerate_rank_sum_p(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n1 = x.size(), n = x.size() + y.size();
  Eigen::VectorXd pooled(n);
  pooled << x, y;
  const Eigen::VectorXd r = counting_midranks(pooled);
  const double observed = r.head(n1).sum();
  std::uint64_t lo = 0, hi = 0, cases = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    if (__builtin_popcountll(mask) != n1) continue;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask >> i & 1) s += r[i];
    }
    ++cases;
    if (s <= observed + 1e-9) ++lo;
    if (s >= observed - 1e-9) ++hi;
  }
  return std::min(1.0, 2.0 * double(std::min(lo, hi)) / double(cases));
}

}  // namespace streetappeal::testing
