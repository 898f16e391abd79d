#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "streetappeal/adjust.hpp"
#include "streetappeal/geo.hpp"

namespace streetappeal::spatial {

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using WeightMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct WeightScheme {
  enum class Kind { knn, distance_band };
  Kind kind = Kind::knn;
  int k = 8;
  double band_m = 0.0;

  static WeightScheme knn(int k) { return {Kind::knn, k, 0.0}; }
  static WeightScheme distance_band(double d) { return {Kind::distance_band, 0, d}; }
  std::string describe() const;
};

struct SpatialWeights {
  std::vector<std::string> ids;
  WeightMatrix w;
  WeightScheme scheme;
  bool standardized = false;
  bool include_self = false;
  /// Sites with no neighbour other than themselves; excluded from statistics.
  std::vector<Eigen::Index> isolates;

  Eigen::Index size() const { return w.rows(); }
  double s0() const { return w.sum(); }
  /// (neighbour index, weight) pairs of row i, ascending by index.
  std::vector<std::pair<Eigen::Index, double>> neighbors(Eigen::Index i) const;
};

/// Great-circle neighbour sets. knn ties go to the lower index; distance bands
/// are closed (a relative slack of 1e-9 absorbs rounding). Isolated sites get
/// an empty row and a message appended to `warnings`.
SpatialWeights build_weights(std::span<const std::string> ids, std::span<const geo::LonLat> points,
                             const WeightScheme& scheme, bool standardize, bool include_self = false,
                             std::vector<std::string>* warnings = nullptr);

SpatialWeights build_weights(const adjust::ScoreSurface& surface, const WeightScheme& scheme, bool standardize,
                             bool include_self = false, std::vector<std::string>* warnings = nullptr);

/// Same neighbour sets with binary weights and w_ii = 1, for Gi*.
SpatialWeights self_inclusive_binary(const SpatialWeights& base);

struct GlobalStat {
  double I = 0.0;
  double z = 0.0;
  double pseudo_p = 1.0;
  int permutations = 0;
  std::uint64_t seed = 0;
  double perm_mean = 0.0;
  double perm_sd = 0.0;
  Eigen::Index n = 0;
};

struct SiteLabel {
  std::string point_id;
  double statistic = 0.0;  // I_i, or the Gi* z-score
  double p_value = 1.0;    // pseudo-p for local Moran, normal two-sided p for Gi*
  std::string label;
};

/// Moran's I without inference.
double morans_i_statistic(VectorRef x, const SpatialWeights& w);

GlobalStat morans_i(VectorRef x, const SpatialWeights& w, int permutations, std::uint64_t seed);
GlobalStat morans_i(const adjust::ScoreSurface& s, const SpatialWeights& w, int permutations, std::uint64_t seed);

/// Local I_i = z_i * lag_i / m2 with m2 = sum(z^2)/n; conditional permutation
/// pseudo-p (folded to the nearer tail); HH/LL/HL/LH when p <= alpha, else NS.
/// Labels carry w.ids.
std::vector<SiteLabel> local_morans_i(VectorRef x, const SpatialWeights& w, int permutations, std::uint64_t seed,
                                      double alpha);
std::vector<SiteLabel> local_morans_i(const adjust::ScoreSurface& s, const SpatialWeights& w, int permutations,
                                      std::uint64_t seed, double alpha);

/// Per-site Gi* z-scores.
Eigen::VectorXd gstar_z(VectorRef x, const SpatialWeights& w_star);

struct GstarOptions {
  double alpha = 0.05;
  /// 0: label by |z| >= z_crit. Otherwise conditional permutation pseudo-p.
  int permutations = 0;
  std::uint64_t seed = 0;
};

std::vector<SiteLabel> getis_ord_gstar(VectorRef x, const SpatialWeights& w_star, const GstarOptions& options);
std::vector<SiteLabel> getis_ord_gstar(const adjust::ScoreSurface& s, const SpatialWeights& w_star,
                                       const GstarOptions& options);

struct DifferenceAnalysis {
  GlobalStat global;
  std::vector<SiteLabel> local;
  std::vector<SiteLabel> gstar;
};

/// All three statistics on a model - participant surface. Positive Gi* (hot)
/// means the model rates higher than participants there.
DifferenceAnalysis analyze_differences(const adjust::DiffSurface& diff, const SpatialWeights& w,
                                       const SpatialWeights& w_star, int permutations, std::uint64_t seed,
                                       double alpha, const GstarOptions& gstar_options);

std::string labels_csv(std::span<const SiteLabel> labels, std::span<const geo::LonLat> locations);
std::string labels_geojson(std::span<const SiteLabel> labels, std::span<const geo::LonLat> locations,
                           const std::string& name);
/// Category colours for map layers.
std::string palette_json();

}  // namespace streetappeal::spatial
