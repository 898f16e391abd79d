#include "streetappeal/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "streetappeal/errors.hpp"
#include "streetappeal/io.hpp"
#include "streetappeal/random.hpp"
#include "streetappeal/stats.hpp"

namespace streetappeal::spatial {

namespace {

// Substream tags so the three statistics never share a random stream.
constexpr std::uint64_t kGlobalTag = 0x6d6f72616e;
constexpr std::uint64_t kLocalTag = 0x6c69736100;
constexpr std::uint64_t kGstarTag = 0x6773746172;

// Sites that take part in the statistics, with the weights restricted to them.
struct Active {
  std::vector<Eigen::Index> index;
  Eigen::VectorXd x;
  WeightMatrix w;
};

Active active_part(VectorRef x, const SpatialWeights& sw) {
  if (x.size() != sw.size()) {
    throw ValidationError("surface has " + std::to_string(x.size()) + " values but weights cover " +
                          std::to_string(sw.size()) + " sites");
  }
  if (!x.allFinite()) throw ValidationError("surface contains non-finite values");
  Active a;
  if (sw.isolates.empty()) {
    a.index.resize(std::size_t(x.size()));
    std::iota(a.index.begin(), a.index.end(), Eigen::Index(0));
    a.x = x;
    a.w = sw.w;
  } else {
    std::vector<Eigen::Index> remap(std::size_t(x.size()), -1);
    std::vector<bool> isolated(std::size_t(x.size()), false);
    for (auto i : sw.isolates) isolated[std::size_t(i)] = true;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (isolated[std::size_t(i)]) continue;
      remap[std::size_t(i)] = Eigen::Index(a.index.size());
      a.index.push_back(i);
    }
    const auto n = Eigen::Index(a.index.size());
    a.x.resize(n);
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index r = 0; r < n; ++r) {
      a.x[r] = x[a.index[std::size_t(r)]];
      for (WeightMatrix::InnerIterator it(sw.w, a.index[std::size_t(r)]); it; ++it) {
        const auto c = remap[std::size_t(it.col())];
        if (c >= 0) trips.emplace_back(r, c, it.value());
      }
    }
    a.w.resize(n, n);
    a.w.setFromTriplets(trips.begin(), trips.end());
  }
  if (a.x.size() < 2) throw ValidationError("fewer than 2 non-isolated sites");
  if (a.x.maxCoeff() == a.x.minCoeff()) throw ValidationError("zero variance: surface is constant");
  return a;
}

void check_alignment(const adjust::ScoreSurface& s, const SpatialWeights& w) {
  if (s.ids != w.ids) throw ValidationError("surface " + s.label + " and spatial weights cover different points");
}

void check_inference(int permutations, double alpha) {
  if (permutations < 0) throw ConfigError("permutations must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
}

double moran_core(const Eigen::VectorXd& z, const WeightMatrix& w, double scale) {
  const Eigen::VectorXd lag = w * z;
  return scale * z.dot(lag);
}

// Neighbours of row r excluding the site itself, plus the self weight.
struct Row {
  std::vector<Eigen::Index> cols;
  std::vector<double> weights;
  double self = 0.0;
};

Row row_of(const WeightMatrix& w, Eigen::Index r) {
  Row row;
  for (WeightMatrix::InnerIterator it(w, r); it; ++it) {
    if (it.col() == r) {
      row.self += it.value();
    } else {
      row.cols.push_back(it.col());
      row.weights.push_back(it.value());
    }
  }
  return row;
}

// Conditional randomization: site r keeps its value, its neighbours take
// values drawn without replacement from the other n - 1 sites. Returns the
// permuted neighbour sums sum_j w_rj * v_j (self term excluded).
std::vector<double> conditional_lags(const Eigen::VectorXd& v, Eigen::Index r, const Row& row, int permutations,
                                     std::mt19937_64& rng) {
  const auto n = std::size_t(v.size());
  std::vector<Eigen::Index> pool;
  pool.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (Eigen::Index(j) != r) pool.push_back(Eigen::Index(j));
  }
  const std::size_t k = std::min(row.cols.size(), pool.size());
  std::vector<double> out(static_cast<std::size_t>(permutations));
  for (int p = 0; p < permutations; ++p) {
    double lag = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick = j + std::size_t(uniform_below(rng, pool.size() - j));
      std::swap(pool[j], pool[pick]);
      lag += row.weights[j] * v[pool[j]];
    }
    out[std::size_t(p)] = lag;
  }
  return out;
}

// Pseudo-p folded to whichever tail the observed value sits in.
double folded_pseudo_p(const std::vector<double>& perms, double observed) {
  const auto total = std::ptrdiff_t(perms.size());
  std::ptrdiff_t larger = std::count_if(perms.begin(), perms.end(), [&](double v) { return v >= observed; });
  if (total - larger < larger) larger = total - larger;
  return double(larger + 1) / double(total + 1);
}

std::vector<SiteLabel> blank_labels(const SpatialWeights& w, const char* label) {
  std::vector<SiteLabel> out(std::size_t(w.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].point_id = i < w.ids.size() ? w.ids[i] : std::to_string(i);
    out[i].label = label;
  }
  return out;
}

}  // namespace

std::string WeightScheme::describe() const {
  if (kind == Kind::knn) return "knn(k=" + std::to_string(k) + ")";
  return "distance_band(d=" + io::fmt(band_m) + "m)";
}

std::vector<std::pair<Eigen::Index, double>> SpatialWeights::neighbors(Eigen::Index i) const {
  std::vector<std::pair<Eigen::Index, double>> out;
  for (WeightMatrix::InnerIterator it(w, i); it; ++it) out.emplace_back(it.col(), it.value());
  return out;
}

SpatialWeights build_weights(std::span<const std::string> ids, std::span<const geo::LonLat> points,
                             const WeightScheme& scheme, bool standardize, bool include_self,
                             std::vector<std::string>* warnings) {
  const std::size_t n = points.size();
  if (ids.size() != n) throw ValidationError("build_weights: ids and points differ in length");
  if (n < 2) throw ValidationError("build_weights: need at least 2 points");
  for (const auto& p : points) {
    if (!geo::valid_wgs84(p)) throw ValidationError("build_weights: invalid coordinate");
  }
  if (scheme.kind == WeightScheme::Kind::knn) {
    if (scheme.k < 1) throw ConfigError("knn: k must be >= 1");
    if (std::size_t(scheme.k) >= n) {
      throw ConfigError("knn: k = " + std::to_string(scheme.k) + " infeasible for " + std::to_string(n) + " points");
    }
  } else if (!(scheme.band_m > 0.0)) {
    throw ConfigError("distance_band: d must be > 0");
  }

  SpatialWeights out;
  out.ids.assign(ids.begin(), ids.end());
  out.scheme = scheme;
  out.standardized = standardize;
  out.include_self = include_self;

  std::vector<Eigen::Triplet<double>> trips;
  std::vector<std::pair<double, std::size_t>> dist(n);
  const double band = scheme.band_m * (1.0 + 1e-9);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> nbrs;
    if (scheme.kind == WeightScheme::Kind::knn) {
      dist.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) dist.emplace_back(geo::distance_m(points[i], points[j]), j);
      }
      const auto k = std::size_t(scheme.k);
      std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(k), dist.end());
      for (std::size_t m = 0; m < k; ++m) nbrs.push_back(dist[m].second);
      std::sort(nbrs.begin(), nbrs.end());
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && geo::distance_m(points[i], points[j]) <= band) nbrs.push_back(j);
      }
    }
    if (nbrs.empty()) {
      out.isolates.push_back(Eigen::Index(i));
      if (warnings != nullptr) {
        warnings->push_back("site '" + out.ids[i] + "' has no neighbours within " + scheme.describe() +
                            "; excluded from spatial statistics");
      }
      continue;
    }
    if (include_self) nbrs.insert(std::lower_bound(nbrs.begin(), nbrs.end(), i), i);
    const double weight = standardize ? 1.0 / double(nbrs.size()) : 1.0;
    for (auto j : nbrs) trips.emplace_back(Eigen::Index(i), Eigen::Index(j), weight);
  }
  out.w.resize(Eigen::Index(n), Eigen::Index(n));
  out.w.setFromTriplets(trips.begin(), trips.end());
  out.w.makeCompressed();
  return out;
}

SpatialWeights build_weights(const adjust::ScoreSurface& surface, const WeightScheme& scheme, bool standardize,
                             bool include_self, std::vector<std::string>* warnings) {
  return build_weights(surface.ids, surface.locations, scheme, standardize, include_self, warnings);
}

SpatialWeights self_inclusive_binary(const SpatialWeights& base) {
  SpatialWeights out;
  out.ids = base.ids;
  out.scheme = base.scheme;
  out.standardized = false;
  out.include_self = true;
  out.isolates = base.isolates;
  std::vector<bool> isolated(std::size_t(base.size()), false);
  for (auto i : base.isolates) isolated[std::size_t(i)] = true;
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index r = 0; r < base.size(); ++r) {
    if (isolated[std::size_t(r)]) continue;
    trips.emplace_back(r, r, 1.0);
    for (WeightMatrix::InnerIterator it(base.w, r); it; ++it) {
      if (it.col() != r) trips.emplace_back(r, it.col(), 1.0);
    }
  }
  out.w.resize(base.size(), base.size());
  out.w.setFromTriplets(trips.begin(), trips.end());
  out.w.makeCompressed();
  return out;
}

double morans_i_statistic(VectorRef x, const SpatialWeights& w) {
  const Active a = active_part(x, w);
  const Eigen::VectorXd z = a.x.array() - a.x.mean();
  const double s0 = a.w.sum();
  if (s0 == 0.0) throw ValidationError("spatial weights are empty");
  return moran_core(z, a.w, double(z.size()) / (s0 * z.squaredNorm()));
}

GlobalStat morans_i(VectorRef x, const SpatialWeights& w, int permutations, std::uint64_t seed) {
  check_inference(permutations, 0.05);
  const Active a = active_part(x, w);
  const Eigen::VectorXd z = a.x.array() - a.x.mean();
  const double s0 = a.w.sum();
  if (s0 == 0.0) throw ValidationError("spatial weights are empty");
  // z'z is permutation invariant, so one scale serves every draw.
  const double scale = double(z.size()) / (s0 * z.squaredNorm());

  GlobalStat g;
  g.I = moran_core(z, a.w, scale);
  g.permutations = permutations;
  g.seed = seed;
  g.n = z.size();
  if (permutations == 0) return g;

  Eigen::VectorXd perms(permutations);
  Eigen::VectorXd zp(z.size());
  for (int p = 0; p < permutations; ++p) {
    auto rng = substream(seed, kGlobalTag, std::uint64_t(p));
    zp = z;
    shuffle(std::span<double>(zp.data(), std::size_t(zp.size())), rng);
    perms[p] = moran_core(zp, a.w, scale);
  }
  const auto extreme = (perms.array().abs() >= std::fabs(g.I)).count();
  g.pseudo_p = double(extreme + 1) / double(permutations + 1);
  g.perm_mean = perms.mean();
  g.perm_sd = std::sqrt((perms.array() - g.perm_mean).square().mean());
  g.z = g.perm_sd > 0.0 ? (g.I - g.perm_mean) / g.perm_sd : 0.0;
  return g;
}

GlobalStat morans_i(const adjust::ScoreSurface& s, const SpatialWeights& w, int permutations, std::uint64_t seed) {
  check_alignment(s, w);
  return morans_i(s.values, w, permutations, seed);
}

std::vector<SiteLabel> local_morans_i(VectorRef x, const SpatialWeights& w, int permutations, std::uint64_t seed,
                                      double alpha) {
  check_inference(permutations, alpha);
  const Active a = active_part(x, w);
  const Eigen::VectorXd z = a.x.array() - a.x.mean();
  const double m2 = z.squaredNorm() / double(z.size());

  std::vector<SiteLabel> out = blank_labels(w, "NS");
  for (Eigen::Index r = 0; r < z.size(); ++r) {
    const Row row = row_of(a.w, r);
    double neighbour_lag = 0.0;
    for (std::size_t j = 0; j < row.cols.size(); ++j) neighbour_lag += row.weights[j] * z[row.cols[j]];
    const double lag = neighbour_lag + row.self * z[r];
    const double ii = z[r] * lag / m2;
    SiteLabel& site = out[std::size_t(a.index[std::size_t(r)])];
    site.statistic = ii;
    if (permutations == 0) continue;

    auto rng = substream(seed, kLocalTag, std::uint64_t(a.index[std::size_t(r)]));
    std::vector<double> perms = conditional_lags(z, r, row, permutations, rng);
    for (auto& v : perms) v = z[r] * (v + row.self * z[r]) / m2;
    site.p_value = folded_pseudo_p(perms, ii);
    if (site.p_value > alpha || z[r] == 0.0 || lag == 0.0) continue;
    if (z[r] > 0.0) {
      site.label = lag > 0.0 ? "HH" : "HL";
    } else {
      site.label = lag < 0.0 ? "LL" : "LH";
    }
  }
  return out;
}

std::vector<SiteLabel> local_morans_i(const adjust::ScoreSurface& s, const SpatialWeights& w, int permutations,
                                      std::uint64_t seed, double alpha) {
  check_alignment(s, w);
  return local_morans_i(s.values, w, permutations, seed, alpha);
}

namespace {

// Gi* z-scores on the active part, with deviations d = x - mean.
Eigen::VectorXd gstar_active(const Active& a, const Eigen::VectorXd& d) {
  const auto n = double(d.size());
  const double s = std::sqrt(d.squaredNorm() / n);
  const Eigen::VectorXd num = a.w * d;
  Eigen::VectorXd out(d.size());
  for (Eigen::Index r = 0; r < d.size(); ++r) {
    const double wi = a.w.row(r).sum();
    const double w2 = a.w.row(r).cwiseAbs2().sum();
    const double var = (n * w2 - wi * wi) / (n - 1.0);
    out[r] = var > 0.0 ? num[r] / (s * std::sqrt(var)) : 0.0;
  }
  return out;
}

}  // namespace

Eigen::VectorXd gstar_z(VectorRef x, const SpatialWeights& w_star) {
  const Active a = active_part(x, w_star);
  const Eigen::VectorXd d = a.x.array() - a.x.mean();
  const Eigen::VectorXd za = gstar_active(a, d);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (std::size_t r = 0; r < a.index.size(); ++r) out[a.index[r]] = za[Eigen::Index(r)];
  return out;
}

std::vector<SiteLabel> getis_ord_gstar(VectorRef x, const SpatialWeights& w_star, const GstarOptions& options) {
  check_inference(options.permutations, options.alpha);
  if (!w_star.include_self) throw ConfigError("Gi* requires self-inclusive weights");
  const Active a = active_part(x, w_star);
  const Eigen::VectorXd d = a.x.array() - a.x.mean();
  const Eigen::VectorXd z = gstar_active(a, d);
  const double z_crit = stats::normal_quantile(1.0 - options.alpha / 2.0);

  std::vector<SiteLabel> out = blank_labels(w_star, "ns");
  for (Eigen::Index r = 0; r < z.size(); ++r) {
    SiteLabel& site = out[std::size_t(a.index[std::size_t(r)])];
    site.statistic = z[r];
    if (options.permutations == 0) {
      site.p_value = std::min(1.0, 2.0 * stats::normal_sf(std::fabs(z[r])));
      if (z[r] >= z_crit) {
        site.label = "hot";
      } else if (z[r] <= -z_crit) {
        site.label = "cold";
      }
      continue;
    }
    // Permuting neighbour values leaves the denominator fixed, so the
    // neighbour sum is an equivalent test statistic.
    const Row row = row_of(a.w, r);
    double observed = 0.0;
    for (std::size_t j = 0; j < row.cols.size(); ++j) observed += row.weights[j] * d[row.cols[j]];
    auto rng = substream(options.seed, kGstarTag, std::uint64_t(a.index[std::size_t(r)]));
    const std::vector<double> perms = conditional_lags(d, r, row, options.permutations, rng);
    site.p_value = folded_pseudo_p(perms, observed);
    if (site.p_value <= options.alpha) {
      if (z[r] > 0.0) site.label = "hot";
      if (z[r] < 0.0) site.label = "cold";
    }
  }
  return out;
}

std::vector<SiteLabel> getis_ord_gstar(const adjust::ScoreSurface& s, const SpatialWeights& w_star,
                                       const GstarOptions& options) {
  check_alignment(s, w_star);
  return getis_ord_gstar(s.values, w_star, options);
}

DifferenceAnalysis analyze_differences(const adjust::DiffSurface& diff, const SpatialWeights& w,
                                       const SpatialWeights& w_star, int permutations, std::uint64_t seed,
                                       double alpha, const GstarOptions& gstar_options) {
  DifferenceAnalysis out;
  out.global = morans_i(diff.surface, w, permutations, seed);
  out.local = local_morans_i(diff.surface, w, permutations, seed, alpha);
  out.gstar = getis_ord_gstar(diff.surface, w_star, gstar_options);
  return out;
}

std::string labels_csv(std::span<const SiteLabel> labels, std::span<const geo::LonLat> locations) {
  if (labels.size() != locations.size()) throw ValidationError("labels_csv: labels and locations differ in length");
  std::string out = "point_id,lon,lat,statistic,p_or_z,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string fields[] = {labels[i].point_id,          io::fmt(locations[i].lon, 15),
                                  io::fmt(locations[i].lat, 15), io::fmt(labels[i].statistic, 15),
                                  io::fmt(labels[i].p_value, 15), labels[i].label};
    out += io::csv_line(fields);
  }
  return out;
}

std::string labels_geojson(std::span<const SiteLabel> labels, std::span<const geo::LonLat> locations,
                           const std::string& name) {
  using nlohmann::json;
  if (labels.size() != locations.size()) {
    throw ValidationError("labels_geojson: labels and locations differ in length");
  }
  json features = json::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    features.push_back(
        {{"type", "Feature"},
         {"id", labels[i].point_id},
         {"geometry", {{"type", "Point"}, {"coordinates", {locations[i].lon, locations[i].lat}}}},
         {"properties",
          {{"statistic", labels[i].statistic}, {"p_or_z", labels[i].p_value}, {"label", labels[i].label}}}});
  }
  return json{{"type", "FeatureCollection"}, {"name", name}, {"features", features}}.dump(1) + "\n";
}

std::string palette_json() {
  const nlohmann::ordered_json p = {
      {"gstar", {{"hot", "red"}, {"cold", "blue"}, {"ns", "black"}}},
      {"local_moran", {{"HH", "red"}, {"LL", "blue"}, {"HL", "pink"}, {"LH", "lightblue"}, {"NS", "black"}}}};
  return p.dump(2) + "\n";
}

}  // namespace streetappeal::spatial
