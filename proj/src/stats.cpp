#include "streetappeal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "streetappeal/errors.hpp"

namespace streetappeal::stats {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

template <std::size_t N>
double horner(const double (&c)[N], double x) {
  double v = c[N - 1];
  for (std::size_t i = N - 1; i-- > 0;) v = v * x + c[i];
  return v;
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

// I_x(a, b) given both x and y = 1 - x, so callers can avoid cancellation.
double incomplete_beta_xy(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double bt = std::exp(log_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_continued_fraction(a, b, x) / a;
  return 1.0 - bt * beta_continued_fraction(b, a, y) / b;
}

Eigen::VectorXd sorted_copy(VectorRef x) {
  Eigen::VectorXd s = x;
  std::sort(s.data(), s.data() + s.size());
  return s;
}

void require_finite(VectorRef x, const char* what) {
  if (!x.allFinite()) throw ValidationError(std::string(what) + ": input contains non-finite values");
}

// Sum of t^3 - t over tie groups of already ranked data.
double tie_term(VectorRef values) {
  Eigen::VectorXd s = sorted_copy(values);
  double term = 0.0;
  for (Eigen::Index i = 0; i < s.size();) {
    Eigen::Index j = i + 1;
    while (j < s.size() && s[j] == s[i]) ++j;
    const double t = double(j - i);
    term += t * t * t - t;
    i = j;
  }
  return term;
}

// Two-sided p from the exact null counts of a doubled-rank statistic.
double exact_two_sided(const std::vector<double>& counts, long long observed2) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double lower = 0.0, upper = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (static_cast<long long>(s) <= observed2) lower += counts[s];
    if (static_cast<long long>(s) >= observed2) upper += counts[s];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_sf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ConfigError("normal_quantile: p outside [0, 1]");
  }
  static constexpr double a[] = {3.387132872796366608,  133.14166789178437745, 1971.5909503065514427,
                                 13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
                                 33430.575583588128105, 2509.0809287301226727};
  static constexpr double b[] = {1.0,
                                 42.313330701600911252,
                                 687.1870074920579083,
                                 5394.1960214247511077,
                                 21213.794301586595867,
                                 39307.89580009271061,
                                 28729.085735721942674,
                                 5226.495278852545925};
  static constexpr double c[] = {1.42343711074968357734,  4.6303378461565452959,   5.7694972214606914055,
                                 3.64784832476320460504,  1.27045825245236838258,  0.24178072517745061177,
                                 0.0227238449892691845833, 7.7454501427834140764e-4};
  static constexpr double d[] = {1.0,
                                 2.05319162663775882187,
                                 1.6763848301838038494,
                                 0.68976733498510000455,
                                 0.14810397642748007459,
                                 0.0151986665636164571966,
                                 5.475938084995344946e-4,
                                 1.05075007164441684324e-9};
  static constexpr double e[] = {6.6579046435011037772,   5.4637849111641143699,    1.7848265399172913358,
                                 0.29656057182850489123,  0.026532189526576123093,  0.0012426609473880784386,
                                 2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[] = {1.0,
                                 0.59983220655588793769,
                                 0.13692988092273580531,
                                 0.0148753612908506148525,
                                 7.868691311456132591e-4,
                                 1.8463183175100546818e-5,
                                 1.4215117583164458887e-7,
                                 2.04426310338993978564e-15};
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(a, r) / horner(b, r);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = horner(c, r) / horner(d, r);
  } else {
    r -= 5.0;
    v = horner(e, r) / horner(f, r);
  }
  return q < 0.0 ? -v : v;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ConfigError("incomplete_beta: a and b must be positive");
  if (x < 0.0 || x > 1.0) throw ConfigError("incomplete_beta: x outside [0, 1]");
  return incomplete_beta_xy(a, b, x, 1.0 - x);
}

double students_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("students_t: df must be positive");
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  return std::clamp(incomplete_beta_xy(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2)), 0.0, 1.0);
}

double quantile_sorted(VectorRef sorted, double q) {
  const auto n = sorted.size();
  if (n == 0) throw ValidationError("quantile of empty data");
  const double h = q * double(n - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, n - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summary_stats(VectorRef x) {
  if (x.size() == 0) throw ValidationError("summary_stats: empty input");
  require_finite(x, "summary_stats");
  const Eigen::VectorXd s = sorted_copy(x);
  Summary out;
  out.n = std::size_t(x.size());
  out.mean = x.mean();
  out.std = x.size() > 1 ? std::sqrt((x.array() - out.mean).square().sum() / double(x.size() - 1))
                         : std::numeric_limits<double>::quiet_NaN();
  out.min = s[0];
  out.max = s[s.size() - 1];
  out.q25 = quantile_sorted(s, 0.25);
  out.q50 = quantile_sorted(s, 0.50);
  out.q75 = quantile_sorted(s, 0.75);
  return out;
}

Eigen::VectorXd midranks(VectorRef x) {
  const auto n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i + 1;
    while (j < n && x[order[std::size_t(j)]] == x[order[std::size_t(i)]]) ++j;
    const double r = 0.5 * double(i + j + 1);  // average of 1-based ranks i+1..j
    for (Eigen::Index k = i; k < j; ++k) ranks[order[std::size_t(k)]] = r;
    i = j;
  }
  return ranks;
}

StatResult pearson(VectorRef x, VectorRef y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  if (x.size() < 3) throw ValidationError("pearson: need at least 3 pairs");
  require_finite(x, "pearson");
  require_finite(y, "pearson");
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double sxx = dx.square().sum(), syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson: constant input, correlation undefined");
  const double r = std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = double(x.size() - 2);
  StatResult out;
  out.statistic = r;
  out.method = "pearson";
  out.n = {std::size_t(x.size())};
  if (std::fabs(r) >= 1.0) {
    out.p_value = 0.0;
  } else {
    out.p_value = students_t_two_sided_p(r * std::sqrt(df / (1.0 - r * r)), df);
  }
  return out;
}

StatResult t_test_two_sample(VectorRef x, VectorRef y, TVariant variant) {
  if (x.size() < 2 || y.size() < 2) throw ValidationError("t-test: each sample needs at least 2 values");
  require_finite(x, "t-test");
  require_finite(y, "t-test");
  const double n1 = double(x.size()), n2 = double(y.size());
  const double m1 = x.mean(), m2 = y.mean();
  const double v1 = (x.array() - m1).square().sum() / (n1 - 1.0);
  const double v2 = (y.array() - m2).square().sum() / (n2 - 1.0);
  StatResult out;
  out.method = variant == TVariant::pooled ? "t-test (pooled)" : "t-test (welch)";
  out.n = {x.size() > 0 ? std::size_t(x.size()) : 0, std::size_t(y.size())};
  if (v1 == 0.0 && v2 == 0.0) {
    if (m1 != m2) throw ValidationError("t-test: zero variance in both samples with different means");
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  double se2, df;
  if (variant == TVariant::pooled) {
    df = n1 + n2 - 2.0;
    const double sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / df;
    se2 = sp2 * (1.0 / n1 + 1.0 / n2);
  } else {
    const double a = v1 / n1, b = v2 / n2;
    se2 = a + b;
    df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
  }
  out.statistic = (m1 - m2) / std::sqrt(se2);
  out.p_value = students_t_two_sided_p(out.statistic, df);
  return out;
}

StatResult wilcoxon(VectorRef x, VectorRef y, WilcoxonMode mode) {
  require_finite(x, "wilcoxon");
  require_finite(y, "wilcoxon");
  StatResult out;
  out.method = "wilcoxon " + to_string(mode);

  if (mode == WilcoxonMode::signed_rank) {
    if (x.size() != y.size()) throw ValidationError("wilcoxon signed_rank: samples must be paired");
    std::vector<double> diffs;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw ValidationError("wilcoxon signed_rank: degenerate pairing, all differences are zero");
    const Eigen::Map<const Eigen::VectorXd> d(diffs.data(), Eigen::Index(diffs.size()));
    const Eigen::VectorXd abs_d = d.cwiseAbs();
    const Eigen::VectorXd ranks = midranks(abs_d);
    double w_plus = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d[i] > 0.0) w_plus += ranks[i];
    }
    const double n = double(d.size());
    out.statistic = w_plus;
    out.n = {std::size_t(x.size()), diffs.size()};

    if (diffs.size() <= kWilcoxonExactMaxN) {
      // Null: each doubled rank enters the sum with probability 1/2.
      long long total2 = 0;
      for (Eigen::Index i = 0; i < ranks.size(); ++i) total2 += std::llround(2.0 * ranks[i]);
      std::vector<double> counts(std::size_t(total2) + 1, 0.0);
      counts[0] = 1.0;
      long long reach = 0;
      for (Eigen::Index i = 0; i < ranks.size(); ++i) {
        const long long r2 = std::llround(2.0 * ranks[i]);
        for (long long s = reach; s >= 0; --s) counts[std::size_t(s + r2)] += counts[std::size_t(s)];
        reach += r2;
      }
      out.p_value = exact_two_sided(counts, std::llround(2.0 * w_plus));
      out.method += " (exact)";
      return out;
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(abs_d) / 48.0;
    if (!(var > 0.0)) {
      out.p_value = 1.0;
      return out;
    }
    double dev = w_plus - mean;
    dev -= 0.5 * ((dev > 0.0) - (dev < 0.0));
    out.p_value = std::min(1.0, 2.0 * normal_sf(std::fabs(dev / std::sqrt(var))));
    out.method += " (normal approx.)";
    return out;
  }

  const auto n1 = x.size(), n2 = y.size();
  if (n1 < 1 || n2 < 1) throw ValidationError("wilcoxon rank_sum: both samples must be non-empty");
  Eigen::VectorXd pooled(n1 + n2);
  pooled << x, y;
  const Eigen::VectorXd ranks = midranks(pooled);
  const double r1 = ranks.head(n1).sum();
  const double u1 = r1 - double(n1) * double(n1 + 1) / 2.0;
  out.statistic = u1;
  out.n = {std::size_t(n1), std::size_t(n2)};

  const auto big_n = n1 + n2;
  if (std::size_t(big_n) <= kWilcoxonExactMaxN) {
    // counts[k][s]: ways to pick k of the pooled doubled ranks summing to s.
    long long total2 = 0;
    for (Eigen::Index i = 0; i < big_n; ++i) total2 += std::llround(2.0 * ranks[i]);
    std::vector<std::vector<double>> counts(std::size_t(n1) + 1, std::vector<double>(std::size_t(total2) + 1, 0.0));
    counts[0][0] = 1.0;
    for (Eigen::Index i = 0; i < big_n; ++i) {
      const long long r2 = std::llround(2.0 * ranks[i]);
      for (auto k = std::min<Eigen::Index>(n1, i + 1); k >= 1; --k) {
        auto& cur = counts[std::size_t(k)];
        const auto& prev = counts[std::size_t(k - 1)];
        for (long long s = total2; s >= r2; --s) cur[std::size_t(s)] += prev[std::size_t(s - r2)];
      }
    }
    out.p_value = exact_two_sided(counts[std::size_t(n1)], std::llround(2.0 * r1));
    out.method += " (exact)";
    return out;
  }
  const double a = double(n1), b = double(n2), nn = double(big_n);
  const double mu = a * b / 2.0;
  const double var = a * b / 12.0 * ((nn + 1.0) - tie_term(pooled) / (nn * (nn - 1.0)));
  if (!(var > 0.0)) {
    out.p_value = 1.0;
    return out;
  }
  const double z = (std::fabs(u1 - mu) - 0.5) / std::sqrt(var);
  out.p_value = std::min(1.0, 2.0 * normal_sf(z));
  out.method += " (normal approx.)";
  return out;
}

StatResult shapiro_wilk(VectorRef x_in) {
  const auto n = x_in.size();
  if (n < 3 || n > 5000) throw ValidationError("shapiro_wilk: n must be in [3, 5000], got " + std::to_string(n));
  require_finite(x_in, "shapiro_wilk");
  const Eigen::VectorXd x = sorted_copy(x_in);
  const double range = x[n - 1] - x[0];
  if (!(range > 0.0)) throw ValidationError("shapiro_wilk: zero variance input");

  static constexpr double g[] = {-2.273, 0.459};
  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};

  const double an = double(n);
  const Eigen::Index half = n / 2;
  // Coefficients for the upper half of the order statistics, largest first.
  Eigen::VectorXd a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    Eigen::VectorXd m(half);
    for (Eigen::Index i = 0; i < half; ++i) m[i] = normal_quantile((double(i + 1) - 0.375) / (an + 0.25));
    const double summ2 = 2.0 * m.squaredNorm();
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = horner(c1, rsn) - m[0] / ssumm2;
    Eigen::Index first_scaled;
    double fac;
    if (n > 5) {
      const double a2 = -m[1] / ssumm2 + horner(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
      first_scaled = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
      first_scaled = 1;
    }
    a[0] = a1;
    for (Eigen::Index i = first_scaled; i < half; ++i) a[i] = -m[i] / fac;
  }

  // Full antisymmetric coefficient vector against ascending order statistics.
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < half; ++i) {
    coef[i] = -a[i];
    coef[n - 1 - i] = a[i];
  }
  const Eigen::ArrayXd xs = (x.array() - x[0]) / range;
  const Eigen::ArrayXd dx = xs - xs.mean();
  const Eigen::ArrayXd da = coef.array() - coef.mean();
  const double ssa = da.square().sum(), ssx = dx.square().sum(), sax = (da * dx).sum();
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  const double w = std::min(1.0, 1.0 - w1);

  StatResult out;
  out.statistic = w;
  out.method = "shapiro-wilk";
  out.n = {std::size_t(n)};
  if (n == 3) {
    constexpr double pi6 = 1.90985931710274, stqr = 1.04719755119660;
    out.p_value = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
    return out;
  }
  double y = std::log(w1);
  const double lxx = std::log(an);
  double mean, sd;
  if (n <= 11) {
    const double gamma = horner(g, an);
    if (y >= gamma) {
      out.p_value = 1e-99;
      return out;
    }
    y = -std::log(gamma - y);
    mean = horner(c3, an);
    sd = std::exp(horner(c4, an));
  } else {
    mean = horner(c5, lxx);
    sd = std::exp(horner(c6, lxx));
  }
  out.p_value = std::clamp(normal_sf((y - mean) / sd), 0.0, 1.0);
  return out;
}

std::string to_string(TVariant v) { return v == TVariant::pooled ? "pooled" : "welch"; }

std::string to_string(WilcoxonMode m) { return m == WilcoxonMode::signed_rank ? "signed_rank" : "rank_sum"; }

}  // namespace streetappeal::stats
