#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace streetappeal::stats {

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// ---------------------------------------------------------------------------
// Distributions

double normal_cdf(double z);
/// Upper tail, accurate far into the tail.
double normal_sf(double z);
/// Inverse of normal_cdf (Wichura's AS 241), p in (0, 1).
double normal_quantile(double p);
/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided p-value for Student's t with df degrees of freedom.
double students_t_two_sided_p(double t, double df);

// ---------------------------------------------------------------------------
// Descriptive

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator; NaN for a single value
  double min = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double max = 0.0;
};

/// Quantile of sorted data by linear interpolation between closest ranks.
double quantile_sorted(VectorRef sorted, double q);

Summary summary_stats(VectorRef x);

/// Mid-ranks (1-based) with ties sharing their average rank.
Eigen::VectorXd midranks(VectorRef x);

// ---------------------------------------------------------------------------
// Tests

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
  std::vector<std::size_t> n;
};

/// Pearson r with a two-sided p from t = r sqrt((n-2)/(1-r^2)).
StatResult pearson(VectorRef x, VectorRef y);

enum class TVariant { pooled, welch };

/// Two-sided two-sample t-test; statistic is t for mean(x) - mean(y).
StatResult t_test_two_sample(VectorRef x, VectorRef y, TVariant variant = TVariant::pooled);

enum class WilcoxonMode { signed_rank, rank_sum };

/// Sample size at or below which the exact null distribution is used.
inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// signed_rank: paired x - y, zero differences dropped, statistic W+.
/// rank_sum: Mann-Whitney U of x. Exact conditional null distribution up to
/// kWilcoxonExactMaxN observations, otherwise normal approximation with tie
/// and continuity correction.
StatResult wilcoxon(VectorRef x, VectorRef y, WilcoxonMode mode);

/// Royston's AS R94 W statistic and p-value, 3 <= n <= 5000.
StatResult shapiro_wilk(VectorRef x);

std::string to_string(TVariant v);
std::string to_string(WilcoxonMode m);

}  // namespace streetappeal::stats
