#include "quantifair/stats.hpp"

#include <algorithm>
#include <cmath>

#include "quantifair/error.hpp"

namespace quantifair {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw_runtime("empty-input", "mean of nothing");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

namespace {

// Lentz continued fraction for the incomplete beta, after the classic
// numerical recipes formulation.
double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-14) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   betacf(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
  if (df <= 0.0) throw_runtime("invalid-df", "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return incomplete_beta(0.5 * df, 0.5, x);
}

double paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw_runtime("length-mismatch", "paired lists differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw_runtime("empty-input", "need at least two pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double m = mean_of(d);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) return m == 0.0 ? 1.0 : 0.0;
  const double t = m / std::sqrt(var / static_cast<double>(n));
  return student_t_two_tailed(t, static_cast<double>(n - 1));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw_runtime("empty-input", "quantile of nothing");
  if (sorted.size() == 1) return sorted[0];
  const double h = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - std::floor(h);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxplotStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw_runtime("empty-input", "boxplot of nothing");
  std::sort(values.begin(), values.end());
  BoxplotStats s;
  s.count = values.size();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = s.q3;
  s.whisker_hi = s.q1;
  bool any_in = false;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      if (!any_in) {
        s.whisker_lo = v;
        any_in = true;
      }
      s.whisker_hi = v;
    }
  }
  if (!any_in) {
    // Everything is an outlier only when IQR-based fences exclude the
    // quartiles themselves, which cannot happen; guard anyway.
    s.whisker_lo = s.median;
    s.whisker_hi = s.median;
  }
  return s;
}

}  // namespace quantifair
