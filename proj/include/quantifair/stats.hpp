#pragma once

#include <cstddef>
#include <vector>

namespace quantifair {

double mean_of(const std::vector<double>& v);
// Population standard deviation (normalized by n).
double stddev_of(const std::vector<double>& v);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

// Two-tailed p-value of Student's t with df degrees of freedom.
double student_t_two_tailed(double t, double df);

// Two-tailed paired t-test p-value. Lists must align pairwise and be equally
// long. Differences with zero variance give p = 1 when they are all zero and
// p = 0 otherwise (the infinite-statistic convention).
double paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Linear-interpolation quantile on sorted data (the common "type 7" rule).
double quantile_sorted(const std::vector<double>& sorted, double q);

struct BoxplotStats {
  std::size_t count = 0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;  // furthest points within 1.5*IQR
  std::vector<double> outliers;
};
BoxplotStats boxplot_stats(std::vector<double> values);

}  // namespace quantifair
