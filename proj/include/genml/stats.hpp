#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace genml {

// Reference distribution for Wald statistics.
enum class Reference { normal, student_t };

namespace stats {

// Median; the average of the two central order statistics for even counts.
inline double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty sequence");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Variance with divisor n.
inline double population_variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

// Variance with divisor n - 1.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return population_variance(v) * static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
}

// Pearson correlation; zero when either side has no variance.
inline double correlation(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Two-sided p-value of a Wald statistic. df is ignored for the normal
// reference.
inline double two_sided_p(double stat, Reference ref, double df) {
  if (std::isinf(stat)) return 0.0;
  if (ref == Reference::normal || !(df > 0)) return std::erfc(std::fabs(stat) / std::sqrt(2.0));
  boost::math::students_t_distribution<double> t(df);
  return 2.0 * boost::math::cdf(boost::math::complement(t, std::fabs(stat)));
}

// Critical value c with P(|T| <= c) = 1 - alpha.
inline double critical_value(double alpha, Reference ref, double df) {
  if (ref == Reference::normal || !(df > 0)) return normal_quantile(1.0 - alpha / 2.0);
  boost::math::students_t_distribution<double> t(df);
  return boost::math::quantile(t, 1.0 - alpha / 2.0);
}

}  // namespace stats
}  // namespace genml
