#pragma once

// Log-space helpers shared by the reversible-measure classification and the
// noninteracting flux criterion. Both need to judge, from a finite window,
// whether a series of positive terms behaves like a convergent one.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace asep::series {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// log(exp(a) + exp(b)).
inline double log_add(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline double log_sum(std::span<const double> log_terms) noexcept {
  double acc = kNegInf;
  for (double t : log_terms) acc = log_add(acc, t);
  return acc;
}

enum class Tail { decaying, flat, growing };

/// Ratio between the two halves of the outer quarter that counts as
/// geometric decay (or growth, inverted).
inline constexpr double kGeometricRatio = 0.5;

/// Tail terms smaller than this fraction of the whole partial sum count as
/// already converged.
inline constexpr double kNegligibleLog = -36.0;

/// Classifies the tail of a series given its log-terms ordered outward.
/// The outermost quarter is split into an inner half A and an outer half B;
/// the tail is decaying if sum(B) <= sum(A)/2, growing if sum(B) >= 2 sum(A).
inline Tail tail_behavior(std::span<const double> log_terms) noexcept {
  const std::size_t n = log_terms.size();
  const std::size_t quarter = std::max<std::size_t>(2, n / 4);
  if (n < quarter) return Tail::flat;
  const std::size_t half = quarter / 2;
  const auto tail = log_terms.subspan(n - quarter);
  const double a = log_sum(tail.first(half));
  const double b = log_sum(tail.last(half));
  const double total = log_sum(log_terms);
  const double log_ratio = std::log(kGeometricRatio);
  if (b == kNegInf || b - total <= kNegligibleLog) return Tail::decaying;
  if (b <= a + log_ratio) return Tail::decaying;
  if (b >= a - log_ratio) return Tail::growing;
  return Tail::flat;
}

}  // namespace asep::series
