#pragma once

// Noninteracting walkers in the same environment: single-particle invariant
// measures sigma with a prescribed flux, and the series criteria for when a
// positive solution with nonzero flux exists.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "asep/environment.hpp"
#include "asep/errors.hpp"
#include "asep/rng.hpp"
#include "asep/series.hpp"

namespace asep {

/// sigma on [lo, lo + size), with flux phi = p_i sigma_i - q_{i+1} sigma_{i+1}.
class SigmaProfile {
 public:
  SigmaProfile(int lo, int base, std::vector<double> sigma, double flux)
      : lo_(lo), base_(base), sigma_(std::move(sigma)), flux_(flux) {}

  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return lo_ + static_cast<int>(sigma_.size()) - 1; }
  int base_index() const noexcept { return base_; }
  double flux() const noexcept { return flux_; }
  std::size_t size() const noexcept { return sigma_.size(); }
  const std::vector<double>& values() const noexcept { return sigma_; }

  double sigma(int site) const {
    if (site < lo_ || site > hi()) throw std::out_of_range("site outside sigma profile");
    return sigma_[static_cast<std::size_t>(site - lo_)];
  }

  /// max over interior sites of |sigma_i - sigma_{i-1} p_{i-1} - sigma_{i+1} q_{i+1}|,
  /// each relative to the largest of the three terms.
  double invariance_residual(const Environment& env) const {
    double worst = 0;
    for (int i = lo_ + 1; i < hi(); ++i) {
      const double a = sigma(i), b = sigma(i - 1) * env.p(i - 1), c = sigma(i + 1) * env.q(i + 1);
      worst = std::max(worst, std::abs(a - b - c) / std::max({a, b, c}));
    }
    return worst;
  }

  /// max over bonds of |p_i sigma_i - q_{i+1} sigma_{i+1} - phi|, relative to
  /// the larger of the two terms.
  double flux_residual(const Environment& env) const {
    double worst = 0;
    for (int i = lo_; i < hi(); ++i) {
      const double a = env.p(i) * sigma(i), b = env.q(i + 1) * sigma(i + 1);
      worst = std::max(worst, std::abs(a - b - flux_) / std::max(a, b));
    }
    return worst;
  }

 private:
  int lo_;
  int base_;
  std::vector<double> sigma_;
  double flux_;
};

/// Site the recursion starts from: 0 when the window holds it, else lo.
inline int sigma_base(int lo, int hi) noexcept { return (lo <= 0 && 0 <= hi) ? 0 : lo; }

/// Steps sigma_{i+1} = (p_i sigma_i - phi)/q_{i+1} rightward and
/// sigma_{i-1} = (phi + q_i sigma_i)/p_{i-1} leftward from the base site.
inline SigmaProfile solve_sigma(const Environment& env, double phi, double sigma_at_base, int lo,
                                int hi) {
  if (lo > hi || !env.covers(lo, hi)) throw std::invalid_argument("window not inside environment");
  if (!(sigma_at_base > 0) || !std::isfinite(sigma_at_base))
    throw std::invalid_argument("sigma at base must be positive and finite");
  if (!std::isfinite(phi)) throw std::invalid_argument("phi must be finite");
  const int base = sigma_base(lo, hi);
  std::vector<double> s(static_cast<std::size_t>(hi - lo + 1));
  const auto at = [&](int i) -> double& { return s[static_cast<std::size_t>(i - lo)]; };
  const auto check = [](int i, double v) {
    if (!(v > 0)) throw NonpositiveSigmaError(i, v);
    if (!std::isfinite(v)) throw Error("sigma overflows double range at site " + std::to_string(i));
  };
  at(base) = sigma_at_base;
  for (int i = base; i < hi; ++i) {
    at(i + 1) = (env.p(i) * at(i) - phi) / env.q(i + 1);
    check(i + 1, at(i + 1));
  }
  for (int i = base; i > lo; --i) {
    at(i - 1) = (phi + env.q(i) * at(i)) / env.p(i - 1);
    check(i - 1, at(i - 1));
  }
  return SigmaProfile(lo, base, std::move(s), phi);
}

inline SigmaProfile solve_sigma(const Environment& env, double phi, double sigma_at_base) {
  return solve_sigma(env, phi, sigma_at_base, env.lo(), env.hi());
}

/// CSV "site,sigma" preceded by a "# phi=" comment.
inline void write_sigma_csv(std::ostream& os, const SigmaProfile& profile) {
  os << "# phi=" << detail::fmt17(profile.flux()) << " base=" << profile.base_index() << '\n';
  os << "site,sigma\n";
  for (int i = profile.lo(); i <= profile.hi(); ++i)
    os << i << ',' << detail::fmt17(profile.sigma(i)) << '\n';
}

// ---------------------------------------------------------------------------
// Series criterion

enum class FluxVerdict { positive_flux_exists, negative_flux_exists, both_exist, neither, both_diverge };

inline std::string_view to_string(FluxVerdict v) noexcept {
  switch (v) {
    case FluxVerdict::positive_flux_exists: return "positive_flux_exists";
    case FluxVerdict::negative_flux_exists: return "negative_flux_exists";
    case FluxVerdict::both_exist: return "both_exist";
    case FluxVerdict::neither: return "neither";
    case FluxVerdict::both_diverge: return "both_diverge";
  }
  return "?";
}

struct FluxCriterion {
  /// Partial sums of 1 + q_0/p_0 + q_0 q_1/(p_0 p_1) + ..., one per term.
  std::vector<double> positive_sum;
  /// Partial sums of 1 + p_0/q_0 + p_0 p_{-1}/(q_0 q_{-1}) + ...
  std::vector<double> negative_sum;
  series::Tail positive_tail;
  series::Tail negative_tail;
  FluxVerdict verdict;
};

inline constexpr int kMinCriterionSide = 32;

/// Both series from the environment window, terms built as running sums of
/// log ratios; the verdict reads which tail decays geometrically.
inline FluxCriterion criterion(const Environment& env) {
  if (env.lo() > -kMinCriterionSide || env.hi() < kMinCriterionSide)
    throw std::invalid_argument("criterion needs at least 32 sites on each side of 0");
  const auto log_terms = [&](int count, auto ratio) {
    std::vector<double> t(static_cast<std::size_t>(count));
    double acc = 0;
    for (int k = 0; k < count; ++k) {
      t[static_cast<std::size_t>(k)] = acc;
      if (k + 1 < count) acc += ratio(k);
    }
    return t;
  };
  const auto partial = [](const std::vector<double>& logs) {
    std::vector<double> out(logs.size());
    double acc = series::kNegInf;
    for (std::size_t k = 0; k < logs.size(); ++k) {
      acc = series::log_add(acc, logs[k]);
      out[k] = std::exp(acc);
    }
    return out;
  };
  // term k uses sites 0..k-1 (rightward) or 0..-(k-1) (leftward)
  const auto pos = log_terms(env.hi() + 2, [&](int j) { return std::log(env.q(j) / env.p(j)); });
  const auto neg = log_terms(-env.lo() + 2, [&](int j) { return std::log(env.p(-j) / env.q(-j)); });

  FluxCriterion c;
  c.positive_sum = partial(pos);
  c.negative_sum = partial(neg);
  c.positive_tail = series::tail_behavior(pos);
  c.negative_tail = series::tail_behavior(neg);
  using series::Tail;
  const bool p = c.positive_tail == Tail::decaying, n = c.negative_tail == Tail::decaying;
  if (p && n)
    c.verdict = FluxVerdict::both_exist;
  else if (p)
    c.verdict = FluxVerdict::positive_flux_exists;
  else if (n)
    c.verdict = FluxVerdict::negative_flux_exists;
  else if (c.positive_tail == Tail::growing && c.negative_tail == Tail::growing)
    c.verdict = FluxVerdict::both_diverge;
  else
    c.verdict = FluxVerdict::neither;
  return c;
}

inline constexpr int kWitnessGridSize = 16;
inline constexpr double kWitnessMinFlux = 1e-4;

/// Searches for a positive solution with phi > 0 on the whole window.
/// phi runs over 16 log-spaced values in [1e-4, mean(p) - mean(q)]; for each
/// phi, sigma_base = 1 is tried, then twice the minimal value
/// (phi/p_b)(1 + q_{b+1}/p_{b+1} + ...) summed to the right end.
inline std::optional<SigmaProfile> find_positive_flux_solution(const Environment& env) {
  double mean_p = 0;
  for (double v : env.probs()) mean_p += v;
  mean_p /= static_cast<double>(env.size());
  const double top = 2 * mean_p - 1;
  if (!(top > kWitnessMinFlux)) return std::nullopt;
  const int lo = env.lo(), hi = env.hi(), base = sigma_base(lo, hi);

  double log_s = 0, acc = 0;
  for (int j = base + 1; j <= hi; ++j) {
    acc += std::log(env.q(j) / env.p(j));
    log_s = series::log_add(log_s, acc);
  }
  for (int g = 0; g < kWitnessGridSize; ++g) {
    const double phi = std::exp(std::log(kWitnessMinFlux) +
                                (std::log(top) - std::log(kWitnessMinFlux)) * g /
                                    (kWitnessGridSize - 1));
    const double minimal = std::exp(std::log(phi) + log_s - std::log(env.p(base)));
    for (double start : {1.0, 2 * minimal}) {
      if (!std::isfinite(start) || !(start > 0)) continue;
      try {
        return solve_sigma(env, phi, start, lo, hi);
      } catch (const Error&) {
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sign of E log(p/q)

struct DriftEstimate {
  double mean;       // E log(p_0/q_0)
  double std_error;  // 0 when exact
  double ci_low;     // 95% interval
  double ci_high;
  int sign;          // +1, -1, or 0 when the interval holds 0
  bool exact;
};

inline constexpr std::size_t kMinDriftSamples = 1000;
inline constexpr std::uint64_t kDriftStream = 0xd41f7;

inline double log_odds(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// Closed form for two-point laws (point masses included); Monte Carlo with
/// a normal 95% interval otherwise.
inline DriftEstimate solomon_classify(const DistSpec& dist, std::size_t samples,
                                      std::uint64_t seed) {
  validate(dist);
  if (samples < kMinDriftSamples) throw std::invalid_argument("need at least 1000 samples");
  if (const auto* tp = std::get_if<TwoPoint>(&dist)) {
    const double mean = tp->prob_a * log_odds(tp->a) + (1 - tp->prob_a) * log_odds(tp->b);
    constexpr double kExactZero = 1e-14;
    const int sign = mean > kExactZero ? 1 : (mean < -kExactZero ? -1 : 0);
    return {mean, 0.0, mean, mean, sign, true};
  }
  CounterRng rng(seed, kDriftStream);
  double sum = 0, sum2 = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double v = log_odds(draw(dist, rng.uniform()));
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1));
  const double se = std::sqrt(var / n);
  const double lo = mean - 1.96 * se, hi = mean + 1.96 * se;
  return {mean, se, lo, hi, lo > 0 ? 1 : (hi < 0 ? -1 : 0), false};
}

}  // namespace asep
