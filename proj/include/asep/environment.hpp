#pragma once

// Jump-probability environments {p_i} on closed integer windows, the
// reversible product-measure profile they induce, and a finite-window
// diagnosis of which family of reversible measures is extremal.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "asep/errors.hpp"
#include "asep/rng.hpp"
#include "asep/series.hpp"

namespace asep {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool open_unit(double v) noexcept { return v > 0.0 && v < 1.0; }

inline double parse_double(std::string_view s) {
  std::string tmp(s);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tmp, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != tmp.size())
    throw std::invalid_argument("not a number: '" + tmp + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s) {
  std::string tmp(s);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(tmp, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != tmp.size())
    throw std::invalid_argument("not an integer: '" + tmp + "'");
  return v;
}

inline std::string_view trim(std::string_view s) noexcept {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

/// Splits "a,b,c" on top-level commas (parentheses nest); pieces are trimmed.
inline std::vector<std::string_view> split_args(std::string_view s) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

/// "name(args)" -> {name, args}; throws if the shape is wrong.
inline std::pair<std::string_view, std::string_view> split_call(std::string_view s) {
  const auto open = s.find('(');
  if (open == std::string_view::npos || s.empty() || s.back() != ')')
    throw std::invalid_argument("malformed tag: '" + std::string(s) + "'");
  return {s.substr(0, open), s.substr(open + 1, s.size() - open - 2)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Disorder distributions

/// a with probability prob_a, b otherwise.
struct TwoPoint {
  double a;
  double b;
  double prob_a = 0.5;
};

/// Uniform on [a, b).
struct Uniform {
  double a;
  double b;
};

using DistSpec = std::variant<TwoPoint, Uniform>;

inline DistSpec point_mass(double p) { return TwoPoint{p, p, 1.0}; }

/// Throws unless the support lies strictly inside (0,1).
inline void validate(const DistSpec& dist) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if (!detail::open_unit(d.a) || !detail::open_unit(d.b))
          throw std::invalid_argument("distribution support must lie inside (0,1)");
        if constexpr (std::is_same_v<T, TwoPoint>) {
          if (!(d.prob_a >= 0.0 && d.prob_a <= 1.0))
            throw std::invalid_argument("two-point weight must lie in [0,1]");
        } else {
          if (!(d.a < d.b)) throw std::invalid_argument("uniform(a,b) needs a < b");
        }
      },
      dist);
}

/// Inverse-CDF draw from a uniform variate u in [0,1).
inline double draw(const DistSpec& dist, double u) {
  return std::visit(
      [u](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, TwoPoint>)
          return u < d.prob_a ? d.a : d.b;
        else
          return d.a + (d.b - d.a) * u;
      },
      dist);
}

inline std::string to_string(const DistSpec& dist) {
  return std::visit(
      [](const auto& d) -> std::string {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, TwoPoint>)
          return "two-point(" + detail::fmt17(d.a) + "," + detail::fmt17(d.b) + "," +
                 detail::fmt17(d.prob_a) + ")";
        else
          return "uniform(" + detail::fmt17(d.a) + "," + detail::fmt17(d.b) + ")";
      },
      dist);
}

/// Parses "two-point(a,b[,prob_a])", "uniform(a,b)" or "point(p)".
inline DistSpec parse_dist(std::string_view text) {
  const auto [name, args_text] = detail::split_call(text);
  const auto args = detail::split_args(args_text);
  DistSpec dist;
  if (name == "two-point" && (args.size() == 2 || args.size() == 3)) {
    dist = TwoPoint{detail::parse_double(args[0]), detail::parse_double(args[1]),
                    args.size() == 3 ? detail::parse_double(args[2]) : 0.5};
  } else if (name == "uniform" && args.size() == 2) {
    dist = Uniform{detail::parse_double(args[0]), detail::parse_double(args[1])};
  } else if (name == "point" && args.size() == 1) {
    dist = point_mass(detail::parse_double(args[0]));
  } else {
    throw std::invalid_argument("unknown distribution: '" + std::string(text) + "'");
  }
  validate(dist);
  return dist;
}

// ---------------------------------------------------------------------------
// Environment

struct Deterministic {};
struct Periodic {
  double alpha;
  double beta;
};
struct Iid {
  DistSpec dist;
  std::uint64_t seed;
};

using EnvSource = std::variant<Deterministic, Periodic, Iid>;

inline std::string to_string(const EnvSource& source) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Deterministic>)
          return "deterministic";
        else if constexpr (std::is_same_v<T, Periodic>)
          return "periodic(" + detail::fmt17(s.alpha) + "," + detail::fmt17(s.beta) + ")";
        else
          return "iid(" + to_string(s.dist) + ",seed=" + std::to_string(s.seed) + ")";
      },
      source);
}

inline EnvSource parse_source(std::string_view text) {
  if (text == "deterministic") return Deterministic{};
  const auto [name, args_text] = detail::split_call(text);
  const auto args = detail::split_args(args_text);
  if (name == "periodic" && args.size() == 2)
    return Periodic{detail::parse_double(args[0]), detail::parse_double(args[1])};
  if (name == "iid" && args.size() == 2 && args[1].starts_with("seed=")) {
    const auto seed = args[1].substr(5);
    std::string tmp(seed);
    std::size_t used = 0;
    const auto value = std::stoull(tmp, &used);
    if (used != tmp.size()) throw std::invalid_argument("bad seed: " + tmp);
    return Iid{parse_dist(args[0]), value};
  }
  throw std::invalid_argument("unknown environment source: '" + std::string(text) + "'");
}

/// Jump-right probabilities p_i on the closed window [lo, hi]. q_i = 1 - p_i
/// is always derived. Immutable once built.
class Environment {
 public:
  Environment(int lo, std::vector<double> probs, EnvSource source = Deterministic{})
      : lo_(lo), probs_(std::move(probs)), source_(std::move(source)) {
    if (probs_.empty()) throw std::invalid_argument("environment window is empty");
    for (std::size_t k = 0; k < probs_.size(); ++k) {
      if (!detail::open_unit(probs_[k]))
        throw std::invalid_argument("p at site " + std::to_string(lo_ + static_cast<int>(k)) +
                                    " is outside (0,1): " + detail::fmt17(probs_[k]));
    }
  }

  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return lo_ + static_cast<int>(probs_.size()) - 1; }
  std::size_t size() const noexcept { return probs_.size(); }
  bool contains(int site) const noexcept { return site >= lo() && site <= hi(); }
  bool covers(int lo, int hi) const noexcept { return contains(lo) && contains(hi); }

  double p(int site) const {
    if (!contains(site))
      throw std::out_of_range("site " + std::to_string(site) + " outside environment [" +
                              std::to_string(lo()) + "," + std::to_string(hi()) + "]");
    return probs_[static_cast<std::size_t>(site - lo_)];
  }
  double q(int site) const { return 1.0 - p(site); }

  std::span<const double> probs() const noexcept { return probs_; }
  const EnvSource& source() const noexcept { return source_; }

  /// Sub-window [lo, hi]; keeps the source tag.
  Environment restrict(int lo, int hi) const {
    if (lo > hi || !covers(lo, hi))
      throw std::out_of_range("restriction window not inside environment");
    return Environment(lo, {probs_.begin() + (lo - lo_), probs_.begin() + (hi - lo_ + 1)},
                       source_);
  }

  /// Copy with p at `site` replaced. The result is tagged deterministic.
  Environment with_p(int site, double value) const {
    auto probs = probs_;
    probs.at(static_cast<std::size_t>(site - lo_)) = value;
    return Environment(lo_, std::move(probs));
  }

  friend bool operator==(const Environment& a, const Environment& b) {
    return a.lo_ == b.lo_ && a.probs_ == b.probs_;
  }

 private:
  int lo_;
  std::vector<double> probs_;
  EnvSource source_;
};

/// Every p raised by `delta`; throws if a value leaves (0,1). Tagged deterministic.
inline Environment shifted(const Environment& env, double delta) {
  std::vector<double> probs(env.probs().begin(), env.probs().end());
  for (double& v : probs) v += delta;
  return Environment(env.lo(), std::move(probs));
}

inline Environment make_homogeneous(double p, int lo, int hi) {
  if (lo > hi) throw std::invalid_argument("lo > hi");
  return Environment(lo, std::vector<double>(static_cast<std::size_t>(hi - lo + 1), p));
}

/// p_i = alpha at even sites, beta at odd sites (absolute parity).
inline Environment make_periodic(double alpha, double beta, int lo, int hi) {
  if (!detail::open_unit(alpha) || !detail::open_unit(beta))
    throw std::invalid_argument("periodic parameters must lie in (0,1)");
  if (lo > hi) throw std::invalid_argument("lo > hi");
  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int i = lo; i <= hi; ++i) probs.push_back(i % 2 == 0 ? alpha : beta);
  return Environment(lo, std::move(probs), Periodic{alpha, beta});
}

/// The draw at site i is keyed by (seed, i) only, so any two windows agree on
/// their overlap.
inline double iid_site_value(const DistSpec& dist, std::uint64_t seed, int site) {
  const auto key = static_cast<std::uint64_t>(static_cast<std::int64_t>(site));
  return draw(dist, to_unit(hash_key(seed, 0x5eed5173ULL, key)));
}

inline Environment make_iid(const DistSpec& dist, std::uint64_t seed, int lo, int hi) {
  validate(dist);
  if (lo > hi) throw std::invalid_argument("lo > hi");
  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int i = lo; i <= hi; ++i) probs.push_back(iid_site_value(dist, seed, i));
  return Environment(lo, std::move(probs), Iid{dist, seed});
}

/// Text record: "# env lo=<int> hi=<int> source=<tag>" then "<site> <p>" lines
/// at 17 significant digits.
inline void write_environment(std::ostream& os, const Environment& env) {
  os << "# env lo=" << env.lo() << " hi=" << env.hi() << " source=" << to_string(env.source())
     << '\n';
  for (int i = env.lo(); i <= env.hi(); ++i) os << i << ' ' << detail::fmt17(env.p(i)) << '\n';
}

inline Environment read_environment(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || !line.starts_with("# env "))
    throw std::invalid_argument("missing '# env' header");
  std::istringstream header(line.substr(6));
  std::string field;
  std::optional<int> lo, hi;
  EnvSource source = Deterministic{};
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad header field: " + field);
    const std::string_view key(field.data(), eq);
    const std::string_view value(field.data() + eq + 1, field.size() - eq - 1);
    if (key == "lo")
      lo = static_cast<int>(detail::parse_int(value));
    else if (key == "hi")
      hi = static_cast<int>(detail::parse_int(value));
    else if (key == "source")
      source = parse_source(value);
    else
      throw std::invalid_argument("unknown header field: " + field);
  }
  if (!lo || !hi || *hi < *lo) throw std::invalid_argument("header needs lo <= hi");
  std::vector<double> probs;
  int expected = *lo;
  while (std::getline(is, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream row(line);
    std::string site, value;
    if (!(row >> site >> value)) throw std::invalid_argument("bad row: " + line);
    if (detail::parse_int(site) != expected)
      throw std::invalid_argument("site out of order: " + line);
    probs.push_back(detail::parse_double(value));
    ++expected;
  }
  if (expected != *hi + 1) throw std::invalid_argument("row count does not match header");
  return Environment(*lo, std::move(probs), std::move(source));
}

// ---------------------------------------------------------------------------
// Reversible product-measure profile

/// pi_i with pi_i p_i = pi_{i+1} q_{i+1}, stored as log pi; alpha_i =
/// pi_i / (1 + pi_i). Values are exponentiated on demand.
class PiProfile {
 public:
  PiProfile(int lo, int base_index, std::vector<double> log_pi)
      : lo_(lo), base_(base_index), log_pi_(std::move(log_pi)) {}

  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return lo_ + static_cast<int>(log_pi_.size()) - 1; }
  int base_index() const noexcept { return base_; }
  std::size_t size() const noexcept { return log_pi_.size(); }
  bool contains(int site) const noexcept { return site >= lo() && site <= hi(); }

  double log_pi(int site) const { return log_pi_.at(index(site)); }
  std::span<const double> log_pi() const noexcept { return log_pi_; }

  double pi(int site) const {
    const double v = std::exp(log_pi(site));
    if (!std::isfinite(v)) throw PiOverflowError(site);
    return v;
  }
  double alpha(int site) const { return 1.0 / (1.0 + std::exp(-log_pi(site))); }
  double one_minus_alpha(int site) const { return 1.0 / (1.0 + std::exp(log_pi(site))); }

  /// All pi values; throws PiOverflowError naming the first site that overflows.
  std::vector<double> pi_values() const {
    std::vector<double> out;
    out.reserve(size());
    for (int i = lo(); i <= hi(); ++i) out.push_back(pi(i));
    return out;
  }
  std::vector<double> alpha_values() const {
    std::vector<double> out;
    out.reserve(size());
    for (int i = lo(); i <= hi(); ++i) out.push_back(alpha(i));
    return out;
  }

 private:
  std::size_t index(int site) const {
    if (!contains(site)) throw std::out_of_range("site " + std::to_string(site) + " outside profile");
    return static_cast<std::size_t>(site - lo_);
  }

  int lo_;
  int base_;
  std::vector<double> log_pi_;
};

/// Default anchor: site 0 when the window contains it, else the left end.
inline int default_base(const Environment& env) noexcept {
  return env.contains(0) ? 0 : env.lo();
}

inline PiProfile pi_profile(const Environment& env, double pi0, int base) {
  if (!(pi0 > 0.0) || !std::isfinite(pi0)) throw std::invalid_argument("pi0 must be positive");
  if (!env.contains(base)) throw std::out_of_range("base site outside environment");
  std::vector<double> log_pi(env.size());
  const auto at = [&](int i) -> double& { return log_pi[static_cast<std::size_t>(i - env.lo())]; };
  at(base) = std::log(pi0);
  for (int i = base; i < env.hi(); ++i)
    at(i + 1) = at(i) + std::log(env.p(i)) - std::log(env.q(i + 1));
  for (int i = base; i > env.lo(); --i)
    at(i - 1) = at(i) + std::log(env.q(i)) - std::log(env.p(i - 1));
  return PiProfile(env.lo(), base, std::move(log_pi));
}

inline PiProfile pi_profile(const Environment& env, double pi0 = 1.0) {
  return pi_profile(env, pi0, default_base(env));
}

// ---------------------------------------------------------------------------
// Regime classification

enum class RegimeCase { product_extremal, blocking_left, blocking_right, blocking_two_sided };

inline std::string_view to_string(RegimeCase c) noexcept {
  switch (c) {
    case RegimeCase::product_extremal: return "product_extremal";
    case RegimeCase::blocking_left: return "blocking_left";
    case RegimeCase::blocking_right: return "blocking_right";
    case RegimeCase::blocking_two_sided: return "blocking_two_sided";
  }
  return "?";
}

struct RegimeClassification {
  bool divergent;
  RegimeCase case_tag;
  double sum_variance;        // sum alpha(1-alpha)
  double sum_alpha;           // sum alpha
  double sum_one_minus_alpha; // sum (1-alpha)
};

inline constexpr double kDefaultTailThreshold = 10.0;
inline constexpr std::size_t kMinClassifySites = 16;

/// Finite-window diagnosis of sum alpha(1-alpha) = infinity.
///
/// divergent iff the window partial sum exceeds `tail_threshold` and the
/// outer-quarter terms on the two sides are not both geometrically decaying.
/// Otherwise the blocking case is picked from which of sum alpha and
/// sum (1-alpha) decays on both sides.
inline RegimeClassification classify(const PiProfile& profile,
                                     double tail_threshold = kDefaultTailThreshold) {
  if (profile.size() < kMinClassifySites)
    throw std::invalid_argument("classification needs at least 16 sites");

  const std::size_t n = profile.size();
  const auto lp = profile.log_pi();
  // log alpha = -softplus(-l), log(1-alpha) = -softplus(l).
  std::vector<double> log_a(n), log_b(n), log_v(n);
  for (std::size_t k = 0; k < n; ++k) {
    log_a[k] = -series::softplus(-lp[k]);
    log_b[k] = -series::softplus(lp[k]);
    log_v[k] = log_a[k] + log_b[k];
  }

  // Sides split at the window midpoint; terms are read outward.
  const std::size_t mid = n / 2;
  const auto side = [&](const std::vector<double>& v, bool left) {
    std::vector<double> out;
    if (left)
      out.assign(v.rbegin() + static_cast<std::ptrdiff_t>(n - mid), v.rend());
    else
      out.assign(v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return out;
  };
  const auto decays = [&](const std::vector<double>& v, bool left) {
    return series::tail_behavior(side(v, left)) == series::Tail::decaying;
  };

  RegimeClassification r{};
  r.sum_variance = std::exp(series::log_sum(log_v));
  r.sum_alpha = std::exp(series::log_sum(log_a));
  r.sum_one_minus_alpha = std::exp(series::log_sum(log_b));

  const bool variance_tails_decay = decays(log_v, true) && decays(log_v, false);
  r.divergent = r.sum_variance > tail_threshold && !variance_tails_decay;
  if (r.divergent)
    r.case_tag = RegimeCase::product_extremal;
  else if (decays(log_a, true) && decays(log_a, false))
    r.case_tag = RegimeCase::blocking_left;
  else if (decays(log_b, true) && decays(log_b, false))
    r.case_tag = RegimeCase::blocking_right;
  else
    r.case_tag = RegimeCase::blocking_two_sided;
  return r;
}

}  // namespace asep
