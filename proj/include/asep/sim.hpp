#pragma once

// Event-driven Monte Carlo of the boundary-driven chain and of the monotone
// coupling of two chains with ordered environments.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "asep/environment.hpp"
#include "asep/exact.hpp"
#include "asep/rng.hpp"

namespace asep {

enum class EventKind { right, left, inject, extract, joint, prime_only, plain_only };

inline std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::right: return "right";
    case EventKind::left: return "left";
    case EventKind::inject: return "inject";
    case EventKind::extract: return "extract";
    case EventKind::joint: return "joint";
    case EventKind::prime_only: return "prime-only";
    case EventKind::plain_only: return "plain-only";
  }
  return "?";
}

/// `site` is the bond (site, site+1) the move crosses; m-1 for injection and
/// n for extraction.
struct Event {
  double time;
  int site;
  EventKind kind;
};

using EventSink = std::function<void(const Event&)>;

/// Returns a sink that writes "time,site,kind" rows (header included).
inline EventSink csv_event_log(std::ostream& os) {
  os << "time,site,kind\n";
  return [&os](const Event& e) {
    os << detail::fmt17(e.time) << ',' << e.site << ',' << to_string(e.kind) << '\n';
  };
}

// ---------------------------------------------------------------------------
// Single chain

/// Net crossing counters over the bonds m-1..n: entry 0 counts injections,
/// the last entry extractions, the rest net rightward crossings.
class Crossings {
 public:
  Crossings() = default;
  Crossings(int m, int n) : first_(m - 1), counts_(static_cast<std::size_t>(n - m + 2), 0) {}

  std::int64_t at(int bond) const { return counts_.at(index(bond)); }
  void add(int bond, std::int64_t delta) { counts_.at(index(bond)) += delta; }
  int first_bond() const noexcept { return first_; }
  int last_bond() const noexcept { return first_ + static_cast<int>(counts_.size()) - 1; }

 private:
  std::size_t index(int bond) const {
    if (bond < first_ || bond > last_bond()) throw std::out_of_range("bond outside chain");
    return static_cast<std::size_t>(bond - first_);
  }
  int first_ = 0;
  std::vector<std::int64_t> counts_;
};

/// Snapshot of a single-chain run.
struct Trajectory {
  ChainSpec spec;
  std::uint64_t seed;
  double time;
  State config;
  Crossings crossings;
  std::vector<double> occupation_time;  // per site m..n
  std::uint64_t events;
};

inline constexpr std::uint64_t kChainStream = 1;
inline constexpr std::uint64_t kCoupledStream = 2;

class ChainSimulator {
 public:
  ChainSimulator(ChainSpec spec, std::uint64_t seed, State initial = 0)
      : spec_(std::move(spec)),
        seed_(seed),
        rng_(seed, kChainStream),
        state_(initial),
        crossings_(spec_.m, spec_.n),
        occupation_(static_cast<std::size_t>(spec_.length()), 0.0) {
    if (initial >> spec_.length()) throw std::invalid_argument("initial state wider than chain");
    schedule();
  }

  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }

  double time() const noexcept { return time_; }
  State state() const noexcept { return state_; }
  const Crossings& crossings() const noexcept { return crossings_; }
  std::uint64_t events() const noexcept { return events_; }
  const ChainSpec& spec() const noexcept { return spec_; }
  double occupation_time(int site) const { return occupation_.at(static_cast<std::size_t>(site - spec_.m)); }

  /// Runs every event with time <= t, then sets the clock to t.
  void advance_to(double t) {
    while (next_time_ <= t) {
      accumulate(next_time_);
      fire();
      schedule();
    }
    if (t > time_) accumulate(t);
  }

  Trajectory snapshot() const {
    return {spec_, seed_, time_, state_, crossings_, occupation_, events_};
  }

 private:
  struct Move {
    double rate;
    int bond;
    EventKind kind;
  };

  void collect() {
    moves_.clear();
    total_ = 0;
    const int len = spec_.length();
    const auto push = [&](double rate, int bond, EventKind kind) {
      moves_.push_back({rate, bond, kind});
      total_ += rate;
    };
    if (spec_.boundary == Boundary::driven && !(state_ & 1U))
      push(spec_.p(spec_.m - 1), spec_.m - 1, EventKind::inject);
    for (int k = 0; k + 1 < len; ++k) {
      const unsigned here = (state_ >> k) & 1U;
      const unsigned next = (state_ >> (k + 1)) & 1U;
      const int i = spec_.m + k;
      if (here && !next) push(spec_.p(i), i, EventKind::right);
      if (!here && next) push(spec_.q(i + 1), i, EventKind::left);
    }
    if (spec_.boundary == Boundary::driven && ((state_ >> (len - 1)) & 1U))
      push(spec_.p(spec_.n), spec_.n, EventKind::extract);
  }

  void schedule() {
    collect();
    next_time_ = total_ > 0 ? time_ + rng_.exponential(total_)
                            : std::numeric_limits<double>::infinity();
  }

  void accumulate(double t) {
    const double dt = t - time_;
    for (int k = 0; k < spec_.length(); ++k)
      if ((state_ >> k) & 1U) occupation_[static_cast<std::size_t>(k)] += dt;
    time_ = t;
  }

  void fire() {
    double u = rng_.uniform() * total_;
    std::size_t pick = 0;
    while (pick + 1 < moves_.size() && u >= moves_[pick].rate) u -= moves_[pick++].rate;
    const Move& mv = moves_[pick];
    const int k = mv.bond - spec_.m;
    switch (mv.kind) {
      case EventKind::inject:
        state_ |= 1U;
        crossings_.add(mv.bond, 1);
        break;
      case EventKind::extract:
        state_ ^= State{1} << (spec_.length() - 1);
        crossings_.add(mv.bond, 1);
        break;
      case EventKind::right:
        state_ ^= State{3} << k;
        crossings_.add(mv.bond, 1);
        break;
      case EventKind::left:
        state_ ^= State{3} << k;
        crossings_.add(mv.bond, -1);
        break;
      default:
        throw std::logic_error("coupled event kind in single chain");
    }
    ++events_;
    if (sink_) sink_({time_, mv.bond, mv.kind});
  }

  ChainSpec spec_;
  std::uint64_t seed_;
  CounterRng rng_;
  State state_;
  Crossings crossings_;
  std::vector<double> occupation_;
  double time_ = 0.0;
  double next_time_ = 0.0;
  double total_ = 0.0;
  std::uint64_t events_ = 0;
  std::vector<Move> moves_;
  EventSink sink_;
};

inline Trajectory gillespie_run(const ChainSpec& spec, std::uint64_t seed, double horizon,
                                State initial = 0) {
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  ChainSimulator sim(spec, seed, initial);
  sim.advance_to(horizon);
  return sim.snapshot();
}

// ---------------------------------------------------------------------------
// Batch-means estimation

struct FluxEstimate {
  double mean;
  double std_error;
  int batches;
  double horizon;
};

struct BatchOptions {
  double burn_in = 0.1;       // fraction of the horizon discarded
  int batches = 20;
  double min_batch_time = 1.0;
};

namespace detail {

inline void check_batches(double horizon, const BatchOptions& opt) {
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  if (opt.batches < 20) throw std::invalid_argument("batch means needs at least 20 batches");
  if (!(opt.burn_in >= 0 && opt.burn_in < 1)) throw std::invalid_argument("burn-in outside [0,1)");
  if (horizon * (1 - opt.burn_in) / opt.batches < opt.min_batch_time)
    throw std::invalid_argument("horizon too short to form " + std::to_string(opt.batches) +
                                " batches");
}

/// Mean and standard error from per-batch values.
inline std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
  double mean = 0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

/// Advances `sim` over the retained window in equal batches and feeds each
/// batch's (observable difference / batch length) to the estimate.
template <class Sim, class Observable>
FluxEstimate batch_means(Sim& sim, double horizon, const BatchOptions& opt, Observable obs) {
  check_batches(horizon, opt);
  const double start = horizon * opt.burn_in;
  const double width = (horizon - start) / opt.batches;
  sim.advance_to(start);
  double prev = obs(sim);
  const double first = prev;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(opt.batches));
  for (int b = 1; b <= opt.batches; ++b) {
    sim.advance_to(b == opt.batches ? horizon : start + b * width);
    const double now = obs(sim);
    values.push_back((now - prev) / width);
    prev = now;
  }
  auto [mean, se] = mean_and_se(values);
  mean = (prev - first) / (horizon - start);
  return {mean, se, opt.batches, horizon};
}

}  // namespace detail

/// Flux across bond (bond, bond+1), bond in [m-1, n], from net crossings.
inline FluxEstimate flux_mc(const ChainSpec& spec, std::uint64_t seed, double horizon, int bond,
                            const BatchOptions& opt = {}, State initial = 0) {
  if (bond < spec.m - 1 || bond > spec.n) throw std::out_of_range("bond outside chain");
  if (spec.boundary == Boundary::closed && (bond < spec.m || bond >= spec.n))
    throw std::invalid_argument("closed chain has no boundary bonds");
  ChainSimulator sim(spec, seed, initial);
  return detail::batch_means(sim, horizon, opt, [bond](const ChainSimulator& s) {
    return static_cast<double>(s.crossings().at(bond));
  });
}

/// Fraction of time `site` is occupied.
inline FluxEstimate occupation_mc(const ChainSpec& spec, std::uint64_t seed, double horizon,
                                  int site, const BatchOptions& opt = {}, State initial = 0) {
  ChainSimulator sim(spec, seed, initial);
  return detail::batch_means(sim, horizon, opt,
                             [site](const ChainSimulator& s) { return s.occupation_time(site); });
}

// ---------------------------------------------------------------------------
// Coupled process

/// (x, eta, eta', y). eta follows the lower environment, eta' the higher.
struct CoupledState {
  std::int64_t x = 0;
  State eta = 0;
  State eta_prime = 0;
  std::int64_t y = 0;

  friend bool operator==(const CoupledState&, const CoupledState&) = default;
};

/// Prefix sum x + sum_{i=m}^{k} [eta(i) - eta'(i)], for k = m-1 + upto.
inline std::int64_t discrepancy_prefix(const CoupledState& s, int upto) {
  std::int64_t acc = s.x;
  for (int b = 0; b < upto; ++b)
    acc += static_cast<std::int64_t>((s.eta >> b) & 1U) -
           static_cast<std::int64_t>((s.eta_prime >> b) & 1U);
  return acc;
}

/// Empty when both invariants hold, else a description of the first failure.
inline std::optional<std::string> check_coupled_state(const CoupledState& s, int length) {
  for (int upto = 0; upto <= length; ++upto) {
    const auto v = discrepancy_prefix(s, upto);
    if (v < 0)
      return "prefix sum through offset " + std::to_string(upto - 1) + " is " + std::to_string(v);
  }
  const auto total = discrepancy_prefix(s, length) + s.y;
  if (total != 0) return "x + sum + y = " + std::to_string(total);
  return std::nullopt;
}

/// The two environments on [m-1, n] driving the coupled pair.
struct CoupledRates {
  int m;
  int n;
  Boundary boundary;
  Environment low;
  Environment high;

  CoupledRates(int m_, int n_, Boundary b, Environment low_, Environment high_)
      : m(m_), n(n_), boundary(b), low(std::move(low_)), high(std::move(high_)) {
    ChainSpec check_low(m, n, low, b), check_high(m, n, high, b);
    for (int i = m - 1; i <= n; ++i)
      if (high.p(i) < low.p(i))
        throw std::invalid_argument("environments not ordered at site " + std::to_string(i));
  }

  int length() const noexcept { return n - m + 1; }
  ChainSpec low_chain() const { return ChainSpec(m, n, low, boundary); }
  ChainSpec high_chain() const { return ChainSpec(m, n, high, boundary); }
};

/// A move across bond (bond, bond+1); direction +1 right, -1 left.
struct CoupledMove {
  double rate;
  int bond;
  int direction;
  EventKind kind;  // joint, prime_only or plain_only
};

/// Basic coupling: shared moves at the smaller rate; the excess of a
/// rightward rate moves eta' alone, the excess of a leftward rate moves eta
/// alone; moves open to one copy only run at that copy's rate.
struct BasicCoupling {
  template <class Emit>
  static void for_each_move(const CoupledRates& r, const CoupledState& s, Emit&& emit) {
    const auto pair = [&](int bond, double plain_rate, double prime_rate, bool plain_ok,
                          bool prime_ok, int dir) {
      if (plain_ok && prime_ok) {
        const double shared = std::min(plain_rate, prime_rate);
        emit(CoupledMove{shared, bond, dir, EventKind::joint});
        if (prime_rate > plain_rate)
          emit(CoupledMove{prime_rate - plain_rate, bond, dir, EventKind::prime_only});
        else if (plain_rate > prime_rate)
          emit(CoupledMove{plain_rate - prime_rate, bond, dir, EventKind::plain_only});
      } else if (plain_ok) {
        emit(CoupledMove{plain_rate, bond, dir, EventKind::plain_only});
      } else if (prime_ok) {
        emit(CoupledMove{prime_rate, bond, dir, EventKind::prime_only});
      }
    };
    const int len = r.length();
    const auto bit = [](State w, int k) { return static_cast<unsigned>((w >> k) & 1U); };
    if (r.boundary == Boundary::driven)
      pair(r.m - 1, r.low.p(r.m - 1), r.high.p(r.m - 1), !bit(s.eta, 0), !bit(s.eta_prime, 0), 1);
    for (int k = 0; k + 1 < len; ++k) {
      const int i = r.m + k;
      const bool plain_right = bit(s.eta, k) && !bit(s.eta, k + 1);
      const bool prime_right = bit(s.eta_prime, k) && !bit(s.eta_prime, k + 1);
      const bool plain_left = !bit(s.eta, k) && bit(s.eta, k + 1);
      const bool prime_left = !bit(s.eta_prime, k) && bit(s.eta_prime, k + 1);
      pair(i, r.low.p(i), r.high.p(i), plain_right, prime_right, 1);
      pair(i, r.low.q(i + 1), r.high.q(i + 1), plain_left, prime_left, -1);
    }
    if (r.boundary == Boundary::driven)
      pair(r.n, r.low.p(r.n), r.high.p(r.n), bit(s.eta, len - 1), bit(s.eta_prime, len - 1), 1);
  }
};

/// Applies `mv` to the state and to the crossing counters (either may be
/// null). Injections not matched in the other copy move x, unmatched
/// extractions move y, so that x = I' - I and y = E - E'.
inline void apply_move(const CoupledRates& r, const CoupledMove& mv, CoupledState& s,
                       Crossings* plain, Crossings* prime) {
  const int len = r.length();
  const bool moves_plain = mv.kind != EventKind::prime_only;
  const bool moves_prime = mv.kind != EventKind::plain_only;
  State flip;
  if (mv.bond == r.m - 1)
    flip = 1U;
  else if (mv.bond == r.n)
    flip = State{1} << (len - 1);
  else
    flip = State{3} << (mv.bond - r.m);
  if (moves_plain) {
    s.eta ^= flip;
    if (plain) plain->add(mv.bond, mv.direction);
  }
  if (moves_prime) {
    s.eta_prime ^= flip;
    if (prime) prime->add(mv.bond, mv.direction);
  }
  if (moves_plain != moves_prime) {
    if (mv.bond == r.m - 1) s.x += moves_prime ? 1 : -1;
    if (mv.bond == r.n) s.y += moves_plain ? 1 : -1;
  }
}

/// One event clock for the pair, at the total rate of the joint table.
template <class Table = BasicCoupling>
class CoupledSimulator {
 public:
  CoupledSimulator(CoupledRates rates, std::uint64_t seed, State initial = 0)
      : rates_(std::move(rates)),
        rng_(seed, kCoupledStream),
        state_{0, initial, initial, 0},
        plain_(rates_.m, rates_.n),
        prime_(rates_.m, rates_.n),
        occ_plain_(static_cast<std::size_t>(rates_.length()), 0.0),
        occ_prime_(static_cast<std::size_t>(rates_.length()), 0.0) {
    if (initial >> rates_.length()) throw std::invalid_argument("initial state wider than chain");
    schedule();
  }

  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }
  /// Called after every event.
  void set_observer(std::function<void(const CoupledSimulator&)> obs) { observer_ = std::move(obs); }

  double time() const noexcept { return time_; }
  const CoupledState& state() const noexcept { return state_; }
  const Crossings& plain_crossings() const noexcept { return plain_; }
  const Crossings& prime_crossings() const noexcept { return prime_; }
  const CoupledRates& rates() const noexcept { return rates_; }
  std::uint64_t events() const noexcept { return events_; }
  double plain_occupation_time(int site) const { return occ_plain_.at(static_cast<std::size_t>(site - rates_.m)); }
  double prime_occupation_time(int site) const { return occ_prime_.at(static_cast<std::size_t>(site - rates_.m)); }
  const CoupledMove& last_move() const noexcept { return last_; }

  void advance_to(double t) {
    while (next_time_ <= t) {
      accumulate(next_time_);
      fire();
      schedule();
    }
    if (t > time_) accumulate(t);
  }

 private:
  void schedule() {
    moves_.clear();
    total_ = 0;
    Table::for_each_move(rates_, state_, [this](const CoupledMove& mv) {
      if (mv.rate > 0) {
        moves_.push_back(mv);
        total_ += mv.rate;
      }
    });
    next_time_ = total_ > 0 ? time_ + rng_.exponential(total_)
                            : std::numeric_limits<double>::infinity();
  }

  void accumulate(double t) {
    const double dt = t - time_;
    for (int k = 0; k < rates_.length(); ++k) {
      if ((state_.eta >> k) & 1U) occ_plain_[static_cast<std::size_t>(k)] += dt;
      if ((state_.eta_prime >> k) & 1U) occ_prime_[static_cast<std::size_t>(k)] += dt;
    }
    time_ = t;
  }

  void fire() {
    double u = rng_.uniform() * total_;
    std::size_t pick = 0;
    while (pick + 1 < moves_.size() && u >= moves_[pick].rate) u -= moves_[pick++].rate;
    last_ = moves_[pick];
    apply_move(rates_, last_, state_, &plain_, &prime_);
    ++events_;
    if (sink_) sink_({time_, last_.bond, last_.kind});
    if (observer_) observer_(*this);
  }

  CoupledRates rates_;
  CounterRng rng_;
  CoupledState state_;
  Crossings plain_, prime_;
  std::vector<double> occ_plain_, occ_prime_;
  double time_ = 0.0;
  double next_time_ = 0.0;
  double total_ = 0.0;
  std::uint64_t events_ = 0;
  std::vector<CoupledMove> moves_;
  CoupledMove last_{};
  EventSink sink_;
  std::function<void(const CoupledSimulator&)> observer_;
};

/// Result of checking a coupled run event by event.
struct CouplingAudit {
  std::uint64_t events_checked = 0;
  std::optional<std::string> violation;  // first failure, with context
  bool passed() const noexcept { return !violation; }
};

/// Runs to `horizon`, checking after every event: both state invariants,
/// N'_k - N_k = x + sum_{i=m}^{k} [eta(i) - eta'(i)] at every bond k, and
/// N'_k >= N_k.
template <class Table = BasicCoupling>
CouplingAudit audit_coupled_run(CoupledSimulator<Table>& sim, double horizon) {
  CouplingAudit audit;
  const auto& r = sim.rates();
  const int len = r.length();
  const auto check = [&](const CoupledSimulator<Table>& s) -> std::optional<std::string> {
    const auto& st = s.state();
    if (auto bad = check_coupled_state(st, len)) return bad;
    for (int bond = r.m - 1; bond <= r.n; ++bond) {
      const auto lhs = s.prime_crossings().at(bond) - s.plain_crossings().at(bond);
      const auto rhs = discrepancy_prefix(st, bond - r.m + 1);
      if (lhs != rhs)
        return "identity N'-N = " + std::to_string(lhs) + " vs " + std::to_string(rhs) +
               " at bond " + std::to_string(bond);
      if (lhs < 0) return "N' < N at bond " + std::to_string(bond);
    }
    return std::nullopt;
  };
  sim.set_observer([&](const CoupledSimulator<Table>& s) {
    if (audit.violation) return;
    ++audit.events_checked;
    if (auto bad = check(s)) {
      const auto& st = s.state();
      const auto& mv = s.last_move();
      std::ostringstream os;
      os << *bad << " after event " << s.events() << " at t=" << s.time() << " ("
         << to_string(mv.kind) << " across bond " << mv.bond << ", direction " << mv.direction
         << "); state x=" << st.x << " eta=" << state_string(st.eta, len)
         << " eta'=" << state_string(st.eta_prime, len) << " y=" << st.y;
      audit.violation = os.str();
    }
  });
  if (auto bad = check(sim)) audit.violation = "initial state: " + *bad;
  if (!audit.violation) sim.advance_to(horizon);
  sim.set_observer(nullptr);
  return audit;
}

/// Convenience wrapper: fresh coupled run from (0, eta, eta, 0).
template <class Table = BasicCoupling>
CouplingAudit coupled_run(const CoupledRates& rates, std::uint64_t seed, double horizon,
                          State initial = 0) {
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  CoupledSimulator<Table> sim(rates, seed, initial);
  return audit_coupled_run(sim, horizon);
}

template <class Table = BasicCoupling>
CouplingAudit coupled_run(const ChainSpec& spec, const Environment& env_low,
                          const Environment& env_high, std::uint64_t seed, double horizon,
                          State initial = 0) {
  return coupled_run<Table>(CoupledRates(spec.m, spec.n, spec.boundary, env_low, env_high), seed,
                            horizon, initial);
}

// ---------------------------------------------------------------------------
// Discrepancy observables

struct Discrepancy {
  int f;  // Hamming distance
  int g;  // strict sign changes of eta' - eta, zeros skipped
};

inline Discrepancy discrepancy_observables(State eta, State eta_prime, int length) {
  Discrepancy d{std::popcount(eta ^ eta_prime), 0};
  int last = 0;
  for (int k = 0; k < length; ++k) {
    const int diff = static_cast<int>((eta_prime >> k) & 1U) - static_cast<int>((eta >> k) & 1U);
    if (diff == 0) continue;
    if (last != 0 && diff != last) ++d.g;
    last = diff;
  }
  return d;
}

}  // namespace asep
