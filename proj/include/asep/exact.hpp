#pragma once

// Exact stationary analysis of the exclusion process on a finite window
// [m, n]: configuration-space generator, stationary solve, flux, and the
// reversible conditioned product measures.
//
// State encoding: bit k of a state word is the occupancy of site m + k.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asep/environment.hpp"
#include "asep/errors.hpp"
#include "asep/series.hpp"

namespace asep {

using State = std::uint64_t;

enum class Boundary { driven, closed };

inline std::string_view to_string(Boundary b) noexcept {
  return b == Boundary::driven ? "driven" : "closed";
}

/// Chain on sites [m, n]. The environment must cover [m-1, n]: driven mode
/// injects at m with rate p_{m-1} and extracts at n with rate p_n.
struct ChainSpec {
  int m;
  int n;
  Environment env;
  Boundary boundary = Boundary::driven;

  ChainSpec(int m_, int n_, Environment env_, Boundary boundary_ = Boundary::driven)
      : m(m_), n(n_), env(std::move(env_)), boundary(boundary_) {
    if (n < m) throw std::invalid_argument("chain needs n >= m");
    if (n - m + 1 > 62) throw std::invalid_argument("chain longer than 62 sites");
    if (!env.covers(m - 1, n))
      throw std::invalid_argument("environment must cover [m-1, n] = [" + std::to_string(m - 1) +
                                  "," + std::to_string(n) + "]");
  }

  int length() const noexcept { return n - m + 1; }
  double p(int site) const { return env.p(site); }
  double q(int site) const { return env.q(site); }
  bool occupied(State s, int site) const noexcept { return (s >> (site - m)) & 1U; }
};

/// Convenience: chain on [1, L] in a homogeneous environment.
inline ChainSpec homogeneous_chain(double p, int length, Boundary b = Boundary::driven) {
  return ChainSpec(1, length, make_homogeneous(p, 0, length), b);
}

/// Calls visit(target, rate) for every transition out of `s`.
template <class Visit>
void for_each_transition(const ChainSpec& spec, State s, Visit&& visit) {
  const int len = spec.length();
  for (int k = 0; k + 1 < len; ++k) {
    const unsigned here = (s >> k) & 1U;
    const unsigned next = (s >> (k + 1)) & 1U;
    if (here == next) continue;
    const State target = s ^ (State{3} << k);
    const int i = spec.m + k;
    visit(target, here ? spec.p(i) : spec.q(i + 1));
  }
  if (spec.boundary == Boundary::driven) {
    if (!(s & 1U)) visit(s | 1U, spec.p(spec.m - 1));
    const State top = State{1} << (len - 1);
    if (s & top) visit(s ^ top, spec.p(spec.n));
  }
}

// ---------------------------------------------------------------------------
// Generator

inline constexpr int kDefaultMaxLength = 16;
inline constexpr int kDenseMaxLength = 10;
inline constexpr double kResidualTolerance = 1e-10;

/// Rate matrix in CSR form: off-diagonal rates per source row, and the exit
/// rate (negative diagonal).
struct RateMatrix {
  std::size_t size = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> col;
  std::vector<double> rate;
  std::vector<double> exit_rate;

  double entry(std::size_t from, std::size_t to) const {
    if (from == to) return -exit_rate[from];
    for (std::size_t k = row_ptr[from]; k < row_ptr[from + 1]; ++k)
      if (col[k] == to) return rate[k];
    return 0.0;
  }

  /// y = x Q (row vector times generator).
  void left_multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < size; ++i) y[i] = -exit_rate[i] * x[i];
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y[col[k]] += rate[k] * x[i];
  }
};

/// Generator over an explicit list of states (all 2^L, or one particle sector).
inline RateMatrix build_generator(const ChainSpec& spec, std::span<const State> states) {
  std::vector<std::uint32_t> index;
  const bool full = states.size() == (std::size_t{1} << spec.length());
  if (!full) {
    index.assign(std::size_t{1} << spec.length(), UINT32_MAX);
    for (std::size_t k = 0; k < states.size(); ++k) index[states[k]] = static_cast<std::uint32_t>(k);
  }
  RateMatrix q;
  q.size = states.size();
  q.row_ptr.reserve(q.size + 1);
  q.row_ptr.push_back(0);
  q.exit_rate.assign(q.size, 0.0);
  for (std::size_t k = 0; k < states.size(); ++k) {
    for_each_transition(spec, states[k], [&](State target, double r) {
      const auto j = full ? static_cast<std::uint32_t>(target) : index[target];
      if (j == UINT32_MAX) throw std::logic_error("transition leaves the state list");
      q.col.push_back(j);
      q.rate.push_back(r);
      q.exit_rate[k] += r;
    });
    q.row_ptr.push_back(q.col.size());
  }
  return q;
}

inline std::vector<State> all_states(int length) {
  std::vector<State> s(std::size_t{1} << length);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = k;
  return s;
}

inline std::vector<State> sector_states(int length, int particles) {
  std::vector<State> s;
  for (State x = 0; x < (State{1} << length); ++x)
    if (std::popcount(x) == particles) s.push_back(x);
  return s;
}

inline RateMatrix build_generator(const ChainSpec& spec, int max_length = kDefaultMaxLength) {
  if (spec.length() > max_length)
    throw std::invalid_argument("chain length " + std::to_string(spec.length()) +
                                " exceeds exact-solver limit " + std::to_string(max_length));
  const auto states = all_states(spec.length());
  return build_generator(spec, states);
}

// ---------------------------------------------------------------------------
// Stationary distribution

struct StationaryDistribution {
  ChainSpec spec;
  std::vector<double> probs;  // indexed by state word
  double residual = 0.0;
  std::optional<int> sector;

  int length() const noexcept { return spec.length(); }
  double prob(State s) const { return probs.at(s); }

  /// P(eta(site) = 1).
  double density(int site) const {
    double acc = 0;
    for (State s = 0; s < probs.size(); ++s)
      if (spec.occupied(s, site)) acc += probs[s];
    return acc;
  }
};

struct SolveOptions {
  std::optional<int> sector;  // required for closed chains
  int max_length = kDefaultMaxLength;
  int dense_max_length = kDenseMaxLength;
  double tolerance = kResidualTolerance;
  int gmres_restart = 100;
  int gmres_max_iterations = 5000;
  double ilut_droptol = 1e-3;
  int ilut_fill = 3;
};

namespace detail {

/// Solves (Q^T with row 0 replaced by ones) x = e_0 by dense LU.
inline std::vector<double> solve_dense(const RateMatrix& q) {
  const auto n = static_cast<Eigen::Index>(q.size);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < q.size; ++i) {
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = -q.exit_rate[i];
    for (std::size_t k = q.row_ptr[i]; k < q.row_ptr[i + 1]; ++k)
      a(q.col[k], static_cast<Eigen::Index>(i)) += q.rate[k];
  }
  a.row(0).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(0) = 1.0;
  const Eigen::VectorXd x = a.partialPivLu().solve(b);
  return {x.data(), x.data() + x.size()};
}

/// Restarted GMRES with an incomplete-LU (threshold) preconditioner on the
/// same system.
inline std::vector<double> solve_gmres(const RateMatrix& q, const SolveOptions& opt) {
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(q.size);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(q.col.size() + 2 * q.size);
  for (std::size_t i = 0; i < q.size; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    entries.emplace_back(0, col, 1.0);
    if (i == 0) continue;
    entries.emplace_back(col, col, -q.exit_rate[i]);
  }
  for (std::size_t i = 0; i < q.size; ++i)
    for (std::size_t k = q.row_ptr[i]; k < q.row_ptr[i + 1]; ++k)
      if (q.col[k] != 0) entries.emplace_back(q.col[k], static_cast<Eigen::Index>(i), q.rate[k]);
  Sparse a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  a.makeCompressed();

  Eigen::GMRES<Sparse, Eigen::IncompleteLUT<double>> solver;
  solver.preconditioner().setDroptol(opt.ilut_droptol);
  solver.preconditioner().setFillfactor(opt.ilut_fill);
  solver.set_restart(opt.gmres_restart);
  solver.setMaxIterations(opt.gmres_max_iterations);
  solver.setTolerance(1e-15);
  solver.compute(a);
  if (solver.info() != Eigen::Success) throw SolverError("incomplete LU factorization failed", 0.0);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(0) = 1.0;
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Eigen::VectorXd x = solver.solveWithGuess(b, x0);
  return {x.data(), x.data() + x.size()};
}

/// Clips round-off negatives, renormalizes, and returns max |pi Q|.
inline double finish(const RateMatrix& q, std::vector<double>& x) {
  double s = 0;
  for (double& v : x) {
    if (v < 0) v = 0;
    s += v;
  }
  for (double& v : x) v /= s;
  std::vector<double> y(q.size);
  q.left_multiply(x, y);
  double res = 0;
  for (double v : y) res = std::max(res, std::abs(v));
  return res;
}

}  // namespace detail

/// Unique stationary distribution of a driven chain, or of a closed chain
/// within one particle-number sector (options.sector).
inline StationaryDistribution stationary(const ChainSpec& spec, const SolveOptions& options = {}) {
  const int len = spec.length();
  if (len > options.max_length)
    throw std::invalid_argument("chain length " + std::to_string(len) +
                                " exceeds exact-solver limit " + std::to_string(options.max_length));
  std::vector<State> states;
  if (spec.boundary == Boundary::closed) {
    if (!options.sector) throw std::invalid_argument("closed chain needs a particle-number sector");
    if (*options.sector < 0 || *options.sector > len)
      throw std::invalid_argument("sector outside [0, L]");
    states = sector_states(len, *options.sector);
  } else {
    if (options.sector) throw std::invalid_argument("driven chain has no particle sectors");
    states = all_states(len);
  }

  const RateMatrix q = build_generator(spec, states);
  std::vector<double> x;
  if (states.size() == 1)
    x = {1.0};
  else if (len <= options.dense_max_length)
    x = detail::solve_dense(q);
  else
    x = detail::solve_gmres(q, options);
  const double residual = detail::finish(q, x);
  if (!(residual <= options.tolerance))
    throw SolverError("stationary solve did not converge", residual);

  StationaryDistribution dist{spec, std::vector<double>(std::size_t{1} << len, 0.0), residual,
                              options.sector};
  for (std::size_t k = 0; k < states.size(); ++k) dist.probs[states[k]] = x[k];
  return dist;
}

// ---------------------------------------------------------------------------
// Flux

struct BondFlux {
  int site;  // bond (site, site+1); site m-1 is injection, site n extraction
  double flux;
};

struct FluxReport {
  std::vector<BondFlux> bonds;
  double value = 0.0;   // mean over bonds
  double spread = 0.0;  // max - min over bonds
};

/// p_i P(1,0 at i,i+1) - q_{i+1} P(0,1 at i,i+1) at every bond, plus the
/// boundary balances in driven mode.
inline FluxReport flux_exact(const StationaryDistribution& dist) {
  const ChainSpec& spec = dist.spec;
  const int len = spec.length();
  std::vector<double> forward(static_cast<std::size_t>(len), 0.0);
  std::vector<double> backward(static_cast<std::size_t>(len), 0.0);
  double empty_first = 0.0;
  double full_last = 0.0;
  for (State s = 0; s < dist.probs.size(); ++s) {
    const double w = dist.probs[s];
    if (w == 0.0) continue;
    for (int k = 0; k + 1 < len; ++k) {
      const unsigned here = (s >> k) & 1U;
      const unsigned next = (s >> (k + 1)) & 1U;
      if (here && !next) forward[static_cast<std::size_t>(k)] += w;
      if (!here && next) backward[static_cast<std::size_t>(k)] += w;
    }
    if (!(s & 1U)) empty_first += w;
    if ((s >> (len - 1)) & 1U) full_last += w;
  }

  FluxReport report;
  if (spec.boundary == Boundary::driven)
    report.bonds.push_back({spec.m - 1, spec.p(spec.m - 1) * empty_first});
  for (int k = 0; k + 1 < len; ++k) {
    const int i = spec.m + k;
    report.bonds.push_back({i, spec.p(i) * forward[static_cast<std::size_t>(k)] -
                                   spec.q(i + 1) * backward[static_cast<std::size_t>(k)]});
  }
  if (spec.boundary == Boundary::driven) report.bonds.push_back({spec.n, spec.p(spec.n) * full_last});

  if (report.bonds.empty()) return report;  // closed chain with a single site
  double lo = report.bonds.front().flux, hi = lo, sum = 0;
  for (const auto& b : report.bonds) {
    lo = std::min(lo, b.flux);
    hi = std::max(hi, b.flux);
    sum += b.flux;
  }
  report.value = sum / static_cast<double>(report.bonds.size());
  report.spread = hi - lo;
  return report;
}

/// Flux of the product measure with densities alpha over [lo, lo+size) at
/// each interior bond.
inline std::vector<double> flux_of_product(const Environment& env, int lo,
                                           std::span<const double> alpha) {
  if (alpha.empty()) return {};
  for (double a : alpha)
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("densities must lie in [0,1]");
  const int hi = lo + static_cast<int>(alpha.size()) - 1;
  if (!env.covers(lo, hi)) throw std::invalid_argument("environment does not cover densities");
  std::vector<double> out;
  out.reserve(alpha.size() - 1);
  for (std::size_t k = 0; k + 1 < alpha.size(); ++k) {
    const int i = lo + static_cast<int>(k);
    out.push_back(env.p(i) * alpha[k] * (1.0 - alpha[k + 1]) -
                  env.q(i + 1) * alpha[k + 1] * (1.0 - alpha[k]));
  }
  return out;
}

/// Same, for the reversible profile; uses the stable 1 - alpha.
inline std::vector<double> flux_of_product(const Environment& env, const PiProfile& profile) {
  std::vector<double> out;
  for (int i = profile.lo(); i < profile.hi(); ++i)
    out.push_back(env.p(i) * profile.alpha(i) * profile.one_minus_alpha(i + 1) -
                  env.q(i + 1) * profile.alpha(i + 1) * profile.one_minus_alpha(i));
  return out;
}

/// max over transitions (s -> t) of |pi(s) r(s,t) - pi(t) r(t,s)|. One-way
/// transitions (the boundary moves) count with r(t,s) = 0.
inline double detailed_balance_residual(const StationaryDistribution& dist) {
  const ChainSpec& spec = dist.spec;
  double worst = 0;
  for (State s = 0; s < dist.probs.size(); ++s) {
    for_each_transition(spec, s, [&](State t, double r) {
      double back = 0;
      for_each_transition(spec, t, [&](State u, double rr) {
        if (u == s) back += rr;
      });
      worst = std::max(worst, std::abs(dist.probs[s] * r - dist.probs[t] * back));
    });
  }
  return worst;
}

/// Product measure with weights pi conditioned on exactly k particles.
inline StationaryDistribution conditioned_product_measure(const ChainSpec& spec, int k,
                                                          const PiProfile& profile) {
  const int len = spec.length();
  if (k < 0 || k > len) throw std::invalid_argument("particle count outside [0, L]");
  if (len > 30) throw std::invalid_argument("chain too long to enumerate");
  if (!profile.contains(spec.m) || !profile.contains(spec.n))
    throw std::invalid_argument("profile does not cover the chain");
  const auto states = sector_states(len, k);
  std::vector<double> logw(states.size());
  double top = series::kNegInf;
  for (std::size_t j = 0; j < states.size(); ++j) {
    double acc = 0;
    for (int b = 0; b < len; ++b)
      if ((states[j] >> b) & 1U) acc += profile.log_pi(spec.m + b);
    logw[j] = acc;
    top = std::max(top, acc);
  }
  StationaryDistribution dist{spec, std::vector<double>(std::size_t{1} << len, 0.0), 0.0, k};
  double total = 0;
  for (std::size_t j = 0; j < states.size(); ++j) total += std::exp(logw[j] - top);
  for (std::size_t j = 0; j < states.size(); ++j)
    dist.probs[states[j]] = std::exp(logw[j] - top) / total;
  return dist;
}

// ---------------------------------------------------------------------------
// Particle-hole reflection

/// Chain seen through holes read right to left: site j of the image is site
/// (m+n)-j of the original, and its p is p_{(m+n)-j-1}. The driven
/// chain maps to this image with occupancies complemented exactly when the
/// left rates also match, i.e. when p_{i-1} = p_{i+1} throughout.
inline ChainSpec particle_hole_image(const ChainSpec& spec) {
  const int s = spec.m + spec.n;
  std::vector<double> probs;
  for (int j = spec.m - 1; j <= spec.n; ++j) probs.push_back(spec.p(s - j - 1));
  return ChainSpec(spec.m, spec.n, Environment(spec.m - 1, std::move(probs)), spec.boundary);
}

/// Complement and reverse the L-bit state word.
inline State particle_hole_state(State s, int length) noexcept {
  State out = 0;
  for (int b = 0; b < length; ++b)
    if (!((s >> b) & 1U)) out |= State{1} << (length - 1 - b);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// L-character 0/1 string, site m leftmost.
inline std::string state_string(State s, int length) {
  std::string out(static_cast<std::size_t>(length), '0');
  for (int b = 0; b < length; ++b)
    if ((s >> b) & 1U) out[static_cast<std::size_t>(b)] = '1';
  return out;
}

inline void write_distribution_csv(std::ostream& os, const StationaryDistribution& dist) {
  os << "state,prob\n";
  for (State s = 0; s < dist.probs.size(); ++s)
    os << state_string(s, dist.length()) << ',' << detail::fmt17(dist.probs[s]) << '\n';
}

inline void write_flux_csv(std::ostream& os, const FluxReport& report) {
  os << "bond,flux\n";
  for (const auto& b : report.bonds) os << b.site << ',' << detail::fmt17(b.flux) << '\n';
}

}  // namespace asep
