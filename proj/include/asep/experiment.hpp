#pragma once

// Experiment orchestration behind the command-line verbs: INI config,
// parallel row execution, CSV tables with provenance header comments.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "asep/environment.hpp"
#include "asep/exact.hpp"
#include "asep/free.hpp"
#include "asep/sim.hpp"

namespace asep {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Environment recipes

struct HomogeneousRecipe {
  double p;
};
struct PeriodicRecipe {
  double alpha, beta;
};
struct IidRecipe {
  DistSpec dist;
};
/// Explicit values for sites lo, lo+1, ...
struct ValuesRecipe {
  int lo;
  std::vector<double> probs;
};
using EnvRecipe = std::variant<HomogeneousRecipe, PeriodicRecipe, IidRecipe, ValuesRecipe>;

/// "homogeneous(p)", "periodic(a,b)", "iid(<dist>)", "values(lo;p,p,...)".
inline EnvRecipe parse_recipe(std::string_view text) {
  const auto [name, args] = detail::split_call(text);
  if (name == "homogeneous") {
    const auto a = detail::split_args(args);
    if (a.size() != 1) throw std::invalid_argument("homogeneous takes one value");
    return HomogeneousRecipe{detail::parse_double(a[0])};
  }
  if (name == "periodic") {
    const auto a = detail::split_args(args);
    if (a.size() != 2) throw std::invalid_argument("periodic takes two values");
    return PeriodicRecipe{detail::parse_double(a[0]), detail::parse_double(a[1])};
  }
  if (name == "iid") return IidRecipe{parse_dist(args)};
  if (name == "values") {
    const auto semi = args.find(';');
    if (semi == std::string_view::npos) throw std::invalid_argument("values needs lo;p,p,...");
    ValuesRecipe v{static_cast<int>(detail::parse_int(args.substr(0, semi))), {}};
    for (auto a : detail::split_args(args.substr(semi + 1))) v.probs.push_back(detail::parse_double(a));
    return v;
  }
  throw std::invalid_argument("unknown environment '" + std::string(text) + "'");
}

inline bool is_random(const EnvRecipe& r) noexcept { return std::holds_alternative<IidRecipe>(r); }

inline Environment build_environment(const EnvRecipe& recipe, int lo, int hi, std::uint64_t seed) {
  return std::visit(
      [&](const auto& r) -> Environment {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, HomogeneousRecipe>)
          return make_homogeneous(r.p, lo, hi);
        else if constexpr (std::is_same_v<T, PeriodicRecipe>)
          return make_periodic(r.alpha, r.beta, lo, hi);
        else if constexpr (std::is_same_v<T, IidRecipe>)
          return make_iid(r.dist, seed, lo, hi);
        else
          return Environment(r.lo, r.probs).restrict(lo, hi);
      },
      recipe);
}

// ---------------------------------------------------------------------------
// Config

enum class Mode { exact, mc, both };

struct ScanSettings {
  std::vector<int> sizes;
  Mode mode = Mode::exact;
  double horizon = 1e4;
  std::optional<int> bond;   // default: middle bond L/2
  bool export_distribution = false;
  int max_length = kDefaultMaxLength;
};

struct MonotoneSettings {
  int length = 6;
  double delta = 0.05;
  double tolerance = 1e-12;
};

struct CouplingSettings {
  int length = 4;
  double delta = 0.1;
  double horizon = 1e3;
  bool event_log = false;
};

struct ClassifySettings {
  int lo = -100;
  int hi = 100;
  double pi0 = 1.0;
  double threshold = kDefaultTailThreshold;
  std::size_t drift_samples = 100000;
};

struct SigmaSettings {
  int lo = -40;
  int hi = 40;
  std::optional<double> phi;  // empty: witness search
  double sigma_base = 1.0;
};

struct ExperimentConfig {
  std::string name;
  EnvRecipe environment = HomogeneousRecipe{0.5};
  std::string environment_text = "homogeneous(0.5)";
  Boundary boundary = Boundary::driven;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = ".";
  std::uint64_t config_hash = 0;
  ScanSettings scan;
  MonotoneSettings monotone;
  CouplingSettings coupling;
  ClassifySettings classify;
  SigmaSettings sigma;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

/// "4,6,8" or "4..12" or "4..12:2".
inline std::vector<std::int64_t> parse_int_list(std::string_view text) {
  std::vector<std::int64_t> out;
  for (auto item : split_args(text)) {
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(parse_int(item));
      continue;
    }
    auto rest = item.substr(dots + 2);
    std::int64_t step = 1;
    if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
      step = parse_int(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    const auto a = parse_int(item.substr(0, dots)), b = parse_int(rest);
    if (step <= 0 || b < a) throw std::invalid_argument("bad range '" + std::string(item) + "'");
    for (auto v = a; v <= b; v += step) out.push_back(v);
  }
  return out;
}

inline bool parse_bool(std::string_view s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(s) + "'");
}

}  // namespace detail

/// Parses INI text. `seeds` accepts a list/range, or "count(N)" for 1..N.
inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  c.config_hash = fnv1a(text);
  const auto get = [&](const char* key) { return tree.get_optional<std::string>(key); };
  const auto num = [&](const char* key, double& out) {
    if (auto v = get(key)) out = detail::parse_double(*v);
  };
  const auto integer = [&](const char* key, int& out) {
    if (auto v = get(key)) out = static_cast<int>(detail::parse_int(*v));
  };
  const auto flag = [&](const char* key, bool& out) {
    if (auto v = get(key)) out = detail::parse_bool(*v);
  };

  c.name = get("experiment.name").value_or("unnamed");
  if (auto v = get("experiment.output_dir")) c.output_dir = *v;
  if (auto v = get("experiment.seeds")) {
    std::string_view s = *v;
    if (s.substr(0, 6) == "count(") {
      const auto n = detail::parse_int(detail::split_call(s).second);
      for (std::int64_t k = 1; k <= n; ++k) c.seeds.push_back(static_cast<std::uint64_t>(k));
    } else {
      for (auto k : detail::parse_int_list(s)) {
        if (k < 0) throw std::invalid_argument("seeds must be nonnegative");
        c.seeds.push_back(static_cast<std::uint64_t>(k));
      }
    }
  }
  if (auto v = get("environment.source")) {
    c.environment = parse_recipe(*v);
    c.environment_text = *v;
  }
  if (auto v = get("environment.boundary")) {
    if (*v == "driven")
      c.boundary = Boundary::driven;
    else if (*v == "closed")
      c.boundary = Boundary::closed;
    else
      throw std::invalid_argument("boundary must be driven or closed");
  }

  if (auto v = get("scan.sizes"))
    for (auto k : detail::parse_int_list(*v)) c.scan.sizes.push_back(static_cast<int>(k));
  if (auto v = get("scan.mode")) {
    if (*v == "exact")
      c.scan.mode = Mode::exact;
    else if (*v == "mc")
      c.scan.mode = Mode::mc;
    else if (*v == "both")
      c.scan.mode = Mode::both;
    else
      throw std::invalid_argument("mode must be exact, mc or both");
  }
  num("scan.horizon", c.scan.horizon);
  if (auto v = get("scan.bond")) c.scan.bond = static_cast<int>(detail::parse_int(*v));
  flag("scan.export_distribution", c.scan.export_distribution);
  integer("scan.max_length", c.scan.max_length);

  integer("monotone.length", c.monotone.length);
  num("monotone.delta", c.monotone.delta);
  num("monotone.tolerance", c.monotone.tolerance);

  integer("coupling.length", c.coupling.length);
  num("coupling.delta", c.coupling.delta);
  num("coupling.horizon", c.coupling.horizon);
  flag("coupling.event_log", c.coupling.event_log);

  integer("classify.lo", c.classify.lo);
  integer("classify.hi", c.classify.hi);
  num("classify.pi0", c.classify.pi0);
  num("classify.threshold", c.classify.threshold);
  if (auto v = get("classify.drift_samples"))
    c.classify.drift_samples = static_cast<std::size_t>(detail::parse_int(*v));

  integer("sigma.lo", c.sigma.lo);
  integer("sigma.hi", c.sigma.hi);
  if (auto v = get("sigma.phi"); v && *v != "auto") c.sigma.phi = detail::parse_double(*v);
  num("sigma.sigma_base", c.sigma.sigma_base);

  const bool exact = c.scan.mode != Mode::mc;
  for (int L : c.scan.sizes) {
    if (L < 1) throw std::invalid_argument("sizes must be positive");
    if (exact && L > c.scan.max_length)
      throw std::invalid_argument("size " + std::to_string(L) + " exceeds max_length " +
                                  std::to_string(c.scan.max_length) + " for exact mode");
  }
  if (c.seeds.empty() && (is_random(c.environment) || c.scan.mode != Mode::exact))
    throw std::invalid_argument("seeds required for i.i.d. environments or mc mode");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Output helpers

namespace detail {

/// Runs job(k) for k in [0, count) on a small thread pool.
template <class Job>
void parallel_for(std::size_t count, Job job) {
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1U, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) job(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < count;) job(k);
    });
  for (auto& t : pool) t.join();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

inline std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t k = 0; k < seeds.size(); ++k) s += (k ? " " : "") + std::to_string(seeds[k]);
  return s.empty() ? "none" : s;
}

}  // namespace detail

/// Provenance header comment lines.
inline void write_header(std::ostream& os, const ExperimentConfig& c, std::string_view verb) {
  os << "# tool=asep-cli version=" << kToolVersion << " verb=" << verb << '\n'
     << "# config_hash=fnv1a64:" << hex64(c.config_hash) << " name=" << c.name << '\n'
     << "# environment=" << c.environment_text << " boundary=" << to_string(c.boundary) << '\n'
     << "# seed=" << detail::seeds_text(c.seeds) << '\n';
}

inline std::ofstream open_output(const ExperimentConfig& c, const std::string& file) {
  std::filesystem::create_directories(c.output_dir);
  std::ofstream os(c.output_dir / file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (c.output_dir / file).string());
  return os;
}

/// Rows for seedless deterministic environments carry an empty seed cell.
inline std::vector<std::optional<std::uint64_t>> row_seeds(const ExperimentConfig& c) {
  if (c.seeds.empty()) return {std::nullopt};
  return {c.seeds.begin(), c.seeds.end()};
}

inline std::string seed_cell(const std::optional<std::uint64_t>& s) {
  return s ? std::to_string(*s) : std::string();
}

// ---------------------------------------------------------------------------
// scan-flux

struct FluxRow {
  int length;
  std::optional<std::uint64_t> seed;
  std::string method;  // exact | mc
  std::optional<double> flux, std_error, residual;
  std::string error;
};

inline std::vector<FluxRow> run_flux_scan(const ExperimentConfig& c) {
  struct Task {
    int length;
    std::optional<std::uint64_t> seed;
    bool exact;
  };
  std::vector<Task> tasks;
  for (int L : c.scan.sizes)
    for (const auto& s : row_seeds(c)) {
      if (c.scan.mode != Mode::mc) tasks.push_back({L, s, true});
      if (c.scan.mode != Mode::exact) tasks.push_back({L, s, false});
    }
  std::vector<FluxRow> rows(tasks.size());
  detail::parallel_for(tasks.size(), [&](std::size_t k) {
    const Task& t = tasks[k];
    FluxRow& row = rows[k];
    row.length = t.length;
    row.seed = t.seed;
    row.method = t.exact ? "exact" : "mc";
    try {
      const std::uint64_t seed = t.seed.value_or(0);
      const ChainSpec spec(1, t.length, build_environment(c.environment, 0, t.length, seed),
                           c.boundary);
      if (t.exact) {
        SolveOptions opt;
        opt.max_length = c.scan.max_length;
        if (c.boundary == Boundary::closed) opt.sector = t.length / 2;
        const auto dist = stationary(spec, opt);
        row.flux = flux_exact(dist).value;
        row.residual = dist.residual;
        if (c.scan.export_distribution) {
          auto os = open_output(c, "distribution_L" + std::to_string(t.length) + "_seed" +
                                       (t.seed ? std::to_string(*t.seed) : "none") + ".csv");
          write_header(os, c, "scan-flux");
          write_distribution_csv(os, dist);
        }
      } else {
        const int bond = c.scan.bond.value_or(t.length / 2);
        const State start =
            c.boundary == Boundary::closed ? (State{1} << (t.length / 2)) - 1 : 0;
        const auto est = flux_mc(spec, seed, c.scan.horizon, bond, {}, start);
        row.flux = est.mean;
        row.std_error = est.std_error;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;  // tasks were generated in (L, seed, method) order
}

inline void write_flux_scan(std::ostream& os, const ExperimentConfig& c,
                            const std::vector<FluxRow>& rows) {
  write_header(os, c, "scan-flux");
  os << "L,seed,method,flux,std_error,residual,error\n";
  const auto cell = [](const std::optional<double>& v) { return v ? detail::fmt17(*v) : ""; };
  for (const auto& r : rows)
    os << r.length << ',' << seed_cell(r.seed) << ',' << r.method << ',' << cell(r.flux) << ','
       << cell(r.std_error) << ',' << cell(r.residual) << ',' << detail::csv_field(r.error) << '\n';
}

// ---------------------------------------------------------------------------
// audit-monotone

struct MonotoneRow {
  std::optional<std::uint64_t> seed;
  int site;
  std::optional<double> before, after, margin;
  std::string error;
};

struct MonotoneAudit {
  std::vector<MonotoneRow> rows;
  std::optional<std::string> violation;  // first offending (seed, site)
};

/// Raises each p_i, i in [m-1, n], by delta in turn and compares exact flux.
inline MonotoneAudit run_monotonicity_audit(const Environment& env, int length, double delta,
                                            Boundary boundary = Boundary::driven,
                                            std::optional<std::uint64_t> seed = std::nullopt,
                                            double tolerance = 1e-12) {
  if (length > kDefaultMaxLength) throw std::invalid_argument("length exceeds max_length");
  const ChainSpec base(1, length, env, boundary);
  SolveOptions opt;
  if (boundary == Boundary::closed) opt.sector = length / 2;
  const double before = flux_exact(stationary(base, opt)).value;
  MonotoneAudit audit;
  audit.rows.resize(static_cast<std::size_t>(length + 1));
  detail::parallel_for(audit.rows.size(), [&](std::size_t k) {
    auto& row = audit.rows[k];
    row.seed = seed;
    row.site = static_cast<int>(k);  // sites 0..L = m-1..n
    row.before = before;
    try {
      const ChainSpec bumped(1, length, env.with_p(row.site, env.p(row.site) + delta), boundary);
      row.after = flux_exact(stationary(bumped, opt)).value;
      row.margin = *row.after - before;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  for (const auto& r : audit.rows)
    if (r.margin && *r.margin < -tolerance) {
      audit.violation = "flux decreased by " + detail::fmt17(-*r.margin) + " after raising p at site " +
                        std::to_string(r.site) + (seed ? " (seed " + std::to_string(*seed) + ")" : "");
      break;
    }
  return audit;
}

inline MonotoneAudit run_monotonicity_audit(const ExperimentConfig& c) {
  MonotoneAudit all;
  for (const auto& s : row_seeds(c)) {
    const auto env = build_environment(c.environment, 0, c.monotone.length, s.value_or(0));
    auto one = run_monotonicity_audit(env, c.monotone.length, c.monotone.delta, c.boundary, s,
                                      c.monotone.tolerance);
    all.rows.insert(all.rows.end(), one.rows.begin(), one.rows.end());
    if (!all.violation) all.violation = one.violation;
  }
  return all;
}

inline void write_monotone(std::ostream& os, const ExperimentConfig& c, const MonotoneAudit& a) {
  write_header(os, c, "audit-monotone");
  os << "seed,site,flux_before,flux_after,margin,error\n";
  const auto cell = [](const std::optional<double>& v) { return v ? detail::fmt17(*v) : ""; };
  for (const auto& r : a.rows)
    os << seed_cell(r.seed) << ',' << r.site << ',' << cell(r.before) << ',' << cell(r.after) << ','
       << cell(r.margin) << ',' << detail::csv_field(r.error) << '\n';
}

// ---------------------------------------------------------------------------
// audit-coupling

struct CouplingRow {
  std::uint64_t seed;
  std::uint64_t events;
  bool passed;
  std::string violation;
};

struct CouplingReport {
  std::vector<CouplingRow> rows;
  std::uint64_t total_events = 0;
  bool passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.passed; });
  }
};

template <class Table = BasicCoupling>
CouplingReport run_coupling_audit(const ExperimentConfig& c) {
  const int len = c.coupling.length;
  std::vector<CouplingRow> rows(c.seeds.size());
  detail::parallel_for(rows.size(), [&](std::size_t k) {
    const auto seed = c.seeds[k];
    auto& row = rows[k];
    row.seed = seed;
    try {
      const auto low = build_environment(c.environment, 0, len, seed);
      CoupledSimulator<Table> sim(
          CoupledRates(1, len, c.boundary, low, shifted(low, c.coupling.delta)), seed,
          c.boundary == Boundary::closed ? (State{1} << (len / 2)) - 1 : 0);
      std::ofstream log;
      if (c.coupling.event_log) {
        log = open_output(c, "events_seed" + std::to_string(seed) + ".csv");
        sim.set_event_sink(csv_event_log(log));
      }
      const auto audit = audit_coupled_run(sim, c.coupling.horizon);
      row.events = audit.events_checked;
      row.passed = audit.passed();
      if (audit.violation) row.violation = *audit.violation;
    } catch (const std::exception& e) {
      row.passed = false;
      row.violation = std::string("error: ") + e.what();
    }
  });
  CouplingReport rep;
  rep.rows = std::move(rows);
  for (const auto& r : rep.rows) rep.total_events += r.events;
  return rep;
}

inline void write_coupling(std::ostream& os, const ExperimentConfig& c, const CouplingReport& r) {
  write_header(os, c, "audit-coupling");
  os << "seed,events,passed,violation\n";
  for (const auto& row : r.rows)
    os << row.seed << ',' << row.events << ',' << (row.passed ? "true" : "false") << ','
       << detail::csv_field(row.violation) << '\n';
  os << "# total_events=" << r.total_events << " result=" << (r.passed() ? "pass" : "fail") << '\n';
}

// ---------------------------------------------------------------------------
// classify-env

struct ClassifyRow {
  std::optional<std::uint64_t> seed;
  std::optional<RegimeClassification> regime;
  std::string flux_verdict;
  std::optional<DriftEstimate> drift;
  std::string error;
};

inline std::vector<ClassifyRow> run_classify(const ExperimentConfig& c) {
  const auto seeds = row_seeds(c);
  std::vector<ClassifyRow> rows(seeds.size());
  detail::parallel_for(rows.size(), [&](std::size_t k) {
    auto& row = rows[k];
    row.seed = seeds[k];
    try {
      const auto env =
          build_environment(c.environment, c.classify.lo, c.classify.hi, row.seed.value_or(0));
      row.regime = classify(pi_profile(env, c.classify.pi0), c.classify.threshold);
      if (env.covers(-kMinCriterionSide, kMinCriterionSide))
        row.flux_verdict = std::string(to_string(criterion(env).verdict));
      if (const auto* iid = std::get_if<IidRecipe>(&c.environment))
        row.drift = solomon_classify(iid->dist, c.classify.drift_samples, row.seed.value_or(0));
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline void write_classify(std::ostream& os, const ExperimentConfig& c,
                           const std::vector<ClassifyRow>& rows) {
  write_header(os, c, "classify-env");
  os << "seed,divergent,case,sum_variance,sum_alpha,sum_one_minus_alpha,flux_verdict,"
        "drift_mean,drift_ci_low,drift_ci_high,drift_sign,error\n";
  for (const auto& r : rows) {
    os << seed_cell(r.seed) << ',';
    if (r.regime)
      os << (r.regime->divergent ? "true" : "false") << ',' << to_string(r.regime->case_tag) << ','
         << detail::fmt17(r.regime->sum_variance) << ',' << detail::fmt17(r.regime->sum_alpha) << ','
         << detail::fmt17(r.regime->sum_one_minus_alpha) << ',';
    else
      os << ",,,,,";
    os << r.flux_verdict << ',';
    if (r.drift)
      os << detail::fmt17(r.drift->mean) << ',' << detail::fmt17(r.drift->ci_low) << ','
         << detail::fmt17(r.drift->ci_high) << ',' << r.drift->sign << ',';
    else
      os << ",,,,";
    os << detail::csv_field(r.error) << '\n';
  }
}

// ---------------------------------------------------------------------------
// sigma-solve

struct SigmaRow {
  std::optional<std::uint64_t> seed;
  std::optional<SigmaProfile> profile;
  std::optional<double> invariance_residual, flux_residual;
  std::string error;
};

inline std::vector<SigmaRow> run_sigma(const ExperimentConfig& c) {
  const auto seeds = row_seeds(c);
  std::vector<SigmaRow> rows(seeds.size());
  detail::parallel_for(rows.size(), [&](std::size_t k) {
    auto& row = rows[k];
    row.seed = seeds[k];
    try {
      const auto env =
          build_environment(c.environment, c.sigma.lo, c.sigma.hi, row.seed.value_or(0));
      if (c.sigma.phi) {
        row.profile = solve_sigma(env, *c.sigma.phi, c.sigma.sigma_base);
      } else {
        row.profile = find_positive_flux_solution(env);
        if (!row.profile) throw std::runtime_error("no positive-flux witness on the phi grid");
      }
      row.invariance_residual = row.profile->invariance_residual(env);
      row.flux_residual = row.profile->flux_residual(env);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline void write_sigma_summary(std::ostream& os, const ExperimentConfig& c,
                                const std::vector<SigmaRow>& rows) {
  write_header(os, c, "sigma-solve");
  os << "seed,phi,sigma_base,min_sigma,invariance_residual,flux_residual,error\n";
  for (const auto& r : rows) {
    os << seed_cell(r.seed) << ',';
    if (r.profile) {
      const auto& v = r.profile->values();
      os << detail::fmt17(r.profile->flux()) << ','
         << detail::fmt17(r.profile->sigma(r.profile->base_index())) << ','
         << detail::fmt17(*std::min_element(v.begin(), v.end())) << ','
         << detail::fmt17(*r.invariance_residual) << ',' << detail::fmt17(*r.flux_residual) << ',';
    } else {
      os << ",,,,,";
    }
    os << detail::csv_field(r.error) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Verb drivers: write every output file, return the process exit code.

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitAuditViolation = 2;

inline void write_environment_file(const ExperimentConfig& c, int lo, int hi,
                                   std::optional<std::uint64_t> seed, const std::string& tag) {
  auto os = open_output(c, "environment_" + tag + (seed ? "_seed" + std::to_string(*seed) : "") +
                               ".txt");
  write_environment(os, build_environment(c.environment, lo, hi, seed.value_or(0)));
}

inline int verb_scan_flux(const ExperimentConfig& c, std::ostream& log) {
  const auto rows = run_flux_scan(c);
  auto os = open_output(c, "flux_scan.csv");
  write_flux_scan(os, c, rows);
  const auto failed = std::count_if(rows.begin(), rows.end(), [](auto& r) { return !r.error.empty(); });
  log << "scan-flux: " << rows.size() << " rows, " << failed << " with errors\n";
  return kExitOk;
}

inline int verb_audit_monotone(const ExperimentConfig& c, std::ostream& log) {
  const auto audit = run_monotonicity_audit(c);
  auto os = open_output(c, "monotone_audit.csv");
  write_monotone(os, c, audit);
  for (const auto& s : row_seeds(c)) write_environment_file(c, 0, c.monotone.length, s, "monotone");
  if (audit.violation) {
    log << "audit-monotone: VIOLATION " << *audit.violation << '\n';
    return kExitAuditViolation;
  }
  log << "audit-monotone: " << audit.rows.size() << " perturbations, all margins >= -"
      << c.monotone.tolerance << '\n';
  return kExitOk;
}

inline int verb_audit_coupling(const ExperimentConfig& c, std::ostream& log) {
  if (c.seeds.empty()) throw std::invalid_argument("audit-coupling needs seeds");
  const auto rep = run_coupling_audit(c);
  auto os = open_output(c, "coupling_audit.csv");
  write_coupling(os, c, rep);
  log << "audit-coupling: " << rep.total_events << " events checked over " << rep.rows.size()
      << " seeds: " << (rep.passed() ? "pass" : "FAIL") << '\n';
  for (const auto& r : rep.rows)
    if (!r.passed) log << "  seed " << r.seed << ": " << r.violation << '\n';
  return rep.passed() ? kExitOk : kExitAuditViolation;
}

inline int verb_classify_env(const ExperimentConfig& c, std::ostream& log) {
  const auto rows = run_classify(c);
  auto os = open_output(c, "classify.csv");
  write_classify(os, c, rows);
  log << "classify-env: " << rows.size() << " environments\n";
  return kExitOk;
}

inline int verb_sigma_solve(const ExperimentConfig& c, std::ostream& log) {
  const auto rows = run_sigma(c);
  auto os = open_output(c, "sigma_summary.csv");
  write_sigma_summary(os, c, rows);
  for (const auto& r : rows) {
    if (!r.profile) continue;
    auto prof = open_output(c, "sigma" + (r.seed ? "_seed" + std::to_string(*r.seed) : "") + ".csv");
    write_header(prof, c, "sigma-solve");
    write_sigma_csv(prof, *r.profile);
  }
  log << "sigma-solve: " << rows.size() << " profiles\n";
  return kExitOk;
}

}  // namespace asep
