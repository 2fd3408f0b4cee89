#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>
#include <sstream>

#include "asep/exact.hpp"
#include "asep/sim.hpp"

using namespace asep;

namespace {

ChainSpec random_chain(std::uint64_t seed, int len, Boundary b = Boundary::driven) {
  return ChainSpec(1, len, make_iid(Uniform{0.2, 0.8}, seed, 0, len), b);
}

/// Residual p-direction moves land on eta instead of eta'.
struct CorruptedCoupling {
  template <class Emit>
  static void for_each_move(const CoupledRates& r, const CoupledState& s, Emit&& emit) {
    BasicCoupling::for_each_move(r, s, [&](CoupledMove mv) {
      if (mv.kind == EventKind::prime_only && mv.direction == 1 && mv.bond >= r.m &&
          mv.bond < r.n) {
        const int k = mv.bond - r.m;
        const bool plain_10 = ((s.eta >> k) & 1U) && !((s.eta >> (k + 1)) & 1U);
        if (plain_10) mv.kind = EventKind::plain_only;
      }
      emit(mv);
    });
  }
};

}  // namespace

TEST(Gillespie, ClosedChainConservesParticles) {
  const auto spec = random_chain(3, 7, Boundary::closed);
  const State start = 0b1011001;
  ChainSimulator sim(spec, 11, start);
  bool ok = true;
  sim.set_event_sink([&](const Event&) {});
  for (int t = 1; t <= 200; ++t) {
    sim.advance_to(t * 5.0);
    ok = ok && std::popcount(sim.state()) == std::popcount(start);
  }
  EXPECT_TRUE(ok);
  EXPECT_GT(sim.events(), 100U);
}

TEST(Gillespie, DeterministicGivenSeed) {
  const auto spec = random_chain(5, 5);
  const auto a = gillespie_run(spec, 42, 500.0);
  const auto b = gillespie_run(spec, 42, 500.0);
  const auto c = gillespie_run(spec, 43, 500.0);
  EXPECT_EQ(a.config, b.config);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.occupation_time, b.occupation_time);
  EXPECT_NE(a.events, c.events);
}

TEST(Gillespie, CountersTrackOccupancy) {
  const auto spec = random_chain(8, 6);
  const auto tr = gillespie_run(spec, 9, 2000.0);
  // particles present = injections - extractions
  EXPECT_EQ(std::popcount(tr.config), tr.crossings.at(0) - tr.crossings.at(6));
  // particles right of bond k = flux in across k - extractions
  for (int k = 1; k < 6; ++k) {
    const State right = tr.config >> k;
    EXPECT_EQ(std::popcount(right), tr.crossings.at(k) - tr.crossings.at(6)) << k;
  }
}

TEST(Gillespie, SingleSiteOccupiedHalfTheTime) {
  const ChainSpec spec(0, 0, make_homogeneous(0.6, -1, 0));
  const auto est = occupation_mc(spec, 1, 20000.0, 0);
  EXPECT_NEAR(est.mean, 0.5, 3 * est.std_error);
  EXPECT_GT(est.std_error, 0);
}

// One-way reservoirs keep a gradient even at p = 1/2: the symmetric exclusion
// current with unit entry/exit rates is 1/(L+1), halved by the clock here.
TEST(Gillespie, SymmetricDrivenChainCarriesGradientCurrent) {
  const auto est = flux_mc(homogeneous_chain(0.5, 5), 2, 40000.0, 3);
  EXPECT_NEAR(est.mean, 1.0 / 12.0, 3 * est.std_error);
}

TEST(Gillespie, SymmetricClosedChainHasNoFlux) {
  const auto est = flux_mc(homogeneous_chain(0.5, 5, Boundary::closed), 2, 40000.0, 3, {},
                            0b01011);
  EXPECT_GT(est.std_error, 0);
  EXPECT_NEAR(est.mean, 0.0, 3 * est.std_error);
}

TEST(Gillespie, EventLogFormat) {
  std::ostringstream os;
  ChainSimulator sim(homogeneous_chain(0.7, 3), 4);
  sim.set_event_sink(csv_event_log(os));
  sim.advance_to(5.0);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,site,kind");
  std::getline(in, line);
  EXPECT_EQ(line.substr(line.find(',')), ",0,inject");
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, sim.events());
}

TEST(FluxMc, AgreesWithExactAtL6) {
  const auto spec = homogeneous_chain(0.6, 6);
  const double exact = flux_exact(stationary(spec)).value;
  EXPECT_NEAR(exact, 0.11262345774206815, 1e-12);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto est = flux_mc(spec, seed, 10000.0, 3);
    if (std::abs(est.mean - exact) <= 3 * est.std_error) ++inside;
  }
  EXPECT_GE(inside, 18);
}

TEST(FluxMc, ClosedChainHasNoFlux) {
  const auto est = flux_mc(random_chain(4, 6, Boundary::closed), 7, 20000.0, 3, {}, 0b110100);
  EXPECT_GT(est.std_error, 0);
  EXPECT_NEAR(est.mean, 0.0, 3 * est.std_error);
}

TEST(FluxMc, WeakDriveAtL12MatchesExact) {
  const auto est = flux_mc(homogeneous_chain(0.55, 12), 3, 40000.0, 6);
  EXPECT_GT(est.mean, 0.0);
  EXPECT_NEAR(est.mean, 0.05787489792, 3 * est.std_error);
}

TEST(FluxMc, RejectsShortHorizon) {
  EXPECT_THROW(flux_mc(homogeneous_chain(0.6, 4), 1, 10.0, 2), std::invalid_argument);
  EXPECT_NO_THROW(flux_mc(homogeneous_chain(0.6, 4), 1, 30.0, 2));
  EXPECT_THROW(flux_mc(homogeneous_chain(0.6, 4), 1, 1000.0, 9), std::out_of_range);
  BatchOptions few;
  few.batches = 10;
  EXPECT_THROW(flux_mc(homogeneous_chain(0.6, 4), 1, 1000.0, 2, few), std::invalid_argument);
}

TEST(FluxMc, MeanIsRetainedWindowAverage) {
  const auto spec = homogeneous_chain(0.7, 4);
  const auto est = flux_mc(spec, 5, 1000.0, 0);
  ChainSimulator sim(spec, 5);
  sim.advance_to(100.0);
  const auto before = sim.crossings().at(0);
  sim.advance_to(1000.0);
  EXPECT_DOUBLE_EQ(est.mean, static_cast<double>(sim.crossings().at(0) - before) / 900.0);
  EXPECT_EQ(est.batches, 20);
  EXPECT_EQ(est.horizon, 1000.0);
}

TEST(Coupling, EqualEnvironmentsCollapse) {
  const auto env = make_iid(Uniform{0.3, 0.7}, 5, 0, 5);
  CoupledSimulator sim(CoupledRates(1, 5, Boundary::driven, env, env), 8, 0b10110);
  bool same = true;
  sim.set_observer([&](const CoupledSimulator<>& s) {
    const auto& st = s.state();
    same = same && st.eta == st.eta_prime && st.x == 0 && st.y == 0 &&
           s.last_move().kind == EventKind::joint;
  });
  sim.advance_to(500.0);
  EXPECT_TRUE(same);
  for (int b = 0; b <= 5; ++b) EXPECT_EQ(sim.plain_crossings().at(b), sim.prime_crossings().at(b));
}

TEST(Coupling, RejectsUnorderedEnvironments) {
  const auto low = make_homogeneous(0.5, 0, 4);
  EXPECT_THROW(CoupledRates(1, 4, Boundary::driven, low, low.with_p(2, 0.4)),
               std::invalid_argument);
  EXPECT_NO_THROW(CoupledRates(1, 4, Boundary::driven, low, low.with_p(2, 0.6)));
}

TEST(Coupling, AuditPassesOrderedPairs) {
  for (auto b : {Boundary::driven, Boundary::closed}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto low = make_iid(Uniform{0.1, 0.8}, seed, 0, 6);
      const auto high = shifted(low, 0.1);
      const auto audit = coupled_run(ChainSpec(1, 6, low, b), low, high, seed, 1000.0, 0b011010);
      EXPECT_TRUE(audit.passed()) << *audit.violation;
      EXPECT_GT(audit.events_checked, 1000U);
    }
  }
}

TEST(Coupling, CorruptedTableIsCaught) {
  const auto low = make_homogeneous(0.5, 0, 4);
  const auto audit = coupled_run<CorruptedCoupling>(CoupledRates(1, 4, Boundary::driven, low,
                                                                 shifted(low, 0.3)),
                                                    1, 1000.0);
  ASSERT_FALSE(audit.passed());
  EXPECT_NE(audit.violation->find("after event"), std::string::npos);
  EXPECT_NE(audit.violation->find("eta'="), std::string::npos);
}

// Every completed transition, from every admissible state, keeps both
// invariants and moves x, y as bookkeeping demands.
TEST(Coupling, EveryTransitionPreservesInvariants) {
  const int len = 3;
  const auto low = make_iid(Uniform{0.2, 0.7}, 17, 0, len);
  const auto high = shifted(low, 0.15);
  for (auto b : {Boundary::driven, Boundary::closed}) {
    const CoupledRates r(1, len, b, low, high);
    int checked = 0;
    for (std::int64_t x = 0; x <= 2; ++x) {
      for (State e = 0; e < (1U << len); ++e) {
        for (State ep = 0; ep < (1U << len); ++ep) {
          CoupledState s{x, e, ep, 0};
          s.y = -discrepancy_prefix(s, len);
          if (check_coupled_state(s, len)) continue;
          BasicCoupling::for_each_move(r, s, [&](const CoupledMove& mv) {
            EXPECT_GT(mv.rate, 0.0);
            CoupledState t = s;
            Crossings plain(1, len), prime(1, len);
            apply_move(r, mv, t, &plain, &prime);
            const auto bad = check_coupled_state(t, len);
            EXPECT_FALSE(bad) << *bad << " from x=" << x << " eta=" << state_string(e, len)
                              << " eta'=" << state_string(ep, len) << " bond " << mv.bond;
            for (int k = 0; k <= len; ++k)
              EXPECT_EQ(prime.at(k) - plain.at(k),
                        discrepancy_prefix(t, k) - discrepancy_prefix(s, k));
            ++checked;
          });
        }
      }
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Coupling, RatesReproduceBothMarginals) {
  const CoupledRates r(1, 3, Boundary::driven, make_homogeneous(0.4, 0, 3),
                       make_homogeneous(0.4, 0, 3).with_p(1, 0.9).with_p(3, 0.7));
  for (State e = 0; e < 8; ++e) {
    for (State ep = 0; ep < 8; ++ep) {
      CoupledState s{0, e, ep, 0};
      s.y = -discrepancy_prefix(s, 3);
      if (check_coupled_state(s, 3)) continue;
      std::map<std::pair<int, int>, double> plain_out, prime_out;
      BasicCoupling::for_each_move(r, s, [&](const CoupledMove& mv) {
        if (mv.kind != EventKind::prime_only) plain_out[{mv.bond, mv.direction}] += mv.rate;
        if (mv.kind != EventKind::plain_only) prime_out[{mv.bond, mv.direction}] += mv.rate;
      });
      std::map<std::pair<int, int>, double> want_plain, want_prime;
      const auto fill = [](const ChainSpec& spec, State st, auto& out) {
        if (!(st & 1U)) out[{0, 1}] += spec.p(0);
        for (int k = 0; k < 2; ++k) {
          const bool a = (st >> k) & 1U, c = (st >> (k + 1)) & 1U;
          if (a && !c) out[{k + 1, 1}] += spec.p(k + 1);
          if (!a && c) out[{k + 1, -1}] += spec.q(k + 2);
        }
        if ((st >> 2) & 1U) out[{3, 1}] += spec.p(3);
      };
      fill(r.low_chain(), e, want_plain);
      fill(r.high_chain(), ep, want_prime);
      ASSERT_EQ(plain_out.size(), want_plain.size());
      for (const auto& [key, rate] : want_plain) EXPECT_NEAR(plain_out[key], rate, 1e-15);
      ASSERT_EQ(prime_out.size(), want_prime.size());
      for (const auto& [key, rate] : want_prime) EXPECT_NEAR(prime_out[key], rate, 1e-15);
    }
  }
}

TEST(Coupling, MarginalsMatchIndependentRuns) {
  const int len = 4;
  const auto low = make_iid(Uniform{0.3, 0.7}, 21, 0, len);
  const auto high = shifted(low, 0.2);
  const CoupledRates r(1, len, Boundary::driven, low, high);
  for (int site = 1; site <= len; ++site) {
    CoupledSimulator a(r, 100 + site);
    const auto plain = detail::batch_means(a, 20000.0, {}, [site](const CoupledSimulator<>& s) {
      return s.plain_occupation_time(site);
    });
    CoupledSimulator b(r, 200 + site);
    const auto prime = detail::batch_means(b, 20000.0, {}, [site](const CoupledSimulator<>& s) {
      return s.prime_occupation_time(site);
    });
    const auto ref_low = occupation_mc(r.low_chain(), 300 + site, 20000.0, site);
    const auto ref_high = occupation_mc(r.high_chain(), 400 + site, 20000.0, site);
    EXPECT_LE(std::abs(plain.mean - ref_low.mean),
              4 * std::hypot(plain.std_error, ref_low.std_error))
        << site;
    EXPECT_LE(std::abs(prime.mean - ref_high.mean),
              4 * std::hypot(prime.std_error, ref_high.std_error))
        << site;
  }
}

TEST(Discrepancy, Examples) {
  auto d = discrepancy_observables(0b0110, 0b0110, 4);
  EXPECT_EQ(d.f, 0);
  EXPECT_EQ(d.g, 0);
  // site m is bit 0: "1010" is bits 0 and 2
  d = discrepancy_observables(0b0101, 0b1010, 4);
  EXPECT_EQ(d.f, 4);
  EXPECT_EQ(d.g, 3);
  d = discrepancy_observables(0b1100, 0b0011, 4);
  EXPECT_EQ(d.f, 4);
  EXPECT_EQ(d.g, 1);
  d = discrepancy_observables(0b10001, 0b00100, 5);
  EXPECT_EQ(d.f, 3);
  EXPECT_EQ(d.g, 2);
}

// Interior moves of the basic coupling of two copies in one environment,
// from states with at most one sign change, never add one.
TEST(Discrepancy, SignChangesNeverGrowFromAtMostOne) {
  for (int len = 2; len <= 4; ++len) {
    const auto base = make_iid(Uniform{0.2, 0.8}, 31 + len, 0, len);
    {
      const CoupledRates r(1, len, Boundary::closed, base, base);
      for (State e = 0; e < (1U << len); ++e) {
        for (State ep = 0; ep < (1U << len); ++ep) {
          const int g = discrepancy_observables(e, ep, len).g;
          if (g > 1) continue;
          CoupledState s{0, e, ep, 0};
          BasicCoupling::for_each_move(r, s, [&](const CoupledMove& mv) {
            CoupledState t = s;
            apply_move(r, mv, t, nullptr, nullptr);
            EXPECT_LE(discrepancy_observables(t.eta, t.eta_prime, len).g, g)
                << "eta=" << state_string(e, len)
                << " eta'=" << state_string(ep, len) << " " << to_string(mv.kind) << " bond "
                << mv.bond << " dir " << mv.direction;
          });
        }
      }
    }
  }
}
