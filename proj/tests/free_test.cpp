#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "asep/environment.hpp"
#include "asep/free.hpp"

using namespace asep;

namespace {

// E log(p/(1-p)) for p ~ uniform(a, b), by antiderivative.
double uniform_log_odds_mean(double a, double b) {
  const auto f = [](double p) { return p * std::log(p) + (1 - p) * std::log(1 - p); };
  return (f(b) - f(a)) / (b - a);
}

}  // namespace

TEST(SolveSigma, ConstantProfileCarriesDriftFlux) {
  const auto env = make_homogeneous(0.6, -20, 20);
  const auto s = solve_sigma(env, 0.2, 1.0);
  EXPECT_EQ(s.base_index(), 0);
  for (int i = -20; i <= 20; ++i) EXPECT_NEAR(s.sigma(i), 1.0, 1e-10) << i;
  EXPECT_LE(s.invariance_residual(env), 1e-12);
  EXPECT_LE(s.flux_residual(env), 1e-12);
}

TEST(SolveSigma, ZeroFluxIsThePiProfile) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto env = make_iid(Uniform{0.2, 0.8}, seed, -40, 40);
    const auto s = solve_sigma(env, 0.0, 2.5);
    const auto pi = pi_profile(env);
    const double scale = 2.5 / pi.pi(0);
    for (int i = -40; i <= 40; ++i)
      EXPECT_NEAR(s.sigma(i) / (scale * pi.pi(i)), 1.0, 1e-12) << i;
  }
}

TEST(SolveSigma, LeftDriftCannotCarryPositiveFlux) {
  const auto env = make_homogeneous(0.4, 0, 60);
  try {
    solve_sigma(env, 0.1, 1.0);
    FAIL() << "expected a nonpositive sigma";
  } catch (const NonpositiveSigmaError& e) {
    // sigma_1 = (0.4 - 0.1)/0.6 = 0.5, sigma_2 = (0.2 - 0.1)/0.6, sigma_3 < 0
    EXPECT_EQ(e.site(), 3);
    EXPECT_LE(e.value(), 0.0);
  }
}

TEST(SolveSigma, BaseIsLeftEndWithoutOrigin) {
  const auto env = make_homogeneous(0.7, 5, 12);
  const auto s = solve_sigma(env, 0.1, 3.0);
  EXPECT_EQ(s.base_index(), 5);
  EXPECT_DOUBLE_EQ(s.sigma(5), 3.0);
  EXPECT_NEAR(s.sigma(6), (0.7 * 3.0 - 0.1) / 0.3, 1e-14);
}

TEST(SolveSigma, ResidualsOnRandomEnvironments) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto env = make_iid(Uniform{0.55, 0.95}, seed, -40, 40);
    const auto s = solve_sigma(env, 0.05, 1.0);
    EXPECT_LE(s.invariance_residual(env), 1e-12) << seed;
    EXPECT_LE(s.flux_residual(env), 1e-12) << seed;
  }
}

TEST(SolveSigma, RejectsBadInput) {
  const auto env = make_homogeneous(0.6, -3, 3);
  EXPECT_THROW(solve_sigma(env, 0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(solve_sigma(env, 0.1, 1.0, -4, 3), std::invalid_argument);
}

TEST(SolveSigma, CsvLayout) {
  std::ostringstream os;
  write_sigma_csv(os, solve_sigma(make_homogeneous(0.6, -1, 1), 0.2, 1.0));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "# phi=0.20000000000000001 base=0");
  EXPECT_NE(os.str().find("site,sigma\n-1,"), std::string::npos);
}

TEST(Criterion, RightDriftGivesPositiveFlux) {
  const auto c = criterion(make_homogeneous(0.6, -40, 40));
  EXPECT_EQ(c.verdict, FluxVerdict::positive_flux_exists);
  EXPECT_NEAR(c.positive_sum.back(), 3.0, 1e-5);
  EXPECT_EQ(c.positive_sum.front(), 1.0);
  EXPECT_NEAR(c.positive_sum[1], 1.0 + 0.4 / 0.6, 1e-14);
  EXPECT_EQ(c.negative_tail, series::Tail::growing);
}

TEST(Criterion, LeftDriftGivesNegativeFlux) {
  const auto c = criterion(make_homogeneous(0.3, -40, 40));
  EXPECT_EQ(c.verdict, FluxVerdict::negative_flux_exists);
  EXPECT_NEAR(c.negative_sum.back(), 1.0 / (1.0 - 3.0 / 7.0), 1e-9);
}

TEST(Criterion, SymmetricGrowsLinearly) {
  const auto c = criterion(make_homogeneous(0.5, -40, 40));
  EXPECT_EQ(c.verdict, FluxVerdict::neither);
  EXPECT_DOUBLE_EQ(c.positive_sum.back(), 42.0);
  EXPECT_DOUBLE_EQ(c.negative_sum.back(), 42.0);
}

TEST(Criterion, OutwardAndInwardDrift) {
  std::vector<double> out(81), in(81);
  for (int i = -40; i <= 40; ++i) {
    out[static_cast<std::size_t>(i + 40)] = i >= 0 ? 0.7 : 0.3;
    in[static_cast<std::size_t>(i + 40)] = i >= 0 ? 0.3 : 0.7;
  }
  EXPECT_EQ(criterion(Environment(-40, out)).verdict, FluxVerdict::both_exist);
  EXPECT_EQ(criterion(Environment(-40, in)).verdict, FluxVerdict::both_diverge);
}

TEST(Criterion, IidSamplesFollowDriftSign) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EXPECT_EQ(criterion(make_iid(Uniform{0.55, 0.95}, seed, -64, 64)).verdict,
              FluxVerdict::positive_flux_exists)
        << seed;
    EXPECT_EQ(criterion(make_iid(Uniform{0.05, 0.45}, seed, -64, 64)).verdict,
              FluxVerdict::negative_flux_exists)
        << seed;
  }
}

TEST(Criterion, NeedsWideWindow) {
  EXPECT_THROW(criterion(make_homogeneous(0.6, -31, 40)), std::invalid_argument);
  EXPECT_THROW(criterion(make_homogeneous(0.6, -40, 31)), std::invalid_argument);
  EXPECT_NO_THROW(criterion(make_homogeneous(0.6, -32, 32)));
}

TEST(Criterion, PositiveVerdictHasWitness) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto env = make_iid(Uniform{0.55, 0.95}, seed, -64, 64);
    ASSERT_EQ(criterion(env).verdict, FluxVerdict::positive_flux_exists);
    const auto w = find_positive_flux_solution(env);
    ASSERT_TRUE(w.has_value()) << seed;
    EXPECT_GT(w->flux(), 0.0);
    for (double v : w->values()) EXPECT_GT(v, 0.0);
    EXPECT_LE(w->flux_residual(env), 1e-12);
  }
  const auto flat = make_homogeneous(0.6, -40, 40);
  ASSERT_TRUE(find_positive_flux_solution(flat).has_value());
  EXPECT_FALSE(find_positive_flux_solution(make_homogeneous(0.45, -40, 40)).has_value());
}

TEST(Solomon, TwoPointSymmetricIsZero) {
  const auto d = solomon_classify(TwoPoint{0.3, 0.7, 0.5}, 1000, 1);
  EXPECT_TRUE(d.exact);
  EXPECT_NEAR(d.mean, 0.0, 1e-15);
  EXPECT_EQ(d.sign, 0);
}

TEST(Solomon, PointMass) {
  const auto d = solomon_classify(point_mass(0.6), 1000, 1);
  EXPECT_NEAR(d.mean, std::log(1.5), 1e-15);
  EXPECT_NEAR(d.mean, 0.405465, 1e-6);
  EXPECT_EQ(d.sign, 1);
}

TEST(Solomon, UniformMonteCarlo) {
  const double want = uniform_log_odds_mean(0.55, 0.95);
  const auto d = solomon_classify(Uniform{0.55, 0.95}, 100000, 7);
  EXPECT_FALSE(d.exact);
  EXPECT_EQ(d.sign, 1);
  EXPECT_GT(d.ci_low, 0.0);
  EXPECT_NEAR(d.mean, want, 4 * d.std_error);
  const auto left = solomon_classify(Uniform{0.05, 0.45}, 100000, 7);
  EXPECT_EQ(left.sign, -1);
  EXPECT_NEAR(left.mean, uniform_log_odds_mean(0.05, 0.45), 4 * left.std_error);
  const auto sym = solomon_classify(Uniform{0.2, 0.8}, 100000, 7);
  EXPECT_EQ(sym.sign, 0);
}

TEST(Solomon, RejectsFewSamples) {
  EXPECT_THROW(solomon_classify(Uniform{0.2, 0.8}, 999, 1), std::invalid_argument);
}
