#include <doctest.h>

#include "ricb/bounds.hpp"
#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace ricb;

namespace {

std::vector<double> sorted_normals(std::size_t k, std::uint64_t seed)
{
  Rng rng = make_rng(seed, 77);
  std::normal_distribution<double> nd;
  std::vector<double> v(k);
  for (double& x : v)
    x = nd(rng);
  std::sort(v.begin(), v.end());
  return v;
}

double phi_pdf(double y)
{
  return std::exp(-0.5 * y * y) / std::sqrt(2.0 * std::numbers::pi);
}

// trapezoid integral of y * N(0,1) pdf over [lo, hi]
double first_moment(double lo, double hi, std::size_t steps = 200000)
{
  const double h = (hi - lo) / static_cast<double>(steps);
  double s = 0.0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double y = lo + h * static_cast<double>(i);
    s += (i == 0 || i == steps ? 0.5 : 1.0) * y * phi_pdf(y);
  }
  return s * h;
}

struct Pipeline
{
  Dataset train, test;
  Stage0Model stage0;
  SensitivityEstimate sens;
  ConditionalFlow flow;
};

Pipeline small_pipeline(std::uint64_t seed)
{
  Pipeline p;
  p.train = gen_synthetic(500, seed);
  p.test = gen_synthetic(40, seed, Split::test);
  Stage0Hyper h;
  h.iterations = 400;
  p.stage0 = train_stage0(EstimatorSpec::preset("TARNet"), p.train, 1, h, seed);
  SensitivityHyper sh;
  sh.x.iterations = sh.phi.iterations = 400;
  p.sens = fit_sensitivity(p.stage0, p.train, sh, seed);
  FlowHyper fh;
  fh.iterations = 400;
  p.flow = train_cnf(p.sens.phi_train, p.train.a, p.train.y, fh, seed);
  return p;
}

} // namespace

TEST_CASE("shift_coefficients: collapse, worked example, identity, errors")
{
  for (double pi : { 0.01, 0.3, 0.5, 0.99 }) {
    const auto c = shift_coefficients(1.0, pi);
    CHECK(c.s_minus == 1.0);
    CHECK(c.s_plus == 1.0);
    CHECK(c.c_minus == 0.5);
    CHECK(c.c_plus == 0.5);
  }
  const auto c = shift_coefficients(2.0, 0.5);
  CHECK(c.s_minus == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(c.s_plus == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(c.c_minus == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(c.c_plus == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(c.c_minus / c.s_minus + (1.0 - c.c_minus) / c.s_plus == doctest::Approx(1.0).epsilon(1e-15));

  double worst = 0.0;
  for (int gi = 0; gi <= 90; ++gi)
    for (int pj = 0; pj <= 90; ++pj) {
      const double gamma = 1.0 + 0.1 * gi;
      const double pi = 0.05 + 0.01 * pj;
      const auto s = shift_coefficients(gamma, pi);
      worst = std::max(worst, std::abs(s.c_minus / s.s_minus + (1.0 - s.c_minus) / s.s_plus - 1.0));
      worst = std::max(worst, std::abs(s.c_minus + s.c_plus - 1.0));
    }
  CHECK(worst <= 1e-12);

  CHECK_THROWS_AS(shift_coefficients(0.99, 0.5), InvalidArgument);
  CHECK_THROWS_AS(shift_coefficients(2.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(shift_coefficients(std::nan(""), 0.5), InvalidArgument);
}

TEST_CASE("cvar_mu_bounds: Gamma = 1, normal oracle, symmetry, errors")
{
  const auto y = sorted_normals(100000, 1);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 1e5;
  for (auto split : { BoundarySplit::fractional, BoundarySplit::floor }) {
    const auto b = cvar_mu_bounds(y, shift_coefficients(1.0, 0.4), split);
    CHECK(b.lower == doctest::Approx(mean).epsilon(1e-12));
    CHECK(b.upper == doctest::Approx(mean).epsilon(1e-12));
  }

  const auto c = shift_coefficients(2.0, 0.5);
  const double q = standard_normal_quantile(c.c_minus);
  const double oracle =
    first_moment(-12.0, q) / c.s_minus + first_moment(q, 12.0) / c.s_plus;
  CHECK(oracle == doctest::Approx(-0.75 * phi_pdf(q)).epsilon(1e-6));
  CHECK(oracle == doctest::Approx(-0.2727).epsilon(1e-3));
  for (auto split : { BoundarySplit::fractional, BoundarySplit::floor }) {
    const auto b = cvar_mu_bounds(y, c, split);
    MESSAGE("mu_lower " << b.lower << " oracle " << oracle);
    CHECK(std::abs(b.lower - oracle) <= 0.01);
    CHECK(std::abs(b.upper + oracle) <= 0.01);
  }

  // exactly symmetric sample: y and -y
  std::vector<double> sym(y.begin(), y.begin() + 5000);
  for (std::size_t i = 0; i < 5000; ++i)
    sym.push_back(-y[i]);
  std::sort(sym.begin(), sym.end());
  const auto b = cvar_mu_bounds(sym, c);
  CHECK(b.upper == doctest::Approx(-b.lower).epsilon(1e-9));

  const double unsorted[] = { 1.0, 0.0 };
  CHECK_THROWS_AS(cvar_mu_bounds(unsorted, c), InvalidArgument);
  CHECK_THROWS_AS(cvar_mu_bounds(std::span<const double>(), c), InvalidArgument);
}

TEST_CASE("cvar_mu_bounds: sandwich and monotone widening, 1000 instances")
{
  Rng rng = make_rng(2, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> ksize(1, 400);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = static_cast<std::size_t>(ksize(rng));
    const double shift = 100.0 * (u(rng) - 0.5);
    const double spread = trial % 10 == 0 ? 0.0 : 3.0 * u(rng);
    std::vector<double> y(k);
    for (double& v : y)
      v = shift + spread * (trial % 3 == 0 ? std::exp(nd(rng)) : nd(rng));
    std::sort(y.begin(), y.end());
    const double pi = 0.01 + 0.98 * u(rng);
    double prev_lo = 1e300, prev_hi = -1e300;
    for (double gamma : { 1.0, 1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 50.0 }) {
      const auto b = cvar_mu_bounds(y, shift_coefficients(gamma, pi));
      if (!(b.lower <= b.mean && b.mean <= b.upper))
        ++violations;
      if (!(b.lower <= prev_lo && b.upper >= prev_hi))
        ++violations;
      prev_lo = b.lower;
      prev_hi = b.upper;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("bounds estimator: collapse, widening in Gamma and delta, errors")
{
  Pipeline p = small_pipeline(3);
  BoundsConfig cfg;
  cfg.k = 2000;
  cfg.seed = 5;
  BoundsEstimator est(p.stage0, p.sens, p.flow, cfg);

  const std::vector<double> ones(p.test.size(), 1.0);
  const auto unit = est.evaluate_with_gamma(p.test.x, ones);
  for (const auto& b : unit) {
    CHECK(b.lower <= b.upper);
    CHECK(b.width() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.lower == doctest::Approx(b.flow_cate).epsilon(1e-9));
  }

  const std::vector<double> twos(p.test.size(), 2.0);
  const std::vector<double> fours(p.test.size(), 4.0);
  const auto b2 = est.evaluate_with_gamma(p.test.x, twos);
  const auto b4 = est.evaluate_with_gamma(p.test.x, fours);
  for (std::size_t i = 0; i < b2.size(); ++i) {
    CHECK(b4[i].lower <= b2[i].lower);
    CHECK(b4[i].upper >= b2[i].upper);
    CHECK(b2[i].point == unit[i].point);
  }

  const auto by_delta = est.evaluate(p.test.x, default_deltas);
  REQUIRE(by_delta.size() == 5);
  for (std::size_t d = 1; d < by_delta.size(); ++d)
    for (std::size_t i = 0; i < p.test.size(); ++i) {
      CHECK(by_delta[d][i].gamma >= by_delta[d - 1][i].gamma);
      CHECK(by_delta[d][i].lower <= by_delta[d - 1][i].lower);
      CHECK(by_delta[d][i].upper >= by_delta[d - 1][i].upper);
    }
  // same seed, same numbers
  const auto again = est.evaluate(p.test.x, 0.01);
  for (std::size_t i = 0; i < again.size(); ++i)
    CHECK(again[i].lower == by_delta[3][i].lower);

  ConditionalFlow untrained(1, FlowHyper{}, 1);
  CHECK_THROWS_AS(BoundsEstimator(p.stage0, p.sens, untrained, cfg), StateError);
  CHECK_THROWS_AS(est.evaluate_with_gamma(p.test.x, std::vector<double>(3, 1.0)),
                  InvalidArgument);
  CHECK_THROWS_AS(est.evaluate_with_gamma(p.test.x, std::vector<double>(p.test.size(), 0.5)),
                  InvalidArgument);
}
