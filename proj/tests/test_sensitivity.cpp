#include <doctest.h>

#include "ricb/csv.hpp"
#include "ricb/error.hpp"
#include "ricb/sensitivity.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <unistd.h>

using namespace ricb;

namespace {

PropensityHyper prop_hyper(std::size_t iterations)
{
  PropensityHyper h;
  h.iterations = iterations;
  h.learning_rate = 0.01;
  return h;
}

} // namespace

TEST_CASE("gamma_pointwise: worked examples and errors")
{
  auto g = gamma_pointwise(0.3, 0.3);
  CHECK(g.lambda == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g.gamma == doctest::Approx(1.0).epsilon(1e-14));

  g = gamma_pointwise(0.8, 0.5);
  CHECK(g.lambda == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(g.gamma == doctest::Approx(4.0).epsilon(1e-14));

  g = gamma_pointwise(0.2, 0.5);
  CHECK(g.lambda == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g.gamma == doctest::Approx(4.0).epsilon(1e-14));

  CHECK_THROWS_AS(gamma_pointwise(0.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(gamma_pointwise(0.5, 1.0), InvalidArgument);
  CHECK_THROWS_AS(gamma_pointwise(std::nan(""), 0.5), InvalidArgument);
}

TEST_CASE("gamma_ball: degenerate, infinite and toy balls")
{
  // standardized coordinates equal these because mean 0 and unit variance
  const double s = std::sqrt(2.0);
  Tensor phi = Tensor::matrix(5, 1, { -s, -s / 2, 0.0, s / 2, s });
  // variance of {-s,-s/2,0,s/2,s} is (2+0.5+0+0.5+2)/5 = 1
  const std::vector<double> gp{ 1.5, 3.0, 2.0, 1.0, 6.0 };
  GammaField f(phi, gp);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(f.ball(i, 1e-9) == gp[i]);
    CHECK(f.ball(i, std::numeric_limits<double>::infinity()) == 6.0);
  }
  // ball around point 1 reaching point 2 only (distance s/2 ~ 0.707)
  const double delta = 0.75;
  double brute = 0.0;
  for (std::size_t j = 0; j < 5; ++j)
    if (std::abs(f.standardized_phi()[j] - f.standardized_phi()[2]) <= delta)
      brute = std::max(brute, gp[j]);
  CHECK(f.ball(2, delta) == brute);
  CHECK(f.ball(2, delta) == 3.0);
  CHECK(f.ball(3, delta) == 6.0);

  // a test point keeps its own Gamma even when the ball is empty
  const double far[] = { 100.0 };
  CHECK(f.at(far, 1.7, 0.01) == 1.7);
  const double near[] = { -s / 2 + 1e-4 };
  CHECK(f.at(near, 1.0, 0.01) == 3.0);

  CHECK_THROWS_AS(f.ball(9, 0.1), InvalidArgument);
  CHECK_THROWS_AS(GammaField(phi, { 1.0, 1.0 }), InvalidArgument);
  CHECK_THROWS_AS(GammaField(phi, { 1.0, 1.0, 0.5, 1.0, 1.0 }), InvalidArgument);
}

TEST_CASE("gamma_ball: >= 1 and monotone in delta on random data")
{
  Rng rng = make_rng(3, 3);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(1.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor phi = Tensor::matrix(60, 2);
    for (double& v : phi.raw())
      v = nd(rng);
    std::vector<double> gp(60);
    for (double& g : gp)
      g = u(rng);
    GammaField f(phi, gp);
    std::vector<double> prev(60, 0.0);
    for (double delta : { 0.0005, 0.001, 0.005, 0.01, 0.05, 0.2, 1.0 }) {
      const auto b = f.ball_all(delta);
      for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b[i] >= 1.0);
        CHECK(b[i] >= gp[i]);
        CHECK(b[i] >= prev[i]);
      }
      prev = b;
    }
  }
}

TEST_CASE("train_propensity: balanced independent treatment, separable data, clamp")
{
  Rng rng = make_rng(5, 5);
  std::normal_distribution<double> nd;
  const std::size_t n = 5000;
  Tensor x = Tensor::matrix(n, 2);
  for (double& v : x.raw())
    v = nd(rng);
  std::vector<int> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = static_cast<int>(i % 2);
  std::shuffle(a.begin(), a.end(), rng);
  // weight decay 0.1 is a member of the tuning grid; without it the sparse
  // Gaussian tails drift
  PropensityHyper tuned;
  tuned.weight_decay = 0.1;
  const PropensityNet flat = train_propensity(x, a, tuned, 1, 1, 2);
  double worst = 0.0;
  for (double p : flat.predict(x))
    worst = std::max(worst, std::abs(p - 0.5));
  MESSAGE("max |pi - 0.5| on balanced data: " << worst);
  CHECK(worst <= 0.05);

  Tensor xs = Tensor::matrix(400, 1);
  std::vector<int> as(400);
  for (std::size_t i = 0; i < 400; ++i) {
    xs[i] = (i % 2 ? 1.0 : -1.0) * (0.5 + 0.01 * static_cast<double>(i % 50));
    as[i] = i % 2 ? 1 : 0;
  }
  const PropensityNet sep = train_propensity(xs, as, prop_hyper(2000), 2, 1, 2);
  const double bce = sep.evaluate_bce(xs, as);
  MESSAGE("separable in-sample BCE " << bce);
  CHECK(bce < 0.1);

  Rng init(0);
  PropensityNet fixed(1, 2, init);
  for (Parameter* p : fixed.net().parameters())
    p->value.fill(0.0);
  fixed.net().b2().value.fill(std::log(0.999 / 0.001));
  CHECK(fixed.predict_raw(xs)[0] == doctest::Approx(0.999).epsilon(1e-12));
  CHECK(fixed.predict(xs)[0] == 0.99);

  std::vector<int> ones(400, 1);
  CHECK_THROWS_AS(train_propensity(xs, ones, prop_hyper(10), 1, 1, 2), InvalidArgument);
}

TEST_CASE("fit_sensitivity: matching propensities give Gamma = 1, reuse, csv")
{
  const Dataset d = gen_synthetic(600, 4);
  Stage0Hyper h;
  h.iterations = 300;
  auto s0 = train_stage0(EstimatorSpec::preset("CFR-ISW"), d, 2, h, 1);
  SensitivityHyper sh;
  sh.x = prop_hyper(300);
  sh.phi = prop_hyper(300);
  auto est = fit_sensitivity(s0, d, sh, 1);
  CHECK(est.pair.reused_phi);
  CHECK_FALSE(est.pair.reused_x);
  CHECK(est.field.size() == 600);
  for (double g : est.field.gamma_point())
    CHECK(g >= 1.0);

  // same network on both sides: every ratio is exactly one
  PropensityPair same;
  same.pi_x = est.pair.pi_x;
  same.pi_phi = est.pair.pi_x;
  for (double g : same.gamma_point(d.x, d.x))
    CHECK(g == doctest::Approx(1.0).epsilon(1e-12));

  sh.reuse_stage0 = false;
  auto fresh = fit_sensitivity(s0, d, sh, 1);
  CHECK_FALSE(fresh.pair.reused_phi);

  const auto dir = std::filesystem::temp_directory_path() /
                   ("ricb_sens_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_gamma_csv(est, 0.05, dir / "gamma.csv");
  const CsvTable t = read_csv(dir / "gamma.csv");
  CHECK(t.header.size() == 1 + 2 + 4);
  CHECK(t.rows.size() == 600);
  CHECK(t.rows[7][6] >= t.rows[7][5]);
  std::filesystem::remove_all(dir);

  Stage0Model untrained = Stage0Model::build(EstimatorSpec::preset("TARNet"), 2, 2, {}, 1);
  CHECK_THROWS_AS(fit_sensitivity(untrained, d, sh, 1), StateError);
}
