#include <doctest.h>

#include "ricb/csv.hpp"
#include "ricb/error.hpp"
#include "ricb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <unistd.h>

using namespace ricb;

namespace {

CateBounds interval(double lo, double hi, double point = 0.0)
{
  CateBounds b;
  b.lower = lo;
  b.upper = hi;
  b.point = point;
  return b;
}

} // namespace

TEST_CASE("point_policy: strict inequality and order")
{
  const double tau[] = { 0.0, 1.0, -0.3, 1e-300 };
  const auto d = point_policy(tau);
  CHECK(d[0] == Decision::no_treat);
  CHECK(d[1] == Decision::treat);
  CHECK(d[2] == Decision::no_treat);
  CHECK(d[3] == Decision::treat);
  const double bad[] = { std::nan("") };
  CHECK_THROWS_AS(point_policy(bad), NumericError);
}

TEST_CASE("bounds_policy: three actions")
{
  const CateBounds b[] = { interval(-1.0, -0.5), interval(-0.1, 0.2), interval(0.05, 0.3),
                           interval(0.0, 0.0) };
  const auto d = bounds_policy(b);
  CHECK(d[0] == Decision::no_treat);
  CHECK(d[1] == Decision::defer);
  CHECK(d[2] == Decision::treat);
  CHECK(d[3] == Decision::defer);
  const CateBounds inverted[] = { interval(1.0, 0.0) };
  CHECK_THROWS_AS(bounds_policy(inverted), InvalidArgument);
}

TEST_CASE("score_policy: oracle match, all deferred, hand count, permutation")
{
  const double tau[] = { 1.0, -1.0, 0.5, -0.2 };
  const auto ideal = point_policy(tau);
  auto r = score_policy(ideal, tau);
  REQUIRE(r.error_rate);
  CHECK(*r.error_rate == 0.0);
  CHECK(r.deferral_rate == 0.0);

  const std::vector<Decision> all(4, Decision::defer);
  r = score_policy(all, tau);
  CHECK_FALSE(r.error_rate);
  CHECK(r.deferral_rate == 1.0);
  CHECK(r.n_decided == 0);

  // 10 points, 2 deferred, 2 of the remaining 8 wrong
  std::vector<double> oracle(10, 1.0);
  std::vector<Decision> dec(10, Decision::treat);
  dec[0] = dec[1] = Decision::defer;
  dec[2] = dec[3] = Decision::no_treat;
  r = score_policy(dec, oracle);
  CHECK(*r.error_rate == 0.25);
  CHECK(r.deferral_rate == 0.2);
  CHECK(r.n_decided == 8);

  Rng rng = make_rng(1, 1);
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Decision> pd(10);
  std::vector<double> po(10);
  for (std::size_t i = 0; i < 10; ++i) {
    pd[i] = dec[perm[i]];
    po[i] = oracle[perm[i]];
  }
  const auto rp = score_policy(pd, po);
  CHECK(*rp.error_rate == *r.error_rate);
  CHECK(rp.deferral_rate == r.deferral_rate);

  CHECK_THROWS_AS(score_policy(dec, tau), InvalidArgument);

  PolicyReport b, p;
  b.error_rate = 0.1;
  p.error_rate = 0.25;
  CHECK(*delta_error_rate(b, p) == doctest::Approx(-0.15));
  b.error_rate.reset();
  CHECK_FALSE(delta_error_rate(b, p));
}

TEST_CASE("collapsed bounds agree with the point policy where decided")
{
  Rng rng = make_rng(2, 2);
  std::normal_distribution<double> nd;
  std::vector<double> tau(200);
  std::vector<CateBounds> b(200);
  for (std::size_t i = 0; i < 200; ++i) {
    tau[i] = nd(rng);
    b[i] = interval(tau[i], tau[i], tau[i]);
  }
  const auto pp = point_policy(tau);
  const auto bp = bounds_policy(b);
  for (std::size_t i = 0; i < 200; ++i)
    if (bp[i] != Decision::defer)
      CHECK(bp[i] == pp[i]);
  CHECK(score_policy(pp, tau).deferral_rate == 0.0);
}

TEST_CASE("rpehe: oracles")
{
  const double e[] = { 1.0, 1.0, 1.0 };
  const double zero[] = { 0.0, 0.0, 0.0 };
  CHECK(rpehe(e, e) == 0.0);
  CHECK(rpehe(zero, e) == 1.0);

  Rng rng = make_rng(3, 3);
  std::normal_distribution<double> nd;
  std::vector<double> a(500), b(500);
  for (std::size_t i = 0; i < 500; ++i) {
    a[i] = nd(rng);
    b[i] = nd(rng);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < 500; ++i)
    s += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(rpehe(a, b) == doctest::Approx(std::sqrt(s / 500.0)).epsilon(1e-12));
  CHECK_THROWS_AS(rpehe(std::span<const double>(e).first(2), e), InvalidArgument);
}

TEST_CASE("spearman: monotone, reversed, ties, constant")
{
  const double a[] = { 1, 2, 3, 4, 5 };
  const double up[] = { 0.1, 0.5, 0.7, 2.0, 9.0 };
  const double down[] = { 5, 4, 3, 2, 1 };
  const double c[] = { 2, 2, 2, 2, 2 };
  CHECK(spearman(a, up) == doctest::Approx(1.0));
  CHECK(spearman(a, down) == doctest::Approx(-1.0));
  CHECK(spearman(a, c) == 0.0);
  const double tied[] = { 1, 1, 2, 3, 3 };
  // hand computed: ranks (1.5,1.5,3,4.5,4.5) vs (1..5) -> 0.9486833
  CHECK(spearman(a, tied) == doctest::Approx(0.9486833).epsilon(1e-6));
}

TEST_CASE("curve and decision grid csv")
{
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ricb_eval_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const CurvePoint pts[] = { { 0.0005, 0.1, 0.2 }, { 0.05, 1.0, std::nullopt } };
  write_curve_csv(pts, dir / "curve.csv");
  const TextTable t = read_text_csv(dir / "curve.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][2].empty());
  CHECK(parse_double(t.rows[0][2]) == 0.2);

  const Tensor g = covariate_lattice(-2.0, 2.0, 5);
  CHECK(g.rows() == 25);
  CHECK(g(0, 0) == -2.0);
  CHECK(g(24, 1) == 2.0);
  std::vector<double> oracle(25, 1.0);
  std::vector<CateBounds> b(25, interval(-0.5, 0.5, 0.1));
  write_decision_grid_csv(g, oracle, b, dir / "grid.csv");
  const TextTable gt = read_text_csv(dir / "grid.csv");
  CHECK(gt.rows.size() == 25);
  CHECK(gt.rows[3][gt.column("policy_bounds")] == "defer");
  CHECK(gt.rows[3][gt.column("policy_point")] == "treat");
  std::filesystem::remove_all(dir);
}
