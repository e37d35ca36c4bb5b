#include <doctest.h>

#include "ricb/balancing.hpp"
#include "ricb/error.hpp"
#include "ricb/nn.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace ricb;

namespace {

Tensor normal_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double shift = 0.0)
{
  Rng rng = make_rng(seed, 7);
  std::normal_distribution<double> nd;
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.raw())
    v = nd(rng) + shift;
  return t;
}

double value_of(const std::function<Var(Tape&)>& f)
{
  Tape t;
  return f(t).value().item();
}

// Exact OT between two uniform 5-point clouds is an assignment problem.
double brute_force_ot(const Tensor& a, const Tensor& b)
{
  std::vector<int> perm(a.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double d = a(i, k) - b(static_cast<std::size_t>(perm[i]), k);
        s += d * d;
      }
    best = std::min(best, s / static_cast<double>(a.rows()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

} // namespace

TEST_CASE("mmd: identical groups, closed form, large samples")
{
  Tensor x = normal_matrix(20, 3, 1);
  CHECK(value_of([&](Tape& t) { return mmd(t.constant(x), t.constant(x)); }) == 0.0);

  Tensor t1 = Tensor::matrix(2, 2, { 2, 1, 0, -1 }); // mean (1, 0)
  Tensor t0 = Tensor::matrix(2, 2, { 1, 0, -1, 0 }); // mean (0, 0)
  CHECK(value_of([&](Tape& t) { return mmd(t.constant(t1), t.constant(t0)); }) ==
        doctest::Approx(1.0).epsilon(1e-14));

  Tensor p = normal_matrix(10000, 2, 2);
  Tensor q = normal_matrix(10000, 2, 3);
  CHECK(value_of([&](Tape& t) { return mmd(t.constant(p), t.constant(q)); }) < 1e-2);
  std::vector<std::size_t> head(500);
  std::iota(head.begin(), head.end(), 0);
  const Tensor ps = p.rows_subset(head);
  const Tensor qs = q.rows_subset(head);
  const double rbf = value_of(
    [&](Tape& t) { return mmd(t.constant(ps), t.constant(qs), MmdKernel::rbf); });
  CHECK(rbf >= -1e-12);
  CHECK(rbf < 1e-2);
}

TEST_CASE("mmd: empty group and mismatched widths")
{
  Tape t;
  Var a = t.constant(Tensor::matrix(0, 2));
  Var b = t.constant(Tensor::matrix(3, 2, 1.0));
  CHECK_THROWS_AS(mmd(a, b), InvalidArgument);
  CHECK_THROWS_AS(mmd(b, t.constant(Tensor::matrix(2, 3, 1.0))), InvalidArgument);
}

TEST_CASE("sinkhorn: identical sets, single points, five-point oracle")
{
  Tensor x = normal_matrix(12, 2, 4);
  const double same = value_of(
    [&](Tape& t) { return sinkhorn_wasserstein(t.constant(x), t.constant(x), 0.1, 10); });
  MESSAGE("identical-set entropic floor at eps 0.1: " << same);
  CHECK(same >= 0.0);
  CHECK(same < 0.05);

  Tensor p0 = Tensor::matrix(1, 1, 0.0);
  Tensor p1 = Tensor::matrix(1, 1, 1.0);
  CHECK(value_of([&](Tape& t) {
          return sinkhorn_wasserstein(t.constant(p0), t.constant(p1), 0.01, 10);
        }) == doctest::Approx(1.0).epsilon(1e-12));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor a = normal_matrix(5, 2, 10 + seed);
    Tensor b = normal_matrix(5, 2, 20 + seed, 0.5);
    const double exact = brute_force_ot(a, b);
    const double approx = value_of([&](Tape& t) {
      return sinkhorn_wasserstein(t.constant(a), t.constant(b), 0.01, 2000);
    });
    CHECK(std::abs(approx - exact) <= 0.1 * exact);
  }
}

TEST_CASE("sinkhorn: errors")
{
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 1, 0.0));
  CHECK_THROWS_AS(sinkhorn_wasserstein(a, a, 0.0, 10), InvalidArgument);
  CHECK_THROWS_AS(sinkhorn_wasserstein(a, a, 0.1, 0), InvalidArgument);
  CHECK_THROWS_AS(sinkhorn_wasserstein(a, t.constant(Tensor::matrix(0, 1)), 0.1, 3),
                  InvalidArgument);
}

TEST_CASE("metrics are exactly symmetric and non-negative")
{
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor a = normal_matrix(6 + seed % 3, 3, 100 + seed);
    Tensor b = normal_matrix(4 + seed % 5, 3, 200 + seed, 0.3);
    auto both = [&](auto f) {
      Tape t;
      const double ab = f(t.constant(a), t.constant(b)).value().item();
      const double ba = f(t.constant(b), t.constant(a)).value().item();
      CHECK(ab == ba);
      CHECK(ab >= 0.0);
    };
    both([](Var p, Var q) { return mmd(p, q); });
    both([](Var p, Var q) { return mmd(p, q, MmdKernel::rbf); });
    both([](Var p, Var q) { return sinkhorn_wasserstein(p, q, 0.1, 10); });
  }
}

TEST_CASE("balancing gradients pass finite differences")
{
  Parameter rep("rep", normal_matrix(9, 2, 5));
  Parameter w("w", normal_matrix(9, 1, 6));
  for (double& v : w.value.raw())
    v = std::abs(v) + 0.2;
  const std::vector<int> a{ 1, 0, 1, 1, 0, 0, 1, 0, 1 };
  for (auto metric : { BalancingMetric::mmd, BalancingMetric::wasserstein }) {
    for (auto kernel : { MmdKernel::linear, MmdKernel::rbf }) {
      BalancingConfig cfg;
      cfg.metric = metric;
      cfg.alpha = 1.0;
      cfg.kernel = kernel;
      auto report = grad_check(
        [&](Tape& t) { return balancing_penalty(t.param(rep), a, cfg, t.param(w)); },
        { &rep, &w }, 1e-4);
      CHECK(report.passed);
    }
  }
}

TEST_CASE("balancing_penalty: none metric and single group")
{
  Tape t;
  Var rep = t.constant(normal_matrix(4, 2, 1));
  BalancingConfig cfg;
  const std::vector<int> mixed{ 1, 0, 1, 0 };
  const std::vector<int> ones{ 1, 1, 1, 1 };
  CHECK(balancing_penalty(rep, mixed, cfg).value().item() == 0.0);
  cfg.metric = BalancingMetric::wasserstein;
  CHECK(balancing_penalty(rep, ones, cfg).value().item() == 0.0);
  CHECK(balancing_penalty(rep, mixed, cfg).value().item() > 0.0);
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK(balancing_metric_from_string("WM") == BalancingMetric::wasserstein);
  CHECK(balancing_metric_from_string("MMD") == BalancingMetric::mmd);
}
