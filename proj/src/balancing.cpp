#include "ricb/balancing.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ricb {

std::string to_string(BalancingMetric m)
{
  switch (m) {
    case BalancingMetric::none: return "none";
    case BalancingMetric::mmd: return "mmd";
    case BalancingMetric::wasserstein: return "wasserstein";
  }
  return "none";
}

BalancingMetric balancing_metric_from_string(const std::string& s)
{
  if (s == "none")
    return BalancingMetric::none;
  if (s == "mmd" || s == "MMD")
    return BalancingMetric::mmd;
  if (s == "wasserstein" || s == "WM" || s == "wm")
    return BalancingMetric::wasserstein;
  throw InvalidArgument("unknown balancing metric '" + s + "'");
}

void BalancingConfig::validate() const
{
  if (alpha < 0.0)
    throw InvalidArgument("balancing alpha must be >= 0");
  if (metric == BalancingMetric::wasserstein) {
    if (!(sinkhorn_epsilon > 0.0))
      throw InvalidArgument("sinkhorn epsilon must be > 0");
    if (sinkhorn_iters < 1)
      throw InvalidArgument("sinkhorn iterations must be >= 1");
  }
}

Var take_rows(Var a, std::span<const std::size_t> idx)
{
  Tape& t = *a.tape();
  Tensor out = a.value().rows_subset(idx);
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  const Var parents[] = { a };
  return t.record(
    std::move(out),
    parents,
    [a, rows](Tape& tp, const Tensor& g) {
      Tensor ga(tp.value(a).shape());
      const std::size_t c = g.cols();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
          ga(rows[i], j) += g(i, j);
      tp.accumulate(a, ga);
    },
    "take_rows");
}

namespace {

void check_groups(Var treated, Var control, const char* who)
{
  const Tensor& t = treated.value();
  const Tensor& c = control.value();
  if (t.rows() == 0 || c.rows() == 0)
    throw InvalidArgument(std::string(who) + ": empty treatment group");
  if (t.cols() != c.cols())
    throw InvalidArgument(std::string(who) + ": groups differ in dimension");
}

// Normalised weights as a column vector; uniform when absent.
Var group_weights(Var rows, std::optional<Var> w)
{
  Tape& t = *rows.tape();
  const std::size_t n = rows.value().rows();
  if (!w)
    return t.constant(Tensor({ n, 1 }, 1.0 / static_cast<double>(n)));
  if (w->value().rows() != n || w->value().cols() != 1)
    throw InvalidArgument("sample weights must be an n x 1 column");
  return div(*w, sum(*w));
}

Var weighted_mean_row(Var rows, Var w)
{
  // (1 x n) * (n x d)
  return matmul(transpose(w), rows);
}

// Entry (r, c) of a matrix as a 1x1 node.
Var pick(Var a, std::size_t r, std::size_t c)
{
  Tape& t = *a.tape();
  const Var parents[] = { a };
  return t.record(
    Tensor::scalar(a.value()(r, c)),
    parents,
    [a, r, c](Tape& tp, const Tensor& g) {
      Tensor ga(tp.value(a).shape());
      ga(r, c) = g.item();
      tp.accumulate(a, ga);
    },
    "pick");
}

// Median heuristic on the treated/control cross distances. The median entry
// is selected by value and then followed on the tape, so the bandwidth moves
// with the representation exactly like the selected distance does.
Var median_bandwidth(Var cross)
{
  Tape& t = *cross.tape();
  const Tensor& d = cross.value();
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  auto mid = order.begin() + static_cast<std::ptrdiff_t>(order.size() / 2);
  std::nth_element(order.begin(), mid, order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
  if (!(d[*mid] > 0.0))
    return t.constant(Tensor::scalar(1.0));
  return pick(cross, *mid / d.cols(), *mid % d.cols());
}

Var rbf_gram_mean(Var x, Var y, Var wx, Var wy, Var bandwidth)
{
  Var k = exp(neg(div(pairwise_sq_dist(x, y), bandwidth)));
  return matmul(matmul(transpose(wx), k), wy);
}

Var sinkhorn_one_way(Var x, Var y, Var wx, Var wy, double eps, int iters)
{
  Tape& t = *x.tape();
  Var cost = pairwise_sq_dist(x, y);                 // n x m
  Var log_a = scale(log(wx), eps);                   // n x 1
  Var log_b = transpose(scale(log(wy), eps));        // 1 x m
  Var f = t.constant(Tensor::matrix(x.value().rows(), 1));
  Var g = t.constant(Tensor::matrix(1, y.value().rows()));
  const double inv = 1.0 / eps;
  for (int it = 0; it < iters; ++it) {
    f = sub(log_a, scale(logsumexp_cols(scale(sub(g, cost), inv)), eps));
    g = sub(log_b, scale(logsumexp_rows(scale(sub(f, cost), inv)), eps));
  }
  if (!f.value().all_finite() || !g.value().all_finite())
    throw NumericError("sinkhorn potentials are not finite");
  Var plan = exp(scale(sub(add(f, g), cost), inv));
  return sum(mul(plan, cost));
}

} // namespace

Var mmd(Var treated,
        Var control,
        MmdKernel kernel,
        std::optional<Var> treated_weights,
        std::optional<Var> control_weights)
{
  check_groups(treated, control, "mmd");
  Var wt = group_weights(treated, treated_weights);
  Var wc = group_weights(control, control_weights);
  if (kernel == MmdKernel::linear) {
    Var diff = sub(weighted_mean_row(treated, wt), weighted_mean_row(control, wc));
    return sum(square(diff));
  }
  Var bw = median_bandwidth(pairwise_sq_dist(treated, control));
  Var ktt = rbf_gram_mean(treated, treated, wt, wt, bw);
  Var kcc = rbf_gram_mean(control, control, wc, wc, bw);
  Var ktc = rbf_gram_mean(treated, control, wt, wc, bw);
  Var kct = rbf_gram_mean(control, treated, wc, wt, bw);
  // both cross orders keep the value exactly symmetric in its arguments
  return sub(add(ktt, kcc), add(ktc, kct));
}

Var sinkhorn_wasserstein(Var treated,
                         Var control,
                         double epsilon,
                         int iterations,
                         std::optional<Var> treated_weights,
                         std::optional<Var> control_weights)
{
  check_groups(treated, control, "sinkhorn_wasserstein");
  if (!(epsilon > 0.0))
    throw InvalidArgument("sinkhorn epsilon must be > 0");
  if (iterations < 1)
    throw InvalidArgument("sinkhorn iterations must be >= 1");
  Var wt = group_weights(treated, treated_weights);
  Var wc = group_weights(control, control_weights);
  Var forward = sinkhorn_one_way(treated, control, wt, wc, epsilon, iterations);
  Var reverse = sinkhorn_one_way(control, treated, wc, wt, epsilon, iterations);
  return scale(add(forward, reverse), 0.5);
}

Var balancing_penalty(Var rep,
                      std::span<const int> treatment,
                      const BalancingConfig& cfg,
                      std::optional<Var> weights)
{
  Tape& t = *rep.tape();
  if (treatment.size() != rep.value().rows())
    throw InvalidArgument("treatment vector length mismatch");
  if (cfg.metric == BalancingMetric::none)
    return t.constant(Tensor::scalar(0.0));
  std::vector<std::size_t> i1, i0;
  for (std::size_t i = 0; i < treatment.size(); ++i)
    (treatment[i] == 1 ? i1 : i0).push_back(i);
  if (i1.empty() || i0.empty())
    return t.constant(Tensor::scalar(0.0));
  Var r1 = take_rows(rep, i1);
  Var r0 = take_rows(rep, i0);
  std::optional<Var> w1, w0;
  if (weights) {
    w1 = take_rows(*weights, i1);
    w0 = take_rows(*weights, i0);
  }
  if (cfg.metric == BalancingMetric::mmd)
    return mmd(r1, r0, cfg.kernel, w1, w0);
  return sinkhorn_wasserstein(
    r1, r0, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters, w1, w0);
}

} // namespace ricb
