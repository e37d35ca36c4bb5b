#include "ricb/evaluation.hpp"

#include "ricb/csv.hpp"
#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ricb {

std::string to_string(Decision d)
{
  switch (d) {
    case Decision::treat: return "treat";
    case Decision::no_treat: return "no_treat";
    case Decision::defer: return "defer";
  }
  return "?";
}

std::vector<Decision> point_policy(std::span<const double> tau_hat)
{
  std::vector<Decision> out(tau_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(tau_hat[i]))
      throw NumericError("point_policy: non-finite CATE estimate");
    out[i] = tau_hat[i] > 0.0 ? Decision::treat : Decision::no_treat;
  }
  return out;
}

Decision bounds_decision(double lower, double upper)
{
  if (!(lower <= upper))
    throw InvalidArgument("bounds_policy: lower bound exceeds upper bound");
  if (lower > 0.0)
    return Decision::treat;
  if (upper < 0.0)
    return Decision::no_treat;
  return Decision::defer;
}

std::vector<Decision> bounds_policy(std::span<const CateBounds> bounds)
{
  std::vector<Decision> out(bounds.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = bounds_decision(bounds[i].lower, bounds[i].upper);
  return out;
}

PolicyReport score_policy(std::span<const Decision> decisions,
                          std::span<const double> tau_oracle)
{
  if (decisions.size() != tau_oracle.size())
    throw InvalidArgument("score_policy: decisions and oracle differ in length");
  PolicyReport r;
  r.n_total = decisions.size();
  std::size_t wrong = 0, deferred = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i] == Decision::defer) {
      ++deferred;
      continue;
    }
    const Decision best = tau_oracle[i] > 0.0 ? Decision::treat : Decision::no_treat;
    wrong += decisions[i] != best;
  }
  r.n_decided = r.n_total - deferred;
  if (r.n_total > 0)
    r.deferral_rate = static_cast<double>(deferred) / static_cast<double>(r.n_total);
  if (r.n_decided > 0)
    r.error_rate = static_cast<double>(wrong) / static_cast<double>(r.n_decided);
  return r;
}

std::optional<double> delta_error_rate(const PolicyReport& bounds, const PolicyReport& point)
{
  if (!bounds.error_rate || !point.error_rate)
    return std::nullopt;
  return *bounds.error_rate - *point.error_rate;
}

double rpehe(std::span<const double> tau_hat, std::span<const double> effect)
{
  if (tau_hat.size() != effect.size() || tau_hat.empty())
    throw InvalidArgument("rpehe: inputs must be non-empty and of equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < tau_hat.size(); ++i) {
    const double d = tau_hat[i] - effect[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(tau_hat.size()));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v)
{
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size() || a.size() < 2)
    throw InvalidArgument("spearman: need two series of equal length >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    return 0.0;
  return sab / std::sqrt(saa * sbb);
}

void write_curve_csv(std::span<const CurvePoint> curve, const std::filesystem::path& path)
{
  TextTable t;
  t.header = { "delta", "dr", "er" };
  for (const auto& c : curve)
    t.rows.push_back({ format_double(c.delta), format_double(c.deferral_rate),
                       c.error_rate ? format_double(*c.error_rate) : std::string() });
  write_text_csv(t, path);
}

Tensor covariate_lattice(double lo, double hi, std::size_t steps)
{
  if (steps < 2 || !(hi > lo))
    throw InvalidArgument("covariate_lattice: need hi > lo and at least 2 steps");
  Tensor g = Tensor::matrix(steps * steps, 2);
  const double h = (hi - lo) / static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t j = 0; j < steps; ++j) {
      g(i * steps + j, 0) = lo + h * static_cast<double>(i);
      g(i * steps + j, 1) = lo + h * static_cast<double>(j);
    }
  return g;
}

void write_decision_grid_csv(const Tensor& lattice,
                             std::span<const double> tau_oracle,
                             std::span<const CateBounds> bounds,
                             const std::filesystem::path& path)
{
  if (lattice.cols() != 2 || lattice.rows() != tau_oracle.size() ||
      lattice.rows() != bounds.size())
    throw InvalidArgument("decision grid: lattice, oracle and bounds must align");
  TextTable t;
  t.header = { "x1", "x2", "tau_oracle", "tau_hat", "lower", "upper",
               "policy_point", "policy_bounds" };
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto& b = bounds[i];
    t.rows.push_back({ format_double(lattice(i, 0)), format_double(lattice(i, 1)),
                       format_double(tau_oracle[i]), format_double(b.point),
                       format_double(b.lower), format_double(b.upper),
                       to_string(b.point > 0.0 ? Decision::treat : Decision::no_treat),
                       to_string(bounds_decision(b.lower, b.upper)) });
  }
  write_text_csv(t, path);
}

} // namespace ricb
