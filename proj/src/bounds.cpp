#include "ricb/bounds.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ricb {

ShiftCoefficients shift_coefficients(double gamma, double pi_a)
{
  if (!(gamma >= 1.0) || !std::isfinite(gamma))
    throw InvalidArgument("shift_coefficients: Gamma must be a finite value >= 1");
  if (!(pi_a > 0.0 && pi_a < 1.0))
    throw InvalidArgument("shift_coefficients: propensity must lie in (0, 1)");
  ShiftCoefficients c;
  c.s_minus = 1.0 / ((1.0 - gamma) * pi_a + gamma);
  c.s_plus = 1.0 / ((1.0 - 1.0 / gamma) * pi_a + 1.0 / gamma);
  c.c_minus = 1.0 / (1.0 + gamma);
  c.c_plus = gamma / (1.0 + gamma);
  return c;
}

namespace {

// sum_i (w_i - 1) (y_i - y_pivot) / k with weight `low` on the first k*cut
// elements and `high` on the rest; the straddling element is the pivot, so
// every term has the sign of (low - 1).
double reweighted_shift(std::span<const double> y, double cut, double low, double high)
{
  const std::size_t k = y.size();
  const double m = static_cast<double>(k) * cut;
  const std::size_t j = std::min(static_cast<std::size_t>(m), k - 1);
  const double pivot = y[j];
  double below = 0.0, above = 0.0;
  for (std::size_t i = 0; i < j; ++i)
    below += y[i] - pivot;
  for (std::size_t i = j + 1; i < k; ++i)
    above += y[i] - pivot;
  // the pivot term vanishes whatever its (fractional) weight
  return ((low - 1.0) * below + (high - 1.0) * above) / static_cast<double>(k);
}

double literal_block(std::span<const double> y, double cut, double low, double high)
{
  const std::size_t k = y.size();
  const std::size_t m = std::min(static_cast<std::size_t>(std::floor(static_cast<double>(k) * cut)), k);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    lo += y[i];
  for (std::size_t i = m; i < k; ++i)
    hi += y[i];
  return (low * lo + high * hi) / static_cast<double>(k);
}

} // namespace

MuBounds cvar_mu_bounds(std::span<const double> sorted,
                        const ShiftCoefficients& c,
                        BoundarySplit split)
{
  if (sorted.empty())
    throw InvalidArgument("cvar_mu_bounds: empty sample");
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (!(sorted[i - 1] <= sorted[i]))
      throw InvalidArgument("cvar_mu_bounds: sample must be sorted ascending");
  // guard the sides of 1 against rounding in the reciprocals
  const double heavy = std::max(1.0, 1.0 / c.s_minus);
  const double light = std::min(1.0, 1.0 / c.s_plus);
  MuBounds b;
  b.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
           static_cast<double>(sorted.size());
  if (split == BoundarySplit::fractional) {
    b.lower = b.mean + reweighted_shift(sorted, c.c_minus, heavy, light);
    b.upper = b.mean + reweighted_shift(sorted, c.c_plus, light, heavy);
  } else {
    b.lower = literal_block(sorted, c.c_minus, heavy, light);
    b.upper = literal_block(sorted, c.c_plus, light, heavy);
  }
  return b;
}

struct BoundsEstimator::Prepared
{
  Tensor phi;
  std::vector<double> pi1;
  std::vector<double> own_gamma;
  std::vector<double> point;
};

BoundsEstimator::BoundsEstimator(const Stage0Model& stage0,
                                 const SensitivityEstimate& sensitivity,
                                 const ConditionalFlow& flow,
                                 BoundsConfig config)
  : stage0_(&stage0)
  , sensitivity_(&sensitivity)
  , flow_(&flow)
  , config_(config)
{
  if (!stage0.trained())
    throw StateError("bounds: Stage 0 model is not trained");
  if (sensitivity.field.size() == 0)
    throw StateError("bounds: sensitivity estimate is missing");
  if (!flow.trained())
    throw StateError("bounds: conditional flow is not trained");
  if (flow.d_phi() != stage0.d_phi() || sensitivity.field.dim() != stage0.d_phi())
    throw StateError("bounds: artifacts were trained on different representations");
  if (config_.k == 0)
    throw InvalidArgument("bounds: k must be positive");
}

BoundsEstimator::Prepared BoundsEstimator::prepare(const Tensor& x) const
{
  Prepared p;
  p.phi = stage0_->represent(x);
  p.pi1 = sensitivity_->pair.predict_phi(p.phi);
  const auto pix = sensitivity_->pair.predict_x(x);
  p.own_gamma.resize(pix.size());
  for (std::size_t i = 0; i < pix.size(); ++i)
    p.own_gamma[i] = gamma_pointwise(pix[i], p.pi1[i]).gamma;
  p.point = stage0_->predict_cate(x);
  return p;
}

std::pair<std::vector<double>, std::vector<double>> BoundsEstimator::draw(
  std::size_t i, std::span<const double> phi) const
{
  Rng r0 = make_rng(config_.seed, streams::bound_samples + 2 * i);
  Rng r1 = make_rng(config_.seed, streams::bound_samples + 2 * i + 1);
  return { flow_->sample(0, phi, config_.k, r0), flow_->sample(1, phi, config_.k, r1) };
}

CateBounds BoundsEstimator::bound_point(std::span<const double> y0,
                                        std::span<const double> y1,
                                        double gamma,
                                        double pi1) const
{
  const MuBounds m1 = cvar_mu_bounds(y1, shift_coefficients(gamma, pi1), config_.split);
  const MuBounds m0 = cvar_mu_bounds(y0, shift_coefficients(gamma, 1.0 - pi1), config_.split);
  CateBounds b;
  b.lower = m1.lower - m0.upper;
  b.upper = m1.upper - m0.lower;
  b.flow_cate = m1.mean - m0.mean;
  b.gamma = gamma;
  b.pi_phi = pi1;
  b.k = y0.size();
  return b;
}

std::vector<std::vector<CateBounds>> BoundsEstimator::evaluate(
  const Tensor& x, std::span<const double> deltas) const
{
  for (double d : deltas)
    if (!(d >= 0.0))
      throw InvalidArgument("bounds: delta must be non-negative");
  const Prepared p = prepare(x);
  const std::size_t n = x.rows();
  std::vector<std::vector<CateBounds>> out(deltas.size(), std::vector<CateBounds>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto phi = p.phi.row_span(i);
    const auto [y0, y1] = draw(i, phi);
    for (std::size_t d = 0; d < deltas.size(); ++d) {
      const double g = sensitivity_->field.at(phi, p.own_gamma[i], deltas[d]);
      out[d][i] = bound_point(y0, y1, g, p.pi1[i]);
      out[d][i].point = p.point[i];
    }
  }
  return out;
}

std::vector<CateBounds> BoundsEstimator::evaluate(const Tensor& x, double delta) const
{
  const double ds[] = { delta };
  return std::move(evaluate(x, ds).front());
}

std::vector<CateBounds> BoundsEstimator::evaluate_with_gamma(
  const Tensor& x, std::span<const double> gamma) const
{
  if (gamma.size() != x.rows())
    throw InvalidArgument("bounds: one Gamma per row required");
  const Prepared p = prepare(x);
  std::vector<CateBounds> out(x.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto phi = p.phi.row_span(i);
    const auto [y0, y1] = draw(i, phi);
    out[i] = bound_point(y0, y1, gamma[i], p.pi1[i]);
    out[i].point = p.point[i];
  }
  return out;
}

} // namespace ricb
