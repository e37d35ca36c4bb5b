#pragma once

#include "ricb/density.hpp"
#include "ricb/estimators.hpp"
#include "ricb/sensitivity.hpp"

#include <span>
#include <utility>
#include <vector>

namespace ricb {

struct ShiftCoefficients
{
  double s_minus = 1.0;
  double s_plus = 1.0;
  double c_minus = 0.5;
  double c_plus = 0.5;
};

// Gamma >= 1 and the representation-level propensity of the arm, in (0, 1).
ShiftCoefficients shift_coefficients(double gamma, double pi_a);

// How the sorted sample is cut at k*c when k*c is not an integer.
//   fractional: the straddling element is split in proportion, so the
//     weights sum to exactly k (default).
//   floor: indices <= floor(k*c) form the low block, as in the summation limits.
enum class BoundarySplit
{
  fractional,
  floor
};

struct MuBounds
{
  double lower = 0.0;
  double upper = 0.0;
  double mean = 0.0;
};

// Expected-outcome bounds from an ascending sample.
MuBounds cvar_mu_bounds(std::span<const double> sorted,
                        const ShiftCoefficients& c,
                        BoundarySplit split = BoundarySplit::fractional);

struct CateBounds
{
  double lower = 0.0;
  double upper = 0.0;
  double point = 0.0;     // Stage 0 head estimate
  double flow_cate = 0.0; // difference of the flow sample means
  double gamma = 1.0;
  double pi_phi = 0.5;    // P(A = 1 | phi)
  std::size_t k = 0;

  double width() const { return upper - lower; }
};

struct BoundsConfig
{
  std::size_t k = 10000;
  BoundarySplit split = BoundarySplit::fractional;
  std::uint64_t seed = 0;
};

//! Stage 2. Frozen Stage 0 / Stage 1 artifacts plus the flow turn covariates
//! into CATE intervals. Samples are drawn once per (point, arm) and reused
//! for every delta.
class BoundsEstimator
{
public:
  BoundsEstimator(const Stage0Model& stage0,
                  const SensitivityEstimate& sensitivity,
                  const ConditionalFlow& flow,
                  BoundsConfig config);

  // result[d][i] for deltas[d] and row i of x
  std::vector<std::vector<CateBounds>> evaluate(const Tensor& x,
                                                std::span<const double> deltas) const;
  std::vector<CateBounds> evaluate(const Tensor& x, double delta) const;

  // Bypasses the Gamma field: gamma[i] is used as is for row i.
  std::vector<CateBounds> evaluate_with_gamma(const Tensor& x,
                                              std::span<const double> gamma) const;

  const BoundsConfig& config() const { return config_; }

private:
  struct Prepared;
  Prepared prepare(const Tensor& x) const;
  // sorted flow samples for arms 0 and 1 at row i; stream depends on i only
  std::pair<std::vector<double>, std::vector<double>> draw(std::size_t i,
                                                           std::span<const double> phi) const;
  CateBounds bound_point(std::span<const double> y0,
                         std::span<const double> y1,
                         double gamma,
                         double pi1) const;

  const Stage0Model* stage0_;
  const SensitivityEstimate* sensitivity_;
  const ConditionalFlow* flow_;
  BoundsConfig config_;
};

} // namespace ricb
