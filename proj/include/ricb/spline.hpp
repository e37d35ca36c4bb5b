#pragma once

#include "ricb/autograd.hpp"

#include <span>
#include <vector>

namespace ricb {

inline constexpr double spline_min_bin = 1e-3;
inline constexpr double spline_min_derivative = 1e-3;

//! Monotone rational-quadratic spline on [-B, B] with identity tails.
struct SplineParams
{
  double tail_bound = 5.0;
  std::vector<double> knots_x;     // K + 1 knot positions, -B .. B
  std::vector<double> knots_y;     // K + 1 knot values, -B .. B
  std::vector<double> derivatives; // K + 1, boundary ones fixed at 1

  std::size_t bins() const noexcept { return knots_x.size() - 1; }
  void validate() const;
};

// Unconstrained parameter count per spline: K widths, K heights and K - 1
// interior derivatives.
constexpr std::size_t spline_raw_size(std::size_t knots) { return 3 * knots - 1; }

// Maps unconstrained values (softmax widths/heights, softplus derivatives) to
// a valid spline.
SplineParams spline_from_raw(std::span<const double> raw,
                             std::size_t knots,
                             double tail_bound);

// Raw vector that yields the identity map.
std::vector<double> identity_spline_raw(std::size_t knots);
SplineParams identity_spline(std::size_t knots, double tail_bound);

struct SplineValue
{
  double value = 0.0;
  double log_abs_det = 0.0;
};

SplineValue rq_forward(double y, const SplineParams& s);
SplineValue rq_inverse(double z, const SplineParams& s);

//! Differentiable batched forward transform. `y` is n x 1, `raw` is
//! n x (3K - 1) spline parameters per row. Returns n x 2 with columns
//! (z, log|dz/dy|); gradients flow to both y and raw.
Var rq_spline_forward(Var y, Var raw, std::size_t knots, double tail_bound);

} // namespace ricb
