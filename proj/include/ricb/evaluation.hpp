#pragma once

#include "ricb/bounds.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ricb {

enum class Decision
{
  no_treat = 0,
  treat = 1,
  defer = 2
};

std::string to_string(Decision d);

// treat iff tau_hat > 0
std::vector<Decision> point_policy(std::span<const double> tau_hat);
// treat if lower > 0, no-treat if upper < 0, defer otherwise
std::vector<Decision> bounds_policy(std::span<const CateBounds> bounds);
Decision bounds_decision(double lower, double upper);

struct PolicyReport
{
  std::optional<double> error_rate; // over non-deferred points; empty if all deferred
  double deferral_rate = 0.0;
  std::size_t n_decided = 0;
  std::size_t n_total = 0;
};

PolicyReport score_policy(std::span<const Decision> decisions,
                          std::span<const double> tau_oracle);

// bounds-policy ER minus point-policy ER; empty when either is undefined
std::optional<double> delta_error_rate(const PolicyReport& bounds, const PolicyReport& point);

double rpehe(std::span<const double> tau_hat, std::span<const double> effect);

// Rank correlation with average ranks for ties; 0 when either series is
// constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct CurvePoint
{
  double delta = 0.0;
  double deferral_rate = 0.0;
  std::optional<double> error_rate;
};

// delta, dr, er
void write_curve_csv(std::span<const CurvePoint> curve, const std::filesystem::path& path);

// Lattice over [lo, hi]^2 with `steps` points per axis, row-major in x1.
Tensor covariate_lattice(double lo, double hi, std::size_t steps);

// x1, x2, tau_oracle, tau_hat, lower, upper, policy_point, policy_bounds
void write_decision_grid_csv(const Tensor& lattice,
                             std::span<const double> tau_oracle,
                             std::span<const CateBounds> bounds,
                             const std::filesystem::path& path);

} // namespace ricb
