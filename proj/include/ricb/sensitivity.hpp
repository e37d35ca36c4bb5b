#pragma once

#include "ricb/datasets.hpp"
#include "ricb/estimators.hpp"
#include "ricb/propensity.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace ricb {

inline constexpr double default_deltas[] = { 0.0005, 0.001, 0.005, 0.01, 0.05 };

struct GammaPoint
{
  double lambda = 1.0;
  double gamma = 1.0;
};

// Odds ratio between the covariate-level and representation-level
// propensities. Both arguments are P(A = 1 | .) and must lie in (0, 1).
GammaPoint gamma_pointwise(double pi1_x, double pi1_phi);

//! Per-training-point sensitivity parameters with a delta-ball maximum over
//! standardized representations.
class GammaField
{
public:
  GammaField() = default;
  GammaField(const Tensor& phi_train, std::vector<double> gamma_point);

  std::size_t size() const { return gamma_.size(); }
  std::size_t dim() const { return phi_.cols(); }
  const Tensor& standardized_phi() const { return phi_; }
  const std::vector<double>& gamma_point() const { return gamma_; }
  const std::vector<double>& center() const { return center_; }
  const std::vector<double>& scale() const { return scale_; }

  std::vector<double> standardize(std::span<const double> phi) const;

  // max of Gamma_point over training points within delta of training point i
  double ball(std::size_t i, double delta) const;
  std::vector<double> ball_all(double delta) const;

  // A new point keeps its own Gamma_point and takes the maximum with every
  // training point inside its ball.
  double at(std::span<const double> phi, double own_gamma, double delta) const;
  std::vector<double> at_many(const Tensor& phi,
                              std::span<const double> own_gamma,
                              double delta) const;

private:
  double ball_max(const double* z, double delta) const;

  Tensor phi_; // standardized
  std::vector<double> gamma_;
  std::vector<double> center_, scale_;
};

//! The two propensity networks: P(A = 1 | x) and P(A = 1 | phi).
struct PropensityPair
{
  PropensityNet pi_x;
  PropensityNet pi_phi;
  bool reused_x = false;
  bool reused_phi = false;

  // clamped P(A = 1 | .) for each row
  std::vector<double> predict_x(const Tensor& x) const { return pi_x.predict(x); }
  std::vector<double> predict_phi(const Tensor& phi) const { return pi_phi.predict(phi); }
  std::vector<double> gamma_point(const Tensor& x, const Tensor& phi) const;
};

struct SensitivityHyper
{
  PropensityHyper x;
  PropensityHyper phi;
  bool reuse_stage0 = true;
};

struct SensitivityEstimate
{
  PropensityPair pair;
  GammaField field;
  Tensor phi_train;             // raw representations of the training set
  std::vector<double> pi_x;     // clamped, training set
  std::vector<double> pi_phi;
};

// Stage 1: propensity networks on x and on Phi(x) (taken from Stage 0 when it
// trained one), pointwise Gamma, and the delta-ball field.
SensitivityEstimate fit_sensitivity(const Stage0Model& stage0,
                                    const Dataset& train,
                                    const SensitivityHyper& hyper,
                                    std::uint64_t seed);

// Checkpoint of the Stage 1 artifacts; the field is rebuilt on load.
std::string sensitivity_to_json(const SensitivityEstimate& est);
SensitivityEstimate sensitivity_from_json(const std::string& text);

// id, phi_1..phi_d, pi_x, pi_phi, gamma_point, gamma_ball
void write_gamma_csv(const SensitivityEstimate& est,
                     double delta,
                     const std::filesystem::path& path);

} // namespace ricb
