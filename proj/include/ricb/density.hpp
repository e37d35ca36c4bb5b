#pragma once

#include "ricb/nn.hpp"
#include "ricb/spline.hpp"

#include <span>
#include <string>
#include <vector>

namespace ricb {

struct FlowHyper
{
  double learning_rate = 0.005;
  std::size_t batch_size = 64;
  double units_mult = 2.0; // context net hidden units = mult * R * d_phi
  double r_mult = 2.0;
  std::size_t knots = 10;
  double noise_y = 0.1;   // std of Gaussian noise on standardised outcomes
  double noise_phi = 0.1; // std of Gaussian noise on standardised phi
  double tail_bound = 5.0;
  std::size_t iterations = 5000;

  void validate() const;
};

//! Conditional density of Y given (A, phi): a standard normal pushed through
//! one rational-quadratic spline whose parameters come from a context network
//! on (a, standardised phi). Outcomes are standardised by training moments.
class ConditionalFlow
{
public:
  ConditionalFlow() = default;
  ConditionalFlow(std::size_t d_phi, const FlowHyper& hyper, std::uint64_t seed);

  std::size_t d_phi() const { return d_phi_; }
  const FlowHyper& hyper() const { return hyper_; }
  bool trained() const { return trained_; }

  // Sets standardisation from the data and runs SGD with momentum.
  void fit(const Tensor& phi, std::span<const int> a, std::span<const double> y);

  // Mean NLL on already standardised inputs. With `noise` set, Gaussian
  // noise of the configured intensities perturbs y and phi first.
  Var nll_standardized(Tape& tape,
                       const Tensor& phi_std,
                       std::span<const int> a,
                       std::span<const double> y_std,
                       Rng* noise);

  // Mean NLL in original outcome units, without noise.
  double evaluate_nll(const Tensor& phi,
                      std::span<const int> a,
                      std::span<const double> y) const;

  SplineParams spline_at(int a, std::span<const double> phi) const;
  double log_density(double y, int a, std::span<const double> phi) const;
  double cdf(double y, int a, std::span<const double> phi) const;
  double quantile(double p, int a, std::span<const double> phi) const;
  // k draws in ascending order, original units.
  std::vector<double> sample(int a,
                             std::span<const double> phi,
                             std::size_t k,
                             Rng& rng) const;

  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  const std::vector<double>& nll_trace() const { return trace_; }
  Mlp& context_net() { return context_; }
  const Mlp& context_net() const { return context_; }

  // Overrides the outcome standardisation (used by tests that want the raw
  // spline on unit-scale data).
  void set_standardization(double y_mean,
                           double y_scale,
                           std::vector<double> phi_mean,
                           std::vector<double> phi_scale);

  std::string to_json() const;
  static ConditionalFlow from_json(const std::string& text);

private:
  Tensor context_input(const Tensor& phi_std, std::span<const int> a) const;
  std::vector<double> standardize_phi(std::span<const double> phi) const;

  std::size_t d_phi_ = 0;
  FlowHyper hyper_;
  std::uint64_t seed_ = 0;
  Mlp context_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  std::vector<double> phi_mean_, phi_scale_;
  std::vector<double> trace_;
  bool trained_ = false;
};

ConditionalFlow train_cnf(const Tensor& phi,
                          std::span<const int> a,
                          std::span<const double> y,
                          const FlowHyper& hyper,
                          std::uint64_t seed);

double standard_normal_cdf(double z);
double standard_normal_quantile(double p);

} // namespace ricb
