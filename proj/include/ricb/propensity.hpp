#pragma once

#include "ricb/nn.hpp"

#include <span>
#include <vector>

namespace ricb {

inline constexpr double propensity_floor = 0.01;
inline constexpr double propensity_ceil = 0.99;

double clamp_propensity(double p);

struct PropensityHyper
{
  double learning_rate = 0.005;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  double units_mult = 2.0; // hidden units = units_mult * R * input_dim
  double r_mult = 2.0;
  std::size_t iterations = 5000;
};

std::size_t hidden_units_for(double mult, double r, std::size_t dim);

//! Sigmoid classifier for P(A = 1 | input). Trained on logits with a
//! numerically stable binary cross-entropy.
class PropensityNet
{
public:
  PropensityNet() = default;
  PropensityNet(std::size_t input_dim, std::size_t hidden_units, Rng& init);
  explicit PropensityNet(Mlp net);

  std::size_t input_dim() const { return net_.config().input_dim; }

  Var logits(Tape& tape, Var x);
  // mean BCE over the rows of x
  Var bce(Tape& tape, Var x, std::span<const int> a);
  static Var bce_from_logits(Var logits, std::span<const int> a);

  std::vector<double> predict(const Tensor& x) const;     // clamped pi_1
  std::vector<double> predict_raw(const Tensor& x) const; // unclamped pi_1
  double evaluate_bce(const Tensor& x, std::span<const int> a) const;

  void fit(const Tensor& x,
           std::span<const int> a,
           const PropensityHyper& hyper,
           Rng batches);

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  const std::vector<double>& bce_trace() const { return trace_; }
  std::vector<double>& bce_trace() { return trace_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

private:
  Mlp net_;
  std::vector<double> trace_;
  bool trained_ = false;
};

//! Trains a fresh propensity network on (inputs, treatments).
PropensityNet train_propensity(const Tensor& inputs,
                               std::span<const int> treatments,
                               const PropensityHyper& hyper,
                               std::uint64_t seed,
                               std::uint64_t init_stream,
                               std::uint64_t batch_stream);

// Tensor::column for int treatment vectors.
Tensor treatment_column(std::span<const int> a);

} // namespace ricb
