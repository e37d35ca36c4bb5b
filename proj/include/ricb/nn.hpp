#pragma once

#include "ricb/autograd.hpp"
#include "ricb/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ricb {

enum class Activation
{
  elu,
  relu,
  sigmoid,
  identity
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

//! One-hidden-layer fully-connected network shape.
struct MlpConfig
{
  std::size_t input_dim = 1;
  std::size_t hidden_units = 1;
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::elu;
  Activation output_activation = Activation::identity;
  std::uint64_t seed = 0;
};

Var apply_activation(Activation a, Var x);

class Mlp
{
public:
  Mlp() = default;
  // Uniform He-style fan-in initialisation from the seeded engine; biases 0.
  Mlp(const MlpConfig& cfg, Rng& rng);

  const MlpConfig& config() const noexcept { return cfg_; }

  Var forward(Tape& tape, Var x);
  // Evaluates without keeping a graph around.
  Tensor predict(const Tensor& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter& w1() { return w1_; }
  Parameter& b1() { return b1_; }
  Parameter& w2() { return w2_; }
  Parameter& b2() { return b2_; }

private:
  void check_input(const Tensor& x) const;
  Var layers(Var x, Var w1, Var b1, Var w2, Var b2) const;

  MlpConfig cfg_;
  Parameter w1_, b1_, w2_, b2_;
};

enum class OptimizerKind
{
  adamw,
  sgd_momentum
};

struct OptimizerConfig
{
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double momentum = 0.9; // fixed for sgd_momentum
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

//! AdamW with decoupled weight decay, or SGD with heavy-ball momentum 0.9.
class Optimizer
{
public:
  Optimizer(OptimizerConfig cfg, std::vector<Parameter*> params);

  void zero_grad();
  void step();

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }

private:
  OptimizerConfig cfg_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct GradCheckReport
{
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  bool passed = false;
};

// Compares Tape::backward against central differences for every entry of
// every parameter. `loss` must rebuild the graph from scratch on each call.
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss,
                           const std::vector<Parameter*>& params,
                           double tolerance,
                           double h = 1e-5);

// Relative error with a small absolute floor so exact zeros compare cleanly.
double relative_error(double analytic, double numeric);

} // namespace ricb
