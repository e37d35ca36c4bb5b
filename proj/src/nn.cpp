#include "ricb/nn.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>

namespace ricb {

std::string to_string(Activation a)
{
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s)
{
  if (s == "elu")
    return Activation::elu;
  if (s == "relu")
    return Activation::relu;
  if (s == "sigmoid")
    return Activation::sigmoid;
  if (s == "identity")
    return Activation::identity;
  throw InvalidArgument("unknown activation '" + s + "'");
}

Var apply_activation(Activation a, Var x)
{
  switch (a) {
    case Activation::elu: return elu(x);
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

namespace {
Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w = Tensor::matrix(fan_in, fan_out);
  for (double& v : w.values())
    v = u(rng);
  return w;
}
} // namespace

Mlp::Mlp(const MlpConfig& cfg, Rng& rng)
  : cfg_(cfg)
{
  if (cfg.input_dim == 0 || cfg.output_dim == 0)
    throw InvalidArgument("mlp input/output dims must be positive");
  if (cfg.hidden_units == 0)
    throw InvalidArgument("mlp needs hidden_units > 0");
  w1_ = Parameter("w1", he_uniform(cfg.input_dim, cfg.hidden_units, rng));
  b1_ = Parameter("b1", Tensor::matrix(1, cfg.hidden_units));
  w2_ = Parameter("w2", he_uniform(cfg.hidden_units, cfg.output_dim, rng));
  b2_ = Parameter("b2", Tensor::matrix(1, cfg.output_dim));
}

void Mlp::check_input(const Tensor& x) const
{
  if (x.rank() != 2 || x.cols() != cfg_.input_dim)
    throw InvalidArgument("mlp expects input with " +
                          std::to_string(cfg_.input_dim) + " columns, got " +
                          x.shape_string());
  if (!x.all_finite())
    throw NumericError("mlp input is not finite");
}

Var Mlp::layers(Var x, Var w1, Var b1, Var w2, Var b2) const
{
  Var h = apply_activation(cfg_.hidden_activation, add(matmul(x, w1), b1));
  return apply_activation(cfg_.output_activation, add(matmul(h, w2), b2));
}

Var Mlp::forward(Tape& tape, Var x)
{
  check_input(x.value());
  return layers(x, tape.param(w1_), tape.param(b1_), tape.param(w2_),
                tape.param(b2_));
}

Tensor Mlp::predict(const Tensor& x) const
{
  check_input(x);
  Tape tape;
  return layers(tape.constant(x), tape.constant(w1_.value),
                tape.constant(b1_.value), tape.constant(w2_.value),
                tape.constant(b2_.value))
    .value();
}

std::vector<Parameter*> Mlp::parameters()
{
  return { &w1_, &b1_, &w2_, &b2_ };
}

std::vector<const Parameter*> Mlp::parameters() const
{
  return { &w1_, &b1_, &w2_, &b2_ };
}

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Parameter*> params)
  : cfg_(cfg)
  , params_(std::move(params))
{
  if (!(cfg_.learning_rate > 0.0))
    throw InvalidArgument("learning rate must be positive");
  if (cfg_.weight_decay < 0.0)
    throw InvalidArgument("weight decay must be non-negative");
  if (cfg_.kind == OptimizerKind::sgd_momentum)
    cfg_.momentum = 0.9;
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Optimizer::zero_grad()
{
  for (Parameter* p : params_)
    p->zero_grad();
}

void Optimizer::step()
{
  ++t_;
  const double lr = cfg_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value))
      throw InvalidArgument("gradient shape mismatch for '" + p.name + "'");
    if (!p.grad.all_finite())
      throw NumericError("non-finite gradient for '" + p.name + "'");
    auto w = p.value.values();
    auto g = p.grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    if (cfg_.kind == OptimizerKind::adamw) {
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= lr * cfg_.weight_decay * w[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + cfg_.weight_decay * w[i];
        m[i] = cfg_.momentum * m[i] + gi;
        w[i] -= lr * m[i];
      }
    }
    if (!p.value.all_finite())
      throw NumericError("parameter '" + p.name + "' diverged");
  }
}

double relative_error(double analytic, double numeric)
{
  const double denom = std::max({ std::abs(analytic), std::abs(numeric), 1e-6 });
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss,
                           const std::vector<Parameter*>& params,
                           double tolerance,
                           double h)
{
  GradCheckReport report;
  for (Parameter* p : params)
    p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto eval = [&]() {
    Tape tape;
    return loss(tape).value().item();
  };
  for (Parameter* p : params) {
    auto w = p->value.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double up = eval();
      w[i] = orig - h;
      const double down = eval();
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(p->grad[i], numeric);
      if (report.worst_parameter.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = p->name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

} // namespace ricb
