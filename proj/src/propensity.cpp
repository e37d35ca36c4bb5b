#include "ricb/propensity.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <cmath>

namespace ricb {

double clamp_propensity(double p)
{
  return std::clamp(p, propensity_floor, propensity_ceil);
}

std::size_t hidden_units_for(double mult, double r, std::size_t dim)
{
  const double units = std::round(mult * r * static_cast<double>(dim));
  return std::max<std::size_t>(1, static_cast<std::size_t>(units));
}

Tensor treatment_column(std::span<const int> a)
{
  Tensor t = Tensor::matrix(a.size(), 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    t[i] = a[i];
  return t;
}

PropensityNet::PropensityNet(std::size_t input_dim,
                             std::size_t hidden_units,
                             Rng& init)
  : net_(MlpConfig{ input_dim, hidden_units, 1, Activation::elu,
                    Activation::identity, 0 },
         init)
{
}

PropensityNet::PropensityNet(Mlp net)
  : net_(std::move(net))
{
}

Var PropensityNet::logits(Tape& tape, Var x)
{
  return net_.forward(tape, x);
}

Var PropensityNet::bce(Tape& tape, Var x, std::span<const int> a)
{
  return bce_from_logits(logits(tape, x), a);
}

Var PropensityNet::bce_from_logits(Var l, std::span<const int> a)
{
  if (l.value().rows() != a.size())
    throw InvalidArgument("propensity: treatment length mismatch");
  Var target = l.tape()->constant(treatment_column(a));
  // softplus(l) - a * l  ==  -[a log s(l) + (1 - a) log(1 - s(l))]
  return mean(sub(softplus(l), mul(target, l)));
}

std::vector<double> PropensityNet::predict_raw(const Tensor& x) const
{
  const Tensor l = net_.predict(x);
  std::vector<double> p(l.rows());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = l[i];
    p[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return p;
}

std::vector<double> PropensityNet::predict(const Tensor& x) const
{
  auto p = predict_raw(x);
  for (double& v : p)
    v = clamp_propensity(v);
  return p;
}

double PropensityNet::evaluate_bce(const Tensor& x, std::span<const int> a) const
{
  const Tensor l = net_.predict(x);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = l[i];
    const double sp = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    s += sp - a[i] * v;
  }
  return s / static_cast<double>(a.size());
}

void PropensityNet::fit(const Tensor& x,
                        std::span<const int> a,
                        const PropensityHyper& hyper,
                        Rng batches)
{
  if (x.rows() != a.size() || a.empty())
    throw InvalidArgument("propensity: inputs and treatments must be non-empty "
                          "and of equal length");
  const bool has1 = std::find(a.begin(), a.end(), 1) != a.end();
  const bool has0 = std::find(a.begin(), a.end(), 0) != a.end();
  if (!has1 || !has0)
    throw InvalidArgument("propensity: single-class treatment data");

  Optimizer opt({ OptimizerKind::adamw, hyper.learning_rate, hyper.weight_decay },
                net_.parameters());
  Minibatcher mb(a.size(), hyper.batch_size, std::move(batches));
  std::vector<int> ab;
  trace_.clear();
  trace_.reserve(hyper.iterations);
  for (std::size_t it = 0; it < hyper.iterations; ++it) {
    const auto& idx = mb.next();
    ab.clear();
    for (std::size_t i : idx)
      ab.push_back(a[i]);
    Tape tape;
    Var loss = bce(tape, tape.constant(x.rows_subset(idx)), ab);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    trace_.push_back(loss.value().item());
  }
  trained_ = true;
}

PropensityNet train_propensity(const Tensor& inputs,
                               std::span<const int> treatments,
                               const PropensityHyper& hyper,
                               std::uint64_t seed,
                               std::uint64_t init_stream,
                               std::uint64_t batch_stream)
{
  Rng init = make_rng(seed, init_stream);
  PropensityNet net(inputs.cols(),
                    hidden_units_for(hyper.units_mult, hyper.r_mult, inputs.cols()),
                    init);
  net.fit(inputs, treatments, hyper, make_rng(seed, batch_stream));
  return net;
}

} // namespace ricb
