#include "ricb/density.hpp"

#include "ricb/error.hpp"
#include "ricb/propensity.hpp"
#include "serialize.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ricb {

using detail::json;

namespace {

const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

void moments(std::span<const double> v, double& mean, double& scale)
{
  double s = 0.0;
  for (double x : v)
    s += x;
  mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  scale = sd > 1e-12 ? sd : 1.0;
}

} // namespace

double standard_normal_cdf(double z)
{
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double standard_normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0))
    throw InvalidArgument("normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

void FlowHyper::validate() const
{
  if (!(learning_rate > 0.0))
    throw InvalidArgument("flow learning rate must be > 0");
  if (batch_size == 0 || iterations == 0)
    throw InvalidArgument("flow batch size and iterations must be > 0");
  if (knots < 2)
    throw InvalidArgument("flow needs at least 2 knots");
  if (noise_y < 0.0 || noise_phi < 0.0)
    throw InvalidArgument("noise intensities must be >= 0");
  if (!(tail_bound > 0.0))
    throw InvalidArgument("tail bound must be > 0");
}

ConditionalFlow::ConditionalFlow(std::size_t d_phi,
                                 const FlowHyper& hyper,
                                 std::uint64_t seed)
  : d_phi_(d_phi)
  , hyper_(hyper)
  , seed_(seed)
  , phi_mean_(d_phi, 0.0)
  , phi_scale_(d_phi, 1.0)
{
  hyper.validate();
  if (d_phi == 0)
    throw InvalidArgument("flow needs d_phi > 0");
  Rng rng = make_rng(seed, streams::init_flow);
  context_ = Mlp({ d_phi + 1,
                   hidden_units_for(hyper.units_mult, hyper.r_mult, d_phi),
                   spline_raw_size(hyper.knots),
                   Activation::elu,
                   Activation::identity,
                   seed },
                 rng);
  // Start from the identity transform: zero output weights, identity bias.
  context_.w2().value.fill(0.0);
  const auto raw = identity_spline_raw(hyper.knots);
  std::copy(raw.begin(), raw.end(), context_.b2().value.raw().begin());
}

void ConditionalFlow::set_standardization(double y_mean,
                                          double y_scale,
                                          std::vector<double> phi_mean,
                                          std::vector<double> phi_scale)
{
  if (!(y_scale > 0.0) || phi_mean.size() != d_phi_ || phi_scale.size() != d_phi_)
    throw InvalidArgument("flow standardisation: bad arguments");
  y_mean_ = y_mean;
  y_scale_ = y_scale;
  phi_mean_ = std::move(phi_mean);
  phi_scale_ = std::move(phi_scale);
}

Tensor ConditionalFlow::context_input(const Tensor& phi_std,
                                      std::span<const int> a) const
{
  Tensor c = Tensor::matrix(a.size(), d_phi_ + 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    c(i, 0) = a[i];
    for (std::size_t j = 0; j < d_phi_; ++j)
      c(i, j + 1) = phi_std(i, j);
  }
  return c;
}

std::vector<double> ConditionalFlow::standardize_phi(std::span<const double> phi) const
{
  if (phi.size() != d_phi_)
    throw InvalidArgument("flow: representation has " + std::to_string(phi.size()) +
                          " coordinates, expected " + std::to_string(d_phi_));
  std::vector<double> s(d_phi_);
  for (std::size_t j = 0; j < d_phi_; ++j)
    s[j] = (phi[j] - phi_mean_[j]) / phi_scale_[j];
  return s;
}

Var ConditionalFlow::nll_standardized(Tape& tape,
                                      const Tensor& phi_std,
                                      std::span<const int> a,
                                      std::span<const double> y_std,
                                      Rng* noise)
{
  const std::size_t n = a.size();
  if (phi_std.rows() != n || y_std.size() != n || phi_std.cols() != d_phi_)
    throw InvalidArgument("flow nll: batch shape mismatch");
  Tensor ctx = context_input(phi_std, a);
  Tensor yt = Tensor::column(y_std);
  if (noise) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] += hyper_.noise_y * nd(*noise);
      for (std::size_t j = 0; j < d_phi_; ++j)
        ctx(i, j + 1) += hyper_.noise_phi * nd(*noise);
    }
  }
  Var raw = context_.forward(tape, tape.constant(std::move(ctx)));
  Var zl = rq_spline_forward(tape.constant(std::move(yt)), raw, hyper_.knots,
                             hyper_.tail_bound);
  Var z = slice_cols(zl, 0, 1);
  Var ld = slice_cols(zl, 1, 2);
  return mean(sub(add_scalar(scale(square(z), 0.5), half_log_2pi), ld));
}

void ConditionalFlow::fit(const Tensor& phi,
                          std::span<const int> a,
                          std::span<const double> y)
{
  const std::size_t n = a.size();
  if (n == 0 || phi.rows() != n || y.size() != n)
    throw InvalidArgument("flow fit: inputs must be non-empty and aligned");
  if (phi.cols() != d_phi_)
    throw InvalidArgument("flow fit: representation width mismatch");
  if (!phi.all_finite())
    throw NumericError("flow fit: representation is not finite");

  moments(y, y_mean_, y_scale_);
  for (std::size_t j = 0; j < d_phi_; ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i)
      col[i] = phi(i, j);
    moments(col, phi_mean_[j], phi_scale_[j]);
  }
  Tensor phi_std = Tensor::matrix(n, d_phi_);
  std::vector<double> y_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    y_std[i] = (y[i] - y_mean_) / y_scale_;
    for (std::size_t j = 0; j < d_phi_; ++j)
      phi_std(i, j) = (phi(i, j) - phi_mean_[j]) / phi_scale_[j];
  }

  Optimizer opt({ OptimizerKind::sgd_momentum, hyper_.learning_rate, 0.0 },
                context_.parameters());
  Minibatcher mb(n, hyper_.batch_size, make_rng(seed_, streams::batches_flow));
  Rng noise = make_rng(seed_, streams::flow_noise);
  const bool noisy = hyper_.noise_y > 0.0 || hyper_.noise_phi > 0.0;

  std::vector<int> ab;
  std::vector<double> yb;
  trace_.clear();
  trace_.reserve(hyper_.iterations);
  double initial = 0.0;
  std::size_t above = 0;
  for (std::size_t it = 0; it < hyper_.iterations; ++it) {
    const auto& idx = mb.next();
    ab.clear();
    yb.clear();
    for (std::size_t i : idx) {
      ab.push_back(a[i]);
      yb.push_back(y_std[i]);
    }
    Tape tape;
    Var loss = nll_standardized(tape, phi_std.rows_subset(idx), ab, yb,
                                noisy ? &noise : nullptr);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    const double v = loss.value().item();
    trace_.push_back(v);
    if (it == 0)
      initial = v;
    // abort on a sustained blow-up of the likelihood
    above = v > initial + 9.0 * std::abs(initial) ? above + 1 : 0;
    if (above >= 500)
      throw NumericError("flow training diverged: NLL above 10x its initial "
                         "value for 500 consecutive steps");
  }
  trained_ = true;
}

double ConditionalFlow::evaluate_nll(const Tensor& phi,
                                     std::span<const int> a,
                                     std::span<const double> y) const
{
  if (phi.rows() != a.size() || y.size() != a.size() || a.empty())
    throw InvalidArgument("flow evaluate: inputs must be non-empty and aligned");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto row = phi.values().subspan(i * phi.cols(), phi.cols());
    s -= log_density(y[i], a[i], row);
  }
  return s / static_cast<double>(a.size());
}

SplineParams ConditionalFlow::spline_at(int a, std::span<const double> phi) const
{
  const auto ps = standardize_phi(phi);
  Tensor ctx = Tensor::matrix(1, d_phi_ + 1);
  ctx(0, 0) = a;
  for (std::size_t j = 0; j < d_phi_; ++j)
    ctx(0, j + 1) = ps[j];
  const Tensor raw = context_.predict(ctx);
  return spline_from_raw(raw.values(), hyper_.knots, hyper_.tail_bound);
}

double ConditionalFlow::log_density(double y, int a, std::span<const double> phi) const
{
  const SplineParams s = spline_at(a, phi);
  const SplineValue f = rq_forward((y - y_mean_) / y_scale_, s);
  return -0.5 * f.value * f.value - half_log_2pi + f.log_abs_det - std::log(y_scale_);
}

double ConditionalFlow::cdf(double y, int a, std::span<const double> phi) const
{
  const SplineParams s = spline_at(a, phi);
  return standard_normal_cdf(rq_forward((y - y_mean_) / y_scale_, s).value);
}

double ConditionalFlow::quantile(double p, int a, std::span<const double> phi) const
{
  const SplineParams s = spline_at(a, phi);
  const double z = standard_normal_quantile(p);
  return y_mean_ + y_scale_ * rq_inverse(z, s).value;
}

std::vector<double> ConditionalFlow::sample(int a,
                                            std::span<const double> phi,
                                            std::size_t k,
                                            Rng& rng) const
{
  if (k == 0)
    throw InvalidArgument("flow sample: k must be >= 1");
  const SplineParams s = spline_at(a, phi);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(k);
  for (double& v : out)
    v = nd(rng);
  // the transform is increasing, so sorting the base draws sorts the output
  std::sort(out.begin(), out.end());
  for (double& v : out)
    v = y_mean_ + y_scale_ * rq_inverse(v, s).value;
  return out;
}

std::string ConditionalFlow::to_json() const
{
  json j{ { "schema", "ricb.flow.v1" },
          { "d_phi", d_phi_ },
          { "seed", seed_ },
          { "hyper",
            { { "learning_rate", hyper_.learning_rate },
              { "batch_size", hyper_.batch_size },
              { "units_mult", hyper_.units_mult },
              { "r_mult", hyper_.r_mult },
              { "knots", hyper_.knots },
              { "noise_y", hyper_.noise_y },
              { "noise_phi", hyper_.noise_phi },
              { "tail_bound", hyper_.tail_bound },
              { "iterations", hyper_.iterations } } },
          { "y_mean", y_mean_ },
          { "y_scale", y_scale_ },
          { "phi_mean", phi_mean_ },
          { "phi_scale", phi_scale_ },
          { "trained", trained_ },
          { "context", detail::mlp_to_json(context_) },
          { "nll_trace", trace_ } };
  return j.dump();
}

ConditionalFlow ConditionalFlow::from_json(const std::string& text)
{
  try {
    const json j = json::parse(text);
    if (j.value("schema", "") != "ricb.flow.v1")
      throw FormatError("flow checkpoint: unsupported schema");
    FlowHyper h;
    const json& hj = j.at("hyper");
    detail::read_opt(hj, "learning_rate", h.learning_rate);
    detail::read_opt(hj, "batch_size", h.batch_size);
    detail::read_opt(hj, "units_mult", h.units_mult);
    detail::read_opt(hj, "r_mult", h.r_mult);
    detail::read_opt(hj, "knots", h.knots);
    detail::read_opt(hj, "noise_y", h.noise_y);
    detail::read_opt(hj, "noise_phi", h.noise_phi);
    detail::read_opt(hj, "tail_bound", h.tail_bound);
    detail::read_opt(hj, "iterations", h.iterations);
    ConditionalFlow f(j.at("d_phi").get<std::size_t>(), h,
                      j.at("seed").get<std::uint64_t>());
    f.context_ = detail::mlp_from_json(j.at("context"));
    f.set_standardization(j.at("y_mean").get<double>(),
                          j.at("y_scale").get<double>(),
                          j.at("phi_mean").get<std::vector<double>>(),
                          j.at("phi_scale").get<std::vector<double>>());
    f.trained_ = j.at("trained").get<bool>();
    f.trace_ = j.at("nll_trace").get<std::vector<double>>();
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("flow checkpoint: ") + e.what());
  }
}

ConditionalFlow train_cnf(const Tensor& phi,
                          std::span<const int> a,
                          std::span<const double> y,
                          const FlowHyper& hyper,
                          std::uint64_t seed)
{
  ConditionalFlow f(phi.cols(), hyper, seed);
  f.fit(phi, a, y);
  return f;
}

} // namespace ricb
