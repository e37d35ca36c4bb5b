#include "ricb/sensitivity.hpp"

#include "ricb/csv.hpp"
#include "ricb/error.hpp"
#include "serialize.hpp"

#include <algorithm>
#include <cmath>

namespace ricb {

GammaPoint gamma_pointwise(double pi1_x, double pi1_phi)
{
  auto open = [](double p) { return std::isfinite(p) && p > 0.0 && p < 1.0; };
  if (!open(pi1_x) || !open(pi1_phi))
    throw InvalidArgument("gamma_pointwise: propensities must lie in (0, 1)");
  const double lambda = ((1.0 - pi1_phi) / pi1_phi) * (pi1_x / (1.0 - pi1_x));
  return { lambda, std::max(lambda, 1.0 / lambda) };
}

GammaField::GammaField(const Tensor& phi_train, std::vector<double> gamma_point)
  : gamma_(std::move(gamma_point))
{
  const std::size_t n = phi_train.rows(), d = phi_train.cols();
  if (n == 0 || n != gamma_.size())
    throw InvalidArgument("GammaField: need one Gamma per training representation");
  for (double g : gamma_)
    if (!(g >= 1.0))
      throw InvalidArgument("GammaField: Gamma must be >= 1");
  center_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k)
      center_[k] += phi_train(i, k);
  for (double& c : center_)
    c /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double v = phi_train(i, k) - center_[k];
      scale_[k] += v * v;
    }
  for (double& s : scale_) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12)
      s = 1.0;
  }
  phi_ = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k)
      phi_(i, k) = (phi_train(i, k) - center_[k]) / scale_[k];
}

std::vector<double> GammaField::standardize(std::span<const double> phi) const
{
  if (phi.size() != dim())
    throw InvalidArgument("GammaField: representation width mismatch");
  std::vector<double> z(phi.size());
  for (std::size_t k = 0; k < z.size(); ++k)
    z[k] = (phi[k] - center_[k]) / scale_[k];
  return z;
}

double GammaField::ball_max(const double* z, double delta) const
{
  const std::size_t n = size(), d = dim();
  const double r2 = delta * delta;
  const double* p = phi_.raw().data();
  double best = 1.0;
  for (std::size_t j = 0; j < n; ++j, p += d) {
    if (gamma_[j] <= best)
      continue;
    double s = 0.0;
    for (std::size_t k = 0; k < d && s <= r2; ++k) {
      const double v = p[k] - z[k];
      s += v * v;
    }
    if (s <= r2)
      best = gamma_[j];
  }
  return best;
}

double GammaField::ball(std::size_t i, double delta) const
{
  if (i >= size())
    throw InvalidArgument("GammaField: point index out of range");
  if (!(delta >= 0.0))
    throw InvalidArgument("GammaField: delta must be non-negative");
  return std::max(gamma_[i], ball_max(phi_.raw().data() + i * dim(), delta));
}

std::vector<double> GammaField::ball_all(double delta) const
{
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = ball(i, delta);
  return out;
}

double GammaField::at(std::span<const double> phi, double own_gamma, double delta) const
{
  if (!(delta >= 0.0))
    throw InvalidArgument("GammaField: delta must be non-negative");
  if (!(own_gamma >= 1.0))
    throw InvalidArgument("GammaField: Gamma must be >= 1");
  const auto z = standardize(phi);
  return std::max(own_gamma, ball_max(z.data(), delta));
}

std::vector<double> GammaField::at_many(const Tensor& phi,
                                        std::span<const double> own_gamma,
                                        double delta) const
{
  if (phi.rows() != own_gamma.size())
    throw InvalidArgument("GammaField: one own Gamma per row required");
  std::vector<double> out(phi.rows());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = at(phi.row_span(i), own_gamma[i], delta);
  return out;
}

std::vector<double> PropensityPair::gamma_point(const Tensor& x, const Tensor& phi) const
{
  const auto px = predict_x(x);
  const auto pp = predict_phi(phi);
  std::vector<double> g(px.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = gamma_pointwise(px[i], pp[i]).gamma;
  return g;
}

SensitivityEstimate fit_sensitivity(const Stage0Model& stage0,
                                    const Dataset& train,
                                    const SensitivityHyper& hyper,
                                    std::uint64_t seed)
{
  if (!stage0.trained())
    throw StateError("sensitivity: Stage 0 model is not trained");
  train.validate(false);
  SensitivityEstimate est;
  est.phi_train = stage0.represent(train.x);

  if (hyper.reuse_stage0 && stage0.has_prop_x()) {
    est.pair.pi_x = *stage0.prop_x();
    est.pair.reused_x = true;
  } else {
    est.pair.pi_x = train_propensity(train.x, train.a, hyper.x, seed, streams::init_prop_x,
                                     streams::batches_prop_x);
  }
  if (hyper.reuse_stage0 && stage0.has_prop_phi()) {
    est.pair.pi_phi = *stage0.prop_phi();
    est.pair.reused_phi = true;
  } else {
    est.pair.pi_phi = train_propensity(est.phi_train, train.a, hyper.phi, seed,
                                       streams::init_prop_phi, streams::batches_prop_phi);
  }

  est.pi_x = est.pair.predict_x(train.x);
  est.pi_phi = est.pair.predict_phi(est.phi_train);
  std::vector<double> g(train.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = gamma_pointwise(est.pi_x[i], est.pi_phi[i]).gamma;
  est.field = GammaField(est.phi_train, std::move(g));
  return est;
}

void write_gamma_csv(const SensitivityEstimate& est,
                     double delta,
                     const std::filesystem::path& path)
{
  CsvTable t;
  t.header.push_back("id");
  for (std::size_t k = 0; k < est.phi_train.cols(); ++k)
    t.header.push_back("phi_" + std::to_string(k + 1));
  t.header.insert(t.header.end(), { "pi_x", "pi_phi", "gamma_point", "gamma_ball" });
  const auto ball = est.field.ball_all(delta);
  for (std::size_t i = 0; i < est.field.size(); ++i) {
    std::vector<double> row{ static_cast<double>(i) };
    for (std::size_t k = 0; k < est.phi_train.cols(); ++k)
      row.push_back(est.phi_train(i, k));
    row.insert(row.end(),
               { est.pi_x[i], est.pi_phi[i], est.field.gamma_point()[i], ball[i] });
    t.rows.push_back(std::move(row));
  }
  write_csv(t, path);
}

std::string sensitivity_to_json(const SensitivityEstimate& est)
{
  using detail::json;
  json j{ { "schema", "ricb.sensitivity.v1" },
          { "pi_x_net", detail::mlp_to_json(est.pair.pi_x.net()) },
          { "pi_phi_net", detail::mlp_to_json(est.pair.pi_phi.net()) },
          { "reused_x", est.pair.reused_x },
          { "reused_phi", est.pair.reused_phi },
          { "phi_train", detail::tensor_to_json(est.phi_train) },
          { "pi_x", est.pi_x },
          { "pi_phi", est.pi_phi },
          { "gamma_point", est.field.gamma_point() } };
  return j.dump();
}

SensitivityEstimate sensitivity_from_json(const std::string& text)
{
  using detail::json;
  try {
    const json j = json::parse(text);
    if (j.value("schema", "") != "ricb.sensitivity.v1")
      throw FormatError("sensitivity checkpoint: unknown schema");
    SensitivityEstimate est;
    est.pair.pi_x = PropensityNet(detail::mlp_from_json(j.at("pi_x_net")));
    est.pair.pi_phi = PropensityNet(detail::mlp_from_json(j.at("pi_phi_net")));
    est.pair.pi_x.mark_trained();
    est.pair.pi_phi.mark_trained();
    est.pair.reused_x = j.at("reused_x").get<bool>();
    est.pair.reused_phi = j.at("reused_phi").get<bool>();
    est.phi_train = detail::tensor_from_json(j.at("phi_train"));
    est.pi_x = j.at("pi_x").get<std::vector<double>>();
    est.pi_phi = j.at("pi_phi").get<std::vector<double>>();
    auto g = j.at("gamma_point").get<std::vector<double>>();
    if (g.size() != est.phi_train.rows() || est.pi_x.size() != g.size() ||
        est.pi_phi.size() != g.size())
      throw FormatError("sensitivity checkpoint: inconsistent lengths");
    est.field = GammaField(est.phi_train, std::move(g));
    return est;
  } catch (const json::exception& e) {
    throw FormatError(std::string("sensitivity checkpoint: ") + e.what());
  }
}

} // namespace ricb
