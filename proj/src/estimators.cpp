#include "ricb/estimators.hpp"

#include "ricb/error.hpp"
#include "serialize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace ricb {

using detail::json;

std::string to_string(EstimatorKind k)
{
  switch (k) {
    case EstimatorKind::tarnet: return "TARNet";
    case EstimatorKind::bnn: return "BNN";
    case EstimatorKind::cfr: return "CFR";
    case EstimatorKind::inv_tarnet: return "InvTARNet";
    case EstimatorKind::rcfr: return "RCFR";
    case EstimatorKind::cfr_isw: return "CFR-ISW";
    case EstimatorKind::bwcfr: return "BWCFR";
  }
  return "TARNet";
}

EstimatorKind estimator_kind_from_string(const std::string& s)
{
  std::string k;
  for (char c : s)
    if (c != '-' && c != '_')
      k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (k == "tarnet") return EstimatorKind::tarnet;
  if (k == "bnn") return EstimatorKind::bnn;
  if (k == "cfr") return EstimatorKind::cfr;
  if (k == "invtarnet") return EstimatorKind::inv_tarnet;
  if (k == "rcfr") return EstimatorKind::rcfr;
  if (k == "cfrisw") return EstimatorKind::cfr_isw;
  if (k == "bwcfr") return EstimatorKind::bwcfr;
  throw InvalidArgument("unknown estimator '" + s + "'");
}

namespace {

std::string alpha_text(double a)
{
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, a, std::chars_format::fixed, 1);
  return std::string(buf, r.ptr);
}

} // namespace

std::string EstimatorSpec::label() const
{
  std::string s = to_string(kind);
  if (balancing.metric != BalancingMetric::none && balancing.alpha > 0.0) {
    s += balancing.metric == BalancingMetric::mmd ? " (MMD; alpha = "
                                                  : " (WM; alpha = ";
    s += alpha_text(balancing.alpha) + ")";
  }
  return s;
}

void EstimatorSpec::validate() const
{
  balancing.validate();
  if ((kind == EstimatorKind::tarnet || kind == EstimatorKind::inv_tarnet) &&
      balancing.metric != BalancingMetric::none && balancing.alpha > 0.0)
    throw InvalidArgument(to_string(kind) + " does not use a balancing term");
}

std::vector<std::string> EstimatorSpec::preset_names()
{
  return { "TARNet",    "BNN",  "CFR-MMD-0.1", "CFR-MMD-0.5", "CFR-WM-1",
           "CFR-WM-2",  "InvTARNet", "RCFR", "CFR-ISW",     "BWCFR" };
}

EstimatorSpec EstimatorSpec::preset(const std::string& name)
{
  auto make = [](EstimatorKind k, BalancingMetric m, double alpha) {
    EstimatorSpec s;
    s.kind = k;
    s.balancing.metric = m;
    s.balancing.alpha = alpha;
    return s;
  };
  using K = EstimatorKind;
  using M = BalancingMetric;
  if (name == "TARNet") return make(K::tarnet, M::none, 0.0);
  if (name == "BNN") return make(K::bnn, M::mmd, 0.1);
  if (name == "CFR-MMD-0.1") return make(K::cfr, M::mmd, 0.1);
  if (name == "CFR-MMD-0.5") return make(K::cfr, M::mmd, 0.5);
  if (name == "CFR-WM-1" || name == "CFR") return make(K::cfr, M::wasserstein, 1.0);
  if (name == "CFR-WM-2") return make(K::cfr, M::wasserstein, 2.0);
  if (name == "InvTARNet") return make(K::inv_tarnet, M::none, 0.0);
  if (name == "RCFR") return make(K::rcfr, M::wasserstein, 1.0);
  if (name == "CFR-ISW") return make(K::cfr_isw, M::wasserstein, 1.0);
  if (name == "BWCFR") return make(K::bwcfr, M::wasserstein, 1.0);
  throw InvalidArgument("unknown estimator preset '" + name + "'");
}

std::uint64_t fnv1a(std::string_view bytes)
{
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v)
{
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4)
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

Stage0Model Stage0Model::build(const EstimatorSpec& spec,
                               std::size_t d_x,
                               std::size_t d_phi,
                               const Stage0Hyper& hyper,
                               std::uint64_t seed)
{
  spec.validate();
  if (d_x == 0 || d_phi == 0)
    throw InvalidArgument("stage0: dimensions must be positive");
  if (d_phi > d_x)
    throw InvalidArgument("stage0: d_phi (" + std::to_string(d_phi) +
                          ") must not exceed d_x (" + std::to_string(d_x) + ")");
  Stage0Model m;
  m.spec_ = spec;
  m.hyper_ = hyper;
  m.d_x_ = d_x;
  m.d_phi_ = d_phi;
  m.seed_ = seed;

  const double r = hyper.r_mult;
  const auto phi_units = hidden_units_for(hyper.phi_units_mult, r, d_x);
  const auto head_units = hidden_units_for(hyper.head_units_mult, r, d_phi);
  const auto aux_phi_units = hidden_units_for(hyper.aux_units_mult, r, d_phi);

  Rng rng_phi = make_rng(seed, streams::init_phi);
  m.phi_ = Mlp({ d_x, phi_units, d_phi, Activation::elu, Activation::identity, seed },
               rng_phi);

  Rng rng_h0 = make_rng(seed, streams::init_head0);
  if (spec.kind == EstimatorKind::bnn) {
    m.heads_.emplace_back(
      MlpConfig{ d_phi, head_units, 2, Activation::elu, Activation::identity, seed },
      rng_h0);
  } else {
    Rng rng_h1 = make_rng(seed, streams::init_head1);
    m.heads_.emplace_back(
      MlpConfig{ d_phi, head_units, 1, Activation::elu, Activation::identity, seed },
      rng_h0);
    m.heads_.emplace_back(
      MlpConfig{ d_phi, head_units, 1, Activation::elu, Activation::identity, seed },
      rng_h1);
  }

  if (spec.kind == EstimatorKind::inv_tarnet) {
    Rng rng = make_rng(seed, streams::init_decoder);
    m.decoder_.emplace(
      MlpConfig{ d_phi, phi_units, d_x, Activation::elu, Activation::identity, seed },
      rng);
  }
  if (spec.kind == EstimatorKind::rcfr) {
    Rng rng = make_rng(seed, streams::init_weight_net);
    m.weight_net_.emplace(
      MlpConfig{ d_phi, aux_phi_units, 1, Activation::elu, Activation::identity, seed },
      rng);
  }
  if (spec.kind == EstimatorKind::cfr_isw) {
    Rng rng = make_rng(seed, streams::init_prop_phi);
    m.prop_phi_.emplace(d_phi, aux_phi_units, rng);
  }
  if (spec.kind == EstimatorKind::bwcfr) {
    Rng rng = make_rng(seed, streams::init_prop_x);
    m.prop_x_.emplace(d_x, hidden_units_for(hyper.aux_units_mult, r, d_x), rng);
  }
  return m;
}

Var Stage0Model::head_outputs(Tape& tape, Var rep)
{
  if (heads_.size() == 1)
    return heads_[0].forward(tape, rep);
  return concat_cols(heads_[0].forward(tape, rep), heads_[1].forward(tape, rep));
}

Tensor Stage0Model::head_outputs(const Tensor& rep) const
{
  if (heads_.size() == 1)
    return heads_[0].predict(rep);
  const Tensor h0 = heads_[0].predict(rep);
  const Tensor h1 = heads_[1].predict(rep);
  Tensor out = Tensor::matrix(rep.rows(), 2);
  for (std::size_t i = 0; i < rep.rows(); ++i) {
    out(i, 0) = h0[i];
    out(i, 1) = h1[i];
  }
  return out;
}

Stage0LossTerms Stage0Model::loss(Tape& tape,
                                  const Tensor& x,
                                  std::span<const int> a,
                                  std::span<const double> y,
                                  double treated_share)
{
  const std::size_t n = a.size();
  if (x.rows() != n || y.size() != n || n == 0)
    throw InvalidArgument("stage0 loss: batch size mismatch");
  if (x.cols() != d_x_)
    throw InvalidArgument("stage0 loss: expected " + std::to_string(d_x_) +
                          " covariates, got " + std::to_string(x.cols()));

  Tensor at = treatment_column(a);
  Tensor ct = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    ct[i] = 1.0 - at[i];

  Stage0LossTerms terms;
  Var xv = tape.constant(x);
  Var rep = phi_.forward(tape, xv);
  Var outs = head_outputs(tape, rep);
  Var pred = add(mul(slice_cols(outs, 0, 1), tape.constant(ct)),
                 mul(slice_cols(outs, 1, 2), tape.constant(std::move(at))));
  Tensor target = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    target[i] = (y[i] - y_mean_) / y_scale_;
  Var sq = square(sub(pred, tape.constant(std::move(target))));

  std::optional<Var> weights;
  Var extra = tape.constant(Tensor::scalar(0.0));
  terms.aux = tape.constant(Tensor::scalar(0.0));

  switch (spec_.kind) {
    case EstimatorKind::rcfr: {
      Var raw = softplus(weight_net_->forward(tape, detach(rep)));
      Var w = div(raw, mean(raw));
      weights = w;
      extra = scale(mean(square(w)), hyper_.weight_reg);
      break;
    }
    case EstimatorKind::cfr_isw: {
      Var frozen = detach(rep);
      Var lv = prop_phi_->logits(tape, frozen);
      terms.aux = PropensityNet::bce_from_logits(lv, a);
      const Tensor& logit = lv.value();
      const double p1 = std::clamp(treated_share, 1e-6, 1.0 - 1e-6);
      Tensor w = Tensor::matrix(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double pi1 = clamp_propensity(1.0 / (1.0 + std::exp(-logit[i])));
        const double pa = a[i] ? pi1 : 1.0 - pi1;
        const double marg = a[i] ? (1.0 - p1) / p1 : p1 / (1.0 - p1);
        w[i] = std::clamp(1.0 + marg * (1.0 - pa) / pa, 0.1, 10.0);
      }
      weights = tape.constant(std::move(w));
      break;
    }
    case EstimatorKind::bwcfr: {
      Var lv = prop_x_->logits(tape, xv);
      terms.aux = PropensityNet::bce_from_logits(lv, a);
      const Tensor& logit = lv.value();
      Tensor w = Tensor::matrix(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double pi1 = clamp_propensity(1.0 / (1.0 + std::exp(-logit[i])));
        w[i] = a[i] ? 1.0 - pi1 : pi1;
      }
      weights = tape.constant(std::move(w));
      break;
    }
    default:
      break;
  }

  terms.mse = weights ? mean(mul(*weights, sq)) : mean(sq);
  Var total = add(terms.mse, extra);

  const auto& bal = spec_.balancing;
  if (bal.metric != BalancingMetric::none && bal.alpha > 0.0) {
    terms.balance = balancing_penalty(rep, a, bal, weights);
    total = add(total, scale(terms.balance, bal.alpha));
  } else {
    terms.balance = tape.constant(Tensor::scalar(0.0));
  }

  if (decoder_) {
    terms.recon = mean(square(sub(decoder_->forward(tape, rep), xv)));
    total = add(total, terms.recon);
  } else {
    terms.recon = tape.constant(Tensor::scalar(0.0));
  }
  terms.total = total;
  return terms;
}

std::vector<Parameter*> Stage0Model::outcome_parameters()
{
  std::vector<Parameter*> out = phi_.parameters();
  for (Mlp& h : heads_)
    for (Parameter* p : h.parameters())
      out.push_back(p);
  if (decoder_)
    for (Parameter* p : decoder_->parameters())
      out.push_back(p);
  if (weight_net_)
    for (Parameter* p : weight_net_->parameters())
      out.push_back(p);
  return out;
}

std::vector<Parameter*> Stage0Model::auxiliary_parameters()
{
  if (prop_phi_)
    return prop_phi_->net().parameters();
  if (prop_x_)
    return prop_x_->net().parameters();
  return {};
}

void Stage0Model::fit(const Dataset& train)
{
  train.validate(false);
  if (train.dim() != d_x_)
    throw InvalidArgument("stage0 fit: dataset has " + std::to_string(train.dim()) +
                          " covariates, model expects " + std::to_string(d_x_));
  if (!train.both_groups_present())
    throw InvalidArgument("stage0 fit: both treatment groups must be present");

  const std::size_t n = train.size();
  double treated = 0.0;
  for (int v : train.a)
    treated += v;
  treated_share_ = treated / static_cast<double>(n);
  y_mean_ = std::accumulate(train.y.begin(), train.y.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : train.y)
    ss += (v - y_mean_) * (v - y_mean_);
  y_scale_ = std::sqrt(ss / static_cast<double>(n));
  if (y_scale_ < 1e-12)
    y_scale_ = 1.0;

  Optimizer opt({ OptimizerKind::adamw, hyper_.learning_rate, hyper_.weight_decay },
                outcome_parameters());
  std::optional<Optimizer> aux_opt;
  if (auto aux = auxiliary_parameters(); !aux.empty())
    aux_opt.emplace(OptimizerConfig{ OptimizerKind::adamw,
                                     hyper_.prop_learning_rate,
                                     hyper_.prop_weight_decay },
                    std::move(aux));

  Minibatcher mb(n, hyper_.batch_size, make_rng(seed_, streams::batches_stage0));
  std::vector<int> ab;
  std::vector<double> yb;
  trace_.clear();
  trace_.reserve(hyper_.iterations);
  for (std::size_t it = 0; it < hyper_.iterations; ++it) {
    const auto& idx = mb.next();
    ab.clear();
    yb.clear();
    for (std::size_t i : idx) {
      ab.push_back(train.a[i]);
      yb.push_back(train.y[i]);
    }
    Tape tape;
    Stage0LossTerms t = loss(tape, train.x.rows_subset(idx), ab, yb, treated_share_);
    opt.zero_grad();
    if (aux_opt) {
      aux_opt->zero_grad();
      // The auxiliary loss only reaches the propensity net (its input is
      // detached) and the outcome loss never reaches it (weights are
      // constants), so one backward pass serves both optimizers.
      tape.backward(add(t.total, t.aux));
      aux_opt->step();
    } else {
      tape.backward(t.total);
    }
    opt.step();
    trace_.push_back(t.total.value().item());
  }
  if (prop_phi_)
    prop_phi_->mark_trained();
  if (prop_x_)
    prop_x_->mark_trained();
  trained_ = true;
}

void Stage0Model::require_trained() const
{
  if (!trained_)
    throw StateError("stage0 model is not trained");
}

Tensor Stage0Model::represent(const Tensor& x) const
{
  require_trained();
  return phi_.predict(x);
}

Tensor Stage0Model::predict_outcomes(const Tensor& x) const
{
  Tensor o = head_outputs(represent(x));
  for (double& v : o.raw())
    v = y_mean_ + y_scale_ * v;
  return o;
}

std::vector<double> Stage0Model::predict_cate(const Tensor& x) const
{
  const Tensor o = predict_outcomes(x);
  std::vector<double> tau(o.rows());
  for (std::size_t i = 0; i < tau.size(); ++i)
    tau[i] = o(i, 1) - o(i, 0);
  return tau;
}

double Stage0Model::factual_mse(const Dataset& d) const
{
  const Tensor o = predict_outcomes(d.x);
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = o(i, d.a[i] ? 1 : 0) - d.y[i];
    s += e * e;
  }
  return s / static_cast<double>(d.size());
}

double Stage0Model::factual_bce(const Dataset& d) const
{
  if (prop_phi_)
    return prop_phi_->evaluate_bce(represent(d.x), d.a);
  if (prop_x_)
    return prop_x_->evaluate_bce(d.x, d.a);
  return 0.0;
}

namespace {

json config_json(const EstimatorSpec& spec,
                 const Stage0Hyper& hyper,
                 std::size_t d_x,
                 std::size_t d_phi)
{
  return json{ { "estimator", detail::spec_to_json(spec) },
               { "d_x", d_x },
               { "d_phi", d_phi },
               { "hyper", detail::stage0_hyper_to_json(hyper) } };
}

constexpr const char* checkpoint_schema = "ricb.stage0.v1";

} // namespace

std::uint64_t Stage0Model::config_hash() const
{
  return fnv1a(config_json(spec_, hyper_, d_x_, d_phi_).dump());
}

std::string Stage0Model::to_json() const
{
  json nets = json::object();
  nets["phi"] = detail::mlp_to_json(phi_);
  for (std::size_t i = 0; i < heads_.size(); ++i)
    nets["head" + std::to_string(i)] = detail::mlp_to_json(heads_[i]);
  if (decoder_)
    nets["decoder"] = detail::mlp_to_json(*decoder_);
  if (weight_net_)
    nets["weight_net"] = detail::mlp_to_json(*weight_net_);
  if (prop_phi_)
    nets["prop_phi"] = detail::mlp_to_json(prop_phi_->net());
  if (prop_x_)
    nets["prop_x"] = detail::mlp_to_json(prop_x_->net());
  json j{ { "schema", checkpoint_schema },
          { "config", config_json(spec_, hyper_, d_x_, d_phi_) },
          { "config_hash", hex64(config_hash()) },
          { "seed", seed_ },
          { "trained", trained_ },
          { "treated_share", treated_share_ },
          { "y_mean", y_mean_ },
          { "y_scale", y_scale_ },
          { "networks", nets },
          { "loss_trace", trace_ } };
  return j.dump();
}

Stage0Model Stage0Model::from_json(const std::string& text)
{
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("stage0 checkpoint: ") + e.what());
  }
  if (j.value("schema", "") != checkpoint_schema)
    throw FormatError("stage0 checkpoint: unsupported schema");
  try {
    const json& c = j.at("config");
    const auto spec = detail::spec_from_json(c.at("estimator"));
    const auto hyper = detail::stage0_hyper_from_json(c.at("hyper"));
    Stage0Model m = build(spec,
                          c.at("d_x").get<std::size_t>(),
                          c.at("d_phi").get<std::size_t>(),
                          hyper,
                          j.at("seed").get<std::uint64_t>());
    const json& nets = j.at("networks");
    m.phi_ = detail::mlp_from_json(nets.at("phi"));
    for (std::size_t i = 0; i < m.heads_.size(); ++i)
      m.heads_[i] = detail::mlp_from_json(nets.at("head" + std::to_string(i)));
    if (m.decoder_)
      m.decoder_ = detail::mlp_from_json(nets.at("decoder"));
    if (m.weight_net_)
      m.weight_net_ = detail::mlp_from_json(nets.at("weight_net"));
    if (m.prop_phi_)
      m.prop_phi_ = PropensityNet(detail::mlp_from_json(nets.at("prop_phi")));
    if (m.prop_x_)
      m.prop_x_ = PropensityNet(detail::mlp_from_json(nets.at("prop_x")));
    m.trained_ = j.at("trained").get<bool>();
    if (m.trained_) {
      if (m.prop_phi_)
        m.prop_phi_->mark_trained();
      if (m.prop_x_)
        m.prop_x_->mark_trained();
    }
    m.treated_share_ = j.at("treated_share").get<double>();
    m.y_mean_ = j.at("y_mean").get<double>();
    m.y_scale_ = j.at("y_scale").get<double>();
    if (!(m.y_scale_ > 0.0))
      throw FormatError("stage0 checkpoint: outcome scale must be positive");
    m.trace_ = j.at("loss_trace").get<std::vector<double>>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("stage0 checkpoint: ") + e.what());
  }
}

Stage0Model train_stage0(const EstimatorSpec& spec,
                         const Dataset& train,
                         std::size_t d_phi,
                         const Stage0Hyper& hyper,
                         std::uint64_t seed)
{
  Stage0Model m = Stage0Model::build(spec, train.dim(), d_phi, hyper, seed);
  m.fit(train);
  return m;
}

} // namespace ricb
