#include "serialize.hpp"

#include "ricb/error.hpp"

namespace ricb::detail {

json tensor_to_json(const Tensor& t)
{
  return json{ { "shape", t.shape() }, { "data", t.raw() } };
}

Tensor tensor_from_json(const json& j)
{
  try {
    auto shape = j.at("shape").get<std::vector<std::size_t>>();
    auto data = j.at("data").get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(data));
  } catch (const json::exception& e) {
    throw FormatError(std::string("tensor: ") + e.what());
  }
}

json mlp_to_json(const Mlp& m)
{
  const auto& c = m.config();
  json params = json::object();
  for (const Parameter* p : m.parameters())
    params[p->name] = tensor_to_json(p->value);
  return json{ { "input_dim", c.input_dim },
               { "hidden_units", c.hidden_units },
               { "output_dim", c.output_dim },
               { "hidden_activation", to_string(c.hidden_activation) },
               { "output_activation", to_string(c.output_activation) },
               { "params", params } };
}

Mlp mlp_from_json(const json& j)
{
  MlpConfig c;
  try {
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_units = j.at("hidden_units").get<std::size_t>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.hidden_activation =
      activation_from_string(j.at("hidden_activation").get<std::string>());
    c.output_activation =
      activation_from_string(j.at("output_activation").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("mlp: ") + e.what());
  }
  Rng dummy(0);
  Mlp m(c, dummy);
  const json& params = j.at("params");
  for (Parameter* p : m.parameters()) {
    if (!params.contains(p->name))
      throw FormatError("mlp: missing parameter " + p->name);
    Tensor v = tensor_from_json(params.at(p->name));
    if (!v.same_shape(p->value))
      throw FormatError("mlp: parameter " + p->name + " has shape " +
                        v.shape_string() + ", expected " +
                        p->value.shape_string());
    p->value = std::move(v);
    p->zero_grad();
  }
  return m;
}

json balancing_to_json(const BalancingConfig& b)
{
  return json{ { "metric", to_string(b.metric) },
               { "alpha", b.alpha },
               { "sinkhorn_epsilon", b.sinkhorn_epsilon },
               { "sinkhorn_iters", b.sinkhorn_iters },
               { "kernel", b.kernel == MmdKernel::rbf ? "rbf" : "linear" } };
}

BalancingConfig balancing_from_json(const json& j)
{
  BalancingConfig b;
  std::string metric = to_string(b.metric);
  std::string kernel = "linear";
  read_opt(j, "metric", metric);
  read_opt(j, "kernel", kernel);
  b.metric = balancing_metric_from_string(metric);
  if (kernel == "rbf")
    b.kernel = MmdKernel::rbf;
  else if (kernel != "linear")
    throw InvalidArgument("unknown mmd kernel '" + kernel + "'");
  read_opt(j, "alpha", b.alpha);
  read_opt(j, "sinkhorn_epsilon", b.sinkhorn_epsilon);
  read_opt(j, "sinkhorn_iters", b.sinkhorn_iters);
  b.validate();
  return b;
}

json spec_to_json(const EstimatorSpec& s)
{
  return json{ { "kind", to_string(s.kind) },
               { "balancing", balancing_to_json(s.balancing) } };
}

EstimatorSpec spec_from_json(const json& j)
{
  if (j.is_string())
    return EstimatorSpec::preset(j.get<std::string>());
  EstimatorSpec s;
  std::string kind = to_string(s.kind);
  read_opt(j, "kind", kind);
  s.kind = estimator_kind_from_string(kind);
  if (j.contains("balancing"))
    s.balancing = balancing_from_json(j.at("balancing"));
  s.validate();
  return s;
}

json stage0_hyper_to_json(const Stage0Hyper& h)
{
  return json{ { "learning_rate", h.learning_rate },
               { "batch_size", h.batch_size },
               { "weight_decay", h.weight_decay },
               { "phi_units_mult", h.phi_units_mult },
               { "head_units_mult", h.head_units_mult },
               { "aux_units_mult", h.aux_units_mult },
               { "prop_learning_rate", h.prop_learning_rate },
               { "prop_weight_decay", h.prop_weight_decay },
               { "r_mult", h.r_mult },
               { "weight_reg", h.weight_reg },
               { "iterations", h.iterations } };
}

Stage0Hyper stage0_hyper_from_json(const json& j, Stage0Hyper h)
{
  read_opt(j, "learning_rate", h.learning_rate);
  read_opt(j, "batch_size", h.batch_size);
  read_opt(j, "weight_decay", h.weight_decay);
  read_opt(j, "phi_units_mult", h.phi_units_mult);
  read_opt(j, "head_units_mult", h.head_units_mult);
  read_opt(j, "aux_units_mult", h.aux_units_mult);
  read_opt(j, "prop_learning_rate", h.prop_learning_rate);
  read_opt(j, "prop_weight_decay", h.prop_weight_decay);
  read_opt(j, "r_mult", h.r_mult);
  read_opt(j, "weight_reg", h.weight_reg);
  read_opt(j, "iterations", h.iterations);
  return h;
}

json propensity_hyper_to_json(const PropensityHyper& h)
{
  return json{ { "learning_rate", h.learning_rate },
               { "batch_size", h.batch_size },
               { "weight_decay", h.weight_decay },
               { "units_mult", h.units_mult },
               { "r_mult", h.r_mult },
               { "iterations", h.iterations } };
}

PropensityHyper propensity_hyper_from_json(const json& j, PropensityHyper h)
{
  read_opt(j, "learning_rate", h.learning_rate);
  read_opt(j, "batch_size", h.batch_size);
  read_opt(j, "weight_decay", h.weight_decay);
  read_opt(j, "units_mult", h.units_mult);
  read_opt(j, "r_mult", h.r_mult);
  read_opt(j, "iterations", h.iterations);
  return h;
}

} // namespace ricb::detail
