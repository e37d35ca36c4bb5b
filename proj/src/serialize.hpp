#pragma once

// JSON conversions shared by checkpoints, configs and results. Kept out of
// the public headers so consumers do not need the json library.

#include "ricb/error.hpp"
#include "ricb/estimators.hpp"

#include <json.hpp>

namespace ricb::detail {

using json = nlohmann::json;

json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& j);

json mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const json& j);

json balancing_to_json(const BalancingConfig& b);
BalancingConfig balancing_from_json(const json& j);

json spec_to_json(const EstimatorSpec& s);
EstimatorSpec spec_from_json(const json& j);

json stage0_hyper_to_json(const Stage0Hyper& h);
Stage0Hyper stage0_hyper_from_json(const json& j, Stage0Hyper base = {});

json propensity_hyper_to_json(const PropensityHyper& h);
PropensityHyper propensity_hyper_from_json(const json& j,
                                           PropensityHyper base = {});

// Reads `key` into `out` when present; a wrong type becomes FormatError.
template<class T>
void read_opt(const json& j, const char* key, T& out)
{
  auto it = j.find(key);
  if (it == j.end() || it->is_null())
    return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

} // namespace ricb::detail
