#pragma once

#include "ricb/autograd.hpp"

#include <optional>
#include <span>
#include <string>

namespace ricb {

enum class BalancingMetric
{
  none,
  mmd,
  wasserstein
};

enum class MmdKernel
{
  linear,
  rbf
};

std::string to_string(BalancingMetric m);
BalancingMetric balancing_metric_from_string(const std::string& s);

struct BalancingConfig
{
  BalancingMetric metric = BalancingMetric::none;
  double alpha = 0.0;
  double sinkhorn_epsilon = 0.1;
  int sinkhorn_iters = 10;
  MmdKernel kernel = MmdKernel::linear;

  void validate() const;
};

// Both metrics accept optional per-row sample weights for each group
// (column vectors, non-negative). Weights are renormalised to sum to one
// inside the group; gradients flow through them.

//! Squared MMD between the two groups of representation rows. With the
//! linear kernel this is the squared distance of the (weighted) means.
Var mmd(Var treated,
        Var control,
        MmdKernel kernel = MmdKernel::linear,
        std::optional<Var> treated_weights = std::nullopt,
        std::optional<Var> control_weights = std::nullopt);

//! Entropic optimal transport cost <P, C> with squared Euclidean cost C,
//! P obtained from log-domain Sinkhorn iterations unrolled on the tape.
//! Evaluated in both argument orders and averaged, so the value is exactly
//! symmetric.
Var sinkhorn_wasserstein(Var treated,
                         Var control,
                         double epsilon,
                         int iterations,
                         std::optional<Var> treated_weights = std::nullopt,
                         std::optional<Var> control_weights = std::nullopt);

//! Balancing term for a minibatch: splits `rep` rows by treatment and applies
//! the configured metric (unscaled by alpha). Returns a constant zero when
//! either group is empty or the metric is none.
Var balancing_penalty(Var rep,
                      std::span<const int> treatment,
                      const BalancingConfig& cfg,
                      std::optional<Var> weights = std::nullopt);

// Row selection that keeps gradients: out = rows idx of a.
Var take_rows(Var a, std::span<const std::size_t> idx);

} // namespace ricb
