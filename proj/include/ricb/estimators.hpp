#pragma once

#include "ricb/balancing.hpp"
#include "ricb/datasets.hpp"
#include "ricb/nn.hpp"
#include "ricb/propensity.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ricb {

enum class EstimatorKind
{
  tarnet,
  bnn,
  cfr,
  inv_tarnet,
  rcfr,
  cfr_isw,
  bwcfr
};

std::string to_string(EstimatorKind k);
EstimatorKind estimator_kind_from_string(const std::string& s);

struct EstimatorSpec
{
  EstimatorKind kind = EstimatorKind::tarnet;
  BalancingConfig balancing;

  // Human-readable row label, e.g. "CFR (WM; alpha = 1.0)".
  std::string label() const;
  void validate() const;

  // Named presets: TARNet, BNN, CFR-MMD-0.1, CFR-MMD-0.5, CFR-WM-1, CFR-WM-2,
  // InvTARNet, RCFR, CFR-ISW, BWCFR.
  static EstimatorSpec preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

//! Stage 0 training hyperparameters. Hidden units are multiples of R times
//! the input width of each subnetwork.
struct Stage0Hyper
{
  double learning_rate = 0.005;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  double phi_units_mult = 2.0;  // FC_phi and decoder: mult * R * d_x
  double head_units_mult = 2.0; // heads: mult * R * d_phi
  double aux_units_mult = 2.0;  // weight / propensity nets
  double prop_learning_rate = 0.005;
  double prop_weight_decay = 0.0;
  double r_mult = 2.0;
  double weight_reg = 0.1; // RCFR penalty on the squared weights
  std::size_t iterations = 5000;
};

struct Stage0LossTerms
{
  Var total;   // what the outcome optimizer minimises
  Var mse;
  Var balance; // unscaled
  Var recon;
  Var aux;     // propensity BCE for the reweighting kinds (own optimizer)
};

class Stage0Model
{
public:
  Stage0Model() = default;

  static Stage0Model build(const EstimatorSpec& spec,
                           std::size_t d_x,
                           std::size_t d_phi,
                           const Stage0Hyper& hyper,
                           std::uint64_t seed);

  const EstimatorSpec& spec() const { return spec_; }
  const Stage0Hyper& hyper() const { return hyper_; }
  std::size_t d_x() const { return d_x_; }
  std::size_t d_phi() const { return d_phi_; }
  std::uint64_t seed() const { return seed_; }
  bool trained() const { return trained_; }

  bool has_decoder() const { return decoder_.has_value(); }
  bool has_weight_net() const { return weight_net_.has_value(); }
  bool has_prop_phi() const { return prop_phi_.has_value(); }
  bool has_prop_x() const { return prop_x_.has_value(); }
  const Mlp& phi_net() const { return phi_; }
  Mlp& phi_net() { return phi_; }
  const std::vector<Mlp>& heads() const { return heads_; }
  std::vector<Mlp>& heads() { return heads_; }
  const std::optional<Mlp>& decoder() const { return decoder_; }
  std::optional<Mlp>& decoder() { return decoder_; }
  const std::optional<PropensityNet>& prop_phi() const { return prop_phi_; }
  const std::optional<PropensityNet>& prop_x() const { return prop_x_; }

  // Loss terms on one batch, y in original units (standardized internally
  // with the training moments). `treated_share` is P(A = 1) on the training
  // set and only matters for CFR-ISW.
  Stage0LossTerms loss(Tape& tape,
                       const Tensor& x,
                       std::span<const int> a,
                       std::span<const double> y,
                       double treated_share);

  void fit(const Dataset& train);

  Tensor represent(const Tensor& x) const;
  // n x 2 matrix with columns (mu0, mu1) of the representation-level heads.
  Tensor predict_outcomes(const Tensor& x) const;
  std::vector<double> predict_cate(const Tensor& x) const;
  // mean factual squared error on (x, a, y); the tuning criterion
  double factual_mse(const Dataset& d) const;
  // factual BCE of the jointly trained propensity net, 0 when absent
  double factual_bce(const Dataset& d) const;

  const std::vector<double>& loss_trace() const { return trace_; }
  double treated_share() const { return treated_share_; }
  // training outcome moments; heads work on the standardized scale
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }

  std::vector<Parameter*> outcome_parameters();
  std::vector<Parameter*> auxiliary_parameters();

  // Hash of everything that defines the model except the seed.
  std::uint64_t config_hash() const;

  std::string to_json() const;
  static Stage0Model from_json(const std::string& text);

  void mark_trained(bool t = true) { trained_ = t; }

private:
  Var head_outputs(Tape& tape, Var rep); // n x 2
  Tensor head_outputs(const Tensor& rep) const;
  void require_trained() const;

  EstimatorSpec spec_;
  Stage0Hyper hyper_;
  std::size_t d_x_ = 0;
  std::size_t d_phi_ = 0;
  std::uint64_t seed_ = 0;
  Mlp phi_;
  std::vector<Mlp> heads_; // two heads, or one two-output head for BNN
  std::optional<Mlp> decoder_;
  std::optional<Mlp> weight_net_;
  std::optional<PropensityNet> prop_phi_;
  std::optional<PropensityNet> prop_x_;
  std::vector<double> trace_;
  double treated_share_ = 0.5;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  bool trained_ = false;
};

Stage0Model train_stage0(const EstimatorSpec& spec,
                         const Dataset& train,
                         std::size_t d_phi,
                         const Stage0Hyper& hyper,
                         std::uint64_t seed);

// FNV-1a 64 over bytes; used for config hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

} // namespace ricb
