#pragma once

#include "ricb/bounds.hpp"
#include "ricb/density.hpp"
#include "ricb/estimators.hpp"
#include "ricb/evaluation.hpp"
#include "ricb/sensitivity.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ricb {

enum class DatasetKind
{
  synthetic,
  ihdp,
  hcmnist,
  csv
};

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetSpec
{
  DatasetKind kind = DatasetKind::synthetic;
  // synthetic sample sizes; row caps for hcmnist (0 = all rows)
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  // ihdp / hcmnist: directory (RICB_DATA_DIR/<kind> when empty);
  // csv: train_path and test_path
  std::string path;
  std::string train_path;
  std::string test_path;
};

enum class Tuning
{
  fixed,
  grid
};

struct ExperimentConfig
{
  DatasetSpec dataset;
  std::string estimator = "TARNet"; // preset name
  std::optional<double> alpha;      // overrides the preset's balancing strength
  std::size_t d_phi = 2;
  std::vector<double> deltas{ std::begin(default_deltas), std::end(default_deltas) };
  std::size_t k = 10000;
  BoundarySplit split = BoundarySplit::fractional;
  Tuning tuning = Tuning::fixed;
  std::vector<std::uint64_t> seeds{ 0, 1, 2, 3, 4 };
  std::string output_dir = "results";

  Stage0Hyper stage0;
  SensitivityHyper sensitivity;
  FlowHyper flow;

  std::size_t grid_runs = 0;      // 0: the per-stage count of the tuning table
  std::size_t folds = 5;
  std::size_t cv_iterations = 0;  // 0: the stage's own iteration count
  std::size_t threads = 0;        // 0: hardware concurrency
  bool decision_grid = true;      // two-covariate datasets only
  std::size_t grid_steps = 21;
  double grid_delta = 0.01;
  bool checkpoints = true;

  // 2 for synthetic data, 1 otherwise
  double r_mult() const;
  EstimatorSpec estimator_spec() const;

  // Hypers with the dataset's R multiplier applied.
  Stage0Hyper stage0_hyper() const;
  SensitivityHyper sensitivity_hyper() const;
  FlowHyper flow_hyper() const;

  void validate() const;

  std::string to_json() const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

  // "a.b=value"; value is parsed as JSON when possible, else as a string.
  void apply_override(const std::string& assignment);

  // hash of the canonical JSON without output_dir and threads
  std::string hash() const;
};

// Train and test split for one seed. For IHDP the seed is the replicate.
std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg,
                                                 std::uint64_t seed);

// --- tuning -----------------------------------------------------------------

enum class TuneStage
{
  stage0,
  propensity_x,
  propensity_phi,
  flow
};

std::string to_string(TuneStage s);
TuneStage tune_stage_from_string(const std::string& s);

struct GridAxis
{
  std::string name;
  std::vector<double> values;
};

struct Grid
{
  std::vector<GridAxis> axes;

  std::size_t size() const;
  // mixed-radix decoding, first axis slowest
  std::vector<double> point(std::size_t index) const;
};

// The tuning table's grid for a stage. `kind` only matters for Stage 0.
Grid table_grid(TuneStage stage, EstimatorKind kind = EstimatorKind::tarnet);
std::size_t table_runs(TuneStage stage, EstimatorKind kind = EstimatorKind::tarnet);

// Up to `runs` distinct grid indices, uniformly without replacement, in
// drawing order. The whole grid when it has no more than `runs` points.
std::vector<std::size_t> sample_grid(const Grid& grid, std::size_t runs, std::uint64_t seed);

// Fold id per row, stratified by treatment so every fold sees both arms.
std::vector<std::size_t> stratified_folds(std::span<const int> a,
                                          std::size_t folds,
                                          std::uint64_t seed);

struct GridTrial
{
  std::size_t index = 0;
  std::vector<double> point;
  double score = 0.0; // mean validation criterion over folds
};

struct GridResult
{
  std::vector<std::string> names;
  std::vector<double> best;
  std::size_t best_index = 0;
  double best_score = 0.0;
  std::vector<GridTrial> trials; // drawing order
};

// criterion(point, fit split, validation split, seed) -> validation loss
using GridCriterion = std::function<double(std::span<const double>,
                                           const Dataset&,
                                           const Dataset&,
                                           std::uint64_t)>;

GridResult grid_search_cv(const Grid& grid,
                          std::size_t runs,
                          std::size_t folds,
                          const Dataset& train,
                          std::uint64_t seed,
                          const GridCriterion& criterion,
                          std::size_t threads = 1);

// Writes a grid point into the matching hyperparameter struct.
void apply_point(const GridResult& r, Stage0Hyper& h);
void apply_point(const GridResult& r, PropensityHyper& h);
void apply_point(const GridResult& r, FlowHyper& h);

// Tunes one stage of the pipeline on `train`. Stages after Stage 0 need the
// Stage 0 winner for the representation.
GridResult tune_stage(const ExperimentConfig& cfg,
                      TuneStage stage,
                      const Dataset& train,
                      std::uint64_t seed,
                      const Stage0Model* stage0 = nullptr);

// --- running ----------------------------------------------------------------

struct DeltaMetrics
{
  double delta = 0.0;
  std::optional<double> er_out;       // bounds policy
  std::optional<double> delta_er_out; // bounds minus point policy
  double dr_out = 0.0;
};

struct PointRecord
{
  std::size_t id = 0;
  double point = 0.0;
  double tau_oracle = 0.0;
  double effect = 0.0; // sampled y1 - y0 where available, else tau_oracle
};

struct RunRecord
{
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string method;
  std::size_t d_phi = 0;

  double rpehe_in = 0.0;
  double rpehe_out = 0.0;
  std::optional<double> er_point_out;
  std::vector<DeltaMetrics> metrics;

  std::vector<PointRecord> in_points;
  std::vector<PointRecord> out_points;
  std::vector<std::vector<CateBounds>> bounds; // [delta][test row]

  std::string stage0_hash;
  std::map<std::string, std::string> checkpoints; // name -> relative path
  std::map<std::string, double> seconds;          // wall time per stage
  std::string hypers_json;                        // hyperparameters used
};

// The three trained artifacts of one seed.
struct PipelineArtifacts
{
  Stage0Model stage0;
  SensitivityEstimate sensitivity;
  ConditionalFlow flow;
};

// Stage 0 alone, tuned per the config.
Stage0Model fit_stage0(const ExperimentConfig& cfg,
                       const Dataset& train,
                       std::uint64_t seed,
                       RunRecord* info = nullptr);

// Stages 1 and 2 on top of a trained Stage 0 model.
std::pair<SensitivityEstimate, ConditionalFlow> fit_refutation(const ExperimentConfig& cfg,
                                                               const Stage0Model& stage0,
                                                               const Dataset& train,
                                                               std::uint64_t seed,
                                                               RunRecord* info = nullptr);

// Stage 0 -> 1 -> 2 with tuning per the config. Errors carry a stage tag.
// When `info` is given, its hypers_json and seconds are filled in.
PipelineArtifacts fit_pipeline(const ExperimentConfig& cfg,
                               const Dataset& train,
                               std::uint64_t seed,
                               RunRecord* info = nullptr);

// Scores trained artifacts on both splits.
RunRecord evaluate_pipeline(const ExperimentConfig& cfg,
                            const PipelineArtifacts& art,
                            const Dataset& train,
                            const Dataset& test,
                            std::uint64_t seed);

// All seeds, concurrently up to cfg.threads. When `out_dir` is non-empty,
// per-seed checkpoints and decision grids are written under it.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      const std::filesystem::path& out_dir = {});

// --- results ----------------------------------------------------------------

struct AggregateRow
{
  std::string method;
  std::size_t d_phi = 0;
  double delta = 0.0;
  std::optional<double> er_out, delta_er_out;
  double dr_out = 0.0;
  double rpehe_in = 0.0, rpehe_out = 0.0;
  // population std over seeds
  std::optional<double> er_out_std, delta_er_out_std;
  double dr_out_std = 0.0;
  double rpehe_in_std = 0.0, rpehe_out_std = 0.0;
  std::size_t seeds = 0;
};

// Means skip seeds where a rate is undefined (all points deferred).
std::vector<AggregateRow> aggregate(std::span<const RunRecord> records);

// points.csv, aggregate.csv, curve.csv, results.json, table.txt, timings.json
void emit_results(std::span<const RunRecord> records,
                  const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir);

struct ResultsFile
{
  std::string schema;
  std::string config_hash;
  std::vector<AggregateRow> rows;
  std::vector<RunRecord> runs; // metrics only; point data stays in the CSV
};

ResultsFile load_results_json(const std::filesystem::path& path);

// Rows per method and delta, "ER (dER)" cells plus rPEHE.
std::string format_table(std::span<const AggregateRow> rows);

} // namespace ricb
