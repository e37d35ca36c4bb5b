#include "ricb/runner.hpp"

#include "ricb/csv.hpp"
#include "ricb/error.hpp"
#include "serialize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace ricb {

using detail::json;

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The exception of the
// lowest failing index is rethrown, so failures do not depend on scheduling.
template<class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn)
{
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{ 0 };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& th : pool)
      th.join();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

std::size_t resolve_threads(std::size_t t)
{
  if (t > 0)
    return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Re-raises with the stage name in front, keeping the error code.
template<class F>
auto staged(const char* tag, F&& f)
{
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(tag) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::internal, std::string(tag) + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json flow_hyper_to_json(const FlowHyper& h)
{
  return json{ { "learning_rate", h.learning_rate },
               { "batch_size", h.batch_size },
               { "units_mult", h.units_mult },
               { "r_mult", h.r_mult },
               { "knots", h.knots },
               { "noise_y", h.noise_y },
               { "noise_phi", h.noise_phi },
               { "tail_bound", h.tail_bound },
               { "iterations", h.iterations } };
}

FlowHyper flow_hyper_from_json(const json& j, FlowHyper h)
{
  using detail::read_opt;
  read_opt(j, "learning_rate", h.learning_rate);
  read_opt(j, "batch_size", h.batch_size);
  read_opt(j, "units_mult", h.units_mult);
  read_opt(j, "r_mult", h.r_mult);
  read_opt(j, "knots", h.knots);
  read_opt(j, "noise_y", h.noise_y);
  read_opt(j, "noise_phi", h.noise_phi);
  read_opt(j, "tail_bound", h.tail_bound);
  read_opt(j, "iterations", h.iterations);
  return h;
}

// R is derived from the dataset, so it is not a config field.
json without_r(json j)
{
  j.erase("r_mult");
  return j;
}

json config_to_json(const ExperimentConfig& c)
{
  json seeds = json::array();
  for (auto s : c.seeds)
    seeds.push_back(s);
  return json{
    { "dataset",
      { { "kind", to_string(c.dataset.kind) },
        { "n_train", c.dataset.n_train },
        { "n_test", c.dataset.n_test },
        { "path", c.dataset.path },
        { "train_path", c.dataset.train_path },
        { "test_path", c.dataset.test_path } } },
    { "estimator", c.estimator },
    { "alpha", c.alpha ? json(*c.alpha) : json(nullptr) },
    { "d_phi", c.d_phi },
    { "deltas", c.deltas },
    { "k", c.k },
    { "split", c.split == BoundarySplit::fractional ? "fractional" : "floor" },
    { "tuning", c.tuning == Tuning::fixed ? "fixed" : "grid" },
    { "seeds", seeds },
    { "output_dir", c.output_dir },
    { "stage0", without_r(detail::stage0_hyper_to_json(c.stage0)) },
    { "sensitivity",
      { { "x", without_r(detail::propensity_hyper_to_json(c.sensitivity.x)) },
        { "phi", without_r(detail::propensity_hyper_to_json(c.sensitivity.phi)) },
        { "reuse_stage0", c.sensitivity.reuse_stage0 } } },
    { "flow", without_r(flow_hyper_to_json(c.flow)) },
    { "grid_runs", c.grid_runs },
    { "folds", c.folds },
    { "cv_iterations", c.cv_iterations },
    { "threads", c.threads },
    { "decision_grid", c.decision_grid },
    { "grid_steps", c.grid_steps },
    { "grid_delta", c.grid_delta },
    { "checkpoints", c.checkpoints },
  };
}

void reject_unknown(const json& given, const json& known, const std::string& prefix)
{
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix + it.key();
    auto k = known.find(it.key());
    if (k == known.end())
      throw FormatError("config: unknown field '" + key + "'");
    if (k->is_object()) {
      if (!it->is_object())
        throw FormatError("config: field '" + key + "' must be an object");
      reject_unknown(*it, *k, key + ".");
    }
  }
}

template<class T>
T field(const json& j, const char* key)
{
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: field '") + key + "': " + e.what());
  }
}

ExperimentConfig config_from_json(const json& j)
{
  ExperimentConfig c;
  const json& d = j.at("dataset");
  c.dataset.kind = dataset_kind_from_string(field<std::string>(d, "kind"));
  c.dataset.n_train = field<std::size_t>(d, "n_train");
  c.dataset.n_test = field<std::size_t>(d, "n_test");
  c.dataset.path = field<std::string>(d, "path");
  c.dataset.train_path = field<std::string>(d, "train_path");
  c.dataset.test_path = field<std::string>(d, "test_path");
  c.estimator = field<std::string>(j, "estimator");
  if (!j.at("alpha").is_null())
    c.alpha = field<double>(j, "alpha");
  c.d_phi = field<std::size_t>(j, "d_phi");
  c.deltas = field<std::vector<double>>(j, "deltas");
  c.k = field<std::size_t>(j, "k");
  const auto split = field<std::string>(j, "split");
  if (split != "fractional" && split != "floor")
    throw FormatError("config: split must be 'fractional' or 'floor'");
  c.split = split == "floor" ? BoundarySplit::floor : BoundarySplit::fractional;
  const auto tuning = field<std::string>(j, "tuning");
  if (tuning != "fixed" && tuning != "grid")
    throw FormatError("config: tuning must be 'fixed' or 'grid'");
  c.tuning = tuning == "grid" ? Tuning::grid : Tuning::fixed;
  c.seeds = field<std::vector<std::uint64_t>>(j, "seeds");
  c.output_dir = field<std::string>(j, "output_dir");
  c.stage0 = detail::stage0_hyper_from_json(j.at("stage0"));
  const json& s = j.at("sensitivity");
  c.sensitivity.x = detail::propensity_hyper_from_json(s.at("x"));
  c.sensitivity.phi = detail::propensity_hyper_from_json(s.at("phi"));
  c.sensitivity.reuse_stage0 = field<bool>(s, "reuse_stage0");
  c.flow = flow_hyper_from_json(j.at("flow"), FlowHyper{});
  c.grid_runs = field<std::size_t>(j, "grid_runs");
  c.folds = field<std::size_t>(j, "folds");
  c.cv_iterations = field<std::size_t>(j, "cv_iterations");
  c.threads = field<std::size_t>(j, "threads");
  c.decision_grid = field<bool>(j, "decision_grid");
  c.grid_steps = field<std::size_t>(j, "grid_steps");
  c.grid_delta = field<double>(j, "grid_delta");
  c.checkpoints = field<bool>(j, "checkpoints");
  return c;
}

std::string read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + p.string());
  out << text;
  if (!out)
    throw IoError("write failed: " + p.string());
}

std::filesystem::path data_dir(const DatasetSpec& d, const char* sub)
{
  if (!d.path.empty())
    return d.path;
  const char* root = std::getenv("RICB_DATA_DIR");
  if (!root || !*root)
    throw InvalidArgument(std::string("dataset.path is empty and RICB_DATA_DIR is not set (") +
                          sub + ")");
  return std::filesystem::path(root) / sub;
}

Dataset take_rows(Dataset d, std::size_t n)
{
  if (n == 0 || n >= d.size())
    return d;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return d.subset(idx);
}

std::vector<double> effect_of(const Dataset& d)
{
  if (d.y0 && d.y1) {
    std::vector<double> e(d.size());
    for (std::size_t i = 0; i < e.size(); ++i)
      e[i] = (*d.y1)[i] - (*d.y0)[i];
    return e;
  }
  if (d.tau_oracle)
    return *d.tau_oracle;
  throw InvalidArgument("evaluation needs oracle effects (mu0/mu1 columns)");
}

// Sets json fields named after the axes; integral values become integers
// so that size_t fields parse.
json with_point(json j, const GridResult& r)
{
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const double v = r.best[i];
    if (std::floor(v) == v && std::abs(v) < 1e15)
      j[r.names[i]] = static_cast<std::int64_t>(v);
    else
      j[r.names[i]] = v;
  }
  return j;
}

Dataset representation_data(const Stage0Model& s0, const Dataset& train)
{
  Dataset d = train;
  d.x = s0.represent(train.x);
  return d;
}

std::optional<double> mean_of(const std::vector<double>& v)
{
  if (v.empty())
    return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> std_of(const std::vector<double>& v)
{
  const auto m = mean_of(v);
  if (!m)
    return std::nullopt;
  double s = 0.0;
  for (double x : v)
    s += (x - *m) * (x - *m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

json opt(const std::optional<double>& v)
{
  return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_from(const json& j, const char* key)
{
  auto it = j.find(key);
  if (it == j.end() || it->is_null())
    return std::nullopt;
  return it->get<double>();
}

std::string cell(const std::optional<double>& v)
{
  return v ? format_double(*v) : std::string();
}

} // namespace

// --- config -----------------------------------------------------------------

std::string to_string(DatasetKind k)
{
  switch (k) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::ihdp: return "ihdp";
    case DatasetKind::hcmnist: return "hcmnist";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s)
{
  for (auto k : { DatasetKind::synthetic, DatasetKind::ihdp, DatasetKind::hcmnist,
                  DatasetKind::csv })
    if (to_string(k) == s)
      return k;
  throw InvalidArgument("unknown dataset kind '" + s + "'");
}

double ExperimentConfig::r_mult() const
{
  return dataset.kind == DatasetKind::synthetic ? 2.0 : 1.0;
}

EstimatorSpec ExperimentConfig::estimator_spec() const
{
  EstimatorSpec s = EstimatorSpec::preset(estimator);
  if (alpha)
    s.balancing.alpha = *alpha;
  s.validate();
  return s;
}

Stage0Hyper ExperimentConfig::stage0_hyper() const
{
  Stage0Hyper h = stage0;
  h.r_mult = r_mult();
  return h;
}

SensitivityHyper ExperimentConfig::sensitivity_hyper() const
{
  SensitivityHyper h = sensitivity;
  h.x.r_mult = h.phi.r_mult = r_mult();
  return h;
}

FlowHyper ExperimentConfig::flow_hyper() const
{
  FlowHyper h = flow;
  h.r_mult = r_mult();
  return h;
}

void ExperimentConfig::validate() const
{
  estimator_spec();
  if (d_phi == 0)
    throw InvalidArgument("config: d_phi must be >= 1");
  if (deltas.empty())
    throw InvalidArgument("config: deltas must be non-empty");
  for (double d : deltas)
    if (!std::isfinite(d) || d < 0.0)
      throw InvalidArgument("config: deltas must be finite and >= 0");
  if (!std::is_sorted(deltas.begin(), deltas.end()))
    throw InvalidArgument("config: deltas must be ascending");
  if (k == 0)
    throw InvalidArgument("config: k must be >= 1");
  if (seeds.empty())
    throw InvalidArgument("config: seeds must be non-empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw InvalidArgument("config: seeds must be distinct");
  if (folds < 2)
    throw InvalidArgument("config: folds must be >= 2");
  if (grid_steps < 2)
    throw InvalidArgument("config: grid_steps must be >= 2");
  if (!(grid_delta >= 0.0))
    throw InvalidArgument("config: grid_delta must be >= 0");
  if (stage0.iterations == 0 || sensitivity.x.iterations == 0 ||
      sensitivity.phi.iterations == 0)
    throw InvalidArgument("config: iterations must be >= 1");
  flow_hyper().validate();
  if (dataset.kind == DatasetKind::synthetic && (dataset.n_train < 2 || dataset.n_test < 1))
    throw InvalidArgument("config: synthetic sizes too small");
  if (dataset.kind == DatasetKind::csv &&
      (dataset.train_path.empty() || dataset.test_path.empty()))
    throw InvalidArgument("config: csv datasets need train_path and test_path");
  if (dataset.kind == DatasetKind::ihdp)
    for (auto s : seeds)
      if (s < 1 || s > 100)
        throw InvalidArgument("config: IHDP seeds are replicates in [1, 100]");
}

std::string ExperimentConfig::to_json() const
{
  return config_to_json(*this).dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text)
{
  json given;
  try {
    given = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!given.is_object())
    throw FormatError("config: expected a JSON object");
  json merged = config_to_json(ExperimentConfig{});
  reject_unknown(given, merged, "");
  merged.merge_patch(given);
  // merge_patch drops keys set to null; put alpha back
  if (!merged.contains("alpha"))
    merged["alpha"] = nullptr;
  try {
    return config_from_json(merged);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path)
{
  return from_json(read_file(path));
}

void ExperimentConfig::apply_override(const std::string& assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidArgument("override must look like key.path=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json j = config_to_json(*this);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part))
      throw InvalidArgument("override: unknown field '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos)
      break;
    start = dot + 1;
  }
  if (node->is_object())
    throw InvalidArgument("override: '" + key + "' is a section, not a field");
  *node = value;
  try {
    *this = config_from_json(j);
  } catch (const json::exception& e) {
    throw InvalidArgument("override '" + assignment + "': " + e.what());
  } catch (const FormatError& e) {
    throw InvalidArgument("override '" + assignment + "': " + e.what());
  }
}

std::string ExperimentConfig::hash() const
{
  json j = config_to_json(*this);
  j.erase("output_dir");
  j.erase("threads");
  return hex64(fnv1a(j.dump()));
}

std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg,
                                                 std::uint64_t seed)
{
  const DatasetSpec& d = cfg.dataset;
  std::pair<Dataset, Dataset> out;
  switch (d.kind) {
    case DatasetKind::synthetic:
      out = { gen_synthetic(d.n_train, seed), gen_synthetic(d.n_test, seed, Split::test) };
      break;
    case DatasetKind::ihdp:
      if (seed < 1 || seed > 100)
        throw InvalidArgument("IHDP replicate must lie in [1, 100]");
      out = load_ihdp_csv(data_dir(d, "ihdp"), static_cast<int>(seed));
      break;
    case DatasetKind::hcmnist: {
      const auto dir = data_dir(d, "mnist");
      const IdxImages tr_img = parse_idx_images(dir / "train-images-idx3-ubyte");
      const auto tr_lab = parse_idx_labels(dir / "train-labels-idx1-ubyte");
      const IdxImages te_img = parse_idx_images(dir / "t10k-images-idx3-ubyte");
      const auto te_lab = parse_idx_labels(dir / "t10k-labels-idx1-ubyte");
      const HcMnistConfig hc = hcmnist_stats(tr_img, tr_lab);
      out = { take_rows(build_hcmnist(tr_img, tr_lab, seed, hc, Split::train), d.n_train),
              take_rows(build_hcmnist(te_img, te_lab, seed, hc, Split::test), d.n_test) };
      break;
    }
    case DatasetKind::csv:
      out = { load_dataset_csv(d.train_path), load_dataset_csv(d.test_path) };
      out.second.split = Split::test;
      break;
  }
  out.first.validate(false);
  out.second.validate(false);
  if (out.first.dim() != out.second.dim())
    throw InvalidArgument("train and test covariate widths differ");
  return out;
}

// --- tuning -----------------------------------------------------------------

std::string to_string(TuneStage s)
{
  switch (s) {
    case TuneStage::stage0: return "stage0";
    case TuneStage::propensity_x: return "propensity_x";
    case TuneStage::propensity_phi: return "propensity_phi";
    case TuneStage::flow: return "flow";
  }
  return "?";
}

TuneStage tune_stage_from_string(const std::string& s)
{
  for (auto t : { TuneStage::stage0, TuneStage::propensity_x, TuneStage::propensity_phi,
                  TuneStage::flow })
    if (to_string(t) == s)
      return t;
  throw InvalidArgument("unknown tuning stage '" + s + "'");
}

std::size_t Grid::size() const
{
  if (axes.empty())
    return 0;
  std::size_t n = 1;
  for (const auto& a : axes)
    n *= a.values.size();
  return n;
}

std::vector<double> Grid::point(std::size_t index) const
{
  if (index >= size())
    throw InvalidArgument("grid index out of range");
  std::vector<double> p(axes.size());
  for (std::size_t i = axes.size(); i-- > 0;) {
    const std::size_t m = axes[i].values.size();
    p[i] = axes[i].values[index % m];
    index /= m;
  }
  return p;
}

Grid table_grid(TuneStage stage, EstimatorKind kind)
{
  const std::vector<double> lr{ 0.001, 0.005, 0.01 };
  const std::vector<double> batch{ 32, 64, 128 };
  const std::vector<double> wd{ 0.0, 0.001, 0.01, 0.1 };
  const std::vector<double> units{ 1.0, 1.5, 2.0 };
  const std::vector<double> noise{ 0.05, 0.1, 0.5 };
  Grid g;
  switch (stage) {
    case TuneStage::stage0:
      g.axes = { { "learning_rate", lr },
                 { "batch_size", batch },
                 { "weight_decay", wd },
                 { "phi_units_mult", units },
                 { "head_units_mult", units } };
      if (kind == EstimatorKind::cfr_isw) {
        g.axes.push_back({ "prop_learning_rate", lr });
        g.axes.push_back({ "prop_weight_decay", wd });
        g.axes.push_back({ "aux_units_mult", units });
      } else if (kind == EstimatorKind::rcfr) {
        g.axes.push_back({ "aux_units_mult", units });
      }
      break;
    case TuneStage::propensity_x:
    case TuneStage::propensity_phi:
      g.axes = { { "learning_rate", lr },
                 { "batch_size", batch },
                 { "weight_decay", wd },
                 { "units_mult", units } };
      break;
    case TuneStage::flow:
      g.axes = { { "learning_rate", lr },
                 { "batch_size", batch },
                 { "units_mult", units },
                 { "knots", { 5, 10, 20 } },
                 { "noise_y", noise },
                 { "noise_phi", noise } };
      break;
  }
  return g;
}

std::size_t table_runs(TuneStage stage, EstimatorKind kind)
{
  if (stage == TuneStage::flow)
    return 100;
  if (stage == TuneStage::stage0 && kind == EstimatorKind::cfr_isw)
    return 100;
  return 50;
}

std::vector<std::size_t> sample_grid(const Grid& grid, std::size_t runs, std::uint64_t seed)
{
  const std::size_t n = grid.size();
  if (n == 0)
    throw InvalidArgument("grid search: empty grid");
  if (runs == 0)
    throw InvalidArgument("grid search: runs must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= runs)
    return idx;
  Rng rng = make_rng(seed, streams::grid_sampling);
  for (std::size_t i = 0; i < runs; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(runs);
  return idx;
}

std::vector<std::size_t> stratified_folds(std::span<const int> a,
                                          std::size_t folds,
                                          std::uint64_t seed)
{
  if (folds < 2)
    throw InvalidArgument("cross-validation needs at least 2 folds");
  std::vector<std::size_t> arm[2];
  for (std::size_t i = 0; i < a.size(); ++i)
    arm[a[i] ? 1 : 0].push_back(i);
  if (arm[0].size() < folds || arm[1].size() < folds)
    throw InvalidArgument("cross-validation: each treatment arm needs at least one row per fold");
  Rng rng = make_rng(seed, streams::folds);
  std::vector<std::size_t> fold(a.size());
  for (auto& rows : arm) {
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < rows.size(); ++i)
      fold[rows[i]] = i % folds;
  }
  return fold;
}

GridResult grid_search_cv(const Grid& grid,
                          std::size_t runs,
                          std::size_t folds,
                          const Dataset& train,
                          std::uint64_t seed,
                          const GridCriterion& criterion,
                          std::size_t threads)
{
  const auto picks = sample_grid(grid, runs, seed);
  const auto fold = stratified_folds(train.a, folds, seed);
  std::vector<Dataset> fit_split(folds), val_split(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> fi, vi;
    for (std::size_t i = 0; i < fold.size(); ++i)
      (fold[i] == f ? vi : fi).push_back(i);
    fit_split[f] = train.subset(fi);
    val_split[f] = train.subset(vi);
  }

  GridResult r;
  for (const auto& a : grid.axes)
    r.names.push_back(a.name);
  r.trials.resize(picks.size());
  parallel_for(picks.size(), threads, [&](std::size_t t) {
    GridTrial& trial = r.trials[t];
    trial.index = picks[t];
    trial.point = grid.point(picks[t]);
    double s = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      double v;
      try {
        v = criterion(trial.point, fit_split[f], val_split[f], seed);
      } catch (const NumericError&) {
        v = std::numeric_limits<double>::infinity();
      }
      s += std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }
    trial.score = s / static_cast<double>(folds);
  });

  std::size_t best = 0;
  for (std::size_t t = 1; t < r.trials.size(); ++t)
    if (r.trials[t].score < r.trials[best].score)
      best = t;
  if (!std::isfinite(r.trials[best].score))
    throw NumericError("grid search: every configuration diverged");
  r.best = r.trials[best].point;
  r.best_index = r.trials[best].index;
  r.best_score = r.trials[best].score;
  return r;
}

void apply_point(const GridResult& r, Stage0Hyper& h)
{
  h = detail::stage0_hyper_from_json(with_point(detail::stage0_hyper_to_json(h), r));
}

void apply_point(const GridResult& r, PropensityHyper& h)
{
  h = detail::propensity_hyper_from_json(with_point(detail::propensity_hyper_to_json(h), r));
}

void apply_point(const GridResult& r, FlowHyper& h)
{
  h = flow_hyper_from_json(with_point(flow_hyper_to_json(h), r), FlowHyper{});
}

namespace {

GridResult tune_with_threads(const ExperimentConfig& cfg,
                             TuneStage stage,
                             const Dataset& train,
                             std::uint64_t seed,
                             const Stage0Model* stage0,
                             std::size_t threads)
{
  const EstimatorSpec spec = cfg.estimator_spec();
  const Grid grid = table_grid(stage, spec.kind);
  const std::size_t runs = cfg.grid_runs ? cfg.grid_runs : table_runs(stage, spec.kind);
  auto cv_iters = [&](std::size_t own) { return cfg.cv_iterations ? cfg.cv_iterations : own; };
  auto point_result = [&](std::span<const double> p) {
    GridResult pr;
    pr.names.clear();
    for (const auto& a : grid.axes)
      pr.names.push_back(a.name);
    pr.best.assign(p.begin(), p.end());
    return pr;
  };

  switch (stage) {
    case TuneStage::stage0: {
      Stage0Hyper base = cfg.stage0_hyper();
      base.iterations = cv_iters(base.iterations);
      const bool with_bce = spec.kind == EstimatorKind::cfr_isw;
      return grid_search_cv(
        grid, runs, cfg.folds, train, seed,
        [&](std::span<const double> p, const Dataset& fit, const Dataset& val, std::uint64_t s) {
          Stage0Hyper h = base;
          apply_point(point_result(p), h);
          const Stage0Model m = train_stage0(spec, fit, cfg.d_phi, h, s);
          return m.factual_mse(val) + (with_bce ? m.factual_bce(val) : 0.0);
        },
        threads);
    }
    case TuneStage::propensity_x:
    case TuneStage::propensity_phi: {
      const bool on_phi = stage == TuneStage::propensity_phi;
      if (on_phi && (!stage0 || !stage0->trained()))
        throw StateError("tuning the representation propensity needs a trained Stage 0 model");
      const Dataset data = on_phi ? representation_data(*stage0, train) : train;
      PropensityHyper base = on_phi ? cfg.sensitivity_hyper().phi : cfg.sensitivity_hyper().x;
      base.iterations = cv_iters(base.iterations);
      const auto init = on_phi ? streams::init_prop_phi : streams::init_prop_x;
      const auto batches = on_phi ? streams::batches_prop_phi : streams::batches_prop_x;
      return grid_search_cv(
        grid, runs, cfg.folds, data, seed,
        [&](std::span<const double> p, const Dataset& fit, const Dataset& val, std::uint64_t s) {
          PropensityHyper h = base;
          apply_point(point_result(p), h);
          return train_propensity(fit.x, fit.a, h, s, init, batches).evaluate_bce(val.x, val.a);
        },
        threads);
    }
    case TuneStage::flow: {
      if (!stage0 || !stage0->trained())
        throw StateError("tuning the flow needs a trained Stage 0 model");
      const Dataset data = representation_data(*stage0, train);
      FlowHyper base = cfg.flow_hyper();
      base.iterations = cv_iters(base.iterations);
      return grid_search_cv(
        grid, runs, cfg.folds, data, seed,
        [&](std::span<const double> p, const Dataset& fit, const Dataset& val, std::uint64_t s) {
          FlowHyper h = base;
          apply_point(point_result(p), h);
          return train_cnf(fit.x, fit.a, fit.y, h, s).evaluate_nll(val.x, val.a, val.y);
        },
        threads);
    }
  }
  throw InvalidArgument("unknown tuning stage");
}

json grid_result_json(const GridResult& r)
{
  json best = json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i)
    best[r.names[i]] = r.best[i];
  return json{ { "best", best }, { "score", r.best_score }, { "trials", r.trials.size() } };
}

struct FitLog
{
  json hypers = json::object();
  json tuning = json::object();
  std::map<std::string, double> secs;

  void merge_into(RunRecord* info) const
  {
    if (!info)
      return;
    json h = info->hypers_json.empty() ? json::object() : json::parse(info->hypers_json);
    h.update(hypers);
    if (!tuning.empty()) {
      if (!h.contains("tuning"))
        h["tuning"] = json::object();
      h["tuning"].update(tuning);
    }
    info->hypers_json = h.dump();
    for (const auto& [k, v] : secs)
      info->seconds[k] = v;
  }
};

Stage0Model fit_stage0_impl(const ExperimentConfig& cfg,
                            const Dataset& train,
                            std::uint64_t seed,
                            FitLog& log,
                            std::size_t threads)
{
  const auto t0 = std::chrono::steady_clock::now();
  Stage0Model m = staged("stage 0", [&] {
    Stage0Hyper h = cfg.stage0_hyper();
    if (cfg.tuning == Tuning::grid) {
      const auto r = tune_with_threads(cfg, TuneStage::stage0, train, seed, nullptr, threads);
      apply_point(r, h);
      log.tuning["stage0"] = grid_result_json(r);
    }
    log.hypers["stage0"] = detail::stage0_hyper_to_json(h);
    return train_stage0(cfg.estimator_spec(), train, cfg.d_phi, h, seed);
  });
  log.secs["stage0"] = seconds_since(t0);
  return m;
}

std::pair<SensitivityEstimate, ConditionalFlow> fit_refutation_impl(const ExperimentConfig& cfg,
                                                                    const Stage0Model& stage0,
                                                                    const Dataset& train,
                                                                    std::uint64_t seed,
                                                                    FitLog& log,
                                                                    std::size_t threads)
{
  const bool grid = cfg.tuning == Tuning::grid;
  if (!stage0.trained())
    throw StateError("stage 1: Stage 0 model is not trained");
  if (stage0.d_x() != train.dim())
    throw InvalidArgument("stage 1: Stage 0 model and data differ in covariate width");

  auto t0 = std::chrono::steady_clock::now();
  SensitivityEstimate sens = staged("stage 1", [&] {
    SensitivityHyper h = cfg.sensitivity_hyper();
    if (grid) {
      if (!(h.reuse_stage0 && stage0.has_prop_x())) {
        const auto r =
          tune_with_threads(cfg, TuneStage::propensity_x, train, seed, &stage0, threads);
        apply_point(r, h.x);
        log.tuning["propensity_x"] = grid_result_json(r);
      }
      if (!(h.reuse_stage0 && stage0.has_prop_phi())) {
        const auto r =
          tune_with_threads(cfg, TuneStage::propensity_phi, train, seed, &stage0, threads);
        apply_point(r, h.phi);
        log.tuning["propensity_phi"] = grid_result_json(r);
      }
    }
    log.hypers["propensity_x"] = detail::propensity_hyper_to_json(h.x);
    log.hypers["propensity_phi"] = detail::propensity_hyper_to_json(h.phi);
    return fit_sensitivity(stage0, train, h, seed);
  });
  log.secs["stage1"] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  ConditionalFlow flow = staged("stage 2", [&] {
    FlowHyper h = cfg.flow_hyper();
    if (grid) {
      const auto r = tune_with_threads(cfg, TuneStage::flow, train, seed, &stage0, threads);
      apply_point(r, h);
      log.tuning["flow"] = grid_result_json(r);
    }
    log.hypers["flow"] = flow_hyper_to_json(h);
    return train_cnf(sens.phi_train, train.a, train.y, h, seed);
  });
  log.secs["stage2"] = seconds_since(t0);
  return { std::move(sens), std::move(flow) };
}

PipelineArtifacts fit_pipeline_impl(const ExperimentConfig& cfg,
                                    const Dataset& train,
                                    std::uint64_t seed,
                                    RunRecord* info,
                                    std::size_t threads)
{
  cfg.validate();
  FitLog log;
  PipelineArtifacts art;
  art.stage0 = fit_stage0_impl(cfg, train, seed, log, threads);
  std::tie(art.sensitivity, art.flow) =
    fit_refutation_impl(cfg, art.stage0, train, seed, log, threads);
  log.merge_into(info);
  return art;
}

} // namespace

GridResult tune_stage(const ExperimentConfig& cfg,
                      TuneStage stage,
                      const Dataset& train,
                      std::uint64_t seed,
                      const Stage0Model* stage0)
{
  cfg.validate();
  return tune_with_threads(cfg, stage, train, seed, stage0, resolve_threads(cfg.threads));
}

Stage0Model fit_stage0(const ExperimentConfig& cfg,
                       const Dataset& train,
                       std::uint64_t seed,
                       RunRecord* info)
{
  cfg.validate();
  FitLog log;
  Stage0Model m = fit_stage0_impl(cfg, train, seed, log, resolve_threads(cfg.threads));
  log.merge_into(info);
  return m;
}

std::pair<SensitivityEstimate, ConditionalFlow> fit_refutation(const ExperimentConfig& cfg,
                                                               const Stage0Model& stage0,
                                                               const Dataset& train,
                                                               std::uint64_t seed,
                                                               RunRecord* info)
{
  cfg.validate();
  FitLog log;
  auto out = fit_refutation_impl(cfg, stage0, train, seed, log, resolve_threads(cfg.threads));
  log.merge_into(info);
  return out;
}

PipelineArtifacts fit_pipeline(const ExperimentConfig& cfg,
                               const Dataset& train,
                               std::uint64_t seed,
                               RunRecord* info)
{
  return fit_pipeline_impl(cfg, train, seed, info, resolve_threads(cfg.threads));
}

RunRecord evaluate_pipeline(const ExperimentConfig& cfg,
                            const PipelineArtifacts& art,
                            const Dataset& train,
                            const Dataset& test,
                            std::uint64_t seed)
{
  return staged("evaluation", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    if (!train.has_oracle() || !test.has_oracle())
      throw InvalidArgument("evaluation needs oracle effects (mu0/mu1 columns)");
    RunRecord r;
    r.config_hash = cfg.hash();
    r.seed = seed;
    r.method = cfg.estimator_spec().label();
    r.d_phi = cfg.d_phi;
    r.stage0_hash = hex64(art.stage0.config_hash());

    auto points = [&](const Dataset& d, std::vector<PointRecord>& out) {
      const auto tau = art.stage0.predict_cate(d.x);
      const auto eff = effect_of(d);
      out.resize(d.size());
      for (std::size_t i = 0; i < d.size(); ++i)
        out[i] = { i, tau[i], (*d.tau_oracle)[i], eff[i] };
      return rpehe(tau, eff);
    };
    r.rpehe_in = points(train, r.in_points);
    r.rpehe_out = points(test, r.out_points);

    std::vector<double> tau_hat(test.size());
    for (std::size_t i = 0; i < tau_hat.size(); ++i)
      tau_hat[i] = r.out_points[i].point;
    const auto& oracle = *test.tau_oracle;
    const PolicyReport pp = score_policy(point_policy(tau_hat), oracle);
    r.er_point_out = pp.error_rate;

    BoundsConfig bc;
    bc.k = cfg.k;
    bc.split = cfg.split;
    bc.seed = seed;
    const BoundsEstimator est(art.stage0, art.sensitivity, art.flow, bc);
    r.bounds = est.evaluate(test.x, cfg.deltas);
    for (std::size_t d = 0; d < cfg.deltas.size(); ++d) {
      const PolicyReport bp = score_policy(bounds_policy(r.bounds[d]), oracle);
      r.metrics.push_back({ cfg.deltas[d], bp.error_rate, delta_error_rate(bp, pp),
                            bp.deferral_rate });
    }
    r.seconds["evaluation"] = seconds_since(t0);
    return r;
  });
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      const std::filesystem::path& out_dir)
{
  cfg.validate();
  const std::size_t threads = resolve_threads(cfg.threads);
  const std::size_t seed_workers = std::min(threads, cfg.seeds.size());
  const std::size_t inner = std::max<std::size_t>(1, threads / seed_workers);
  std::vector<RunRecord> records(cfg.seeds.size());

  parallel_for(cfg.seeds.size(), seed_workers, [&](std::size_t s) {
    const std::uint64_t seed = cfg.seeds[s];
    const auto t0 = std::chrono::steady_clock::now();
    const auto [train, test] = staged("data", [&] { return load_experiment_data(cfg, seed); });
    RunRecord info;
    const PipelineArtifacts art = fit_pipeline_impl(cfg, train, seed, &info, inner);
    RunRecord r = evaluate_pipeline(cfg, art, train, test, seed);
    r.hypers_json = info.hypers_json;
    r.seconds.insert(info.seconds.begin(), info.seconds.end());

    if (!out_dir.empty()) {
      staged("output", [&] {
        const std::string tag = "seed_" + std::to_string(seed);
        if (cfg.checkpoints) {
          const auto dir = out_dir / "checkpoints" / tag;
          std::filesystem::create_directories(dir);
          write_file(dir / "stage0.json", art.stage0.to_json());
          write_file(dir / "sensitivity.json", sensitivity_to_json(art.sensitivity));
          write_file(dir / "flow.json", art.flow.to_json());
          for (const char* name : { "stage0", "sensitivity", "flow" })
            r.checkpoints[name] = "checkpoints/" + tag + "/" + name + ".json";
        }
        if (cfg.decision_grid && cfg.dataset.kind == DatasetKind::synthetic) {
          std::filesystem::create_directories(out_dir);
          const Tensor lattice = covariate_lattice(-2.0, 2.0, cfg.grid_steps);
          std::vector<double> oracle(lattice.rows());
          for (std::size_t i = 0; i < oracle.size(); ++i)
            oracle[i] = synthetic_cate(lattice(i, 0), lattice(i, 1));
          BoundsConfig bc;
          bc.k = cfg.k;
          bc.split = cfg.split;
          bc.seed = seed;
          const BoundsEstimator est(art.stage0, art.sensitivity, art.flow, bc);
          const auto b = est.evaluate(lattice, cfg.grid_delta);
          const std::string name = "decision_grid_" + tag + ".csv";
          write_decision_grid_csv(lattice, oracle, b, out_dir / name);
          r.checkpoints["decision_grid"] = name;
        }
        return 0;
      });
    }
    r.seconds["total"] = seconds_since(t0);
    records[s] = std::move(r);
  });
  return records;
}

// --- results ----------------------------------------------------------------

std::vector<AggregateRow> aggregate(std::span<const RunRecord> records)
{
  if (records.empty())
    throw InvalidArgument("aggregate: no records");
  // groups keep first-seen order
  std::vector<std::pair<std::string, std::size_t>> keys;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method, r.d_phi);
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      keys.push_back(key);
  }
  std::vector<AggregateRow> rows;
  for (const auto& key : keys) {
    std::vector<const RunRecord*> group;
    for (const auto& r : records)
      if (r.method == key.first && r.d_phi == key.second)
        group.push_back(&r);
    const std::size_t nd = group.front()->metrics.size();
    for (const auto* g : group)
      if (g->metrics.size() != nd)
        throw InvalidArgument("aggregate: records disagree on the delta list");
    std::vector<double> rin, rout;
    for (const auto* g : group) {
      rin.push_back(g->rpehe_in);
      rout.push_back(g->rpehe_out);
    }
    for (std::size_t d = 0; d < nd; ++d) {
      AggregateRow row;
      row.method = key.first;
      row.d_phi = key.second;
      row.delta = group.front()->metrics[d].delta;
      std::vector<double> er, der, dr;
      for (const auto* g : group) {
        const auto& m = g->metrics[d];
        if (m.delta != row.delta)
          throw InvalidArgument("aggregate: records disagree on the delta list");
        if (m.er_out)
          er.push_back(*m.er_out);
        if (m.delta_er_out)
          der.push_back(*m.delta_er_out);
        dr.push_back(m.dr_out);
      }
      row.er_out = mean_of(er);
      row.er_out_std = std_of(er);
      row.delta_er_out = mean_of(der);
      row.delta_er_out_std = std_of(der);
      row.dr_out = *mean_of(dr);
      row.dr_out_std = *std_of(dr);
      row.rpehe_in = *mean_of(rin);
      row.rpehe_in_std = *std_of(rin);
      row.rpehe_out = *mean_of(rout);
      row.rpehe_out_std = *std_of(rout);
      row.seeds = group.size();
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_table(std::span<const AggregateRow> rows)
{
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v)
      s << std::fixed << std::setprecision(2) << 100.0 * *v << "%";
    else
      s << "n/a";
    return s.str();
  };
  auto pm = [](double m, double s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(2) << m << " +- " << s;
    return o.str();
  };
  os << std::left << std::setw(26) << "method" << std::setw(7) << "d_phi" << std::setw(9)
     << "delta" << std::setw(22) << "ER_out (dER_out)" << std::setw(9) << "DR_out"
     << std::setw(16) << "rPEHE_in" << std::setw(16) << "rPEHE_out"
     << "seeds\n";
  for (const auto& r : rows) {
    std::ostringstream d;
    d << r.delta;
    os << std::left << std::setw(26) << r.method << std::setw(7) << r.d_phi << std::setw(9)
       << d.str() << std::setw(22) << (pct(r.er_out) + " (" + pct(r.delta_er_out) + ")")
       << std::setw(9) << pct(r.dr_out) << std::setw(16) << pm(r.rpehe_in, r.rpehe_in_std)
       << std::setw(16) << pm(r.rpehe_out, r.rpehe_out_std) << r.seeds << "\n";
  }
  return os.str();
}

void emit_results(std::span<const RunRecord> records,
                  const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir)
{
  if (records.empty())
    throw InvalidArgument("emit_results: no records");
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  const auto rows = aggregate(records);

  TextTable pts;
  pts.header = { "seed",  "sample",     "delta",      "id",     "point",
                 "lower", "upper",      "gamma",      "pi_phi", "tau_oracle",
                 "effect", "decision_point", "decision_bounds" };
  for (const auto& r : records) {
    const std::string seed = std::to_string(r.seed);
    for (const auto& p : r.in_points)
      pts.rows.push_back({ seed, "in", "", std::to_string(p.id), format_double(p.point), "", "",
                           "", "", format_double(p.tau_oracle), format_double(p.effect),
                           to_string(p.point > 0.0 ? Decision::treat : Decision::no_treat),
                           "" });
    for (std::size_t d = 0; d < r.metrics.size(); ++d)
      for (const auto& p : r.out_points) {
        const CateBounds& b = r.bounds[d][p.id];
        pts.rows.push_back({ seed, "out", format_double(r.metrics[d].delta),
                             std::to_string(p.id), format_double(p.point),
                             format_double(b.lower), format_double(b.upper),
                             format_double(b.gamma), format_double(b.pi_phi),
                             format_double(p.tau_oracle), format_double(p.effect),
                             to_string(p.point > 0.0 ? Decision::treat : Decision::no_treat),
                             to_string(bounds_decision(b.lower, b.upper)) });
      }
  }
  write_text_csv(pts, out_dir / "points.csv");

  TextTable agg;
  agg.header = { "method",   "d_phi",    "delta",     "er_out", "delta_er_out",
                 "dr_out", "rpehe_in", "rpehe_out", "seeds" };
  for (const auto& r : rows)
    agg.rows.push_back({ r.method, std::to_string(r.d_phi), format_double(r.delta),
                         cell(r.er_out), cell(r.delta_er_out), format_double(r.dr_out),
                         format_double(r.rpehe_in), format_double(r.rpehe_out),
                         std::to_string(r.seeds) });
  write_text_csv(agg, out_dir / "aggregate.csv");

  std::vector<CurvePoint> curve;
  for (const auto& r : rows)
    curve.push_back({ r.delta, r.dr_out, r.er_out });
  write_curve_csv(curve, out_dir / "curve.csv");

  json jrows = json::array();
  for (const auto& r : rows)
    jrows.push_back({ { "method", r.method },
                      { "d_phi", r.d_phi },
                      { "delta", r.delta },
                      { "er_out", opt(r.er_out) },
                      { "er_out_std", opt(r.er_out_std) },
                      { "delta_er_out", opt(r.delta_er_out) },
                      { "delta_er_out_std", opt(r.delta_er_out_std) },
                      { "dr_out", r.dr_out },
                      { "dr_out_std", r.dr_out_std },
                      { "rpehe_in", r.rpehe_in },
                      { "rpehe_in_std", r.rpehe_in_std },
                      { "rpehe_out", r.rpehe_out },
                      { "rpehe_out_std", r.rpehe_out_std },
                      { "seeds", r.seeds } });
  json jruns = json::array();
  json timings = json::object();
  for (const auto& r : records) {
    json metrics = json::array();
    for (const auto& m : r.metrics)
      metrics.push_back({ { "delta", m.delta },
                          { "er_out", opt(m.er_out) },
                          { "delta_er_out", opt(m.delta_er_out) },
                          { "dr_out", m.dr_out } });
    jruns.push_back({ { "seed", r.seed },
                      { "config_hash", r.config_hash },
                      { "method", r.method },
                      { "d_phi", r.d_phi },
                      { "stage0_hash", r.stage0_hash },
                      { "rpehe_in", r.rpehe_in },
                      { "rpehe_out", r.rpehe_out },
                      { "er_point_out", opt(r.er_point_out) },
                      { "metrics", metrics },
                      { "checkpoints", r.checkpoints },
                      { "hypers", r.hypers_json.empty() ? json(nullptr)
                                                        : json::parse(r.hypers_json) } });
    timings[std::to_string(r.seed)] = r.seconds;
  }
  const json results{ { "schema", "v1" },
                      { "config_hash", cfg.hash() },
                      { "config", json::parse(cfg.to_json()) },
                      { "aggregate", jrows },
                      { "runs", jruns } };
  write_file(out_dir / "results.json", results.dump(2) + "\n");
  write_file(out_dir / "config.json", cfg.to_json() + "\n");
  write_file(out_dir / "table.txt", format_table(rows));
  write_file(out_dir / "timings.json", timings.dump(2) + "\n");
}

ResultsFile load_results_json(const std::filesystem::path& path)
{
  try {
    const json j = json::parse(read_file(path));
    ResultsFile f;
    f.schema = j.at("schema").get<std::string>();
    if (f.schema != "v1")
      throw FormatError("results: unsupported schema '" + f.schema + "'");
    f.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& r : j.at("aggregate")) {
      AggregateRow a;
      a.method = r.at("method").get<std::string>();
      a.d_phi = r.at("d_phi").get<std::size_t>();
      a.delta = r.at("delta").get<double>();
      a.er_out = opt_from(r, "er_out");
      a.er_out_std = opt_from(r, "er_out_std");
      a.delta_er_out = opt_from(r, "delta_er_out");
      a.delta_er_out_std = opt_from(r, "delta_er_out_std");
      a.dr_out = r.at("dr_out").get<double>();
      a.dr_out_std = r.at("dr_out_std").get<double>();
      a.rpehe_in = r.at("rpehe_in").get<double>();
      a.rpehe_in_std = r.at("rpehe_in_std").get<double>();
      a.rpehe_out = r.at("rpehe_out").get<double>();
      a.rpehe_out_std = r.at("rpehe_out_std").get<double>();
      a.seeds = r.at("seeds").get<std::size_t>();
      f.rows.push_back(a);
    }
    for (const auto& r : j.at("runs")) {
      RunRecord rec;
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.config_hash = r.at("config_hash").get<std::string>();
      rec.method = r.at("method").get<std::string>();
      rec.d_phi = r.at("d_phi").get<std::size_t>();
      rec.stage0_hash = r.at("stage0_hash").get<std::string>();
      rec.rpehe_in = r.at("rpehe_in").get<double>();
      rec.rpehe_out = r.at("rpehe_out").get<double>();
      rec.er_point_out = opt_from(r, "er_point_out");
      for (const auto& m : r.at("metrics"))
        rec.metrics.push_back({ m.at("delta").get<double>(), opt_from(m, "er_out"),
                                opt_from(m, "delta_er_out"), m.at("dr_out").get<double>() });
      rec.checkpoints = r.at("checkpoints").get<std::map<std::string, std::string>>();
      if (!r.at("hypers").is_null())
        rec.hypers_json = r.at("hypers").dump();
      f.runs.push_back(std::move(rec));
    }
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("results: ") + e.what());
  }
}

} // namespace ricb
