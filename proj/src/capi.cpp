#include "ricb/ricb.h"

#include "ricb/error.hpp"
#include "ricb/runner.hpp"
#include "serialize.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

using namespace ricb;
using detail::json;

struct ricb_config
{
  ExperimentConfig cfg;
};

struct ricb_dataset
{
  Dataset data;
};

struct ricb_stage0
{
  Stage0Model model;
};

struct ricb_refutation
{
  SensitivityEstimate sensitivity;
  ConditionalFlow flow;
};

namespace {

thread_local std::string last_error;

ricb_status fail(ricb_status s, const std::string& msg)
{
  last_error = msg;
  return s;
}

template<class F>
ricb_status guarded(F&& f)
{
  try {
    f();
    last_error.clear();
    return RICB_OK;
  } catch (const Error& e) {
    return fail(static_cast<ricb_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RICB_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RICB_E_INTERNAL, e.what());
  } catch (...) {
    return fail(RICB_E_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what)
{
  if (!p)
    throw InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s)
{
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string read_file(const char* path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(std::string("cannot open ") + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const char* path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError(std::string("cannot write ") + path);
  out << text;
  if (!out)
    throw IoError(std::string("write failed: ") + path);
}

std::string summary_json(std::span<const RunRecord> records, const ExperimentConfig& cfg)
{
  json rows = json::array();
  for (const auto& r : aggregate(records))
    rows.push_back({ { "method", r.method },
                     { "d_phi", r.d_phi },
                     { "delta", r.delta },
                     { "er_out", r.er_out ? json(*r.er_out) : json(nullptr) },
                     { "delta_er_out", r.delta_er_out ? json(*r.delta_er_out) : json(nullptr) },
                     { "dr_out", r.dr_out },
                     { "rpehe_in", r.rpehe_in },
                     { "rpehe_out", r.rpehe_out },
                     { "rpehe_out_std", r.rpehe_out_std },
                     { "seeds", r.seeds } });
  return json{ { "schema", "v1" }, { "config_hash", cfg.hash() }, { "aggregate", rows } }
    .dump();
}

} // namespace

extern "C" {

const char* ricb_version(void)
{
  return "1.0.0";
}

const char* ricb_last_error(void)
{
  return last_error.c_str();
}

void ricb_string_free(char* s)
{
  delete[] s;
}

// --- config -----------------------------------------------------------------

ricb_status ricb_config_default(ricb_config** out)
{
  return guarded([&] {
    need(out, "out");
    *out = new ricb_config{};
  });
}

ricb_status ricb_config_from_json(const char* text, ricb_config** out)
{
  return guarded([&] {
    need(text, "json");
    need(out, "out");
    *out = new ricb_config{ ExperimentConfig::from_json(text) };
  });
}

ricb_status ricb_config_load(const char* path, ricb_config** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ricb_config{ ExperimentConfig::load(path) };
  });
}

ricb_status ricb_config_set(ricb_config* cfg, const char* assignment)
{
  return guarded([&] {
    need(cfg, "config");
    need(assignment, "assignment");
    ExperimentConfig c = cfg->cfg;
    c.apply_override(assignment);
    cfg->cfg = std::move(c);
  });
}

ricb_status ricb_config_get(const ricb_config* cfg, const char* key, char** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(out, "out");
    const json j = json::parse(cfg->cfg.to_json());
    const json* node = &j;
    std::string k = key;
    std::size_t start = 0;
    while (true) {
      const auto dot = k.find('.', start);
      const std::string part = k.substr(start, dot == std::string::npos ? dot : dot - start);
      if (!node->is_object() || !node->contains(part))
        throw InvalidArgument("config: unknown field '" + k + "'");
      node = &(*node)[part];
      if (dot == std::string::npos)
        break;
      start = dot + 1;
    }
    *out = dup_string(node->dump());
  });
}

ricb_status ricb_config_to_json(const ricb_config* cfg, char** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup_string(cfg->cfg.to_json());
  });
}

ricb_status ricb_config_hash(const ricb_config* cfg, char** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup_string(cfg->cfg.hash());
  });
}

void ricb_config_free(ricb_config* cfg)
{
  delete cfg;
}

// --- datasets ---------------------------------------------------------------

ricb_status ricb_dataset_synthetic(size_t n, uint64_t seed, int test_split, ricb_dataset** out)
{
  return guarded([&] {
    need(out, "out");
    if (n == 0)
      throw InvalidArgument("dataset size must be >= 1");
    *out = new ricb_dataset{ gen_synthetic(n, seed, test_split ? Split::test : Split::train) };
  });
}

ricb_status ricb_dataset_from_config(const ricb_config* cfg,
                                     uint64_t seed,
                                     int test_split,
                                     ricb_dataset** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    auto [train, test] = load_experiment_data(cfg->cfg, seed);
    *out = new ricb_dataset{ test_split ? std::move(test) : std::move(train) };
  });
}

ricb_status ricb_dataset_load_csv(const char* path, ricb_dataset** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ricb_dataset{ load_dataset_csv(path) };
  });
}

ricb_status ricb_dataset_save_csv(const ricb_dataset* d, const char* path)
{
  return guarded([&] {
    need(d, "dataset");
    need(path, "path");
    save_dataset_csv(d->data, path);
  });
}

size_t ricb_dataset_size(const ricb_dataset* d)
{
  return d ? d->data.size() : 0;
}

size_t ricb_dataset_dim(const ricb_dataset* d)
{
  return d ? d->data.dim() : 0;
}

void ricb_dataset_free(ricb_dataset* d)
{
  delete d;
}

// --- stage 0 ----------------------------------------------------------------

ricb_status ricb_stage0_train(const ricb_config* cfg,
                              const ricb_dataset* train,
                              uint64_t seed,
                              ricb_stage0** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(train, "train");
    need(out, "out");
    *out = new ricb_stage0{ fit_stage0(cfg->cfg, train->data, seed) };
  });
}

ricb_status ricb_stage0_load(const char* path, ricb_stage0** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ricb_stage0{ Stage0Model::from_json(read_file(path)) };
  });
}

ricb_status ricb_stage0_save(const ricb_stage0* m, const char* path)
{
  return guarded([&] {
    need(m, "model");
    need(path, "path");
    write_file(path, m->model.to_json());
  });
}

ricb_status ricb_stage0_predict_cate(const ricb_stage0* m,
                                     const ricb_dataset* d,
                                     double* out,
                                     size_t n)
{
  return guarded([&] {
    need(m, "model");
    need(d, "dataset");
    need(out, "out");
    if (n != d->data.size())
      throw InvalidArgument("output length differs from the dataset size");
    if (d->data.dim() != m->model.d_x())
      throw InvalidArgument("dataset and model differ in covariate width");
    const auto tau = m->model.predict_cate(d->data.x);
    std::copy(tau.begin(), tau.end(), out);
  });
}

void ricb_stage0_free(ricb_stage0* m)
{
  delete m;
}

// --- refutation -------------------------------------------------------------

ricb_status ricb_refutation_fit(const ricb_config* cfg,
                                const ricb_stage0* m,
                                const ricb_dataset* train,
                                uint64_t seed,
                                ricb_refutation** out)
{
  return guarded([&] {
    need(cfg, "config");
    need(m, "model");
    need(train, "train");
    need(out, "out");
    auto [sens, flow] = fit_refutation(cfg->cfg, m->model, train->data, seed);
    *out = new ricb_refutation{ std::move(sens), std::move(flow) };
  });
}

ricb_status ricb_refutation_load(const char* path, ricb_refutation** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw FormatError(std::string("refutation checkpoint: ") + e.what());
    }
    if (!j.is_object() || j.value("schema", "") != "ricb.refutation.v1" ||
        !j.contains("sensitivity") || !j.contains("flow"))
      throw FormatError("refutation checkpoint: unknown schema");
    *out = new ricb_refutation{ sensitivity_from_json(j["sensitivity"].dump()),
                                ConditionalFlow::from_json(j["flow"].dump()) };
  });
}

ricb_status ricb_refutation_save(const ricb_refutation* r, const char* path)
{
  return guarded([&] {
    need(r, "refutation");
    need(path, "path");
    const json j{ { "schema", "ricb.refutation.v1" },
                  { "sensitivity", json::parse(sensitivity_to_json(r->sensitivity)) },
                  { "flow", json::parse(r->flow.to_json()) } };
    write_file(path, j.dump());
  });
}

ricb_status ricb_refutation_bounds(const ricb_refutation* r,
                                   const ricb_stage0* m,
                                   const ricb_dataset* d,
                                   double delta,
                                   size_t k,
                                   uint64_t seed,
                                   double* lower,
                                   double* upper,
                                   size_t n)
{
  return guarded([&] {
    need(r, "refutation");
    need(m, "model");
    need(d, "dataset");
    need(lower, "lower");
    need(upper, "upper");
    if (n != d->data.size())
      throw InvalidArgument("output length differs from the dataset size");
    if (!(delta >= 0.0))
      throw InvalidArgument("delta must be >= 0");
    if (k == 0)
      throw InvalidArgument("k must be >= 1");
    BoundsConfig bc;
    bc.k = k;
    bc.seed = seed;
    const BoundsEstimator est(m->model, r->sensitivity, r->flow, bc);
    const auto b = est.evaluate(d->data.x, delta);
    for (std::size_t i = 0; i < n; ++i) {
      lower[i] = b[i].lower;
      upper[i] = b[i].upper;
    }
  });
}

void ricb_refutation_free(ricb_refutation* r)
{
  delete r;
}

// --- evaluation and orchestration -------------------------------------------

ricb_status ricb_evaluate(const ricb_config* cfg,
                          const ricb_stage0* m,
                          const ricb_refutation* r,
                          const ricb_dataset* train,
                          const ricb_dataset* test,
                          uint64_t seed,
                          const char* out_dir,
                          char** summary)
{
  return guarded([&] {
    need(cfg, "config");
    need(m, "model");
    need(r, "refutation");
    need(train, "train");
    need(test, "test");
    const PipelineArtifacts art{ m->model, r->sensitivity, r->flow };
    ExperimentConfig c = cfg->cfg;
    c.d_phi = m->model.d_phi();
    const RunRecord rec = evaluate_pipeline(c, art, train->data, test->data, seed);
    if (out_dir)
      emit_results(std::span<const RunRecord>(&rec, 1), c, out_dir);
    if (summary)
      *summary = dup_string(summary_json(std::span<const RunRecord>(&rec, 1), c));
  });
}

ricb_status ricb_run_experiment(const ricb_config* cfg, const char* out_dir, char** summary)
{
  return guarded([&] {
    need(cfg, "config");
    const std::filesystem::path dir = out_dir ? out_dir : cfg->cfg.output_dir;
    const auto records = run_experiment(cfg->cfg, dir);
    emit_results(records, cfg->cfg, dir);
    if (summary)
      *summary = dup_string(summary_json(records, cfg->cfg));
  });
}

ricb_status ricb_grid_search(const ricb_config* cfg,
                             const char* stage,
                             const ricb_dataset* train,
                             const ricb_stage0* m,
                             uint64_t seed,
                             char** result)
{
  return guarded([&] {
    need(cfg, "config");
    need(stage, "stage");
    need(train, "train");
    need(result, "result");
    const TuneStage ts = tune_stage_from_string(stage);
    const GridResult g =
      tune_stage(cfg->cfg, ts, train->data, seed, m ? &m->model : nullptr);
    json best = json::object();
    for (std::size_t i = 0; i < g.names.size(); ++i)
      best[g.names[i]] = g.best[i];
    json trials = json::array();
    for (const auto& t : g.trials) {
      json p = json::object();
      for (std::size_t i = 0; i < g.names.size(); ++i)
        p[g.names[i]] = t.point[i];
      trials.push_back({ { "index", t.index },
                         { "point", p },
                         { "score", std::isfinite(t.score) ? json(t.score) : json(nullptr) } });
    }
    *result = dup_string(json{ { "stage", to_string(ts) },
                               { "best", best },
                               { "best_index", g.best_index },
                               { "best_score", g.best_score },
                               { "trials", trials } }
                           .dump(2));
  });
}

} // extern "C"
