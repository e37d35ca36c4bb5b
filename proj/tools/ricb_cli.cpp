// Command-line front end over the C API.

#include "ricb/ricb.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Failure
{
  ricb_status status;
};

void check(ricb_status s)
{
  if (s != RICB_OK) {
    std::cerr << "error: " << ricb_last_error() << "\n";
    throw Failure{ s };
  }
}

template<class T, void (*Free)(T*)>
struct Deleter
{
  void operator()(T* p) const { Free(p); }
};

using Config = std::unique_ptr<ricb_config, Deleter<ricb_config, ricb_config_free>>;
using Data = std::unique_ptr<ricb_dataset, Deleter<ricb_dataset, ricb_dataset_free>>;
using Stage0 = std::unique_ptr<ricb_stage0, Deleter<ricb_stage0, ricb_stage0_free>>;
using Refutation =
  std::unique_ptr<ricb_refutation, Deleter<ricb_refutation, ricb_refutation_free>>;

std::string take(char* s)
{
  std::string out = s ? s : "";
  ricb_string_free(s);
  return out;
}

// flags every verb shares
struct Common
{
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help)
{
  app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--set", c.set, "override a config field, e.g. --set stage0.learning_rate=0.01")
    ->take_all();
  app->add_option("--seed", c.seed, "seed (IHDP: replicate)");
  app->add_option("--out", c.out, out_help);
}

Config load_config(const Common& c)
{
  ricb_config* raw = nullptr;
  if (c.config.empty())
    check(ricb_config_default(&raw));
  else
    check(ricb_config_load(c.config.c_str(), &raw));
  Config cfg(raw);
  for (const auto& s : c.set)
    check(ricb_config_set(cfg.get(), s.c_str()));
  return cfg;
}

std::string config_field(const ricb_config* cfg, const char* key)
{
  char* js = nullptr;
  check(ricb_config_get(cfg, key, &js));
  return take(js);
}

std::uint64_t seed_or_first(const Common& c, const ricb_config* cfg)
{
  if (c.seed)
    return *c.seed;
  return nlohmann::json::parse(config_field(cfg, "seeds")).at(0).get<std::uint64_t>();
}

Data load_data(const std::string& csv, const ricb_config* cfg, std::uint64_t seed, bool test)
{
  ricb_dataset* raw = nullptr;
  if (!csv.empty())
    check(ricb_dataset_load_csv(csv.c_str(), &raw));
  else
    check(ricb_dataset_from_config(cfg, seed, test ? 1 : 0, &raw));
  return Data(raw);
}

Stage0 load_stage0(const std::string& path)
{
  ricb_stage0* raw = nullptr;
  check(ricb_stage0_load(path.c_str(), &raw));
  return Stage0(raw);
}

void print_file(const std::string& path)
{
  std::ifstream in(path);
  if (in)
    std::cout << in.rdbuf();
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Refutation of representation-induced confounding bias in CATE estimation" };
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ricb_version()));

  Common gen_c, train_c, refute_c, eval_c, run_c, grid_c;
  std::string split = "train";
  std::string train_csv, test_csv, stage0_path, refutation_path, stage_name = "stage0";
  std::optional<std::size_t> n;

  auto* gen = app.add_subcommand("generate", "write a dataset split as CSV");
  add_common(gen, gen_c, "output CSV");
  gen->add_option("--split", split, "train or test")->check(CLI::IsMember({ "train", "test" }));
  gen->add_option("--n", n, "rows (synthetic)");

  auto* train = app.add_subcommand("train", "fit the Stage 0 CATE estimator");
  add_common(train, train_c, "Stage 0 checkpoint (JSON)");
  train->add_option("--train", train_csv, "training CSV (default: dataset from config)");

  auto* refute = app.add_subcommand("refute", "fit Stages 1 and 2 on a Stage 0 checkpoint");
  add_common(refute, refute_c, "refutation checkpoint (JSON)");
  refute->add_option("--stage0", stage0_path, "Stage 0 checkpoint")->required();
  refute->add_option("--train", train_csv, "training CSV (default: dataset from config)");

  auto* evaluate = app.add_subcommand("evaluate", "score checkpoints and write result files");
  add_common(evaluate, eval_c, "output directory");
  evaluate->add_option("--stage0", stage0_path, "Stage 0 checkpoint")->required();
  evaluate->add_option("--refutation", refutation_path, "refutation checkpoint")->required();
  evaluate->add_option("--train", train_csv, "training CSV (default: dataset from config)");
  evaluate->add_option("--test", test_csv, "test CSV (default: dataset from config)");

  auto* run = app.add_subcommand("run", "all stages for every seed, then aggregate");
  add_common(run, run_c, "output directory (default: output_dir of the config)");

  auto* grid = app.add_subcommand("grid", "random grid search with cross-validation");
  add_common(grid, grid_c, "result JSON (default: stdout)");
  grid->add_option("--stage", stage_name, "stage0, propensity_x, propensity_phi or flow")
    ->check(CLI::IsMember({ "stage0", "propensity_x", "propensity_phi", "flow" }));
  grid->add_option("--stage0", stage0_path, "Stage 0 checkpoint (needed after stage0)");
  grid->add_option("--train", train_csv, "training CSV (default: dataset from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (gen_c.out.empty())
        throw CLI::RequiredError("--out");
      if (n) {
        gen_c.set.push_back("dataset.n_train=" + std::to_string(*n));
        gen_c.set.push_back("dataset.n_test=" + std::to_string(*n));
      }
      const Config cfg = load_config(gen_c);
      const std::uint64_t seed = seed_or_first(gen_c, cfg.get());
      const Data d = load_data("", cfg.get(), seed, split == "test");
      check(ricb_dataset_save_csv(d.get(), gen_c.out.c_str()));
      std::cout << "wrote " << ricb_dataset_size(d.get()) << " rows to " << gen_c.out << "\n";
    } else if (*train) {
      if (train_c.out.empty())
        throw CLI::RequiredError("--out");
      const Config cfg = load_config(train_c);
      const std::uint64_t seed = seed_or_first(train_c, cfg.get());
      const Data d = load_data(train_csv, cfg.get(), seed, false);
      ricb_stage0* raw = nullptr;
      check(ricb_stage0_train(cfg.get(), d.get(), seed, &raw));
      const Stage0 m(raw);
      check(ricb_stage0_save(m.get(), train_c.out.c_str()));
      std::cout << "Stage 0 checkpoint: " << train_c.out << "\n";
    } else if (*refute) {
      if (refute_c.out.empty())
        throw CLI::RequiredError("--out");
      const Config cfg = load_config(refute_c);
      const std::uint64_t seed = seed_or_first(refute_c, cfg.get());
      const Data d = load_data(train_csv, cfg.get(), seed, false);
      const Stage0 m = load_stage0(stage0_path);
      ricb_refutation* raw = nullptr;
      check(ricb_refutation_fit(cfg.get(), m.get(), d.get(), seed, &raw));
      const Refutation r(raw);
      check(ricb_refutation_save(r.get(), refute_c.out.c_str()));
      std::cout << "refutation checkpoint: " << refute_c.out << "\n";
    } else if (*evaluate) {
      if (eval_c.out.empty())
        throw CLI::RequiredError("--out");
      const Config cfg = load_config(eval_c);
      const std::uint64_t seed = seed_or_first(eval_c, cfg.get());
      const Data tr = load_data(train_csv, cfg.get(), seed, false);
      const Data te = load_data(test_csv, cfg.get(), seed, true);
      const Stage0 m = load_stage0(stage0_path);
      ricb_refutation* raw = nullptr;
      check(ricb_refutation_load(refutation_path.c_str(), &raw));
      const Refutation r(raw);
      char* summary = nullptr;
      check(ricb_evaluate(cfg.get(), m.get(), r.get(), tr.get(), te.get(), seed,
                          eval_c.out.c_str(), &summary));
      take(summary);
      print_file(eval_c.out + "/table.txt");
    } else if (*run) {
      if (run_c.seed)
        run_c.set.push_back("seeds=[" + std::to_string(*run_c.seed) + "]");
      const Config cfg = load_config(run_c);
      char* summary = nullptr;
      check(ricb_run_experiment(cfg.get(), run_c.out.empty() ? nullptr : run_c.out.c_str(),
                                &summary));
      take(summary);
      std::string dir = run_c.out;
      if (dir.empty())
        dir = nlohmann::json::parse(config_field(cfg.get(), "output_dir")).get<std::string>();
      print_file(dir + "/table.txt");
      char* hash = nullptr;
      check(ricb_config_hash(cfg.get(), &hash));
      std::cout << "config hash " << take(hash) << ", results in " << dir << "\n";
    } else if (*grid) {
      const Config cfg = load_config(grid_c);
      const std::uint64_t seed = seed_or_first(grid_c, cfg.get());
      const Data d = load_data(train_csv, cfg.get(), seed, false);
      Stage0 m;
      if (!stage0_path.empty())
        m = load_stage0(stage0_path);
      char* result = nullptr;
      check(ricb_grid_search(cfg.get(), stage_name.c_str(), d.get(), m.get(), seed, &result));
      const std::string text = take(result);
      if (grid_c.out.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream out(grid_c.out);
        if (!(out << text << "\n")) {
          std::cerr << "error: cannot write " << grid_c.out << "\n";
          return RICB_E_IO;
        }
      }
    }
  } catch (const Failure& f) {
    return static_cast<int>(f.status);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }
  return 0;
}
