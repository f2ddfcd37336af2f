#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <Eigen/Core>
#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cavrec/evalmetrics.hpp"
#include "cavrec/experiment.hpp"
#include "cavrec/ingest.hpp"
#include "cavrec/serialize.hpp"

namespace fs = std::filesystem;
using namespace cavrec;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::string experiment;
  std::string out = "out";
  std::string scale;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool stats = false;
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

ExperimentConfig load_config(const Common& o) {
  Json j = o.config_path.empty() ? Json::object() : read_json_file(o.config_path);
  if (!o.experiment.empty()) j["experiment"] = o.experiment;
  if (!o.scale.empty()) j["scale"] = o.scale;
  if (o.seed_set) j["seed"] = o.seed;
  if (!j.contains("experiment")) throw ConfigError("no experiment named (use --config or --experiment)");
  ExperimentConfig c;
  try {
    c = config_from_json(j);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json manifest(const ExperimentConfig& c, double seconds, int threads) {
  return {{"experiment", c.name},
          {"config_hash", config_hash(c)},
          {"seed", c.seed},
          {"scale", c.scale},
          {"config", to_json(c)},
          {"versions",
           {{"cavrec", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"openmp", _OPENMP},
            {"compiler", __VERSION__}}},
          {"threads", threads},
          {"wall_time_seconds", seconds}};
}

int run_pipeline(const Common& o, const std::vector<std::string>& allowed) {
  ExperimentConfig c = load_config(o);
  if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), c.name) == allowed.end()) {
    throw ConfigError("experiment '" + c.name + "' is not valid for this subcommand");
  }
  if (c.scale == "paper") std::cerr << "warning: paper scale runs take hours\n";
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res = run_experiment(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(o.out);
  const fs::path out(o.out);
  write_metrics_csv((out / "metrics.csv").string(), res.rows);
  if (!res.traces.empty()) write_traces_jsonl((out / "traces.jsonl").string(), res.traces);
  write_json(out / "details.json", res.details);
  write_json(out / "manifest.json", manifest(c, secs, omp_get_max_threads()));
  for (const auto& line : res.log) std::cerr << line << '\n';
  if (o.stats) {
    std::cout << "rows: " << res.rows.size() << "  traces: " << res.traces.size() << "  wall: " << secs << "s\n";
    if (res.details.contains("funnel")) std::cout << res.details["funnel"].dump(2) << '\n';
  }
  std::cout << "wrote " << (out / "metrics.csv").string() << '\n';
  return 0;
}

void add_common(CLI::App* app, Common& o, bool with_out = true) {
  app->add_option("--config", o.config_path, "Experiment config (JSON)");
  app->add_option("--experiment", o.experiment, "Experiment name, overrides the config");
  if (with_out) app->add_option("--out", o.out, "Output directory");
  app->add_option("--scale", o.scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s, o.seed_set = true; }, "Seed override");
  app->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::NonNegativeNumber);
  app->add_flag("--stats", o.stats, "Print summary statistics");
}

struct DataArgs {
  std::string dir;
  std::string embeddings;
  std::string tag;
  std::string trainer = "ranknet";
  std::string cav;
  std::string model = "linear";
  int dim = 16;
  int iterations = 30;
  double lambda = 1e-3;
  int senses = 0;
};

Mat load_item_reprs(const std::string& path) {
  Json j = read_json_file(path);
  const std::string kind = j.value("kind", "");
  if (kind == "two-tower") {
    return item_representations(deep_from_json(load_checkpoint(path, kind)), DeepEmbeddingModel::kLayers);
  }
  return linear_from_json(load_checkpoint(path, "linear")).item_vecs;
}

TagId require_tag(const Dataset& d, const std::string& name) {
  auto g = d.tag_id(name);
  if (!g) throw DataError("unknown tag '" + name + "'");
  return *g;
}

int cmd_synth(const Common& o) {
  ExperimentConfig c = load_config(o);
  synth::SynthConfig sc = c.synth;
  sc.seed = c.seed;
  auto data = synth::generate(sc);
  write_dataset(o.out, data.data);
  write_json(fs::path(o.out) / "ground_truth.json", to_json(data.truth));
  if (o.stats) {
    std::cout << "users " << data.data.num_users() << "  items " << data.data.num_items() << "  ratings "
              << data.data.ratings().size() << "  tag triples " << data.data.tags().size() << '\n';
  }
  return 0;
}

int cmd_train_cf(const Common& o, const DataArgs& a) {
  Dataset d = read_dataset(a.dir);
  WalsConfig wc;
  wc.dim = a.dim;
  wc.iterations = a.iterations;
  wc.seed = o.seed_set ? o.seed : 1;
  auto wals = train_wals(d.ratings(), d.num_users(), d.num_items(), wc);
  if (a.model == "two-tower") {
    TwoTowerConfig tc;
    tc.dim = a.dim;
    tc.seed = wc.seed;
    auto deep = train_two_tower(d.ratings(), d.num_users(), d.num_items(), tc, &wals.model);
    save_checkpoint(o.out, "two-tower", to_json(deep.model));
    if (o.stats) std::cout << "validation rmse " << deep.validation_rmse.back() << '\n';
  } else {
    save_checkpoint(o.out, "linear", to_json(wals.model));
    if (o.stats) std::cout << "best validation rmse " << (wals.validation_rmse.empty() ? 0.0 : wals.validation_rmse[wals.best_iteration - 1]) << " at iteration " << wals.best_iteration << '\n';
  }
  return 0;
}

int cmd_train_cav(const Common& o, const DataArgs& a) {
  Dataset d = read_dataset(a.dir);
  Mat reprs = load_item_reprs(a.embeddings);
  const TagId g = require_tag(d, a.tag);
  const Trainer t = trainer_from_string(a.trainer);
  Rng rng = derive_rng(o.seed_set ? o.seed : 1, {static_cast<std::uint64_t>(g)});
  TagExamples ex = build_examples(d, g, t == Trainer::Logistic ? 4 : 1, rng);
  if (a.senses > 0) {
    EmConfig em;
    em.trainer = t;
    em.lambda = a.lambda;
    auto sel = select_sense_count(ex, all_examples(d, g), reprs, g, a.senses, 0.02, em, o.seed_set ? o.seed : 1);
    save_checkpoint(o.out, "sense-model", to_json(sel.model, d.tag_vocab()));
    if (o.stats) std::cout << "senses " << sel.model.senses.size() << "  quality " << sel.model.avg_quality << '\n';
  } else {
    CAV cav = train_cav(t, ex, reprs, a.lambda, OptimConfig{});
    cav.tag = g;
    save_checkpoint(o.out, "cav", to_json(cav, d.tag_vocab()));
    if (o.stats) std::cout << "quality " << cav.quality << '\n';
  }
  return 0;
}

int cmd_eval(const DataArgs& a) {
  Dataset d = read_dataset(a.dir);
  Mat reprs = load_item_reprs(a.embeddings);
  CAV cav = cav_from_json(load_checkpoint(a.cav, "cav"), d.tag_vocab());
  TagExamples ex = all_examples(d, cav.tag);
  std::cout << "tag " << d.tag_vocab()[cav.tag] << "  trainer " << to_string(cav.trainer) << "  Q "
            << cav_quality(cav.direction, reprs, ex) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-attribute CAVs over collaborative-filtering embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common o;
  DataArgs a;

  auto* run = app.add_subcommand("run", "Run a full experiment pipeline");
  add_common(run, o);
  auto* describe_cmd = app.add_subcommand("describe", "Print the plan of an experiment without running it");
  add_common(describe_cmd, o, false);
  auto* critique = app.add_subcommand("critique", "Run a critiquing experiment");
  add_common(critique, o);
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, o);

  auto* train_cf = app.add_subcommand("train-cf", "Train embeddings on a dataset directory");
  add_common(train_cf, o);
  train_cf->add_option("--data", a.dir, "Dataset directory")->required();
  train_cf->add_option("--model", a.model, "linear or two-tower")->check(CLI::IsMember({"linear", "two-tower"}));
  train_cf->add_option("--dim", a.dim, "Embedding dimension");
  train_cf->add_option("--iterations", a.iterations, "WALS sweeps");

  auto* train_cav_cmd = app.add_subcommand("train-cav", "Train a CAV for one tag");
  add_common(train_cav_cmd, o);
  train_cav_cmd->add_option("--data", a.dir, "Dataset directory")->required();
  train_cav_cmd->add_option("--embeddings", a.embeddings, "Embedding checkpoint")->required();
  train_cav_cmd->add_option("--tag", a.tag, "Tag name")->required();
  train_cav_cmd->add_option("--trainer", a.trainer, "logistic, ranknet or lambdarank");
  train_cav_cmd->add_option("--lambda", a.lambda, "L2 penalty");
  train_cav_cmd->add_option("--senses", a.senses, "Largest sense count to try (0 = single CAV)");

  auto* eval = app.add_subcommand("eval", "Score a CAV on a dataset's tag pairs");
  eval->add_option("--data", a.dir, "Dataset directory")->required();
  eval->add_option("--embeddings", a.embeddings, "Embedding checkpoint")->required();
  eval->add_option("--cav", a.cav, "CAV checkpoint")->required();

  CLI11_PARSE(app, argc, argv);
  if (o.threads > 0) omp_set_num_threads(o.threads);

  try {
    if (run->parsed()) return run_pipeline(o, {});
    if (critique->parsed()) return run_pipeline(o, {"critique-synth", "critique-movielens"});
    if (describe_cmd->parsed()) {
      std::cout << describe(load_config(o));
      return 0;
    }
    if (synth->parsed()) return cmd_synth(o);
    if (train_cf->parsed()) return cmd_train_cf(o, a);
    if (train_cav_cmd->parsed()) return cmd_train_cav(o, a);
    if (eval->parsed()) return cmd_eval(a);
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.stage << ": " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error in stage config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
