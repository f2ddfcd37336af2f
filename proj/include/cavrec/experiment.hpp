#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cavrec/baselines.hpp"
#include "cavrec/cavlearn.hpp"
#include "cavrec/cftrain.hpp"
#include "cavrec/critique.hpp"
#include "cavrec/synthgen.hpp"

namespace cavrec {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "synth-objective",      "synth-degree",        "synth-sense",
      "movielens-tags",       "movielens-artificial", "rater-eval-movielens",
      "rater-eval-softattr",  "critique-synth",      "critique-movielens"};
  return names;
}

struct CavParams {
  double lambda = 1e-3;
  OptimConfig opt;
  int neg_ratio_logistic = 4;
  int neg_ratio_ranking = 1;
  std::vector<Trainer> trainers{Trainer::Logistic, Trainer::RankNet, Trainer::LambdaRank};
  /// Representation: "linear" (WALS) or "two-tower" (best hidden layer by validation Q).
  std::string representation = "linear";
};

struct SenseParams {
  bool enabled = false;
  int s_max = 10;
  double eps = 0.02;
  EmConfig em;
};

struct CritiqueParams {
  int users = 500;
  int validation_users = 100;
  int slate_size = 10;
  int steps = 25;
  std::vector<double> alpha_grid{0.05, 0.1, 0.25, 0.5, 1.0};
  double accept_quantile = 0.98;
  int bounds_sample = 1000;
  std::vector<Trainer> trainers{Trainer::Logistic, Trainer::RankNet};
  int min_user_ratings = 50;  // MovieLens mode
};

struct DataPaths {
  std::string ratings;
  std::string tags;
  std::string movies;
  std::string soft_attributes;
};

struct ExperimentConfig {
  std::string name = "synth-objective";
  std::string scale = "desk";
  std::uint64_t seed = 1;
  synth::SynthConfig synth;
  WalsConfig wals;
  TwoTowerConfig tower;
  CavParams cav;
  SenseParams senses;
  PitfConfig pitf;
  bool run_pitf = true;
  double train_fraction = 0.75;
  CritiqueParams critique;
  DataPaths data;
  int folds = 5;
  /// Restrict tag experiments to these tag names (empty = all).
  std::vector<std::string> tags;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Defaults for a named experiment at "desk" or "paper" scale.
ExperimentConfig default_config(const std::string& name, const std::string& scale = "desk");

/// Overlays a JSON document on the defaults of its "experiment"/"scale".
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

struct MetricRow {
  std::string experiment;
  std::string attribute;
  std::string method;
  std::string fold;
  std::string metric;
  double value = 0.0;
};

struct TraceRecord {
  std::string method;
  UserId user = 0;
  SessionTrace trace;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<TraceRecord> traces;
  nlohmann::json details = nlohmann::json::object();
  std::vector<std::string> log;
};

/// Runs one pipeline. Failures are rethrown as StageError naming the stage.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error(stage + ": " + cause), stage(stage) {}
  std::string stage;
};

/// Stages, sizes and mirrored result table; no computation.
std::string describe(const ExperimentConfig& config);

/// Mean of `metric` for `method` over rows whose attribute is in `attributes`
/// (all attributes when empty). Throws DataError when nothing matches.
double mean_metric(const std::vector<MetricRow>& rows, const std::string& method,
                   const std::string& metric, const std::vector<std::string>& attributes = {});

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_traces_jsonl(const std::string& path, const std::vector<TraceRecord>& traces);
std::string config_hash(const ExperimentConfig& config);

}  // namespace cavrec
