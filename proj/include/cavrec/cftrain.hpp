#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/rng.hpp"

namespace cavrec {

struct LinearEmbeddingModel {
  Mat user_vecs;  // n × d
  Mat item_vecs;  // m × d
  double kappa = 1.0;

  int dim() const { return static_cast<int>(item_vecs.cols()); }
};

struct WalsConfig {
  int dim = 25;
  double kappa = 1.0;
  int iterations = 100;
  /// Confidence c = 1 + beta·(1 − pop(i)), pop = min-max normalized rating mass.
  double confidence_beta = 1.0;
  /// Fraction of ratings held out to pick the best iteration; 0 keeps the last.
  double validation_fraction = 0.1;
  /// Stop after this many iterations without validation improvement (0 = never).
  int patience = 0;
  std::uint64_t seed = 1;
};

struct WalsResult {
  LinearEmbeddingModel model;
  /// Weighted regularized training objective after every half-step
  /// (entry 0 is the initialization).
  std::vector<double> objective_trace;
  std::vector<double> validation_rmse;  // per full iteration
  int best_iteration = 0;
};

/// Per-rating confidence weights, normalized to mean 1.
std::vector<double> confidence_weights(const std::vector<Rating>& ratings, int num_items,
                                       double beta);

WalsResult train_wals(const std::vector<Rating>& ratings, int num_users, int num_items,
                      const WalsConfig& config);

/// One tower: index lookup (no bias) → ReLU → dense+ReLU → dense (linear output).
struct Tower {
  Mat emb;  // rows × d
  Mat w2;   // d × d
  Vec b2;
  Mat w3;   // d × d
  Vec b3;
};

struct DeepEmbeddingModel {
  Tower user;
  Tower item;
  double kappa = 1.0;
  double rho = 1.0;

  static constexpr int kLayers = 3;
  int dim() const { return static_cast<int>(item.emb.cols()); }
};

/// Forward activations of one tower row; index 0 is layer 1.
std::array<Vec, 3> tower_forward(const Tower& tower, int row);

struct TwoTowerConfig {
  int dim = 25;
  double kappa = 1.0;
  double rho = 1.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 1024;
  int epochs = 30;
  double validation_fraction = 0.1;
  /// Zero the output layers so the initial network predicts 0 everywhere.
  bool zero_init_output = false;
  std::uint64_t seed = 1;
};

struct TwoTowerResult {
  DeepEmbeddingModel model;
  std::vector<double> train_loss;       // per epoch, full objective
  std::vector<double> validation_rmse;  // per epoch
  int best_epoch = 0;
};

/// Objective on the given ratings (all of them if `subset` is empty):
/// mean squared error + κ and ρ terms scaled so that, over the whole training
/// set, it equals MSE + (κ/N)Σ‖ϕ‖² + (ρ/N)‖θ‖². `degrees` holds the per-user and
/// per-item counts in the full training set.
struct TwoTowerGrad {
  double loss = 0.0;
  Tower user;
  Tower item;
};

struct RatingDegrees {
  std::vector<int> user;
  std::vector<int> item;
  std::size_t total = 0;
};

RatingDegrees rating_degrees(const std::vector<Rating>& ratings, int num_users, int num_items);

TwoTowerGrad two_tower_loss_grad(const DeepEmbeddingModel& model,
                                 const std::vector<Rating>& batch, const RatingDegrees& degrees);

TwoTowerResult train_two_tower(const std::vector<Rating>& ratings, int num_users, int num_items,
                               const TwoTowerConfig& config,
                               const LinearEmbeddingModel* warm_start = nullptr);

/// Item representation matrix (m × d). Linear models ignore `layer`; deep
/// models accept 1..3 (default: last layer).
Mat item_representations(const LinearEmbeddingModel& model);
Mat item_representations(const DeepEmbeddingModel& model, int layer = DeepEmbeddingModel::kLayers);
Mat user_representations(const DeepEmbeddingModel& model);

Vec item_representation(const LinearEmbeddingModel& model, ItemId item);
Vec item_representation(const DeepEmbeddingModel& model, ItemId item,
                        int layer = DeepEmbeddingModel::kLayers);

double predict_rating(const LinearEmbeddingModel& model, UserId user, ItemId item);
double predict_rating(const DeepEmbeddingModel& model, UserId user, ItemId item);

double rmse(const LinearEmbeddingModel& model, const std::vector<Rating>& ratings);
double rmse(const DeepEmbeddingModel& model, const std::vector<Rating>& ratings);

}  // namespace cavrec
