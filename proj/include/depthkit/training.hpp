#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthkit/autograd.hpp"
#include "depthkit/dataset.hpp"
#include "depthkit/depthnet.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/metrics.hpp"

namespace depthkit {

// ---- dataset mixing ------------------------------------------------------

struct SampleRef {
  std::size_t dataset = 0;  // 0 = a, 1 = b
  std::size_t index = 0;
  std::string id;
  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct MixOptions {
  double train_ratio = 0.5;   // share of the training list drawn from a
  double val_weight_a = 0.85; // share of the validation list drawn from a
  double holdout = 0.2;       // fraction of scenes held out per dataset
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<SampleRef> train;
  std::vector<SampleRef> val;
};

// Per-dataset scene holdout, then a train list interleaving a and b at
// `train_ratio` (the larger side is truncated) and a validation list of
// |held a| + |held b| entries weighted by `val_weight_a`. Held-out pools
// shorter than their quota are cycled, so validation may repeat samples.
Split mix_datasets(const DatasetHandle& a, const DatasetHandle& b, const MixOptions& opt = {});

// Scene holdout of a single dataset (all refs carry dataset 0).
Split holdout_split(const DatasetHandle& ds, double holdout, std::uint64_t seed);

std::vector<Sample> load_samples(const std::vector<const DatasetHandle*>& datasets, const std::vector<SampleRef>& refs);

// ---- experiment configuration --------------------------------------------

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double lr = 2e-3;
  double decay_factor = 0.5;
  int decay_every = 10;       // epochs
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;

  double lr_at(int epoch) const;
};

struct ExperimentConfig {
  std::string name = "run";
  ModelConfig model;
  LossWeights loss;
  Distance distance{DistanceKind::L1, 1.0};
  OptimizerConfig optimizer;
  int batch_size = 8;
  int epochs = 30;
  MixOptions mix;
  std::uint64_t seed = 0;
  // Dataset directories; `dataset_b` is optional and loaded with `scale_b`.
  std::string dataset_a;
  std::string dataset_b;
  double scale_b = 1.0;

  void validate() const;
};

nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

// ---- training ------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  std::size_t steps = 0;
  double train_loss = 0.0;  // mean over the epoch's batches
  double val_loss = 0.0;
  MetricsReport train;
  MetricsReport val;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t total_steps = 0;
  double wall_seconds = 0.0;
  std::string weights;  // path of the saved weights, if any
};

struct TrainingRun {
  Model model;
  TrainingHistory history;
};

// Inputs and targets for one sample, shaped for the model configuration.
struct PreparedSample {
  std::string id;
  Tensor rgb, depth_in, mask;   // 1 x C x H x W
  Tensor gt, gt_mask;
  std::vector<Tensor> early_gt, early_mask;
  DepthMap gt_map;
  DepthMap raw_map;
};

PreparedSample prepare_sample(const ModelConfig& cfg, const Sample& s);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Initial weights come from derive_seed(cfg.seed, 1), batch order from
// derive_seed(cfg.seed, 2). Throws NonFiniteLoss naming the failing batch.
TrainingRun train(const ExperimentConfig& cfg, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EpochCallback& on_epoch = {});

// Loss and metrics of `model` over `set`, evaluated in batches.
std::pair<double, MetricsReport> evaluate_model(Model& model, const ExperimentConfig& cfg,
                                               const std::vector<PreparedSample>& set);

std::string history_csv(const TrainingHistory& h);

// ---- hyperparameter search ----------------------------------------------

struct SearchGrid {
  std::vector<double> lr;
  std::vector<double> decay_factor;
  std::vector<double> weight_decay;
  std::vector<LossWeights> loss;
  std::vector<DistanceKind> distance;
  double epoch_fraction = 0.25;
};

nlohmann::ordered_json search_grid_to_json(const SearchGrid& g);
SearchGrid search_grid_from_json(const nlohmann::json& j);

struct LeaderboardEntry {
  int rank = 0;  // 0 for failed runs
  ExperimentConfig config;
  bool failed = false;
  std::string error;
  MetricsReport val;
};

struct SearchResult {
  ExperimentConfig best;  // full epoch budget
  std::vector<LeaderboardEntry> leaderboard;  // ranked runs first, failures last
  int epochs_per_run = 0;
};

// Every combination trains with the base seed and ceil(epoch_fraction *
// epochs) epochs, ranked by final validation MAE. Fails only when every
// combination fails.
SearchResult hyperparam_search(const ExperimentConfig& base, const SearchGrid& grid, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set, int jobs = 1);

std::string leaderboard_csv(const SearchResult& r);

// ---- comparison ----------------------------------------------------------

struct CompareRow {
  std::string name;
  MetricsReport report;
};

// First row "Input" scores the raw depth against the ground truth, then one
// row per model.
std::vector<CompareRow> compare(const std::vector<std::pair<std::string, Model*>>& models, const std::vector<Sample>& val);

std::string compare_csv(const std::vector<CompareRow>& rows, const std::string& split = "val");

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace depthkit
