#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dfcn/metrics.hpp"
#include "dfcn/network.hpp"
#include "dfcn/tiling.hpp"

namespace dfcn {

struct TrainConfig {
  int batch_size = 6;
  double lr0 = 0.01;
  int decay_every = 3000;  // optimizer steps
  double decay_factor = 0.5;
  int epochs = 1000;
  std::uint64_t seed = 1;
  int patch_n = 8192;
  double dropout_ratio = 0.125;
  std::array<double, 3> cuboid{30.0, 30.0, 40.0};
  double block_grid = 30.0;
  double block_min_fraction = 0.5;
  double val_fraction = 0.1;  // block-level holdout for best-checkpoint selection
  int val_every = 5;          // epochs between validation passes; 0 disables
  int checkpoint_every = 0;   // epochs; 0 saves only last/best
  int max_steps = 0;          // optimizer steps; 0 = bounded by epochs only
  std::string out_dir = ".";

  void validate() const;
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m, v;  // aligned with ParamStore::names()

  static OptimizerState init(const ParamStore& params);
};

// lr0 * decay_factor^floor(step / decay_every)
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

// Bias-corrected adaptive-moment update over every parameter; zeroes
// gradients afterward. A NaN gradient aborts before any parameter is
// touched, naming the offender.
void optimizer_step(ParamStore& params, OptimizerState& state, double lr);

struct StepLog {
  std::int64_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<StepLog> history;
  std::int64_t steps = 0;
  double best_val_f1 = -1.0;
  std::string last_checkpoint;
  std::string best_checkpoint;
};

// Full training pipeline: per step, sample batch_size patches (each
// from a generator seeded by (seed, epoch, patch index)), dropout,
// center, forward, class-weighted loss, backward, one optimizer step.
// Deterministic for a fixed seed and thread-count-independent.
TrainResult train_loop(Model& model, const PointCloud& scene, const TrainConfig& cfg,
                       std::ostream* log = nullptr);

// Per-point labels for the whole cloud; each block runs through the
// network at its native size.
std::vector<int> predict_blocks(Model& model, const std::vector<Block>& blocks,
                                const PointCloud& cloud);

// Confusion over labeled points of the given blocks.
ConfusionMatrix evaluate_blocks(Model& model, const std::vector<Block>& blocks,
                                const PointCloud& cloud);

std::vector<std::int64_t> label_counts(const PointCloud& cloud, int n_classes);

}  // namespace dfcn
