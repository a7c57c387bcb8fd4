#include "dfcn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

namespace dfcn {

void TrainConfig::validate() const {
  if (batch_size < 1 || epochs < 0 || patch_n < 1 || decay_every < 1)
    throw DataError("TrainConfig: counts out of range");
  if (lr0 < 0.0 || decay_factor <= 0.0 || decay_factor >= 1.0)
    throw DataError("TrainConfig: need lr0 >= 0 and decay_factor in (0,1)");
  if (dropout_ratio < 0.0 || dropout_ratio >= 1.0)
    throw DataError("TrainConfig: dropout ratio must be in [0,1)");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw DataError("TrainConfig: val fraction must be in [0,1)");
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw DataError("lr_schedule: negative step");
  const auto decays = step / cfg.decay_every;
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

OptimizerState OptimizerState::init(const ParamStore& params) {
  OptimizerState s;
  for (const auto& name : params.names()) {
    s.m.emplace_back(params.value(name).shape);
    s.v.emplace_back(params.value(name).shape);
  }
  return s;
}

void optimizer_step(ParamStore& params, OptimizerState& state, double lr) {
  const auto& names = params.names();
  if (state.m.size() != names.size())
    throw Error("optimizer_step: state does not match parameter store");

  for (const auto& name : names) {
    for (double g : params.grad(name).data)
      if (!std::isfinite(g))
        throw NumericalError("optimizer_step: non-finite gradient in " + name);
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t p = 0; p < names.size(); ++p) {
    Tensor& value = params.value(names[p]);
    Tensor& grad = params.grad(names[p]);
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const std::int64_t n = value.numel();
    double* vp = value.ptr();
    double* gp = grad.ptr();
    double* mp = m.ptr();
    double* vvp = v.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * gp[i];
      vvp[i] = state.beta2 * vvp[i] + (1.0 - state.beta2) * gp[i] * gp[i];
      const double mhat = mp[i] / bc1;
      const double vhat = vvp[i] / bc2;
      vp[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
      gp[i] = 0.0;
    }
  }
}

std::vector<std::int64_t> label_counts(const PointCloud& cloud, int n_classes) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int l : cloud.labels)
    if (l >= 0 && l < n_classes) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

namespace {

struct BlockSplit {
  std::vector<Block> train;
  std::vector<Block> val;
};

BlockSplit split_blocks(const std::vector<Block>& blocks, double val_fraction) {
  BlockSplit out;
  if (val_fraction <= 0.0 || blocks.size() < 2) {
    out.train = blocks;
    return out;
  }
  const int stride = std::max(2, static_cast<int>(std::lround(1.0 / val_fraction)));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (static_cast<int>(b) % stride == stride - 1)
      out.val.push_back(blocks[b]);
    else
      out.train.push_back(blocks[b]);
  }
  if (out.train.empty()) {
    out.train = blocks;
    out.val.clear();
  }
  return out;
}

}  // namespace

std::vector<int> predict_blocks(Model& model, const std::vector<Block>& blocks,
                                const PointCloud& cloud) {
  if (blocks.empty()) throw DataError("predict_blocks: no blocks");
  std::vector<int> labels(cloud.size(), model.config.unlabeled_sentinel());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Patch patch = block_patch(cloud, blocks[b], static_cast<int>(b));
    const Tensor logits = infer_logits(model, patch.points);
    const std::vector<int> pred = predict_labels(logits);
    for (std::size_t i = 0; i < pred.size(); ++i)
      labels[static_cast<std::size_t>(patch.source_indices[i])] = pred[i];
  }
  return labels;
}

ConfusionMatrix evaluate_blocks(Model& model, const std::vector<Block>& blocks,
                                const PointCloud& cloud) {
  const std::vector<int> pred = predict_blocks(model, blocks, cloud);
  std::vector<int> gt(cloud.size(), model.config.unlabeled_sentinel());
  std::vector<char> covered(cloud.size(), 0);
  for (const auto& b : blocks)
    for (int i : b.point_indices) covered[static_cast<std::size_t>(i)] = 1;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (covered[i] && !cloud.labels.empty()) gt[i] = cloud.labels[i];
  return confusion(pred, gt, model.config.n_classes, model.config.unlabeled_sentinel());
}

TrainResult train_loop(Model& model, const PointCloud& scene, const TrainConfig& cfg,
                       std::ostream* log) {
  cfg.validate();
  model.config.validate();
  if (scene.empty()) throw DataError("train_loop: empty scene");
  if (!scene.has_labels()) throw DataError("train_loop: scene has no labels");

  const int n_classes = model.config.n_classes;
  const int sentinel = model.config.unlabeled_sentinel();

  const ClassWeights cw = model.config.use_class_weights
                              ? class_weights(label_counts(scene, n_classes), model.config.alpha)
                              : unit_class_weights(n_classes);

  const std::vector<Block> blocks = tile_blocks(scene, cfg.block_grid, cfg.block_min_fraction);
  const BlockSplit split = split_blocks(blocks, cfg.val_fraction);

  std::vector<int> train_indices;
  for (const auto& b : split.train)
    train_indices.insert(train_indices.end(), b.point_indices.begin(), b.point_indices.end());
  const PointCloud train_cloud = scene.subset(train_indices);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string last_path = cfg.out_dir + "/last.ckpt";
  const std::string best_path = cfg.out_dir + "/best.ckpt";

  TrainResult result;
  result.last_checkpoint = last_path;

  OptimizerState adam = OptimizerState::init(model.params);
  model.params.zero_grads();

  if (cfg.epochs == 0) {
    model.params.save(last_path);
    return result;
  }

  const std::int64_t patches_per_epoch = static_cast<std::int64_t>(
      (train_cloud.size() + cfg.patch_n - 1) / static_cast<std::size_t>(cfg.patch_n));

  std::int64_t global_step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    for (std::int64_t first = 0; first < patches_per_epoch && !stop;
         first += cfg.batch_size) {
      const int batch = static_cast<int>(
          std::min<std::int64_t>(cfg.batch_size, patches_per_epoch - first));
      const double lr = lr_schedule(global_step, cfg);
      double loss_sum = 0.0;

      for (int b = 0; b < batch; ++b) {
        Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(first + b)));
        Patch patch = sample_training_patch(train_cloud, rng, cfg.cuboid, cfg.patch_n);
        patch = apply_dropout(patch, cfg.dropout_ratio, rng);
        patch = center_normalize(std::move(patch));

        Tape tape;
        NodeId features = tape.input(make_input_features(patch.points, model.config));
        NodeId logits = network_forward(tape, model, patch.points, features);
        NodeId loss = weighted_loss(tape, logits, patch.points.labels, cw,
                                    model.config.loss_kind, sentinel);
        loss_sum += tape.value(loss).data[0];
        tape.backward(loss, 1.0 / batch);
      }

      optimizer_step(model.params, adam, lr);
      const double loss_avg = loss_sum / batch;
      result.history.push_back({global_step, lr, loss_avg});
      if (log) {
        char line[128];
        std::snprintf(line, sizeof(line), "step %lld lr %.8f loss %.8f\n",
                      static_cast<long long>(global_step), lr, loss_avg);
        *log << line << std::flush;
      }
      ++global_step;
      if (cfg.max_steps > 0 && global_step >= cfg.max_steps) stop = true;
    }

    const bool last_epoch = epoch == cfg.epochs - 1 || stop;
    if (!split.val.empty() && cfg.val_every > 0 &&
        ((epoch + 1) % cfg.val_every == 0 || last_epoch)) {
      const ConfusionMatrix cm = evaluate_blocks(model, split.val, scene);
      const double f1 = average_f1(precision_recall_f1(cm));
      if (f1 > result.best_val_f1) {
        result.best_val_f1 = f1;
        model.params.save(best_path);
        result.best_checkpoint = best_path;
      }
      if (log) {
        char line[96];
        std::snprintf(line, sizeof(line), "epoch %d val_average_f1 %.4f\n", epoch, f1);
        *log << line << std::flush;
      }
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      model.params.save(last_path);
  }

  model.params.save(last_path);
  result.steps = global_step;
  return result;
}

}  // namespace dfcn
