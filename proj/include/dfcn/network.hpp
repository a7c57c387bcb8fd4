#pragma once

#include <string>
#include <vector>

#include "dfcn/dconv.hpp"
#include "dfcn/hierarchy.hpp"

namespace dfcn {

// Full architecture description. Defaults follow the reference
// configuration: four resolutions 8192/1024/256/64, a directional
// convolution before every down/up transition, skip connections, and a
// fully connected head. Channel widths are not pinned by the method
// itself and are exposed here.
struct NetworkConfig {
  std::vector<int> level_sizes{8192, 1024, 256, 64};
  // Search radius per resolution level; transition l reuses the radius
  // of its coarser endpoint, which yields 2/5/10 for the three
  // downsampling stages under the defaults.
  std::vector<double> radii{2.0, 2.0, 5.0, 10.0};
  std::vector<int> down_widths{64, 128, 256};
  std::vector<int> up_widths{256, 128, 128};
  int head_hidden = 128;
  int n_dirs = 8;
  int k_dconv = 2;
  int n_classes = 9;
  double alpha = 1.2;
  bool use_class_weights = true;
  PartitionSpace space = PartitionSpace::Projected2D;
  int nsample = 32;
  int interp_k = 32;
  double interp_power = 2.0;
  int input_width = 2;  // [normalized intensity, normalized z]
  LossKind loss_kind = LossKind::PerClassBinary;
  // z feature divisor; the cuboid height, so the feature sits in [0,1].
  double z_feature_scale = 40.0;
  int fps_start = 0;

  int levels() const { return static_cast<int>(level_sizes.size()); }
  int unlabeled_sentinel() const { return n_classes; }
  void validate() const;
};

struct ClassWeights {
  std::vector<double> weights;
};

struct Model {
  NetworkConfig config;
  ParamStore params;
};

// Instantiates every parameter in a fixed order; two builds from the
// same seed are identical.
Model build_dfcn(const NetworkConfig& config, std::uint64_t seed);

// Point counts visited by one forward pass, down path then up path
// (e.g. 8192, 1024, 256, 64, 256, 1024, 8192 at the defaults).
struct ForwardTrace {
  std::vector<int> level_points;
};

// Per-point logits [N, C]. N may differ from the configured patch size;
// interior resolutions scale proportionally (min 1).
NodeId network_forward(Tape& tape, Model& model, const PointCloud& points,
                       NodeId input_features, ForwardTrace* trace = nullptr);

// Inference convenience: no gradients, returns the logits tensor.
// `points` must already be normalized to the patch frame.
Tensor infer_logits(Model& model, const PointCloud& points);

// Input feature columns from a normalized cloud.
Tensor make_input_features(const PointCloud& normalized, const NetworkConfig& config);

// W_c = 1 / ln(alpha + N_c / sum(N)). alpha <= 1 is rejected when any
// class count is zero (the log argument would not stay above 1).
ClassWeights class_weights(const std::vector<std::int64_t>& counts, double alpha);

ClassWeights unit_class_weights(int n_classes);

// Scalar training loss on the tape; rows labeled with the sentinel are
// masked out and the rest mean-reduced.
NodeId weighted_loss(Tape& tape, NodeId logits, std::span<const int> labels,
                     const ClassWeights& cw, LossKind kind, int sentinel);

// Rowwise argmax, ties to the lowest class id.
std::vector<int> predict_labels(const Tensor& logits);

}  // namespace dfcn
