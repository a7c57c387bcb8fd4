#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfcn/params.hpp"
#include "dfcn/tensor.hpp"

namespace dfcn {

using NodeId = int;
constexpr NodeId kNoNode = -1;

// Precomputed interpolation stencil: for each destination row, k source
// indices and normalized weights. Weights do not participate in
// differentiation; gradients flow to source features only.
struct InterpTable {
  std::int64_t n_dst = 0;
  int k = 0;
  std::vector<int> idx;       // n_dst * k
  std::vector<double> weight;  // n_dst * k
};

enum class LossKind { PerClassBinary, Categorical };

// Reverse-mode differentiation over dense double tensors. Nodes are
// appended in execution order, so reverse id order is a valid backward
// topological order. Shapes must match exactly; there is no
// broadcasting. Every forward output is scanned for NaN/Inf unless
// finite checks are disabled.
//
// A tape is single-use: build a graph, call backward once, read grads.
// Not movable; backward closures capture `this`.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  NodeId input(Tensor value, bool requires_grad = false);
  NodeId param(ParamStore& store, const std::string& name);

  // out[m, g, :] = features[table[m, g], :]; backward scatter-adds.
  NodeId gather_group(NodeId features, std::span<const int> table, std::int64_t rows,
                      int group_size);

  // input [M, Nd*K, Din], weight [Dout, K, Din], bias [Dout]
  //   -> [M, Nd, Dout]; per-sector aggregation over the K neighbors
  // with full input-channel mixing.
  NodeId conv_1xk(NodeId input, NodeId weight, NodeId bias, int k);

  // input [M, Nd, C], weight [Dout, Nd, C], bias [Dout] -> [M, Dout];
  // cross-sector combination summing over sectors and channels.
  NodeId conv_1xnd(NodeId input, NodeId weight, NodeId bias);

  // Rowwise affine map on the last axis: [.., Din] -> [.., Dout].
  // bias may be kNoNode.
  NodeId linear(NodeId input, NodeId weight, NodeId bias);

  NodeId relu(NodeId input);

  // [M, G, D] -> [M, D]; gradient routes to the first argmax by index.
  NodeId max_over_group(NodeId input);

  // Last-axis concatenation, identical leading dims.
  NodeId concat_channels(NodeId a, NodeId b);

  NodeId add(NodeId a, NodeId b);

  // [M, C] rows to probabilities, max-subtracted for stability.
  NodeId softmax_rows(NodeId input);

  // out[r, :] = sum_j table.weight[r,j] * src[table.idx[r,j], :].
  NodeId interpolate(NodeId src_features, const InterpTable& table);

  // Scalar loss from logits [N, C]. Rows with label == mask_label are
  // excluded; the rest are mean-reduced. class_weights has length C.
  // PerClassBinary sums binary cross-entropy terms over all classes of
  // the softmax probabilities; Categorical is standard class NLL.
  NodeId weighted_cross_entropy(NodeId logits, std::span<const int> labels,
                                std::span<const double> class_weights, LossKind kind,
                                int mask_label);

  // <value, r> as a scalar node; the gradient-check projection.
  NodeId project(NodeId input, Tensor r);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const;

  // Seeds d(root)/d(root) = seed (root must be scalar), sweeps the
  // graph in reverse order, then adds the gradients of param leaves
  // into their ParamStore entries.
  void backward(NodeId root, double seed = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::function<void()> backward_fn;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  NodeId push(Tensor value, bool requires_grad, std::function<void()> backward_fn,
              const char* op_name);
  Tensor& ensure_grad(NodeId id);
  bool wants_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  bool has_grad(NodeId id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.data.empty();
  }

  std::vector<Node> nodes_;
  bool check_finite_;
  bool backward_done_ = false;
};

}  // namespace dfcn
