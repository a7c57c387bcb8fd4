#include "dfcn/network.hpp"

#include <algorithm>
#include <cmath>

namespace dfcn {

void NetworkConfig::validate() const {
  if (level_sizes.size() < 2) throw DataError("NetworkConfig: need at least two levels");
  for (std::size_t i = 1; i < level_sizes.size(); ++i)
    if (level_sizes[i] >= level_sizes[i - 1] || level_sizes[i] < 1)
      throw DataError("NetworkConfig: level sizes must be strictly decreasing and positive");
  if (radii.size() != level_sizes.size())
    throw DataError("NetworkConfig: need one radius per level");
  for (double r : radii)
    if (r <= 0.0) throw DataError("NetworkConfig: radii must be positive");
  const std::size_t transitions = level_sizes.size() - 1;
  if (down_widths.size() != transitions || up_widths.size() != transitions)
    throw DataError("NetworkConfig: need one width per transition on each path");
  if (n_classes < 2) throw DataError("NetworkConfig: need n_classes >= 2");
  if (use_class_weights && alpha <= 1.0)
    throw DataError("NetworkConfig: class balance alpha must exceed 1");
  if (n_dirs < 1 || k_dconv < 1 || nsample < 1 || interp_k < 1 || head_hidden < 1 ||
      input_width < 1)
    throw DataError("NetworkConfig: counts must be >= 1");
}

namespace {

// Feature width on arrival at level l on the down path.
int arrival_width(const NetworkConfig& cfg, int level) {
  return cfg.down_widths[static_cast<std::size_t>(std::max(level - 1, 0))];
}

DConvSpec dconv_spec(const NetworkConfig& cfg, int level, int d_in, int d_out) {
  DConvSpec spec;
  spec.n_dirs = cfg.n_dirs;
  spec.k = cfg.k_dconv;
  spec.radius = cfg.radii[static_cast<std::size_t>(level)];
  spec.d_in = d_in;
  spec.d_out = d_out;
  spec.space = cfg.space;
  return spec;
}

}  // namespace

Model build_dfcn(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  ParamStore& store = model.params;
  Rng rng = make_rng(seed);

  const int transitions = config.levels() - 1;

  // down path: DConv then down transition, per level
  for (int l = 0; l < transitions; ++l) {
    const int din = l == 0 ? config.input_width : arrival_width(config, l);
    const int dout = arrival_width(config, l);
    init_dconv_params(store, "dconv" + std::to_string(l), dconv_spec(config, l, din, dout), rng);

    const int grouped_in = 3 + dout;
    const int grouped_out = config.down_widths[static_cast<std::size_t>(l)];
    store.add("down" + std::to_string(l) + ".mlp.weight",
              glorot_uniform({grouped_out, grouped_in}, grouped_in, grouped_out, rng));
    store.add("down" + std::to_string(l) + ".mlp.bias", Tensor({grouped_out}));
  }

  // bottom DConv plus up path
  const int bottom_w = arrival_width(config, transitions);
  init_dconv_params(store, "dconv" + std::to_string(transitions),
                    dconv_spec(config, transitions, bottom_w, bottom_w), rng);

  int src_w = bottom_w;
  for (int u = 0; u < transitions; ++u) {
    const int skip_level = transitions - 1 - u;
    const int skip_w = arrival_width(config, skip_level);
    const int out_w = config.up_widths[static_cast<std::size_t>(u)];
    store.add("up" + std::to_string(u) + ".mlp.weight",
              glorot_uniform({out_w, src_w + skip_w}, src_w + skip_w, out_w, rng));
    store.add("up" + std::to_string(u) + ".mlp.bias", Tensor({out_w}));

    if (u + 1 < transitions) {
      init_dconv_params(store, "dconv" + std::to_string(transitions + 1 + u),
                        dconv_spec(config, skip_level, out_w, out_w), rng);
    }
    src_w = out_w;
  }

  store.add("head.hidden.weight",
            glorot_uniform({config.head_hidden, src_w}, src_w, config.head_hidden, rng));
  store.add("head.hidden.bias", Tensor({config.head_hidden}));
  store.add("head.out.weight", glorot_uniform({config.n_classes, config.head_hidden},
                                              config.head_hidden, config.n_classes, rng));
  store.add("head.out.bias", Tensor({config.n_classes}));
  return model;
}

NodeId network_forward(Tape& tape, Model& model, const PointCloud& points,
                       NodeId input_features, ForwardTrace* trace) {
  const NetworkConfig& cfg = model.config;
  cfg.validate();
  ParamStore& store = model.params;

  const std::int64_t n = static_cast<std::int64_t>(points.size());
  if (n < 1) throw DataError("network_forward: empty input");
  const Tensor& f = tape.value(input_features);
  if (f.rank() != 2 || f.dim(0) != n || f.dim(1) != cfg.input_width)
    throw Error("network_forward: input feature shape mismatch");

  // Fully convolutional in the point count: interior resolutions scale
  // with the actual input size.
  const int transitions = cfg.levels() - 1;
  std::vector<int> sizes(static_cast<std::size_t>(cfg.levels()));
  sizes[0] = static_cast<int>(n);
  for (int l = 1; l < cfg.levels(); ++l) {
    const double ratio =
        static_cast<double>(cfg.level_sizes[static_cast<std::size_t>(l)]) /
        static_cast<double>(cfg.level_sizes[0]);
    int m = static_cast<int>(std::llround(static_cast<double>(n) * ratio));
    m = std::clamp(m, 1, sizes[static_cast<std::size_t>(l - 1)]);
    sizes[static_cast<std::size_t>(l)] = m;
  }

  LevelState cur;
  cur.points = points;
  cur.features = input_features;
  cur.level = 0;
  if (trace) trace->level_points.push_back(static_cast<int>(n));

  std::vector<LevelState> skips;
  for (int l = 0; l < transitions; ++l) {
    const int din = l == 0 ? cfg.input_width : arrival_width(cfg, l);
    const int dout = arrival_width(cfg, l);
    cur.features = dconv_forward(tape, cur.points, cur.features,
                                 dconv_spec(cfg, l, din, dout), store,
                                 "dconv" + std::to_string(l));
    skips.push_back(cur);

    DownBlockParams p{"down" + std::to_string(l) + ".mlp.weight",
                      "down" + std::to_string(l) + ".mlp.bias"};
    cur = down_block(tape, cur, sizes[static_cast<std::size_t>(l + 1)],
                     cfg.radii[static_cast<std::size_t>(l + 1)], cfg.nsample, store, p,
                     cfg.fps_start);
    if (trace) trace->level_points.push_back(static_cast<int>(cur.points.size()));
  }

  const int bottom_w = arrival_width(cfg, transitions);
  cur.features = dconv_forward(tape, cur.points, cur.features,
                               dconv_spec(cfg, transitions, bottom_w, bottom_w), store,
                               "dconv" + std::to_string(transitions));

  for (int u = 0; u < transitions; ++u) {
    const int skip_level = transitions - 1 - u;
    DownBlockParams p{"up" + std::to_string(u) + ".mlp.weight",
                      "up" + std::to_string(u) + ".mlp.bias"};
    cur = up_block(tape, cur, skips[static_cast<std::size_t>(skip_level)], cfg.interp_k,
                   cfg.interp_power, store, p);
    if (trace) trace->level_points.push_back(static_cast<int>(cur.points.size()));

    if (u + 1 < transitions) {
      const int w = cfg.up_widths[static_cast<std::size_t>(u)];
      cur.features = dconv_forward(tape, cur.points, cur.features,
                                   dconv_spec(cfg, skip_level, w, w), store,
                                   "dconv" + std::to_string(transitions + 1 + u));
    }
  }

  NodeId hidden = tape.relu(tape.linear(cur.features, tape.param(store, "head.hidden.weight"),
                                        tape.param(store, "head.hidden.bias")));
  return tape.linear(hidden, tape.param(store, "head.out.weight"),
                     tape.param(store, "head.out.bias"));
}

Tensor make_input_features(const PointCloud& normalized, const NetworkConfig& config) {
  const std::int64_t n = static_cast<std::int64_t>(normalized.size());
  if (config.input_width != 2)
    throw DataError("make_input_features: configured for [intensity, z] inputs");
  Tensor f({n, 2});
  for (std::int64_t i = 0; i < n; ++i) {
    f.data[static_cast<std::size_t>(2 * i)] =
        normalized.intensity.empty() ? 0.0 : normalized.intensity[static_cast<std::size_t>(i)];
    f.data[static_cast<std::size_t>(2 * i + 1)] =
        normalized.z[static_cast<std::size_t>(i)] / config.z_feature_scale;
  }
  return f;
}

Tensor infer_logits(Model& model, const PointCloud& points) {
  Tape tape;
  NodeId features = tape.input(make_input_features(points, model.config));
  NodeId logits = network_forward(tape, model, points, features);
  return tape.value(logits);
}

ClassWeights class_weights(const std::vector<std::int64_t>& counts, double alpha) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw DataError("class_weights: negative count");
    total += c;
  }
  if (total <= 0) throw DataError("class_weights: counts sum to zero");
  if (alpha <= 1.0)
    for (auto c : counts)
      if (c == 0)
        throw DataError("class_weights: alpha <= 1 with a zero-count class is ill-defined");

  ClassWeights cw;
  cw.weights.reserve(counts.size());
  for (auto c : counts) {
    const double fraction = static_cast<double>(c) / static_cast<double>(total);
    const double w = 1.0 / std::log(alpha + fraction);
    if (!std::isfinite(w) || w <= 0.0)
      throw NumericalError("class_weights: non-positive weight; check alpha");
    cw.weights.push_back(w);
  }
  return cw;
}

ClassWeights unit_class_weights(int n_classes) {
  ClassWeights cw;
  cw.weights.assign(static_cast<std::size_t>(n_classes), 1.0);
  return cw;
}

NodeId weighted_loss(Tape& tape, NodeId logits, std::span<const int> labels,
                     const ClassWeights& cw, LossKind kind, int sentinel) {
  return tape.weighted_cross_entropy(logits, labels, cw.weights, kind, sentinel);
}

std::vector<int> predict_labels(const Tensor& logits) {
  if (logits.rank() != 2) throw Error("predict_labels: logits must be rank 2");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  const double* p = logits.ptr();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    int best = 0;
    double bv = p[r * c];
    for (std::int64_t j = 1; j < c; ++j)
      if (p[r * c + j] > bv) {
        bv = p[r * c + j];
        best = static_cast<int>(j);
      }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace dfcn
