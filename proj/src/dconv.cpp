#include "dfcn/dconv.hpp"

#include <cmath>

namespace dfcn {

Tensor glorot_uniform(const std::vector<std::int64_t>& shape, std::int64_t fan_in,
                      std::int64_t fan_out, Rng& rng) {
  Tensor t(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = uniform_real(rng, -bound, bound);
  return t;
}

void init_dconv_params(ParamStore& store, const std::string& prefix, const DConvSpec& spec,
                       Rng& rng) {
  spec.validate();
  for (int b = 0; b < spec.blocks; ++b) {
    const std::string base = prefix + ".block" + std::to_string(b);
    const std::int64_t din = b == 0 ? spec.d_in : spec.d_out;
    store.add(base + ".convK.weight",
              glorot_uniform({spec.d_out, spec.k, din}, spec.k * din, spec.d_out, rng));
    store.add(base + ".convK.bias", Tensor({spec.d_out}));
    store.add(base + ".convNd.weight",
              glorot_uniform({spec.d_out, spec.n_dirs, spec.d_out},
                             static_cast<std::int64_t>(spec.n_dirs) * spec.d_out, spec.d_out,
                             rng));
    store.add(base + ".convNd.bias", Tensor({spec.d_out}));
  }
  if (spec.d_in != spec.d_out) {
    // zero init: the module starts out as its convolution branch alone
    store.add(prefix + ".residual.weight", Tensor({spec.d_out, spec.d_in}));
  }
}

NodeId dconv_forward(Tape& tape, const SectorNeighborhood& neighborhood, NodeId features,
                     const DConvSpec& spec, ParamStore& store, const std::string& prefix) {
  spec.validate();
  const Tensor& f = tape.value(features);
  if (f.rank() != 2 || f.dim(1) != spec.d_in)
    throw Error("dconv_forward: features must be N x d_in");
  const std::int64_t n = f.dim(0);
  if (neighborhood.query_count() != static_cast<std::size_t>(n) ||
      neighborhood.group_size() != spec.n_dirs * spec.k)
    throw Error("dconv_forward: neighborhood table does not match spec");

  NodeId cur = features;
  for (int b = 0; b < spec.blocks; ++b) {
    const std::string base = prefix + ".block" + std::to_string(b);
    NodeId grouped = tape.gather_group(cur, neighborhood.indices, n, neighborhood.group_size());
    NodeId sect = tape.relu(tape.conv_1xk(grouped, tape.param(store, base + ".convK.weight"),
                                          tape.param(store, base + ".convK.bias"), spec.k));
    cur = tape.relu(tape.conv_1xnd(sect, tape.param(store, base + ".convNd.weight"),
                                   tape.param(store, base + ".convNd.bias")));
  }

  NodeId skip = features;
  if (spec.d_in != spec.d_out)
    skip = tape.linear(features, tape.param(store, prefix + ".residual.weight"), kNoNode);
  return tape.add(cur, skip);
}

NodeId dconv_forward(Tape& tape, const PointCloud& points, NodeId features,
                     const DConvSpec& spec, ParamStore& store, const std::string& prefix) {
  SectorQueryConfig cfg;
  cfg.n_dirs = spec.n_dirs;
  cfg.k = spec.k;
  cfg.radius = spec.radius;
  cfg.space = spec.space;
  const auto queries = all_indices(points.size());
  const SectorNeighborhood nbr = neighborhood_search(points, queries, cfg);
  return dconv_forward(tape, nbr, features, spec, store, prefix);
}

std::vector<int> dconv_locality_probe(const PointCloud& points, const Tensor& features,
                                      const DConvSpec& spec, ParamStore& store,
                                      const std::string& prefix, int perturb_index,
                                      double delta, double tol) {
  if (perturb_index < 0 || static_cast<std::size_t>(perturb_index) >= points.size())
    throw Error("dconv_locality_probe: bad index");

  auto run = [&](const Tensor& f) {
    Tape tape;
    NodeId out = dconv_forward(tape, points, tape.input(f), spec, store, prefix);
    return tape.value(out);
  };

  const Tensor base = run(features);
  Tensor bumped = features;
  for (std::int64_t a = 0; a < bumped.dim(1); ++a)
    bumped.data[static_cast<std::size_t>(perturb_index * bumped.dim(1) + a)] += delta;
  const Tensor moved = run(bumped);

  std::vector<int> affected;
  const std::int64_t n = base.dim(0), d = base.dim(1);
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t a = 0; a < d; ++a) {
      if (std::fabs(base.data[static_cast<std::size_t>(r * d + a)] -
                    moved.data[static_cast<std::size_t>(r * d + a)]) > tol) {
        affected.push_back(static_cast<int>(r));
        break;
      }
    }
  }
  return affected;
}

}  // namespace dfcn
