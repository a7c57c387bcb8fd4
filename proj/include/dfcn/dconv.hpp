#pragma once

#include <string>
#include <vector>

#include "dfcn/dknn.hpp"
#include "dfcn/rng.hpp"
#include "dfcn/tape.hpp"

namespace dfcn {

// Directionally constrained point convolution: per-sector neighbor
// aggregation (1xK conv, stride K) followed by cross-sector
// combination (1xNd conv, stride Nd), repeated for `blocks` blocks,
// with a module-level residual summation. Point count is preserved.
struct DConvSpec {
  int n_dirs = 8;
  int k = 1;
  double radius = 5.0;
  int d_in = 1;
  int d_out = 1;
  int blocks = 2;
  PartitionSpace space = PartitionSpace::Projected2D;

  void validate() const {
    if (n_dirs < 1 || k < 1 || radius <= 0.0 || d_in < 1 || d_out < 1 || blocks < 1)
      throw DataError("DConvSpec: all counts must be >= 1 and radius > 0");
  }
};

// Parameter names: "<prefix>.block<b>.convK.{weight,bias}",
// "<prefix>.block<b>.convNd.{weight,bias}", and when d_in != d_out a
// zero-initialized "<prefix>.residual.weight".
void init_dconv_params(ParamStore& store, const std::string& prefix, const DConvSpec& spec,
                       Rng& rng);

// Neighborhoods are computed once per invocation and shared by all
// blocks. Pass a precomputed table to reuse one across calls.
NodeId dconv_forward(Tape& tape, const PointCloud& points, NodeId features,
                     const DConvSpec& spec, ParamStore& store, const std::string& prefix);
NodeId dconv_forward(Tape& tape, const SectorNeighborhood& neighborhood, NodeId features,
                     const DConvSpec& spec, ParamStore& store, const std::string& prefix);

// Receptive-field probe: bump one input feature row, rerun, report
// which output rows moved. With b chained blocks the affected set is
// contained in the radius b*R disk around the perturbed point (each
// block widens the field by one search radius).
std::vector<int> dconv_locality_probe(const PointCloud& points, const Tensor& features,
                                      const DConvSpec& spec, ParamStore& store,
                                      const std::string& prefix, int perturb_index,
                                      double delta = 1.0, double tol = 1e-12);

// Uniform Glorot-style init on [-sqrt(6/(fan_in+fan_out)), +...].
Tensor glorot_uniform(const std::vector<std::int64_t>& shape, std::int64_t fan_in,
                      std::int64_t fan_out, Rng& rng);

}  // namespace dfcn
