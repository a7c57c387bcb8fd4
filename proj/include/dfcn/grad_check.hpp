#pragma once

#include <functional>
#include <vector>

#include "dfcn/rng.hpp"
#include "dfcn/tape.hpp"

namespace dfcn {

// Central-difference verification of reverse-mode gradients.
//
// `build` constructs the graph on a fresh tape and pushes one leaf
// NodeId per entry of `targets` (same order); each target points at the
// storage the corresponding leaf reads, so perturbing it and rebuilding
// re-evaluates the graph. A builder that routes a target through
// ParamStore-owned leaves (e.g. by calling a module forward) pushes
// kNoNode instead and sets opts.store; the analytic gradient is then
// read from the store entry aliased by the target.
//
// The output reduces to a scalar through a fixed random projection;
// d(scalar)/d(target) is compared entry-wise against
// (f(x+eps) - f(x-eps)) / (2 eps).
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t coords_checked = 0;
  bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

using GraphBuilder = std::function<NodeId(Tape&, std::vector<NodeId>&)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Cap on perturbed coordinates per target; <= 0 checks all of them.
  std::int64_t max_coords_per_target = 0;
  ParamStore* store = nullptr;
};

GradCheckReport grad_check(const GraphBuilder& build, const std::vector<Tensor*>& targets,
                           const GradCheckOptions& opts, Rng& rng);

// rel err with a small-magnitude floor: entries where both sides sit
// below 1e-2 in magnitude are effectively compared on an absolute
// scale against that floor.
double gradient_rel_err(double analytic, double numeric);

}  // namespace dfcn
