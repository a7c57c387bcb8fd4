#include "dfcn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dfcn {

double gradient_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-2});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const GraphBuilder& build, const std::vector<Tensor*>& targets,
                           const GradCheckOptions& opts, Rng& rng) {
  // One forward to learn the output shape, then a fixed projection.
  Tensor projection;
  {
    Tape tape;
    std::vector<NodeId> leaves;
    NodeId out = build(tape, leaves);
    projection = Tensor(tape.value(out).shape);
    for (auto& v : projection.data) v = uniform_real(rng, -1.0, 1.0);
  }

  auto scalar_eval = [&]() {
    Tape tape;
    std::vector<NodeId> leaves;
    NodeId out = build(tape, leaves);
    return tape.value(tape.project(out, projection)).data[0];
  };

  auto store_grad_for = [&](const Tensor* target) -> const Tensor& {
    if (!opts.store) throw Error("grad_check: kNoNode leaf without opts.store");
    for (const auto& name : opts.store->names())
      if (&opts.store->value(name) == target) return opts.store->grad(name);
    throw Error("grad_check: target does not alias any parameter in opts.store");
  };

  // Analytic pass.
  std::vector<Tensor> analytic(targets.size());
  {
    if (opts.store) opts.store->zero_grads();
    Tape tape;
    std::vector<NodeId> leaves;
    NodeId out = build(tape, leaves);
    if (leaves.size() != targets.size())
      throw Error("grad_check: builder pushed a different leaf count than targets");
    tape.backward(tape.project(out, projection));
    for (std::size_t t = 0; t < targets.size(); ++t) {
      Tensor g(targets[t]->shape);
      if (leaves[t] == kNoNode) {
        g = store_grad_for(targets[t]);
      } else {
        // leaves with no incoming gradient have an exactly-zero grad
        try {
          g = tape.grad(leaves[t]);
        } catch (const Error&) {
        }
      }
      if (!g.same_shape(*targets[t])) throw Error("grad_check: leaf/target shape mismatch");
      analytic[t] = std::move(g);
    }
    if (opts.store) opts.store->zero_grads();
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    Tensor& x = *targets[t];
    const std::int64_t n = x.numel();
    std::vector<std::int64_t> coords;
    if (opts.max_coords_per_target > 0 && n > opts.max_coords_per_target) {
      coords.resize(static_cast<std::size_t>(opts.max_coords_per_target));
      for (auto& c : coords) c = uniform_int(rng, n);
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    for (const std::int64_t c : coords) {
      const double saved = x.data[static_cast<std::size_t>(c)];
      x.data[static_cast<std::size_t>(c)] = saved + opts.epsilon;
      const double fp = scalar_eval();
      x.data[static_cast<std::size_t>(c)] = saved - opts.epsilon;
      const double fm = scalar_eval();
      x.data[static_cast<std::size_t>(c)] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.epsilon);
      const double err = gradient_rel_err(analytic[t].data[static_cast<std::size_t>(c)], numeric);
      report.max_rel_err = std::max(report.max_rel_err, err);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace dfcn
