#include "dfcn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dfcn/error.hpp"

namespace dfcn {

namespace {

void check_all_finite(const Tensor& t, const char* op_name) {
  const double* p = t.ptr();
  const std::int64_t n = t.numel();
  bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
  for (std::int64_t i = 0; i < n; ++i) ok = ok && std::isfinite(p[i]);
  if (!ok) throw NumericalError(std::string(op_name) + ": non-finite value in output");
}

std::int64_t leading_rows(const Tensor& t) {
  return t.numel() / t.shape.back();
}

}  // namespace

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void()> backward_fn,
                  const char* op_name) {
  if (check_finite_) check_all_finite(value, op_name);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tensor& Tape::ensure_grad(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty()) throw Error("Tape::grad: no gradient was propagated to this node");
  return n.grad;
}

NodeId Tape::input(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr, "input");
}

NodeId Tape::param(ParamStore& store, const std::string& name) {
  NodeId id = push(store.value(name), true, nullptr, "param");
  nodes_[static_cast<std::size_t>(id)].store = &store;
  nodes_[static_cast<std::size_t>(id)].param_name = name;
  return id;
}

NodeId Tape::gather_group(NodeId features, std::span<const int> table, std::int64_t rows,
                          int group_size) {
  const Tensor& f = value(features);
  if (f.rank() != 2) throw Error("gather_group: features must be rank 2");
  const std::int64_t n = f.dim(0), d = f.dim(1);
  if (static_cast<std::int64_t>(table.size()) != rows * group_size)
    throw Error("gather_group: table size mismatch");
  for (int idx : table)
    if (idx < 0 || idx >= n) throw Error("gather_group: index out of range");

  Tensor out({rows, group_size, d});
  {
    const double* fp = f.ptr();
    double* op = out.ptr();
    const std::int64_t total = rows * group_size;
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < total; ++t)
      std::memcpy(op + t * d, fp + static_cast<std::int64_t>(table[static_cast<std::size_t>(t)]) * d,
                  static_cast<std::size_t>(d) * sizeof(double));
  }

  const bool rg = wants_grad(features);
  std::vector<int> tbl(table.begin(), table.end());
  NodeId id = push(std::move(out), rg, nullptr, "gather_group");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, features,
                                                        tbl = std::move(tbl), d]() {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& fg = ensure_grad(features);
      const double* gp = g.ptr();
      double* fgp = fg.ptr();
      const std::int64_t total = static_cast<std::int64_t>(tbl.size());
      // scatter-add; parallel over channels so writes stay disjoint and
      // the accumulation order is fixed
#pragma omp parallel for schedule(static)
      for (std::int64_t a = 0; a < d; ++a)
        for (std::int64_t t = 0; t < total; ++t)
          fgp[static_cast<std::int64_t>(tbl[static_cast<std::size_t>(t)]) * d + a] +=
              gp[t * d + a];
    };
  }
  return id;
}

NodeId Tape::conv_1xk(NodeId input, NodeId weight, NodeId bias, int k) {
  const Tensor& in = value(input);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (in.rank() != 3 || w.rank() != 3 || b.rank() != 1) throw Error("conv_1xk: bad ranks");
  const std::int64_t m = in.dim(0), g = in.dim(1), din = in.dim(2);
  const std::int64_t dout = w.dim(0);
  if (g % k != 0) throw Error("conv_1xk: group axis not divisible by K");
  if (w.dim(1) != k || w.dim(2) != din || b.dim(0) != dout)
    throw Error("conv_1xk: weight/bias shape mismatch");
  const std::int64_t nd = g / k;
  const std::int64_t slice = static_cast<std::int64_t>(k) * din;

  Tensor out({m, nd, dout});
  {
    const double* ip = in.ptr();
    const double* wp = w.ptr();
    const double* bp = b.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t mi = 0; mi < m; ++mi)
      for (std::int64_t j = 0; j < nd; ++j) {
        const double* islice = ip + (mi * g + j * k) * din;
        double* orow = op + (mi * nd + j) * dout;
        for (std::int64_t c = 0; c < dout; ++c) {
          const double* wrow = wp + c * slice;
          double acc = bp[c];
          for (std::int64_t t = 0; t < slice; ++t) acc += wrow[t] * islice[t];
          orow[c] = acc;
        }
      }
  }

  const bool rg = wants_grad(input) || wants_grad(weight) || wants_grad(bias);
  NodeId id = push(std::move(out), rg, nullptr, "conv_1xk");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, weight, bias, m, nd,
                                                        dout, g, k, din, slice]() {
      const Tensor& gr = nodes_[static_cast<std::size_t>(id)].grad;
      const double* gp = gr.ptr();
      const double* ip = value(input).ptr();
      const double* wp = value(weight).ptr();
      if (wants_grad(input)) {
        double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t mi = 0; mi < m; ++mi)
          for (std::int64_t j = 0; j < nd; ++j) {
            double* islice = igp + (mi * g + j * k) * din;
            const double* grow = gp + (mi * nd + j) * dout;
            for (std::int64_t c = 0; c < dout; ++c) {
              const double gc = grow[c];
              if (gc == 0.0) continue;
              const double* wrow = wp + c * slice;
              for (std::int64_t t = 0; t < slice; ++t) islice[t] += gc * wrow[t];
            }
          }
      }
      if (wants_grad(weight)) {
        double* wgp = ensure_grad(weight).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t c = 0; c < dout; ++c) {
          double* wrow = wgp + c * slice;
          for (std::int64_t mi = 0; mi < m; ++mi)
            for (std::int64_t j = 0; j < nd; ++j) {
              const double gc = gp[(mi * nd + j) * dout + c];
              if (gc == 0.0) continue;
              const double* islice = ip + (mi * g + j * k) * din;
              for (std::int64_t t = 0; t < slice; ++t) wrow[t] += gc * islice[t];
            }
        }
      }
      if (wants_grad(bias)) {
        double* bgp = ensure_grad(bias).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t c = 0; c < dout; ++c) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < m * nd; ++r) acc += gp[r * dout + c];
          bgp[c] += acc;
        }
      }
    };
  }
  return id;
}

NodeId Tape::conv_1xnd(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& in = value(input);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (in.rank() != 3 || w.rank() != 3 || b.rank() != 1) throw Error("conv_1xnd: bad ranks");
  const std::int64_t m = in.dim(0), nd = in.dim(1), c = in.dim(2);
  const std::int64_t h = w.dim(0);
  if (w.dim(1) != nd || w.dim(2) != c || b.dim(0) != h)
    throw Error("conv_1xnd: weight/bias shape mismatch");
  const std::int64_t slice = nd * c;

  Tensor out({m, h});
  {
    const double* ip = in.ptr();
    const double* wp = w.ptr();
    const double* bp = b.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t mi = 0; mi < m; ++mi) {
      const double* islice = ip + mi * slice;
      double* orow = op + mi * h;
      for (std::int64_t hi = 0; hi < h; ++hi) {
        const double* wrow = wp + hi * slice;
        double acc = bp[hi];
        for (std::int64_t t = 0; t < slice; ++t) acc += wrow[t] * islice[t];
        orow[hi] = acc;
      }
    }
  }

  const bool rg = wants_grad(input) || wants_grad(weight) || wants_grad(bias);
  NodeId id = push(std::move(out), rg, nullptr, "conv_1xnd");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, weight, bias, m, h,
                                                        slice]() {
      const Tensor& gr = nodes_[static_cast<std::size_t>(id)].grad;
      const double* gp = gr.ptr();
      const double* ip = value(input).ptr();
      const double* wp = value(weight).ptr();
      if (wants_grad(input)) {
        double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t mi = 0; mi < m; ++mi) {
          double* islice = igp + mi * slice;
          const double* grow = gp + mi * h;
          for (std::int64_t hi = 0; hi < h; ++hi) {
            const double gh = grow[hi];
            if (gh == 0.0) continue;
            const double* wrow = wp + hi * slice;
            for (std::int64_t t = 0; t < slice; ++t) islice[t] += gh * wrow[t];
          }
        }
      }
      if (wants_grad(weight)) {
        double* wgp = ensure_grad(weight).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t hi = 0; hi < h; ++hi) {
          double* wrow = wgp + hi * slice;
          for (std::int64_t mi = 0; mi < m; ++mi) {
            const double gh = gp[mi * h + hi];
            if (gh == 0.0) continue;
            const double* islice = ip + mi * slice;
            for (std::int64_t t = 0; t < slice; ++t) wrow[t] += gh * islice[t];
          }
        }
      }
      if (wants_grad(bias)) {
        double* bgp = ensure_grad(bias).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t hi = 0; hi < h; ++hi) {
          double acc = 0.0;
          for (std::int64_t mi = 0; mi < m; ++mi) acc += gp[mi * h + hi];
          bgp[hi] += acc;
        }
      }
    };
  }
  return id;
}

NodeId Tape::linear(NodeId input, NodeId weight, NodeId bias) {
  const Tensor& in = value(input);
  const Tensor& w = value(weight);
  if (w.rank() != 2) throw Error("linear: weight must be rank 2");
  const std::int64_t din = in.shape.back();
  const std::int64_t rows = leading_rows(in);
  const std::int64_t dout = w.dim(0);
  if (w.dim(1) != din) throw Error("linear: weight shape mismatch");
  const double* bp = nullptr;
  if (bias != kNoNode) {
    const Tensor& b = value(bias);
    if (b.rank() != 1 || b.dim(0) != dout) throw Error("linear: bias shape mismatch");
    bp = b.ptr();
  }

  std::vector<std::int64_t> out_shape(in.shape.begin(), in.shape.end() - 1);
  out_shape.push_back(dout);
  Tensor out(out_shape);
  {
    const double* ip = in.ptr();
    const double* wp = w.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* irow = ip + r * din;
      double* orow = op + r * dout;
      for (std::int64_t o = 0; o < dout; ++o) {
        const double* wrow = wp + o * din;
        double acc = bp ? bp[o] : 0.0;
        for (std::int64_t t = 0; t < din; ++t) acc += wrow[t] * irow[t];
        orow[o] = acc;
      }
    }
  }

  const bool rg =
      wants_grad(input) || wants_grad(weight) || (bias != kNoNode && wants_grad(bias));
  NodeId id = push(std::move(out), rg, nullptr, "linear");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, weight, bias, rows,
                                                        din, dout]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      const double* ip = value(input).ptr();
      const double* wp = value(weight).ptr();
      if (wants_grad(input)) {
        double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
          double* irow = igp + r * din;
          const double* grow = gp + r * dout;
          for (std::int64_t o = 0; o < dout; ++o) {
            const double go = grow[o];
            if (go == 0.0) continue;
            const double* wrow = wp + o * din;
            for (std::int64_t t = 0; t < din; ++t) irow[t] += go * wrow[t];
          }
        }
      }
      if (wants_grad(weight)) {
        double* wgp = ensure_grad(weight).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < dout; ++o) {
          double* wrow = wgp + o * din;
          for (std::int64_t r = 0; r < rows; ++r) {
            const double go = gp[r * dout + o];
            if (go == 0.0) continue;
            const double* irow = ip + r * din;
            for (std::int64_t t = 0; t < din; ++t) wrow[t] += go * irow[t];
          }
        }
      }
      if (bias != kNoNode && wants_grad(bias)) {
        double* bgp = ensure_grad(bias).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < dout; ++o) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < rows; ++r) acc += gp[r * dout + o];
          bgp[o] += acc;
        }
      }
    };
  }
  return id;
}

NodeId Tape::relu(NodeId input) {
  const Tensor& in = value(input);
  Tensor out(in.shape);
  const std::int64_t n = in.numel();
  {
    const double* ip = in.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) op[i] = ip[i] > 0.0 ? ip[i] : 0.0;
  }
  const bool rg = wants_grad(input);
  NodeId id = push(std::move(out), rg, nullptr, "relu");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, n]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      const double* ip = value(input).ptr();
      double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i)
        if (ip[i] > 0.0) igp[i] += gp[i];
    };
  }
  return id;
}

NodeId Tape::max_over_group(NodeId input) {
  const Tensor& in = value(input);
  if (in.rank() != 3) throw Error("max_over_group: input must be rank 3");
  const std::int64_t m = in.dim(0), g = in.dim(1), d = in.dim(2);

  Tensor out({m, d});
  std::vector<int> argmax(static_cast<std::size_t>(m * d));
  {
    const double* ip = in.ptr();
    double* op = out.ptr();
    int* ap = argmax.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t mi = 0; mi < m; ++mi)
      for (std::int64_t di = 0; di < d; ++di) {
        double best = ip[(mi * g) * d + di];
        int barg = 0;
        for (std::int64_t gi = 1; gi < g; ++gi) {
          const double v = ip[(mi * g + gi) * d + di];
          if (v > best) {
            best = v;
            barg = static_cast<int>(gi);
          }
        }
        op[mi * d + di] = best;
        ap[mi * d + di] = barg;
      }
  }

  const bool rg = wants_grad(input);
  NodeId id = push(std::move(out), rg, nullptr, "max_over_group");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, m, g, d,
                                                        argmax = std::move(argmax)]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
      for (std::int64_t mi = 0; mi < m; ++mi)
        for (std::int64_t di = 0; di < d; ++di)
          igp[(mi * g + argmax[static_cast<std::size_t>(mi * d + di)]) * d + di] +=
              gp[mi * d + di];
    };
  }
  return id;
}

NodeId Tape::concat_channels(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != tb.rank()) throw Error("concat_channels: rank mismatch");
  for (int i = 0; i + 1 < ta.rank(); ++i)
    if (ta.dim(i) != tb.dim(i)) throw Error("concat_channels: leading dim mismatch");
  const std::int64_t rows = leading_rows(ta);
  const std::int64_t d1 = ta.shape.back(), d2 = tb.shape.back();

  std::vector<std::int64_t> out_shape(ta.shape.begin(), ta.shape.end() - 1);
  out_shape.push_back(d1 + d2);
  Tensor out(out_shape);
  {
    const double* pa = ta.ptr();
    const double* pb = tb.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      std::memcpy(op + r * (d1 + d2), pa + r * d1, static_cast<std::size_t>(d1) * sizeof(double));
      std::memcpy(op + r * (d1 + d2) + d1, pb + r * d2,
                  static_cast<std::size_t>(d2) * sizeof(double));
    }
  }

  const bool rg = wants_grad(a) || wants_grad(b);
  NodeId id = push(std::move(out), rg, nullptr, "concat_channels");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, a, b, rows, d1, d2]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      if (wants_grad(a)) {
        double* ga = ensure_grad(a).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t t = 0; t < d1; ++t) ga[r * d1 + t] += gp[r * (d1 + d2) + t];
      }
      if (wants_grad(b)) {
        double* gb = ensure_grad(b).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t t = 0; t < d2; ++t) gb[r * d2 + t] += gp[r * (d1 + d2) + d1 + t];
      }
    };
  }
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw Error("add: shape mismatch");
  const std::int64_t n = ta.numel();
  Tensor out(ta.shape);
  {
    const double* pa = ta.ptr();
    const double* pb = tb.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) op[i] = pa[i] + pb[i];
  }
  const bool rg = wants_grad(a) || wants_grad(b);
  NodeId id = push(std::move(out), rg, nullptr, "add");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, a, b, n]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      if (wants_grad(a)) {
        double* ga = ensure_grad(a).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) ga[i] += gp[i];
      }
      if (wants_grad(b)) {
        double* gb = ensure_grad(b).ptr();
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) gb[i] += gp[i];
      }
    };
  }
  return id;
}

NodeId Tape::softmax_rows(NodeId input) {
  const Tensor& in = value(input);
  if (in.rank() != 2) throw Error("softmax_rows: input must be rank 2");
  const std::int64_t m = in.dim(0), c = in.dim(1);
  if (c < 2) throw Error("softmax_rows: need at least 2 columns");

  Tensor out({m, c});
  {
    const double* ip = in.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < m; ++r) {
      const double* irow = ip + r * c;
      double* orow = op + r * c;
      double mx = irow[0];
      for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, irow[j]);
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        orow[j] = std::exp(irow[j] - mx);
        sum += orow[j];
      }
      for (std::int64_t j = 0; j < c; ++j) orow[j] /= sum;
    }
  }

  const bool rg = wants_grad(input);
  NodeId id = push(std::move(out), rg, nullptr, "softmax_rows");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, m, c]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      const double* p = nodes_[static_cast<std::size_t>(id)].value.ptr();
      double* igp = ensure_grad(input).ptr();
#pragma omp parallel for schedule(static)
      for (std::int64_t r = 0; r < m; ++r) {
        const double* grow = gp + r * c;
        const double* prow = p + r * c;
        double dot = 0.0;
        for (std::int64_t j = 0; j < c; ++j) dot += grow[j] * prow[j];
        for (std::int64_t j = 0; j < c; ++j) igp[r * c + j] += prow[j] * (grow[j] - dot);
      }
    };
  }
  return id;
}

NodeId Tape::interpolate(NodeId src_features, const InterpTable& table) {
  const Tensor& src = value(src_features);
  if (src.rank() != 2) throw Error("interpolate: source features must be rank 2");
  const std::int64_t ns = src.dim(0), d = src.dim(1);
  const int k = table.k;
  if (static_cast<std::int64_t>(table.idx.size()) != table.n_dst * k ||
      table.weight.size() != table.idx.size())
    throw Error("interpolate: malformed table");
  for (int idx : table.idx)
    if (idx < 0 || idx >= ns) throw Error("interpolate: source index out of range");

  Tensor out({table.n_dst, d});
  {
    const double* sp = src.ptr();
    double* op = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < table.n_dst; ++r) {
      double* orow = op + r * d;
      for (int j = 0; j < k; ++j) {
        const double w = table.weight[static_cast<std::size_t>(r * k + j)];
        if (w == 0.0) continue;
        const double* srow =
            sp + static_cast<std::int64_t>(table.idx[static_cast<std::size_t>(r * k + j)]) * d;
        for (std::int64_t t = 0; t < d; ++t) orow[t] += w * srow[t];
      }
    }
  }

  const bool rg = wants_grad(src_features);
  NodeId id = push(std::move(out), rg, nullptr, "interpolate");
  if (rg) {
    std::vector<int> idx = table.idx;
    std::vector<double> wts = table.weight;
    const std::int64_t n_dst = table.n_dst;
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, src_features, idx = std::move(idx),
                                                        wts = std::move(wts), n_dst, k, d]() {
      const double* gp = nodes_[static_cast<std::size_t>(id)].grad.ptr();
      double* sgp = ensure_grad(src_features).ptr();
#pragma omp parallel for schedule(static)
      for (std::int64_t a = 0; a < d; ++a)
        for (std::int64_t r = 0; r < n_dst; ++r) {
          const double g = gp[r * d + a];
          if (g == 0.0) continue;
          for (int j = 0; j < k; ++j) {
            const double w = wts[static_cast<std::size_t>(r * k + j)];
            if (w == 0.0) continue;
            sgp[static_cast<std::int64_t>(idx[static_cast<std::size_t>(r * k + j)]) * d + a] +=
                w * g;
          }
        }
    };
  }
  return id;
}

NodeId Tape::weighted_cross_entropy(NodeId logits, std::span<const int> labels,
                                    std::span<const double> class_weights, LossKind kind,
                                    int mask_label) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw Error("weighted_cross_entropy: logits must be rank 2");
  const std::int64_t n = z.dim(0), c = z.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw Error("weighted_cross_entropy: label count mismatch");
  if (static_cast<std::int64_t>(class_weights.size()) != c)
    throw Error("weighted_cross_entropy: class weight count mismatch");
  for (int y : labels)
    if (y < 0 || (y >= static_cast<int>(c) && y != mask_label))
      throw Error("weighted_cross_entropy: label out of range");

  std::int64_t contributing = 0;
  for (int y : labels)
    if (y != mask_label) ++contributing;
  if (contributing == 0) throw DataError("weighted_cross_entropy: all points masked");

  // Stable per-row softmax recomputed in backward from the saved
  // probabilities. (1 - p) is clamped away from zero for the
  // per-class-binary form.
  constexpr double kEps = 1e-15;

  Tensor probs({n, c});
  std::vector<double> row_loss(static_cast<std::size_t>(n), 0.0);
  {
    const double* zp = z.ptr();
    double* pp = probs.ptr();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < n; ++r) {
      const double* zrow = zp + r * c;
      double* prow = pp + r * c;
      double mx = zrow[0];
      for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, zrow[j]);
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        prow[j] = std::exp(zrow[j] - mx);
        sum += prow[j];
      }
      for (std::int64_t j = 0; j < c; ++j) prow[j] /= sum;

      const int y = labels[static_cast<std::size_t>(r)];
      if (y == mask_label) continue;
      const double w = class_weights[static_cast<std::size_t>(y)];
      double l = 0.0;
      if (kind == LossKind::Categorical) {
        l = -w * std::log(std::max(prow[y], kEps));
      } else {
        for (std::int64_t j = 0; j < c; ++j) {
          const double pj = prow[j];
          if (j == y)
            l -= w * std::log(std::max(pj, kEps));
          else
            l -= w * std::log(std::max(1.0 - pj, kEps));
        }
      }
      row_loss[static_cast<std::size_t>(r)] = l;
    }
  }
  double total = 0.0;
  for (double l : row_loss) total += l;  // fixed order, independent of threading

  Tensor out({1});
  out.data[0] = total / static_cast<double>(contributing);

  const bool rg = wants_grad(logits);
  NodeId id = push(std::move(out), rg, nullptr, "weighted_cross_entropy");
  if (rg) {
    std::vector<int> labels_copy(labels.begin(), labels.end());
    std::vector<double> weights_copy(class_weights.begin(), class_weights.end());
    nodes_[static_cast<std::size_t>(id)].backward_fn =
        [this, id, logits, probs = std::move(probs), labels = std::move(labels_copy),
         weights = std::move(weights_copy), kind, mask_label, n, c, contributing]() {
          constexpr double kEps = 1e-15;
          const double seed = nodes_[static_cast<std::size_t>(id)].grad.data[0];
          const double scale = seed / static_cast<double>(contributing);
          const double* pp = probs.ptr();
          double* zgp = ensure_grad(logits).ptr();
#pragma omp parallel for schedule(static)
          for (std::int64_t r = 0; r < n; ++r) {
            const int y = labels[static_cast<std::size_t>(r)];
            if (y == mask_label) continue;
            const double w = weights[static_cast<std::size_t>(y)];
            const double* prow = pp + r * c;
            double* grow = zgp + r * c;
            if (kind == LossKind::Categorical) {
              for (std::int64_t j = 0; j < c; ++j)
                grow[j] += scale * w * (prow[j] - (j == y ? 1.0 : 0.0));
            } else {
              // dl/dz_a = t_a - p_a * sum_c t_c with
              // t_c = -w            for c == y
              // t_c =  w p_c/(1-p_c) otherwise
              double tsum = 0.0;
              for (std::int64_t j = 0; j < c; ++j) {
                const double pj = prow[j];
                const double tj =
                    (j == y) ? -w : w * pj / std::max(1.0 - pj, kEps);
                tsum += tj;
              }
              for (std::int64_t j = 0; j < c; ++j) {
                const double pj = prow[j];
                const double tj =
                    (j == y) ? -w : w * pj / std::max(1.0 - pj, kEps);
                grow[j] += scale * (tj - pj * tsum);
              }
            }
          }
        };
  }
  return id;
}

NodeId Tape::project(NodeId input, Tensor r) {
  const Tensor& in = value(input);
  if (!in.same_shape(r)) throw Error("project: shape mismatch");
  const std::int64_t n = in.numel();
  double acc = 0.0;
  const double* ip = in.ptr();
  const double* rp = r.ptr();
  for (std::int64_t i = 0; i < n; ++i) acc += ip[i] * rp[i];
  Tensor out({1});
  out.data[0] = acc;

  const bool rg = wants_grad(input);
  NodeId id = push(std::move(out), rg, nullptr, "project");
  if (rg) {
    nodes_[static_cast<std::size_t>(id)].backward_fn = [this, id, input, r = std::move(r), n]() {
      const double seed = nodes_[static_cast<std::size_t>(id)].grad.data[0];
      double* igp = ensure_grad(input).ptr();
      const double* rp = r.ptr();
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) igp[i] += seed * rp[i];
    };
  }
  return id;
}

void Tape::backward(NodeId root, double seed) {
  if (backward_done_) throw Error("Tape::backward: tape already swept");
  backward_done_ = true;
  Node& r = nodes_[static_cast<std::size_t>(root)];
  if (r.value.numel() != 1) throw Error("Tape::backward: root must be scalar");
  if (!r.requires_grad) throw Error("Tape::backward: root does not require grad");
  ensure_grad(root).data[0] = seed;

  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward_fn && n.requires_grad && !n.grad.data.empty()) n.backward_fn();
  }

  for (auto& n : nodes_) {
    if (n.store != nullptr && !n.grad.data.empty()) {
      Tensor& g = n.store->grad(n.param_name);
      const std::int64_t cnt = g.numel();
      double* gp = g.ptr();
      const double* sp = n.grad.ptr();
      for (std::int64_t i = 0; i < cnt; ++i) gp[i] += sp[i];
    }
  }
}

}  // namespace dfcn
