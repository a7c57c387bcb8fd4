#include "dfcn/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfcn {

std::vector<int> farthest_point_sampling(const PointCloud& points, int m, int start) {
  const std::int64_t n = static_cast<std::int64_t>(points.size());
  if (m < 1 || m > n) throw DataError("farthest_point_sampling: need 1 <= m <= point count");
  if (start < 0 || start >= n) throw DataError("farthest_point_sampling: bad start index");

  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(m));
  picked.push_back(start);
  std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::max());

  int last = start;
  for (int step = 1; step < m; ++step) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const double dx = points.x[static_cast<std::size_t>(i)] - points.x[static_cast<std::size_t>(last)];
      const double dy = points.y[static_cast<std::size_t>(i)] - points.y[static_cast<std::size_t>(last)];
      const double dz = points.z[static_cast<std::size_t>(i)] - points.z[static_cast<std::size_t>(last)];
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < min_d2[static_cast<std::size_t>(i)]) min_d2[static_cast<std::size_t>(i)] = d2;
    }
    min_d2[static_cast<std::size_t>(last)] = -1.0;  // selected points never win again

    // argmax of (distance, -index): associative combine, so the result
    // is identical for any thread partition
    int best = -1;
    double best_d = -1.0;
#pragma omp parallel
    {
      int lbest = -1;
      double lbest_d = -1.0;
#pragma omp for schedule(static) nowait
      for (std::int64_t i = 0; i < n; ++i) {
        const double d = min_d2[static_cast<std::size_t>(i)];
        if (d > lbest_d || (d == lbest_d && static_cast<int>(i) < lbest)) {
          lbest_d = d;
          lbest = static_cast<int>(i);
        }
      }
#pragma omp critical
      {
        if (lbest_d > best_d || (lbest_d == best_d && lbest != -1 && (best == -1 || lbest < best))) {
          best_d = lbest_d;
          best = lbest;
        }
      }
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

InterpTable inverse_distance_stencil(const PointCloud& src, const PointCloud& dst, int k,
                                     double power) {
  const std::int64_t ns = static_cast<std::int64_t>(src.size());
  const std::int64_t nd = static_cast<std::int64_t>(dst.size());
  if (ns == 0) throw DataError("inverse_distance_stencil: empty source");
  const int kk = static_cast<int>(std::min<std::int64_t>(k, ns));

  InterpTable table;
  table.n_dst = nd;
  table.k = kk;
  table.idx.assign(static_cast<std::size_t>(nd) * kk, 0);
  table.weight.assign(static_cast<std::size_t>(nd) * kk, 0.0);

#pragma omp parallel
  {
    std::vector<std::pair<double, int>> best(static_cast<std::size_t>(kk));
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < nd; ++r) {
      int count = 0;
      for (std::int64_t j = 0; j < ns; ++j) {
        const double dx = src.x[static_cast<std::size_t>(j)] - dst.x[static_cast<std::size_t>(r)];
        const double dy = src.y[static_cast<std::size_t>(j)] - dst.y[static_cast<std::size_t>(r)];
        const double dz = src.z[static_cast<std::size_t>(j)] - dst.z[static_cast<std::size_t>(r)];
        const std::pair<double, int> cand{dx * dx + dy * dy + dz * dz, static_cast<int>(j)};
        if (count == kk && !(cand < best[static_cast<std::size_t>(count - 1)])) continue;
        int pos = count < kk ? count : kk - 1;
        while (pos > 0 && cand < best[static_cast<std::size_t>(pos - 1)]) {
          best[static_cast<std::size_t>(pos)] = best[static_cast<std::size_t>(pos - 1)];
          --pos;
        }
        best[static_cast<std::size_t>(pos)] = cand;
        if (count < kk) ++count;
      }

      int* irow = table.idx.data() + r * kk;
      double* wrow = table.weight.data() + r * kk;
      if (best[0].first == 0.0) {
        // exact copy from the coincident source (lowest index: ties in
        // the sorted buffer resolve by index already)
        for (int j = 0; j < kk; ++j) {
          irow[j] = best[0].second;
          wrow[j] = j == 0 ? 1.0 : 0.0;
        }
        continue;
      }
      double sum = 0.0;
      for (int j = 0; j < count; ++j) {
        wrow[j] = 1.0 / std::pow(std::sqrt(best[static_cast<std::size_t>(j)].first), power);
        irow[j] = best[static_cast<std::size_t>(j)].second;
        sum += wrow[j];
      }
      for (int j = 0; j < count; ++j) wrow[j] /= sum;
    }
  }
  return table;
}

namespace {

Tensor relative_coordinates(const PointCloud& points, const std::vector<int>& centers,
                            const SectorNeighborhood& nbr) {
  const std::int64_t m = static_cast<std::int64_t>(centers.size());
  const int g = nbr.group_size();
  Tensor rel({m, g, 3});
  double* rp = rel.ptr();
#pragma omp parallel for schedule(static)
  for (std::int64_t mi = 0; mi < m; ++mi) {
    const int c = centers[static_cast<std::size_t>(mi)];
    const int* row = nbr.row(static_cast<std::size_t>(mi));
    for (int s = 0; s < g; ++s) {
      const int j = row[s];
      double* out = rp + (mi * g + s) * 3;
      out[0] = points.x[static_cast<std::size_t>(j)] - points.x[static_cast<std::size_t>(c)];
      out[1] = points.y[static_cast<std::size_t>(j)] - points.y[static_cast<std::size_t>(c)];
      out[2] = points.z[static_cast<std::size_t>(j)] - points.z[static_cast<std::size_t>(c)];
    }
  }
  return rel;
}

}  // namespace

LevelState down_block(Tape& tape, const LevelState& state, int m, double radius, int nsample,
                      ParamStore& store, const DownBlockParams& params, int fps_start) {
  const std::vector<int> centers = farthest_point_sampling(state.points, m, fps_start);
  const SectorNeighborhood nbr =
      unpartitioned_knn(state.points, centers, nsample, radius, Metric::XYZ);

  NodeId grouped = tape.gather_group(state.features, nbr.indices, m, nbr.group_size());
  NodeId rel = tape.input(relative_coordinates(state.points, centers, nbr));
  NodeId cat = tape.concat_channels(rel, grouped);
  NodeId transformed = tape.relu(
      tape.linear(cat, tape.param(store, params.weight), tape.param(store, params.bias)));

  LevelState out;
  out.points = state.points.subset(centers);
  out.features = tape.max_over_group(transformed);
  out.level = state.level + 1;
  return out;
}

LevelState up_block(Tape& tape, const LevelState& src, const LevelState& skip, int k,
                    double power, ParamStore& store, const DownBlockParams& params) {
  const InterpTable table = inverse_distance_stencil(src.points, skip.points, k, power);
  NodeId interpolated = tape.interpolate(src.features, table);
  NodeId cat = tape.concat_channels(interpolated, skip.features);

  LevelState out;
  out.points = skip.points;
  out.features = tape.relu(
      tape.linear(cat, tape.param(store, params.weight), tape.param(store, params.bias)));
  out.level = src.level - 1;
  return out;
}

}  // namespace dfcn
