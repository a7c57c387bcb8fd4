#include "dfcn/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dfcn::reference {

namespace {

struct ScoredIdx {
  double d2;
  int idx;
};

bool scored_less(const ScoredIdx& a, const ScoredIdx& b) {
  return a.d2 < b.d2 || (a.d2 == b.d2 && a.idx < b.idx);
}

int ref_sector(double dx, double dy, int n_dirs) {
  if (dx == 0.0 && dy == 0.0) return 0;
  double theta = std::atan2(dy, dx);
  if (theta < 0.0) theta += 2.0 * std::numbers::pi;
  const double width = 2.0 * std::numbers::pi / n_dirs;
  int s = static_cast<int>(theta / width);
  if (s >= n_dirs) s = n_dirs - 1;
  return s;
}

int ref_octant(double dx, double dy, double dz) {
  int o = 0;
  if (dx < 0.0) o += 1;
  if (dy < 0.0) o += 2;
  if (dz < 0.0) o += 4;
  return o;
}

}  // namespace

SectorNeighborhood oracle_knn(const PointCloud& points, std::span<const int> queries,
                              const SectorQueryConfig& cfg) {
  cfg.validate();
  if (cfg.space == PartitionSpace::Unpartitioned) {
    SectorNeighborhood t =
        oracle_unpartitioned_knn(points, queries, cfg.n_dirs * cfg.k, cfg.radius, Metric::XY);
    t.n_dirs = cfg.n_dirs;
    t.k = cfg.k;
    return t;
  }
  const bool cone = cfg.space == PartitionSpace::Cone3D;
  if (cone && cfg.n_dirs != 8) throw DataError("oracle_knn: cone mode requires n_dirs == 8");

  const int nd = cfg.n_dirs, k = cfg.k;
  const double r2 = cfg.radius * cfg.radius;
  const std::size_t n = points.size();

  SectorNeighborhood out;
  out.n_dirs = nd;
  out.k = k;
  out.indices.assign(queries.size() * static_cast<std::size_t>(nd) * k, 0);

  std::vector<std::vector<ScoredIdx>> groups(static_cast<std::size_t>(nd));
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const int q = queries[qi];
    for (auto& g : groups) g.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<int>(j) == q) continue;
      const double dx = points.x[j] - points.x[q];
      const double dy = points.y[j] - points.y[q];
      const double dz = points.z[j] - points.z[q];
      const double d2 = cone ? dx * dx + dy * dy + dz * dz : dx * dx + dy * dy;
      if (d2 > r2) continue;
      const int g = cone ? ref_octant(dx, dy, dz) : ref_sector(dx, dy, nd);
      groups[static_cast<std::size_t>(g)].push_back({d2, static_cast<int>(j)});
    }
    int* row = out.indices.data() + qi * static_cast<std::size_t>(nd) * k;
    for (int g = 0; g < nd; ++g) {
      auto& cands = groups[static_cast<std::size_t>(g)];
      std::sort(cands.begin(), cands.end(), scored_less);
      for (int s = 0; s < k; ++s)
        row[g * k + s] = s < static_cast<int>(cands.size()) ? cands[static_cast<std::size_t>(s)].idx : q;
    }
  }
  return out;
}

SectorNeighborhood oracle_unpartitioned_knn(const PointCloud& points,
                                            std::span<const int> queries, int k, double radius,
                                            Metric metric) {
  if (k < 1 || radius <= 0.0) throw DataError("oracle_unpartitioned_knn: bad k or radius");
  const double r2 = radius * radius;
  const std::size_t n = points.size();
  const bool use_z = metric == Metric::XYZ;

  SectorNeighborhood out;
  out.n_dirs = 1;
  out.k = k;
  out.indices.assign(queries.size() * static_cast<std::size_t>(k), 0);

  std::vector<ScoredIdx> cands;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const int q = queries[qi];
    cands.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<int>(j) == q) continue;
      const double dx = points.x[j] - points.x[q];
      const double dy = points.y[j] - points.y[q];
      double d2 = dx * dx + dy * dy;
      if (use_z) {
        const double dz = points.z[j] - points.z[q];
        d2 += dz * dz;
      }
      if (d2 <= r2) cands.push_back({d2, static_cast<int>(j)});
    }
    std::sort(cands.begin(), cands.end(), scored_less);
    int* row = out.indices.data() + qi * static_cast<std::size_t>(k);
    for (int s = 0; s < k; ++s)
      row[s] = s < static_cast<int>(cands.size()) ? cands[static_cast<std::size_t>(s)].idx : q;
  }
  return out;
}

std::vector<int> oracle_fps(const PointCloud& points, int m, int start) {
  const int n = static_cast<int>(points.size());
  if (m < 1 || m > n) throw DataError("oracle_fps: need 1 <= m <= point count");
  std::vector<int> picked;
  picked.push_back(start);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[static_cast<std::size_t>(start)] = 1;
  while (static_cast<int>(picked.size()) < m) {
    int best = -1;
    double best_d = -1.0;
    for (int c = 0; c < n; ++c) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      double dmin = std::numeric_limits<double>::max();
      for (int p : picked) {
        const double dx = points.x[c] - points.x[p];
        const double dy = points.y[c] - points.y[p];
        const double dz = points.z[c] - points.z[p];
        dmin = std::min(dmin, dx * dx + dy * dy + dz * dz);
      }
      if (dmin > best_d) {
        best_d = dmin;
        best = c;
      }
    }
    picked.push_back(best);
    taken[static_cast<std::size_t>(best)] = 1;
  }
  return picked;
}

}  // namespace dfcn::reference
