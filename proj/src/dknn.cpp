#include "dfcn/dknn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dfcn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Candidate slot: squared distance first so the pair ordering is the
// documented tie rule (ascending distance, then ascending index).
struct Cand {
  double d2;
  int idx;
  bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && idx < o.idx); }
};

// Fixed-capacity sorted top-k buffer, capacity <= a few dozen in
// practice so insertion sort is the right tool.
class TopK {
 public:
  TopK(Cand* slots, int cap) : slots_(slots), cap_(cap), count_(0) {}

  void insert(const Cand& c) {
    if (count_ == cap_ && !(c < slots_[count_ - 1])) return;
    int pos = count_ < cap_ ? count_ : cap_ - 1;
    while (pos > 0 && c < slots_[pos - 1]) {
      slots_[pos] = slots_[pos - 1];
      --pos;
    }
    slots_[pos] = c;
    if (count_ < cap_) ++count_;
  }

  int count() const { return count_; }

 private:
  Cand* slots_;
  int cap_;
  int count_;
};

// Uniform grid over the cloud's bounding box, CSR layout built with a
// counting sort. Cell size tracks the search radius so a radius query
// only visits a bounded ring of cells.
class Grid {
 public:
  Grid(const PointCloud& pts, double radius, bool three_d)
      : three_d_(three_d) {
    const std::size_t n = pts.size();
    min_[0] = min_[1] = min_[2] = std::numeric_limits<double>::max();
    double mx[3] = {-std::numeric_limits<double>::max(), -std::numeric_limits<double>::max(),
                    -std::numeric_limits<double>::max()};
    for (std::size_t i = 0; i < n; ++i) {
      min_[0] = std::min(min_[0], pts.x[i]);
      min_[1] = std::min(min_[1], pts.y[i]);
      min_[2] = std::min(min_[2], pts.z[i]);
      mx[0] = std::max(mx[0], pts.x[i]);
      mx[1] = std::max(mx[1], pts.y[i]);
      mx[2] = std::max(mx[2], pts.z[i]);
    }
    // Keep the cell count bounded even when the radius is tiny
    // relative to the extent.
    const int axes = three_d ? 3 : 2;
    double cell = radius;
    for (int a = 0; a < axes; ++a)
      cell = std::max(cell, (mx[a] - min_[a]) / 1024.0);
    cell_ = cell;
    ring_ = static_cast<int>(std::ceil(radius / cell_));
    for (int a = 0; a < 3; ++a) {
      dims_[a] = (a < axes) ? std::max<std::int64_t>(
                                  1, static_cast<std::int64_t>((mx[a] - min_[a]) / cell_) + 1)
                            : 1;
    }

    const std::size_t ncells =
        static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) *
        static_cast<std::size_t>(dims_[2]);
    start_.assign(ncells + 1, 0);
    std::vector<int> cell_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      cell_of[i] = cell_id(coord(pts.x[i], 0), coord(pts.y[i], 1), coord(pts.z[i], 2));
      ++start_[static_cast<std::size_t>(cell_of[i]) + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    order_.resize(n);
    std::vector<int> cursor(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < n; ++i)
      order_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(cell_of[i])]++)] =
          static_cast<int>(i);
  }

  template <typename F>
  void visit_near(double qx, double qy, double qz, F&& f) const {
    const std::int64_t cx = coord(qx, 0), cy = coord(qy, 1), cz = coord(qz, 2);
    const std::int64_t z0 = three_d_ ? std::max<std::int64_t>(0, cz - ring_) : 0;
    const std::int64_t z1 = three_d_ ? std::min(dims_[2] - 1, cz + ring_) : 0;
    for (std::int64_t gz = z0; gz <= z1; ++gz)
      for (std::int64_t gy = std::max<std::int64_t>(0, cy - ring_);
           gy <= std::min(dims_[1] - 1, cy + ring_); ++gy)
        for (std::int64_t gx = std::max<std::int64_t>(0, cx - ring_);
             gx <= std::min(dims_[0] - 1, cx + ring_); ++gx) {
          const std::size_t c = static_cast<std::size_t>((gz * dims_[1] + gy) * dims_[0] + gx);
          for (int s = start_[c]; s < start_[c + 1]; ++s) f(order_[static_cast<std::size_t>(s)]);
        }
  }

 private:
  std::int64_t coord(double v, int axis) const {
    if (axis == 2 && !three_d_) return 0;
    std::int64_t c = static_cast<std::int64_t>((v - min_[axis]) / cell_);
    return std::clamp<std::int64_t>(c, 0, dims_[axis] - 1);
  }
  int cell_id(std::int64_t gx, std::int64_t gy, std::int64_t gz) const {
    return static_cast<int>((gz * dims_[1] + gy) * dims_[0] + gx);
  }

  bool three_d_;
  double min_[3];
  double cell_ = 1.0;
  int ring_ = 1;
  std::int64_t dims_[3] = {1, 1, 1};
  std::vector<int> start_;
  std::vector<int> order_;
};

void fill_short_groups(int* row, const Cand* cand, int groups, int cap, const int* counts,
                       int self) {
  for (int g = 0; g < groups; ++g) {
    const Cand* gc = cand + g * cap;
    int* out = row + g * cap;
    for (int s = 0; s < counts[g]; ++s) out[s] = gc[s].idx;
    for (int s = counts[g]; s < cap; ++s) out[s] = self;
  }
}

}  // namespace

int sector_index(double cx, double cy, double px, double py, int n_dirs) {
  const double dx = px - cx, dy = py - cy;
  if (dx == 0.0 && dy == 0.0) return 0;
  double theta = std::atan2(dy, dx);
  if (theta < 0.0) theta += kTwoPi;
  const int s = static_cast<int>(theta / (kTwoPi / n_dirs));
  return std::min(s, n_dirs - 1);
}

int octant_index(double dx, double dy, double dz) {
  return (dx < 0.0 ? 1 : 0) | (dy < 0.0 ? 2 : 0) | (dz < 0.0 ? 4 : 0);
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

SectorNeighborhood directional_knn(const PointCloud& points, std::span<const int> queries,
                                   const SectorQueryConfig& cfg) {
  cfg.validate();
  const int nd = cfg.n_dirs, k = cfg.k;
  const double r2 = cfg.radius * cfg.radius;
  SectorNeighborhood out;
  out.n_dirs = nd;
  out.k = k;
  out.indices.assign(queries.size() * static_cast<std::size_t>(nd) * k, 0);

  const Grid grid(points, cfg.radius, /*three_d=*/false);

  const std::int64_t m = static_cast<std::int64_t>(queries.size());
#pragma omp parallel
  {
    std::vector<Cand> cand(static_cast<std::size_t>(nd) * k);
    std::vector<TopK> tops;
    std::vector<int> counts(static_cast<std::size_t>(nd));
#pragma omp for schedule(static)
    for (std::int64_t qi = 0; qi < m; ++qi) {
      const int q = queries[static_cast<std::size_t>(qi)];
      const double qx = points.x[q], qy = points.y[q];
      tops.clear();
      for (int g = 0; g < nd; ++g) tops.emplace_back(cand.data() + g * k, k);
      grid.visit_near(qx, qy, 0.0, [&](int j) {
        if (j == q) return;
        const double dx = points.x[j] - qx, dy = points.y[j] - qy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r2) return;
        const int s = sector_index(qx, qy, points.x[j], points.y[j], nd);
        tops[static_cast<std::size_t>(s)].insert({d2, j});
      });
      for (int g = 0; g < nd; ++g) counts[static_cast<std::size_t>(g)] = tops[g].count();
      fill_short_groups(out.indices.data() + qi * nd * k, cand.data(), nd, k, counts.data(), q);
    }
  }
  return out;
}

SectorNeighborhood cone_knn_3d(const PointCloud& points, std::span<const int> queries,
                               const SectorQueryConfig& cfg) {
  cfg.validate();
  if (cfg.n_dirs != 8) throw DataError("cone_knn_3d: octant partition requires n_dirs == 8");
  const int k = cfg.k;
  const double r2 = cfg.radius * cfg.radius;
  SectorNeighborhood out;
  out.n_dirs = 8;
  out.k = k;
  out.indices.assign(queries.size() * 8u * k, 0);

  const Grid grid(points, cfg.radius, /*three_d=*/true);

  const std::int64_t m = static_cast<std::int64_t>(queries.size());
#pragma omp parallel
  {
    std::vector<Cand> cand(8u * k);
    std::vector<TopK> tops;
    int counts[8];
#pragma omp for schedule(static)
    for (std::int64_t qi = 0; qi < m; ++qi) {
      const int q = queries[static_cast<std::size_t>(qi)];
      const double qx = points.x[q], qy = points.y[q], qz = points.z[q];
      tops.clear();
      for (int g = 0; g < 8; ++g) tops.emplace_back(cand.data() + g * k, k);
      grid.visit_near(qx, qy, qz, [&](int j) {
        if (j == q) return;
        const double dx = points.x[j] - qx, dy = points.y[j] - qy, dz = points.z[j] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 > r2) return;
        tops[static_cast<std::size_t>(octant_index(dx, dy, dz))].insert({d2, j});
      });
      for (int g = 0; g < 8; ++g) counts[g] = tops[static_cast<std::size_t>(g)].count();
      fill_short_groups(out.indices.data() + qi * 8 * k, cand.data(), 8, k, counts, q);
    }
  }
  return out;
}

SectorNeighborhood unpartitioned_knn(const PointCloud& points, std::span<const int> queries,
                                     int k, double radius, Metric metric) {
  if (k < 1 || radius <= 0.0) throw DataError("unpartitioned_knn: need k >= 1, radius > 0");
  const double r2 = radius * radius;
  SectorNeighborhood out;
  out.n_dirs = 1;
  out.k = k;
  out.indices.assign(queries.size() * static_cast<std::size_t>(k), 0);

  const bool use_z = metric == Metric::XYZ;
  const Grid grid(points, radius, use_z);

  const std::int64_t m = static_cast<std::int64_t>(queries.size());
#pragma omp parallel
  {
    std::vector<Cand> cand(static_cast<std::size_t>(k));
#pragma omp for schedule(static)
    for (std::int64_t qi = 0; qi < m; ++qi) {
      const int q = queries[static_cast<std::size_t>(qi)];
      const double qx = points.x[q], qy = points.y[q], qz = points.z[q];
      TopK top(cand.data(), k);
      grid.visit_near(qx, qy, qz, [&](int j) {
        if (j == q) return;
        const double dx = points.x[j] - qx, dy = points.y[j] - qy;
        double d2 = dx * dx + dy * dy;
        if (use_z) {
          const double dz = points.z[j] - qz;
          d2 += dz * dz;
        }
        if (d2 > r2) return;
        top.insert({d2, j});
      });
      const int count = top.count();
      fill_short_groups(out.indices.data() + qi * k, cand.data(), 1, k, &count, q);
    }
  }
  return out;
}

SectorNeighborhood neighborhood_search(const PointCloud& points, std::span<const int> queries,
                                       const SectorQueryConfig& cfg) {
  switch (cfg.space) {
    case PartitionSpace::Projected2D:
      return directional_knn(points, queries, cfg);
    case PartitionSpace::Cone3D:
      return cone_knn_3d(points, queries, cfg);
    case PartitionSpace::Unpartitioned: {
      SectorNeighborhood t =
          unpartitioned_knn(points, queries, cfg.n_dirs * cfg.k, cfg.radius, Metric::XY);
      t.n_dirs = cfg.n_dirs;
      t.k = cfg.k;
      return t;
    }
  }
  throw Error("neighborhood_search: unknown partition space");
}

}  // namespace dfcn
