#pragma once

#include <span>
#include <vector>

#include "dfcn/point_cloud.hpp"

namespace dfcn {

enum class PartitionSpace { Projected2D, Cone3D, Unpartitioned };

struct SectorQueryConfig {
  int n_dirs = 8;
  int k = 1;
  double radius = 5.0;
  PartitionSpace space = PartitionSpace::Projected2D;

  void validate() const {
    if (n_dirs < 1 || k < 1 || radius <= 0.0)
      throw DataError("SectorQueryConfig: need n_dirs >= 1, k >= 1, radius > 0");
  }
};

// Per-query table of n_dirs groups of k point indices, sector-major,
// each group sorted by ascending distance (ties by index). Groups with
// fewer than k in-radius candidates carry the query's own index in the
// trailing slots; coincident points land in group 0 at distance 0.
struct SectorNeighborhood {
  int n_dirs = 1;
  int k = 1;
  std::vector<int> indices;  // queries.size() * n_dirs * k, row-major

  int group_size() const { return n_dirs * k; }
  std::size_t query_count() const {
    return indices.size() / static_cast<std::size_t>(group_size());
  }
  const int* row(std::size_t q) const {
    return indices.data() + q * static_cast<std::size_t>(group_size());
  }
};

// Sector id of `point` around `center` on the xy plane: angular wedges
// of width 2*pi/n_dirs, half-open, counterclockwise from +x. A zero
// offset maps to sector 0.
int sector_index(double cx, double cy, double px, double py, int n_dirs);

// Octant id by offset signs, bit0 = (dx < 0), bit1 = (dy < 0),
// bit2 = (dz < 0); the all-nonnegative octant is 0.
int octant_index(double dx, double dy, double dz);

// k nearest per 2D sector within radius, distances measured on the
// projected xy plane. Grid-hash accelerated, parallel over queries.
SectorNeighborhood directional_knn(const PointCloud& points, std::span<const int> queries,
                                   const SectorQueryConfig& cfg);

// Ablation variant: 3D octant partition, 3D distances. Requires
// n_dirs == 8.
SectorNeighborhood cone_knn_3d(const PointCloud& points, std::span<const int> queries,
                               const SectorQueryConfig& cfg);

enum class Metric { XY, XYZ };

// Plain k-nearest within radius (no angular partition), self-filled
// when short. Returned as a 1 x k sector table.
SectorNeighborhood unpartitioned_knn(const PointCloud& points, std::span<const int> queries,
                                     int k, double radius, Metric metric);

// Dispatch on cfg.space; Unpartitioned searches n_dirs*k nearest on the
// projected plane and keeps the grouped table layout.
SectorNeighborhood neighborhood_search(const PointCloud& points, std::span<const int> queries,
                                       const SectorQueryConfig& cfg);

std::vector<int> all_indices(std::size_t n);

}  // namespace dfcn
