#pragma once

#include <span>
#include <vector>

#include "dfcn/dknn.hpp"

// Serial brute-force implementations of the search contracts. These are
// the ground truth the grid-accelerated kernels are tested (and
// benchmarked) against; O(M*n), intended for clouds up to ~10k points.
namespace dfcn::reference {

// Exhaustive per-sector scan + sort. Same contract as the production
// searches, independently coded.
SectorNeighborhood oracle_knn(const PointCloud& points, std::span<const int> queries,
                              const SectorQueryConfig& cfg);

SectorNeighborhood oracle_unpartitioned_knn(const PointCloud& points,
                                            std::span<const int> queries, int k, double radius,
                                            Metric metric);

// Greedy farthest point sampling, recomputing min-distances from
// scratch each pick (O(N^2 * m)).
std::vector<int> oracle_fps(const PointCloud& points, int m, int start);

}  // namespace dfcn::reference
