#include "dfcn/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dfcn {

std::vector<Block> tile_blocks(const PointCloud& cloud, double grid, double min_fraction) {
  if (cloud.empty()) throw DataError("tile_blocks: empty cloud");
  if (grid <= 0.0) throw DataError("tile_blocks: grid must be positive");
  if (min_fraction < 0.0 || min_fraction >= 1.0)
    throw DataError("tile_blocks: min_fraction must be in [0, 1)");

  double minx = cloud.x[0], maxx = cloud.x[0], miny = cloud.y[0], maxy = cloud.y[0];
  for (std::size_t i = 1; i < cloud.size(); ++i) {
    minx = std::min(minx, cloud.x[i]);
    maxx = std::max(maxx, cloud.x[i]);
    miny = std::min(miny, cloud.y[i]);
    maxy = std::max(maxy, cloud.y[i]);
  }

  // Cell counts from the bounding box; remnant strips below the merge
  // threshold collapse into the previous row/column.
  auto axis_cells = [&](double lo, double hi) {
    const double extent = hi - lo;
    if (extent <= 0.0) return 1;
    int cells = std::max(1, static_cast<int>(std::ceil(extent / grid)));
    if (cells > 1 && extent - (cells - 1) * grid < min_fraction * grid) --cells;
    return cells;
  };
  const int ncols = axis_cells(minx, maxx);
  const int nrows = axis_cells(miny, maxy);

  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    int cx = std::min(static_cast<int>((cloud.x[i] - minx) / grid), ncols - 1);
    int cy = std::min(static_cast<int>((cloud.y[i] - miny) / grid), nrows - 1);
    cells[{cy, cx}].push_back(static_cast<int>(i));
  }

  std::vector<Block> blocks;
  for (auto& [key, idx] : cells) {
    const auto [cy, cx] = key;
    Block b;
    b.origin[0] = minx + cx * grid;
    b.origin[1] = miny + cy * grid;
    const bool last_x = cx == ncols - 1;
    const bool last_y = cy == nrows - 1;
    b.extent[0] = last_x ? std::max(grid, maxx - b.origin[0]) : grid;
    b.extent[1] = last_y ? std::max(grid, maxy - b.origin[1]) : grid;
    b.point_indices = std::move(idx);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

Patch sample_training_patch(const PointCloud& cloud, Rng& rng,
                            const std::array<double, 3>& cuboid, int n) {
  if (cloud.empty()) throw DataError("sample_training_patch: empty cloud");
  if (n < 1) throw DataError("sample_training_patch: need n >= 1");

  const int center = static_cast<int>(uniform_int(rng, static_cast<std::int64_t>(cloud.size())));
  const double cx = cloud.x[static_cast<std::size_t>(center)];
  const double cy = cloud.y[static_cast<std::size_t>(center)];
  const double cz = cloud.z[static_cast<std::size_t>(center)];

  std::vector<int> inside;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (std::fabs(cloud.x[i] - cx) <= cuboid[0] / 2 &&
        std::fabs(cloud.y[i] - cy) <= cuboid[1] / 2 &&
        std::fabs(cloud.z[i] - cz) <= cuboid[2] / 2)
      inside.push_back(static_cast<int>(i));
  }

  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  if (static_cast<int>(inside.size()) >= n) {
    // partial Fisher-Yates, without replacement
    for (int s = 0; s < n; ++s) {
      const std::int64_t j =
          s + uniform_int(rng, static_cast<std::int64_t>(inside.size()) - s);
      std::swap(inside[static_cast<std::size_t>(s)], inside[static_cast<std::size_t>(j)]);
      chosen.push_back(inside[static_cast<std::size_t>(s)]);
    }
  } else {
    for (int s = 0; s < n; ++s)
      chosen.push_back(inside[static_cast<std::size_t>(
          uniform_int(rng, static_cast<std::int64_t>(inside.size())))]);
  }

  Patch patch;
  patch.points = cloud.subset(chosen);
  patch.source_indices = std::move(chosen);
  return patch;
}

Patch apply_dropout(const Patch& patch, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw DataError("apply_dropout: ratio must be in [0, 1)");
  const int n = static_cast<int>(patch.points.size());
  const int keep = static_cast<int>(std::llround(n * (1.0 - ratio)));
  if (keep == n) return patch;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int s = 0; s < keep; ++s) {
    const std::int64_t j = s + uniform_int(rng, static_cast<std::int64_t>(n - s));
    std::swap(order[static_cast<std::size_t>(s)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());

  Patch out;
  out.points = patch.points.subset(kept);
  out.source_indices.reserve(kept.size());
  for (int i : kept)
    out.source_indices.push_back(patch.source_indices.empty()
                                     ? i
                                     : patch.source_indices[static_cast<std::size_t>(i)]);
  out.source_block = patch.source_block;
  out.centered = patch.centered;
  out.frame = patch.frame;
  return out;
}

Patch center_normalize(Patch patch) {
  if (patch.points.empty()) throw DataError("center_normalize: empty patch");
  PointCloud& pts = patch.points;
  const std::size_t n = pts.size();

  double sx = 0.0, sy = 0.0;
  double zmin = std::numeric_limits<double>::max();
  double imin = std::numeric_limits<double>::max(), imax = -std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < n; ++i) {
    sx += pts.x[i];
    sy += pts.y[i];
    zmin = std::min(zmin, pts.z[i]);
    if (!pts.intensity.empty()) {
      imin = std::min(imin, pts.intensity[i]);
      imax = std::max(imax, pts.intensity[i]);
    }
  }
  PatchFrame frame;
  frame.centroid_x = sx / static_cast<double>(n);
  frame.centroid_y = sy / static_cast<double>(n);
  frame.z_min = zmin;
  frame.intensity_min = pts.intensity.empty() ? 0.0 : imin;
  frame.intensity_max = pts.intensity.empty() ? 0.0 : imax;

  const double irange = frame.intensity_max - frame.intensity_min;
  for (std::size_t i = 0; i < n; ++i) {
    pts.x[i] -= frame.centroid_x;
    pts.y[i] -= frame.centroid_y;
    pts.z[i] -= frame.z_min;
    if (!pts.intensity.empty())
      pts.intensity[i] = irange > 0.0 ? (pts.intensity[i] - frame.intensity_min) / irange : 0.0;
  }
  patch.centered = true;
  patch.frame = frame;
  return patch;
}

PointCloud denormalize(const PointCloud& cloud, const PatchFrame& frame) {
  PointCloud out = cloud;
  const double irange = frame.intensity_max - frame.intensity_min;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.x[i] += frame.centroid_x;
    out.y[i] += frame.centroid_y;
    out.z[i] += frame.z_min;
    if (!out.intensity.empty())
      out.intensity[i] = irange > 0.0 ? out.intensity[i] * irange + frame.intensity_min
                                      : frame.intensity_min;
  }
  return out;
}

Patch block_patch(const PointCloud& cloud, const Block& block, int block_id) {
  Patch patch;
  patch.points = cloud.subset(block.point_indices);
  patch.source_indices = block.point_indices;
  patch.source_block = block_id;
  return center_normalize(std::move(patch));
}

}  // namespace dfcn
