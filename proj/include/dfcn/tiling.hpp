#pragma once

#include <array>
#include <vector>

#include "dfcn/point_cloud.hpp"
#include "dfcn/rng.hpp"

namespace dfcn {

// Partition the cloud into grid-aligned blocks in xy. Every point lands
// in exactly one block. A remnant row/column whose extent is below
// min_fraction * grid merges into its neighbor; empty cells are
// omitted.
std::vector<Block> tile_blocks(const PointCloud& cloud, double grid, double min_fraction = 0.5);

// Random training example: a cuboid centered on a random point of the
// cloud, then n points sampled from it, without replacement when the
// cuboid holds at least n points, with replacement otherwise.
Patch sample_training_patch(const PointCloud& cloud, Rng& rng,
                            const std::array<double, 3>& cuboid = {30.0, 30.0, 40.0},
                            int n = 8192);

// Keep round(N * (1 - ratio)) points, uniform without replacement.
Patch apply_dropout(const Patch& patch, double ratio, Rng& rng);

// Shift xy to the patch centroid, z so min z = 0, rescale intensity to
// [0,1] by the per-patch range (constant intensity maps to 0). The
// inverse frame is recorded on the patch.
Patch center_normalize(Patch patch);
PointCloud denormalize(const PointCloud& cloud, const PatchFrame& frame);

// Block contents as a normalized patch (for native-size inference).
Patch block_patch(const PointCloud& cloud, const Block& block, int block_id);

}  // namespace dfcn
