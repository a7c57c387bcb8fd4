#pragma once

#include <string>
#include <vector>

#include "dfcn/dknn.hpp"
#include "dfcn/tape.hpp"

namespace dfcn {

// Coordinates and features of one resolution level.
struct LevelState {
  PointCloud points;
  NodeId features = kNoNode;
  int level = 0;
};

// Greedy farthest point sampling over 3D coordinates: start first, then
// repeatedly the point maximizing the minimum distance to the selected
// set, ties to the lowest index.
std::vector<int> farthest_point_sampling(const PointCloud& points, int m, int start = 0);

// Inverse-distance-weighted stencil from src points to dst points:
// k nearest sources per destination (all of them if fewer than k),
// weights 1/d^power normalized to sum 1. A zero-distance source (lowest
// index first) short-circuits to an exact copy.
InterpTable inverse_distance_stencil(const PointCloud& src, const PointCloud& dst, int k,
                                     double power);

struct DownBlockParams {
  std::string weight;
  std::string bias;
};

// FPS to m centers, ball-grouping of `nsample` neighbors (3D metric,
// self-fill when short), per-neighbor linear+relu on concatenated
// (relative xyz, features), then max aggregation.
LevelState down_block(Tape& tape, const LevelState& state, int m, double radius, int nsample,
                      ParamStore& store, const DownBlockParams& params, int fps_start = 0);

// Interpolate src features onto skip's points, concatenate with skip
// features, linear+relu down to the target width.
LevelState up_block(Tape& tape, const LevelState& src, const LevelState& skip, int k,
                    double power, ParamStore& store, const DownBlockParams& params);

}  // namespace dfcn
