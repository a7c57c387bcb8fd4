#pragma once

#include <string>
#include <vector>

#include "dfcn/point_cloud.hpp"
#include "dfcn/rng.hpp"

namespace dfcn {

// Desk-scale labeled scenes built from geometric primitives, each
// mapped to a class id:
//   plane  - horizontal rectangle at height z (ground-like)
//   box    - horizontal rectangle at height z (roof-like; same geometry
//            as plane, intent differs only in parameters)
//   facade - vertical walls on the perimeter of a rectangle, z0..z1
//   wire   - line segment between two 3D endpoints (powerline-like)
//   clump  - axis-aligned Gaussian blob (vegetation-like)
struct Primitive {
  enum class Kind { Plane, Box, Facade, Wire, Clump };
  Kind kind = Kind::Plane;
  int class_id = 0;
  int count = 0;
  // rectangle (plane/box/facade) or endpoints (wire)
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double z = 0, z1 = 0;           // height / top-of-wall or wire end z
  double cx = 0, cy = 0, cz = 0;  // clump center
  double r = 1.0, rz = 1.0;       // clump sigmas (xy, z)
  double noise = 0.0;             // geometric jitter sigma
  double intensity = 0.5;
  double intensity_noise = 0.0;
};

struct SceneSpec {
  int n_classes = 9;
  std::vector<Primitive> primitives;
};

PointCloud synth_scene(const SceneSpec& spec, Rng& rng);

// Key/value text format, one primitive per line:
//   classes 9
//   primitive kind=plane class=2 count=900 x0=0 y0=0 x1=30 y1=30 z=0
//             noise=0.05 intensity=0.8 inoise=0.04   (single line)
SceneSpec parse_scene_spec(const std::string& path);
void write_scene_spec(const SceneSpec& spec, const std::string& path);

// The built-in 9-class scene used by tests and docs: ground split into
// impervious/low-vegetation, buildings with roofs and facades, trees,
// shrubs, hedges, cars, and powerlines, repeated per 30 m cell so every
// block sees every class. `cells` is the cell count per axis.
SceneSpec demo_scene_spec(int cells = 4, int points_per_cell = 3400, std::uint64_t seed = 7);

}  // namespace dfcn
