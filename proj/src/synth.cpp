#include "dfcn/synth.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dfcn {

namespace {

void validate_primitive(const Primitive& p, int n_classes) {
  if (p.count < 1) throw DataError("synth: primitive count must be >= 1");
  if (p.class_id < 0 || p.class_id >= n_classes)
    throw DataError("synth: primitive class id out of range");
  switch (p.kind) {
    case Primitive::Kind::Plane:
    case Primitive::Kind::Box:
    case Primitive::Kind::Facade:
      if (p.x1 < p.x0 || p.y1 < p.y0) throw DataError("synth: inverted rectangle");
      break;
    case Primitive::Kind::Clump:
      if (p.r <= 0.0 || p.rz <= 0.0) throw DataError("synth: clump sigma must be positive");
      break;
    case Primitive::Kind::Wire:
      break;
  }
  if (p.noise < 0.0 || p.intensity_noise < 0.0)
    throw DataError("synth: noise must be non-negative");
}

}  // namespace

PointCloud synth_scene(const SceneSpec& spec, Rng& rng) {
  if (spec.n_classes < 1) throw DataError("synth: need at least one class");
  if (spec.primitives.empty()) throw DataError("synth: no primitives");
  for (const auto& p : spec.primitives) validate_primitive(p, spec.n_classes);

  PointCloud cloud;
  for (const auto& p : spec.primitives) {
    for (int i = 0; i < p.count; ++i) {
      double px = 0, py = 0, pz = 0;
      switch (p.kind) {
        case Primitive::Kind::Plane:
        case Primitive::Kind::Box: {
          px = uniform_real(rng, p.x0, p.x1);
          py = uniform_real(rng, p.y0, p.y1);
          pz = p.z + normal(rng, 0.0, p.noise);
          break;
        }
        case Primitive::Kind::Facade: {
          // pick a wall of the rectangle, weighted by wall length
          const double w = p.x1 - p.x0, h = p.y1 - p.y0;
          const double u = uniform_real(rng, 0.0, 2.0 * (w + h));
          if (u < w) {
            px = p.x0 + u;
            py = p.y0;
          } else if (u < 2 * w) {
            px = p.x0 + (u - w);
            py = p.y1;
          } else if (u < 2 * w + h) {
            px = p.x0;
            py = p.y0 + (u - 2 * w);
          } else {
            px = p.x1;
            py = p.y0 + (u - 2 * w - h);
          }
          px += normal(rng, 0.0, p.noise);
          py += normal(rng, 0.0, p.noise);
          pz = uniform_real(rng, p.z, p.z1);
          break;
        }
        case Primitive::Kind::Wire: {
          const double t = uniform_real(rng);
          px = p.x0 + t * (p.x1 - p.x0) + normal(rng, 0.0, p.noise);
          py = p.y0 + t * (p.y1 - p.y0) + normal(rng, 0.0, p.noise);
          pz = p.z + t * (p.z1 - p.z) + normal(rng, 0.0, p.noise);
          break;
        }
        case Primitive::Kind::Clump: {
          px = p.cx + normal(rng, 0.0, p.r);
          py = p.cy + normal(rng, 0.0, p.r);
          pz = p.cz + normal(rng, 0.0, p.rz);
          break;
        }
      }
      const double inten = p.intensity + normal(rng, 0.0, p.intensity_noise);
      cloud.x.push_back(px);
      cloud.y.push_back(py);
      cloud.z.push_back(pz);
      cloud.intensity.push_back(inten);
      cloud.labels.push_back(p.class_id);
    }
  }
  cloud.validate(spec.n_classes);
  return cloud;
}

namespace {

Primitive::Kind parse_kind(const std::string& s) {
  if (s == "plane") return Primitive::Kind::Plane;
  if (s == "box") return Primitive::Kind::Box;
  if (s == "facade") return Primitive::Kind::Facade;
  if (s == "wire") return Primitive::Kind::Wire;
  if (s == "clump") return Primitive::Kind::Clump;
  throw DataError("scene spec: unknown primitive kind '" + s + "'");
}

const char* kind_name(Primitive::Kind k) {
  switch (k) {
    case Primitive::Kind::Plane: return "plane";
    case Primitive::Kind::Box: return "box";
    case Primitive::Kind::Facade: return "facade";
    case Primitive::Kind::Wire: return "wire";
    case Primitive::Kind::Clump: return "clump";
  }
  return "?";
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("scene spec: cannot open " + path);

  SceneSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head.empty()) continue;
    if (head == "classes") {
      ls >> spec.n_classes;
      continue;
    }
    if (head != "primitive")
      throw DataError("scene spec: line " + std::to_string(lineno) + ": unexpected '" + head +
                      "'");
    Primitive p;
    std::string kv;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw DataError("scene spec: line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "kind") p.kind = parse_kind(val);
        else if (key == "class") p.class_id = std::stoi(val);
        else if (key == "count") p.count = std::stoi(val);
        else if (key == "x0") p.x0 = std::stod(val);
        else if (key == "y0") p.y0 = std::stod(val);
        else if (key == "x1") p.x1 = std::stod(val);
        else if (key == "y1") p.y1 = std::stod(val);
        else if (key == "z") p.z = std::stod(val);
        else if (key == "z1") p.z1 = std::stod(val);
        else if (key == "cx") p.cx = std::stod(val);
        else if (key == "cy") p.cy = std::stod(val);
        else if (key == "cz") p.cz = std::stod(val);
        else if (key == "r") p.r = std::stod(val);
        else if (key == "rz") p.rz = std::stod(val);
        else if (key == "noise") p.noise = std::stod(val);
        else if (key == "intensity") p.intensity = std::stod(val);
        else if (key == "inoise") p.intensity_noise = std::stod(val);
        else
          throw DataError("scene spec: line " + std::to_string(lineno) + ": unknown key '" +
                          key + "'");
      } catch (const std::invalid_argument&) {
        throw DataError("scene spec: line " + std::to_string(lineno) + ": bad value for '" +
                        key + "'");
      }
    }
    spec.primitives.push_back(p);
  }
  return spec;
}

void write_scene_spec(const SceneSpec& spec, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("scene spec: cannot open for writing " + path);
  os << "classes " << spec.n_classes << '\n';
  char buf[512];
  for (const auto& p : spec.primitives) {
    std::snprintf(buf, sizeof(buf),
                  "primitive kind=%s class=%d count=%d x0=%.4f y0=%.4f x1=%.4f y1=%.4f "
                  "z=%.4f z1=%.4f cx=%.4f cy=%.4f cz=%.4f r=%.4f rz=%.4f noise=%.4f "
                  "intensity=%.4f inoise=%.4f\n",
                  kind_name(p.kind), p.class_id, p.count, p.x0, p.y0, p.x1, p.y1, p.z, p.z1,
                  p.cx, p.cy, p.cz, p.r, p.rz, p.noise, p.intensity, p.intensity_noise);
    os << buf;
  }
}

SceneSpec demo_scene_spec(int cells, int points_per_cell, std::uint64_t seed) {
  // class ids follow the 9-category airborne convention:
  // 0 powerline, 1 low vegetation, 2 impervious surface, 3 car,
  // 4 fence/hedge, 5 roof, 6 facade, 7 shrub, 8 tree
  constexpr double kCell = 30.0;
  const double scale = static_cast<double>(points_per_cell) / 3400.0;
  auto scaled = [&](int base) { return std::max(8, static_cast<int>(std::lround(base * scale))); };

  SceneSpec spec;
  spec.n_classes = 9;
  Rng rng = make_rng(seed);

  for (int gy = 0; gy < cells; ++gy) {
    for (int gx = 0; gx < cells; ++gx) {
      const double ox = gx * kCell, oy = gy * kCell;

      // ground: one impervious strip and one low-vegetation strip,
      // split at a jittered x
      const double split = ox + uniform_real(rng, 12.0, 18.0);
      Primitive road;
      road.kind = Primitive::Kind::Plane;
      road.class_id = 2;
      road.count = scaled(900);
      road.x0 = ox;
      road.y0 = oy;
      road.x1 = split;
      road.y1 = oy + kCell;
      road.z = 0.0;
      road.noise = 0.03;
      road.intensity = 0.82;
      road.intensity_noise = 0.04;
      spec.primitives.push_back(road);

      Primitive grass = road;
      grass.class_id = 1;
      grass.count = scaled(900);
      grass.x0 = split;
      grass.x1 = ox + kCell;
      grass.z = 0.15;
      grass.noise = 0.10;
      grass.intensity = 0.45;
      grass.intensity_noise = 0.08;
      spec.primitives.push_back(grass);

      // one building per cell: roof plus facades
      const double bx = ox + uniform_real(rng, 3.0, 8.0);
      const double by = oy + uniform_real(rng, 3.0, 8.0);
      const double bw = uniform_real(rng, 8.0, 12.0);
      const double bh = uniform_real(rng, 8.0, 12.0);
      const double roof_z = uniform_real(rng, 5.0, 7.0);

      Primitive roof;
      roof.kind = Primitive::Kind::Box;
      roof.class_id = 5;
      roof.count = scaled(600);
      roof.x0 = bx;
      roof.y0 = by;
      roof.x1 = bx + bw;
      roof.y1 = by + bh;
      roof.z = roof_z;
      roof.noise = 0.08;
      roof.intensity = 0.60;
      roof.intensity_noise = 0.05;
      spec.primitives.push_back(roof);

      Primitive facade;
      facade.kind = Primitive::Kind::Facade;
      facade.class_id = 6;
      facade.count = scaled(280);
      facade.x0 = bx;
      facade.y0 = by;
      facade.x1 = bx + bw;
      facade.y1 = by + bh;
      facade.z = 0.0;
      facade.z1 = roof_z;
      facade.noise = 0.05;
      facade.intensity = 0.30;
      facade.intensity_noise = 0.06;
      spec.primitives.push_back(facade);

      // trees: two clumps at jittered positions
      for (int t = 0; t < 2; ++t) {
        Primitive tree;
        tree.kind = Primitive::Kind::Clump;
        tree.class_id = 8;
        tree.count = scaled(200);
        tree.cx = ox + uniform_real(rng, 4.0, kCell - 4.0);
        tree.cy = oy + uniform_real(rng, 4.0, kCell - 4.0);
        tree.cz = uniform_real(rng, 4.0, 5.0);
        tree.r = 1.8;
        tree.rz = 1.4;
        tree.intensity = 0.18;
        tree.intensity_noise = 0.07;
        spec.primitives.push_back(tree);
      }

      // shrubs: low clumps
      for (int s = 0; s < 2; ++s) {
        Primitive shrub;
        shrub.kind = Primitive::Kind::Clump;
        shrub.class_id = 7;
        shrub.count = scaled(90);
        shrub.cx = ox + uniform_real(rng, 3.0, kCell - 3.0);
        shrub.cy = oy + uniform_real(rng, 3.0, kCell - 3.0);
        shrub.cz = 0.8;
        shrub.r = 1.2;
        shrub.rz = 0.45;
        shrub.intensity = 0.30;
        shrub.intensity_noise = 0.08;
        spec.primitives.push_back(shrub);
      }

      // hedge row along a jittered line at low height
      Primitive hedge;
      hedge.kind = Primitive::Kind::Wire;
      hedge.class_id = 4;
      hedge.count = scaled(60);
      hedge.x0 = ox + uniform_real(rng, 2.0, 6.0);
      hedge.y0 = oy + uniform_real(rng, 20.0, 28.0);
      hedge.x1 = ox + uniform_real(rng, 24.0, 28.0);
      hedge.y1 = oy + uniform_real(rng, 20.0, 28.0);
      hedge.z = 0.7;
      hedge.z1 = 0.7;
      hedge.noise = 0.35;
      hedge.intensity = 0.38;
      hedge.intensity_noise = 0.08;
      spec.primitives.push_back(hedge);

      // cars parked near the road edge
      Primitive car;
      car.kind = Primitive::Kind::Clump;
      car.class_id = 3;
      car.count = scaled(40);
      car.cx = split - uniform_real(rng, 1.5, 4.0);
      car.cy = oy + uniform_real(rng, 5.0, kCell - 5.0);
      car.cz = 0.8;
      car.r = 0.9;
      car.rz = 0.35;
      car.intensity = 0.70;
      car.intensity_noise = 0.06;
      spec.primitives.push_back(car);

      // powerline wire crossing the cell
      Primitive wire;
      wire.kind = Primitive::Kind::Wire;
      wire.class_id = 0;
      wire.count = scaled(30);
      wire.x0 = ox;
      wire.y0 = oy + uniform_real(rng, 8.0, 22.0);
      wire.x1 = ox + kCell;
      wire.y1 = oy + uniform_real(rng, 8.0, 22.0);
      wire.z = 9.0;
      wire.z1 = 9.0;
      wire.noise = 0.12;
      wire.intensity = 0.12;
      wire.intensity_noise = 0.04;
      spec.primitives.push_back(wire);
    }
  }
  return spec;
}

}  // namespace dfcn
