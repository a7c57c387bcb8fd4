#pragma once

#include <cstdint>
#include <vector>

#include "dfcn/error.hpp"

namespace dfcn {

// Columnar point store. `returns` and `labels` are optional; an empty
// vector means the column is absent. Labels use the convention
// label == n_classes for "unlabeled" (one past the last class id).
struct PointCloud {
  std::vector<double> x, y, z;
  std::vector<double> intensity;
  std::vector<int> returns;
  std::vector<int> labels;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
  bool has_returns() const { return !returns.empty(); }
  bool has_labels() const { return !labels.empty(); }

  void reserve(std::size_t n);
  void append(double px, double py, double pz, double inten, int ret = -1, int label = -1);
  PointCloud subset(const std::vector<int>& indices) const;

  // Checks column alignment, finite coordinates, and (when labels are
  // present) label <= n_classes. Throws DataError on violation.
  void validate(int n_classes = -1) const;
};

struct Block {
  double origin[2];
  double extent[2];
  std::vector<int> point_indices;
};

// Normalization frame recorded by center_normalize so original
// coordinates stay recoverable.
struct PatchFrame {
  double centroid_x = 0.0, centroid_y = 0.0;
  double z_min = 0.0;
  double intensity_min = 0.0, intensity_max = 0.0;
};

struct Patch {
  PointCloud points;
  std::vector<int> source_indices;  // rows in the parent cloud
  int source_block = -1;
  bool centered = false;
  PatchFrame frame;
};

}  // namespace dfcn
