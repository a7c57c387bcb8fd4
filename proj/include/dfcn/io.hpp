#pragma once

#include <span>
#include <string>
#include <vector>

#include "dfcn/point_cloud.hpp"

namespace dfcn {

// Whitespace-separated text points, one per line, column order given by
// a spec string such as "x y z intensity returns label". Unknown column
// names are rejected; "-" skips a column.
struct ColumnSpec {
  std::vector<std::string> columns;

  static ColumnSpec parse(const std::string& spec);
  bool has(const std::string& name) const;
};

inline const char* kDefaultColumns = "x y z intensity returns label";

// Rows with an unparseable label map to `unlabeled_sentinel`; any other
// malformed field is an error naming the line. Lines that are empty or
// start with '#' are skipped.
PointCloud load_points(const std::string& path, const ColumnSpec& columns,
                       int unlabeled_sentinel);

// Writes the cloud in the given column order; `pred` (when non-empty)
// is appended as a final predicted-label column.
void save_points(const std::string& path, const PointCloud& cloud, const ColumnSpec& columns,
                 std::span<const int> pred = {});

}  // namespace dfcn
