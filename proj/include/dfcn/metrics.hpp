#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dfcn/point_cloud.hpp"

namespace dfcn {

// C x C count matrix, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::int64_t> counts;  // row-major

  explicit ConfusionMatrix(int c = 0)
      : n_classes(c), counts(static_cast<std::size_t>(c) * static_cast<std::size_t>(c), 0) {}

  std::int64_t& at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt) * n_classes + pred];
  }
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * n_classes + pred];
  }
  std::int64_t total() const;
  void merge(const ConfusionMatrix& other);
};

// Points whose ground truth equals `sentinel` are excluded.
ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> gt, int n_classes,
                          int sentinel);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 cases are defined as 0 for all three values.
std::vector<PRF> precision_recall_f1(const ConfusionMatrix& cm);
double f1_score(double precision, double recall);

double overall_accuracy(const ConfusionMatrix& cm);
double average_f1(const std::vector<PRF>& per_class);

std::string format_confusion(const ConfusionMatrix& cm, const std::vector<std::string>& names);
std::string format_metrics(const ConfusionMatrix& cm, const std::vector<std::string>& names);

using Rgb = std::array<int, 3>;

// Class colors; palette must cover n_classes entries.
std::vector<Rgb> default_palette(int n_classes);

// ASCII PLY with x y z, red green blue, and the label as a scalar
// property; readable by common viewers.
void export_labeled_cloud(const PointCloud& cloud, std::span<const int> labels,
                          const std::vector<Rgb>& palette, const std::string& path);

// Green = correct, red = incorrect.
void export_error_map(const PointCloud& cloud, std::span<const int> pred,
                      std::span<const int> gt, const std::string& path);

}  // namespace dfcn
