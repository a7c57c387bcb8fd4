#include "dfcn/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dfcn {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto v : counts) t += v;
  return t;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes) throw DataError("ConfusionMatrix::merge: size mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> gt, int n_classes,
                          int sentinel) {
  if (pred.size() != gt.size()) throw DataError("confusion: pred/gt length mismatch");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int g = gt[i];
    if (g == sentinel) continue;
    const int p = pred[i];
    if (g < 0 || g >= n_classes) throw DataError("confusion: ground-truth label out of range");
    if (p < 0 || p >= n_classes) throw DataError("confusion: predicted label out of range");
    ++cm.at(g, p);
  }
  return cm;
}

double f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<PRF> precision_recall_f1(const ConfusionMatrix& cm) {
  const int c = cm.n_classes;
  std::vector<PRF> out(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    const std::int64_t tp = cm.at(k, k);
    std::int64_t fp = 0, fn = 0;
    for (int j = 0; j < c; ++j) {
      if (j != k) {
        fp += cm.at(j, k);
        fn += cm.at(k, j);
      }
    }
    PRF& m = out[static_cast<std::size_t>(k)];
    m.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = f1_score(m.precision, m.recall);
  }
  return out;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const std::int64_t t = cm.total();
  if (t == 0) throw DataError("overall_accuracy: empty confusion matrix");
  std::int64_t diag = 0;
  for (int k = 0; k < cm.n_classes; ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(t);
}

double average_f1(const std::vector<PRF>& per_class) {
  if (per_class.empty()) throw DataError("average_f1: no classes");
  double s = 0.0;
  for (const auto& m : per_class) s += m.f1;
  return s / static_cast<double>(per_class.size());
}

std::string format_confusion(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "gt\\pred";
  for (int j = 0; j < cm.n_classes; ++j)
    os << '\t' << (j < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                      : std::to_string(j));
  os << '\n';
  for (int g = 0; g < cm.n_classes; ++g) {
    os << (g < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(g)]
                                              : std::to_string(g));
    for (int p = 0; p < cm.n_classes; ++p) os << '\t' << cm.at(g, p);
    os << '\n';
  }
  return os.str();
}

std::string format_metrics(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  const auto prf = precision_recall_f1(cm);
  std::ostringstream os;
  char buf[160];
  os << "class\tprecision\trecall\tf1\n";
  for (int k = 0; k < cm.n_classes; ++k) {
    const auto& m = prf[static_cast<std::size_t>(k)];
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.3f\t%.3f\n",
                  (k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)].c_str()
                                                      : std::to_string(k).c_str()),
                  m.precision, m.recall, m.f1);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "overall_accuracy\t%.3f\naverage_f1\t%.3f\n",
                overall_accuracy(cm), average_f1(prf));
  os << buf;
  return os.str();
}

std::vector<Rgb> default_palette(int n_classes) {
  static const std::vector<Rgb> base = {
      {255, 255, 0},   // powerline
      {0, 180, 0},     // low vegetation
      {128, 128, 128}, // impervious surface
      {255, 0, 255},   // car
      {255, 128, 0},   // fence/hedge
      {255, 0, 0},     // roof
      {0, 255, 255},   // facade
      {128, 64, 0},    // shrub
      {0, 100, 0},     // tree
  };
  std::vector<Rgb> out;
  for (int i = 0; i < n_classes; ++i) {
    const Rgb& c = base[static_cast<std::size_t>(i) % base.size()];
    out.push_back(i < static_cast<int>(base.size())
                      ? c
                      : Rgb{(i * 53) % 256, (i * 101) % 256, (i * 197) % 256});
  }
  return out;
}

namespace {

void write_ply(const PointCloud& cloud, std::span<const int> labels,
               const std::vector<Rgb>& colors, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("export: cannot open " + path);
  const std::size_t n = cloud.size();
  os << "ply\nformat ascii 1.0\nelement vertex " << n
     << "\nproperty double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "property int label\nend_header\n";
  char line[256];
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb& c = colors[i];
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %d %d %d %d\n", cloud.x[i], cloud.y[i],
                  cloud.z[i], c[0], c[1], c[2], labels[i]);
    os << line;
  }
  if (!os) throw DataError("export: write failed for " + path);
}

}  // namespace

void export_labeled_cloud(const PointCloud& cloud, std::span<const int> labels,
                          const std::vector<Rgb>& palette, const std::string& path) {
  if (labels.size() != cloud.size()) throw DataError("export_labeled_cloud: label mismatch");
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  if (static_cast<int>(palette.size()) <= max_label)
    throw DataError("export_labeled_cloud: palette smaller than the class count");
  std::vector<Rgb> colors(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    colors[i] = palette[static_cast<std::size_t>(labels[i])];
  write_ply(cloud, labels, colors, path);
}

void export_error_map(const PointCloud& cloud, std::span<const int> pred,
                      std::span<const int> gt, const std::string& path) {
  if (pred.size() != cloud.size() || gt.size() != cloud.size())
    throw DataError("export_error_map: label mismatch");
  std::vector<Rgb> colors(cloud.size());
  std::vector<int> correct(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool ok = pred[i] == gt[i];
    colors[i] = ok ? Rgb{0, 255, 0} : Rgb{255, 0, 0};
    correct[i] = ok ? 1 : 0;
  }
  write_ply(cloud, correct, colors, path);
}

}  // namespace dfcn
