#include "dfcn/point_cloud.hpp"

#include <cmath>

namespace dfcn {

void PointCloud::reserve(std::size_t n) {
  x.reserve(n);
  y.reserve(n);
  z.reserve(n);
  intensity.reserve(n);
}

void PointCloud::append(double px, double py, double pz, double inten, int ret, int label) {
  x.push_back(px);
  y.push_back(py);
  z.push_back(pz);
  intensity.push_back(inten);
  if (ret >= 0) returns.push_back(ret);
  if (label >= 0) labels.push_back(label);
}

PointCloud PointCloud::subset(const std::vector<int>& indices) const {
  PointCloud out;
  out.reserve(indices.size());
  for (int i : indices) {
    const std::size_t u = static_cast<std::size_t>(i);
    out.x.push_back(x[u]);
    out.y.push_back(y[u]);
    out.z.push_back(z[u]);
    if (!intensity.empty()) out.intensity.push_back(intensity[u]);
    if (!returns.empty()) out.returns.push_back(returns[u]);
    if (!labels.empty()) out.labels.push_back(labels[u]);
  }
  return out;
}

void PointCloud::validate(int n_classes) const {
  const std::size_t n = size();
  if (y.size() != n || z.size() != n) throw DataError("PointCloud: xyz columns misaligned");
  if (!intensity.empty() && intensity.size() != n)
    throw DataError("PointCloud: intensity column misaligned");
  if (!returns.empty() && returns.size() != n)
    throw DataError("PointCloud: returns column misaligned");
  if (!labels.empty() && labels.size() != n)
    throw DataError("PointCloud: labels column misaligned");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]) || !std::isfinite(z[i]))
      throw DataError("PointCloud: non-finite coordinate at row " + std::to_string(i));
  if (n_classes >= 0 && !labels.empty())
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] < 0 || labels[i] > n_classes)
        throw DataError("PointCloud: label out of range at row " + std::to_string(i));
}

}  // namespace dfcn
