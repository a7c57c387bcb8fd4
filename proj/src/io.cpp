#include "dfcn/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dfcn {

namespace {

const char* kKnown[] = {"x", "y", "z", "intensity", "returns", "label", "-"};

bool parse_double(const std::string& tok, double& out) {
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size() && !tok.empty();
}

bool parse_int(const std::string& tok, int& out) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty()) return false;
  out = static_cast<int>(v);
  return true;
}

}  // namespace

ColumnSpec ColumnSpec::parse(const std::string& spec) {
  ColumnSpec cs;
  std::istringstream is(spec);
  std::string tok;
  while (is >> tok) {
    if (std::find(std::begin(kKnown), std::end(kKnown), tok) == std::end(kKnown))
      throw DataError("column spec: unknown column '" + tok + "'");
    cs.columns.push_back(tok);
  }
  for (const char* required : {"x", "y", "z"})
    if (!cs.has(required))
      throw DataError(std::string("column spec: missing mandatory column '") + required + "'");
  return cs;
}

bool ColumnSpec::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

PointCloud load_points(const std::string& path, const ColumnSpec& columns,
                       int unlabeled_sentinel) {
  std::ifstream is(path);
  if (!is) throw DataError("load_points: cannot open " + path);

  PointCloud cloud;
  const bool want_returns = columns.has("returns");
  const bool want_labels = columns.has("label");

  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> toks;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    toks.clear();
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (toks.empty()) continue;
    if (toks.size() < columns.columns.size())
      throw DataError("load_points: line " + std::to_string(lineno) + ": expected " +
                      std::to_string(columns.columns.size()) + " columns, got " +
                      std::to_string(toks.size()));

    double px = 0, py = 0, pz = 0, inten = 0;
    int ret = 0, label = unlabeled_sentinel;
    for (std::size_t c = 0; c < columns.columns.size(); ++c) {
      const std::string& name = columns.columns[c];
      const std::string& t = toks[c];
      if (name == "-") continue;
      if (name == "label") {
        if (!parse_int(t, label) || label < 0) label = unlabeled_sentinel;
        continue;
      }
      if (name == "returns") {
        if (!parse_int(t, ret))
          throw DataError("load_points: line " + std::to_string(lineno) +
                          ": bad returns value '" + t + "'");
        continue;
      }
      double v;
      if (!parse_double(t, v))
        throw DataError("load_points: line " + std::to_string(lineno) + ": bad " + name +
                        " value '" + t + "'");
      if (name == "x") px = v;
      else if (name == "y") py = v;
      else if (name == "z") pz = v;
      else inten = v;
    }
    cloud.x.push_back(px);
    cloud.y.push_back(py);
    cloud.z.push_back(pz);
    cloud.intensity.push_back(inten);
    if (want_returns) cloud.returns.push_back(ret);
    if (want_labels) cloud.labels.push_back(label);
  }
  cloud.validate();
  return cloud;
}

void save_points(const std::string& path, const PointCloud& cloud, const ColumnSpec& columns,
                 std::span<const int> pred) {
  if (!pred.empty() && pred.size() != cloud.size())
    throw DataError("save_points: prediction column misaligned");
  std::ofstream os(path);
  if (!os) throw DataError("save_points: cannot open " + path);

  char buf[64];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    bool first = true;
    for (const auto& name : columns.columns) {
      if (!first) os << ' ';
      first = false;
      if (name == "x" || name == "y" || name == "z" || name == "intensity") {
        const double v = name == "x"   ? cloud.x[i]
                         : name == "y" ? cloud.y[i]
                         : name == "z" ? cloud.z[i]
                                       : (cloud.intensity.empty() ? 0.0 : cloud.intensity[i]);
        std::snprintf(buf, sizeof(buf), "%.8g", v);
        os << buf;
      } else if (name == "returns") {
        os << (cloud.returns.empty() ? 0 : cloud.returns[i]);
      } else if (name == "label") {
        os << (cloud.labels.empty() ? -1 : cloud.labels[i]);
      } else {
        os << 0;  // "-" placeholder
      }
    }
    if (!pred.empty()) os << ' ' << pred[i];
    os << '\n';
  }
  if (!os) throw DataError("save_points: write failed for " + path);
}

}  // namespace dfcn
