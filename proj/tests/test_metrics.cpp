#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dfcn/metrics.hpp"
#include "dfcn/rng.hpp"
#include "test_util.hpp"

using namespace dfcn;

namespace {

// the nine-category results table: precision, recall, published F1
constexpr double kPrecision[9] = {0.718, 0.836, 0.927, 0.862, 0.621, 0.954, 0.637, 0.364, 0.767};
constexpr double kRecall[9] = {0.690, 0.771, 0.902, 0.714, 0.264, 0.907, 0.575, 0.626, 0.822};
constexpr double kF1[9] = {0.704, 0.802, 0.914, 0.781, 0.370, 0.930, 0.605, 0.460, 0.794};

}  // namespace

TEST_CASE("confusion basics") {
  std::vector<int> gt{0, 1, 2, 1, 0};
  ConfusionMatrix diag = confusion(gt, gt, 3, 3);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      if (g != p) CHECK(diag.at(g, p) == 0);
  CHECK(diag.at(0, 0) == 2);
  CHECK(diag.at(1, 1) == 2);
  CHECK(diag.at(2, 2) == 1);

  std::vector<int> gt2{1, 1, 1};
  std::vector<int> pred2{2, 2, 2};
  ConfusionMatrix off = confusion(pred2, gt2, 3, 3);
  CHECK(off.at(1, 2) == 3);
  CHECK(off.total() == 3);

  // sentinel rows excluded
  std::vector<int> gt3{0, 3, 1};
  std::vector<int> pred3{0, 2, 1};
  CHECK(confusion(pred3, gt3, 3, 3).total() == 2);

  CHECK_THROWS_AS(confusion(pred2, gt, 3, 3), DataError);
}

TEST_CASE("confusion equals a naive recount on random labels") {
  Rng rng = make_rng(17);
  const int c = 7, n = 5000;
  std::vector<int> gt(n), pred(n);
  for (auto& v : gt) v = (int)uniform_int(rng, c + 1);  // sentinel included
  for (auto& v : pred) v = (int)uniform_int(rng, c);
  const ConfusionMatrix cm = confusion(pred, gt, c, c);

  std::vector<std::int64_t> naive((std::size_t)c * c, 0);
  for (int i = 0; i < n; ++i)
    if (gt[(std::size_t)i] != c)
      ++naive[(std::size_t)(gt[(std::size_t)i] * c + pred[(std::size_t)i])];
  CHECK(cm.counts == naive);

  // merge associativity: two halves add to the whole
  const std::vector<int> p1(pred.begin(), pred.begin() + n / 2);
  const std::vector<int> g1(gt.begin(), gt.begin() + n / 2);
  const std::vector<int> p2(pred.begin() + n / 2, pred.end());
  const std::vector<int> g2(gt.begin() + n / 2, gt.end());
  ConfusionMatrix merged = confusion(p1, g1, c, c);
  merged.merge(confusion(p2, g2, c, c));
  CHECK(merged.counts == cm.counts);
}

TEST_CASE("published precision/recall pairs reproduce the published F1 row") {
  for (int k = 0; k < 9; ++k) {
    const double f1 = f1_score(kPrecision[k], kRecall[k]);
    CHECK(std::fabs(f1 - kF1[k]) < 0.001);
  }
  CHECK(std::fabs(f1_score(0.718, 0.690) - 0.704) < 0.001);
}

TEST_CASE("average of the published F1 row") {
  double sum = 0.0;
  for (double f : kF1) sum += f;
  CHECK(std::fabs(sum / 9.0 - 0.707) < 0.0005);
}

TEST_CASE("degenerate and perfect F1 cases") {
  CHECK(f1_score(1.0, 1.0) == 1.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);

  // class absent from gt and pred: all-zero row/column -> (0,0,0)
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 4;
  const auto prf = precision_recall_f1(cm);
  CHECK(prf[2].precision == 0.0);
  CHECK(prf[2].recall == 0.0);
  CHECK(prf[2].f1 == 0.0);

  CHECK(overall_accuracy(cm) == 1.0);
}

TEST_CASE("metric identities on random confusion matrices") {
  Rng rng = make_rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + (int)uniform_int(rng, 8);
    ConfusionMatrix cm(c);
    for (auto& v : cm.counts) v = uniform_int(rng, 50);
    if (cm.total() == 0) cm.at(0, 0) = 1;

    const auto prf = precision_recall_f1(cm);
    const double oa = overall_accuracy(cm);

    // OA equals the gt-frequency-weighted mean of per-class recall
    double weighted = 0.0;
    for (int k = 0; k < c; ++k) {
      std::int64_t row = 0;
      for (int j = 0; j < c; ++j) row += cm.at(k, j);
      weighted += (double)row / (double)cm.total() * prf[(std::size_t)k].recall;
    }
    CHECK(std::fabs(oa - weighted) <= 1e-12);

    for (const auto& m : prf) {
      if (m.precision > 0.0 && m.recall > 0.0) {
        CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-12);
        CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
        // harmonic <= geometric
        CHECK(m.f1 <= std::sqrt(m.precision * m.recall) + 1e-12);
      }
    }

    // naive recomputation of OA / average F1
    long double diag = 0.0L;
    for (int k = 0; k < c; ++k) diag += (long double)cm.at(k, k);
    CHECK(std::fabs(oa - (double)(diag / (long double)cm.total())) <= 1e-12);
    long double f1sum = 0.0L;
    for (const auto& m : prf) f1sum += (long double)m.f1;
    CHECK(std::fabs(average_f1(prf) - (double)(f1sum / c)) <= 1e-12);
  }
}

TEST_CASE("exports color by class and by correctness") {
  Rng rng = make_rng(19);
  PointCloud cloud = testutil::random_cloud(rng, 50);
  std::vector<int> gt(50), pred(50);
  for (auto& v : gt) v = (int)uniform_int(rng, 4);
  pred = gt;
  for (int i = 0; i < 50; i += 3) pred[(std::size_t)i] = (gt[(std::size_t)i] + 1) % 4;

  const auto dir = std::filesystem::temp_directory_path() / "dfcn_metrics_test";
  std::filesystem::create_directories(dir);

  const std::string labeled = (dir / "labeled.ply").string();
  export_labeled_cloud(cloud, pred, default_palette(4), labeled);

  const std::string errmap = (dir / "errors.ply").string();
  export_error_map(cloud, pred, gt, errmap);

  // recount red records; must equal the error count
  std::ifstream is(errmap);
  std::string line;
  int red = 0, green = 0;
  bool body = false;
  while (std::getline(is, line)) {
    if (line == "end_header") {
      body = true;
      continue;
    }
    if (!body) continue;
    double x, y, z;
    int r, g, b, label;
    CHECK(std::sscanf(line.c_str(), "%lf %lf %lf %d %d %d %d", &x, &y, &z, &r, &g, &b,
                      &label) == 7);
    if (r == 255 && g == 0) ++red;
    if (r == 0 && g == 255) ++green;
  }
  int errors = 0;
  for (int i = 0; i < 50; ++i)
    if (gt[(std::size_t)i] != pred[(std::size_t)i]) ++errors;
  CHECK(red == errors);
  CHECK(green == 50 - errors);

  // palette smaller than the class count is rejected
  CHECK_THROWS_AS(export_labeled_cloud(cloud, pred, default_palette(2), labeled), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("all-correct and all-wrong error maps") {
  Rng rng = make_rng(20);
  PointCloud cloud = testutil::random_cloud(rng, 10);
  std::vector<int> gt(10, 1), right(10, 1), wrong(10, 2);
  const auto dir = std::filesystem::temp_directory_path() / "dfcn_metrics_test2";
  std::filesystem::create_directories(dir);

  for (auto [pred, color] : {std::pair{&right, "0 255 0"}, std::pair{&wrong, "255 0 0"}}) {
    const std::string path = (dir / "map.ply").string();
    export_error_map(cloud, *pred, gt, path);
    std::ifstream is(path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    // every body line carries the expected color
    const auto records = std::count(text.begin(), text.end(), '\n');
    CHECK(records > 10);  // header + body
    std::size_t hits = 0, pos = 0;
    while ((pos = text.find(color, pos)) != std::string::npos) {
      ++hits;
      pos += 1;
    }
    CHECK(hits == 10);
  }
  std::filesystem::remove_all(dir);
}
