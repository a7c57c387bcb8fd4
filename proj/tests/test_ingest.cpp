#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dfcn/io.hpp"
#include "dfcn/synth.hpp"
#include "dfcn/tiling.hpp"
#include "test_util.hpp"

using namespace dfcn;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dfcn_ingest_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("load_points parses whitespace files") {
  const auto path = temp_file("basic.txt");
  {
    std::ofstream os(path);
    os << "1.0 2.0 3.0 100\n"
          "4.0 5.0 6.0 200\n"
          "# comment line\n"
          "7.0 8.0 9.0 300\n";
  }
  const auto cs = ColumnSpec::parse("x y z intensity");
  const PointCloud cloud = load_points(path.string(), cs, 9);
  CHECK(cloud.size() == 3);
  CHECK(!cloud.has_labels());
  CHECK(!cloud.has_returns());
  CHECK(cloud.x[1] == 4.0);
  CHECK(cloud.intensity[2] == 300.0);
}

TEST_CASE("load_points handles all six columns") {
  const auto path = temp_file("full.txt");
  {
    std::ofstream os(path);
    os << "1 2 3 10 1 0\n2 3 4 20 2 5\n";
  }
  const auto cs = ColumnSpec::parse(kDefaultColumns);
  const PointCloud cloud = load_points(path.string(), cs, 9);
  CHECK(cloud.size() == 2);
  CHECK(cloud.returns == std::vector<int>{1, 2});
  CHECK(cloud.labels == std::vector<int>{0, 5});
}

TEST_CASE("load_points errors name the offending line; bad labels map to the sentinel") {
  const auto path = temp_file("badz.txt");
  {
    std::ofstream os(path);
    os << "1 2 3 10\n1 2 oops 10\n";
  }
  const auto cs = ColumnSpec::parse("x y z intensity");
  try {
    load_points(path.string(), cs, 9);
    CHECK(false);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const auto path2 = temp_file("badlabel.txt");
  {
    std::ofstream os(path2);
    os << "1 2 3 10 1 ?\n1 2 3 10 1 4\n";
  }
  const PointCloud cloud = load_points(path2.string(), ColumnSpec::parse(kDefaultColumns), 9);
  CHECK(cloud.labels == std::vector<int>{9, 4});

  CHECK_THROWS_AS(ColumnSpec::parse("x y intensity"), DataError);  // z missing
  CHECK_THROWS_AS(ColumnSpec::parse("x y z wavelength"), DataError);
}

TEST_CASE("save then load round-trips, including a prediction column") {
  Rng rng = make_rng(50);
  PointCloud cloud = testutil::random_cloud(rng, 20);
  cloud.labels.assign(20, 3);
  std::vector<int> pred(20, 7);

  const auto path = temp_file("roundtrip.txt");
  const auto cs = ColumnSpec::parse("x y z intensity label");
  save_points(path.string(), cloud, cs, pred);

  const auto cs2 = ColumnSpec::parse("x y z intensity label label");  // second label = pred
  // reread with the prediction as the label column to check the append
  std::ifstream is(path.string());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    double x, y, z, inten;
    int label, predicted;
    CHECK(std::sscanf(line.c_str(), "%lf %lf %lf %lf %d %d", &x, &y, &z, &inten, &label,
                      &predicted) == 6);
    CHECK(label == 3);
    CHECK(predicted == 7);
    ++rows;
  }
  CHECK(rows == 20);
  (void)cs2;
}

TEST_CASE("tile_blocks partitions exactly") {
  // uniform 60x60 cloud, grid 30: four blocks
  PointCloud cloud;
  Rng rng = make_rng(51);
  for (int i = 0; i < 4000; ++i)
    cloud.append(uniform_real(rng, 0, 60), uniform_real(rng, 0, 60), 0, 0);
  auto blocks = tile_blocks(cloud, 30.0, 0.5);
  CHECK(blocks.size() == 4);
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.point_indices.size();
  CHECK(total == cloud.size());

  // 61x30 cloud, grid 30, min_fraction 0.5: the 1 m strip merges
  PointCloud strip;
  for (int i = 0; i < 2000; ++i)
    strip.append(uniform_real(rng, 0, 61), uniform_real(rng, 0, 30), 0, 0);
  strip.x[0] = 0.0;
  strip.x[1] = 61.0;  // pin the extent
  auto merged = tile_blocks(strip, 30.0, 0.5);
  CHECK(merged.size() == 2);
  for (const auto& b : merged)
    for (int i : b.point_indices) {
      CHECK(strip.x[(std::size_t)i] >= b.origin[0]);
      CHECK(strip.x[(std::size_t)i] <= b.origin[0] + b.extent[0]);
      CHECK(strip.y[(std::size_t)i] >= b.origin[1]);
      CHECK(strip.y[(std::size_t)i] <= b.origin[1] + b.extent[1]);
    }
}

TEST_CASE("tile_blocks partition property on a random cloud") {
  Rng rng = make_rng(52);
  const PointCloud cloud = testutil::random_cloud(rng, 10000, 97.0);
  const auto blocks = tile_blocks(cloud, 30.0, 0.5);
  std::vector<int> seen(cloud.size(), 0);
  for (const auto& b : blocks) {
    CHECK(!b.point_indices.empty());
    for (int i : b.point_indices) ++seen[(std::size_t)i];
  }
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("sample_training_patch without and with replacement") {
  Rng rng = make_rng(53);
  // cloud of exactly n points inside one cuboid: a permutation
  PointCloud small = testutil::random_cloud(rng, 64, 10.0, 5.0);
  Rng r1 = make_rng(1);
  Patch patch = sample_training_patch(small, r1, {30, 30, 40}, 64);
  std::set<int> unique(patch.source_indices.begin(), patch.source_indices.end());
  CHECK(unique.size() == 64);

  // half the points: duplicates appear, all inside the cloud
  Rng r2 = make_rng(2);
  Patch dup = sample_training_patch(small, r2, {30, 30, 40}, 128);
  CHECK(dup.points.size() == 128);
  for (int idx : dup.source_indices) CHECK(idx < 64);

  // determinism
  Rng r3 = make_rng(7), r4 = make_rng(7);
  const Patch a = sample_training_patch(small, r3, {30, 30, 40}, 32);
  const Patch b = sample_training_patch(small, r4, {30, 30, 40}, 32);
  CHECK(a.source_indices == b.source_indices);

  PointCloud empty;
  Rng r5 = make_rng(1);
  CHECK_THROWS_AS(sample_training_patch(empty, r5, {30, 30, 40}, 8), DataError);
}

TEST_CASE("patch points stay inside the cuboid") {
  Rng rng = make_rng(54);
  const PointCloud cloud = testutil::random_cloud(rng, 3000, 100.0, 50.0);
  for (int trial = 0; trial < 10; ++trial) {
    Rng r = make_rng((std::uint64_t)trial);
    const Patch patch = sample_training_patch(cloud, r, {30, 30, 40}, 512);
    double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300, minz = 1e300,
           maxz = -1e300;
    for (std::size_t i = 0; i < patch.points.size(); ++i) {
      minx = std::min(minx, patch.points.x[i]);
      maxx = std::max(maxx, patch.points.x[i]);
      miny = std::min(miny, patch.points.y[i]);
      maxy = std::max(maxy, patch.points.y[i]);
      minz = std::min(minz, patch.points.z[i]);
      maxz = std::max(maxz, patch.points.z[i]);
    }
    CHECK(maxx - minx <= 30.0);
    CHECK(maxy - miny <= 30.0);
    CHECK(maxz - minz <= 40.0);
  }
}

TEST_CASE("apply_dropout retention counts and determinism") {
  Rng rng = make_rng(55);
  Patch patch;
  patch.points = testutil::random_cloud(rng, 8192, 30.0, 40.0);
  for (int i = 0; i < 8192; ++i) patch.source_indices.push_back(i);

  Rng r0 = make_rng(3);
  const Patch same = apply_dropout(patch, 0.0, r0);
  CHECK(same.points.size() == 8192);

  Rng r1 = make_rng(3);
  const Patch dropped = apply_dropout(patch, 0.125, r1);
  CHECK(dropped.points.size() == 7168);  // 8192 * 0.875
  std::set<int> unique(dropped.source_indices.begin(), dropped.source_indices.end());
  CHECK(unique.size() == dropped.points.size());  // no duplicates

  Rng r2 = make_rng(3);
  const Patch again = apply_dropout(patch, 0.125, r2);
  CHECK(again.source_indices == dropped.source_indices);

  Rng r3 = make_rng(3);
  CHECK_THROWS_AS(apply_dropout(patch, 1.0, r3), DataError);
}

TEST_CASE("center_normalize moves the frame and round-trips") {
  Rng rng = make_rng(56);
  Patch patch;
  patch.points = testutil::random_cloud(rng, 500, 20.0, 10.0);
  for (auto& x : patch.points.x) x += 10.0;
  for (auto& y : patch.points.y) y += 20.0;
  for (auto& z : patch.points.z) z += 5.0;
  const PointCloud original = patch.points;

  const Patch normalized = center_normalize(patch);
  double sx = 0, sy = 0, zmin = 1e300, imin = 1e300, imax = -1e300;
  for (std::size_t i = 0; i < normalized.points.size(); ++i) {
    sx += normalized.points.x[i];
    sy += normalized.points.y[i];
    zmin = std::min(zmin, normalized.points.z[i]);
    imin = std::min(imin, normalized.points.intensity[i]);
    imax = std::max(imax, normalized.points.intensity[i]);
  }
  CHECK(std::fabs(sx / 500.0) <= 1e-9);
  CHECK(std::fabs(sy / 500.0) <= 1e-9);
  CHECK(zmin == 0.0);
  CHECK(imin == 0.0);
  CHECK(imax == 1.0);

  const PointCloud restored = denormalize(normalized.points, normalized.frame);
  for (std::size_t i = 0; i < restored.size(); ++i) {
    CHECK(std::fabs(restored.x[i] - original.x[i]) <=
          1e-9 * std::max(1.0, std::fabs(original.x[i])));
    CHECK(std::fabs(restored.y[i] - original.y[i]) <=
          1e-9 * std::max(1.0, std::fabs(original.y[i])));
    CHECK(std::fabs(restored.z[i] - original.z[i]) <=
          1e-9 * std::max(1.0, std::fabs(original.z[i])));
    CHECK(std::fabs(restored.intensity[i] - original.intensity[i]) <=
          1e-9 * std::max(1.0, std::fabs(original.intensity[i])));
  }

  // constant intensity maps to zero
  Patch flat;
  flat.points = testutil::random_cloud(rng, 10);
  for (auto& v : flat.points.intensity) v = 0.42;
  const Patch fnorm = center_normalize(flat);
  for (double v : fnorm.points.intensity) CHECK(v == 0.0);
}

TEST_CASE("synth_scene basics") {
  SceneSpec spec;
  spec.n_classes = 9;
  Primitive ground;
  ground.kind = Primitive::Kind::Plane;
  ground.class_id = 2;
  ground.count = 1000;
  ground.x1 = ground.y1 = 30.0;
  spec.primitives.push_back(ground);

  Rng rng = make_rng(60);
  const PointCloud cloud = synth_scene(spec, rng);
  CHECK(cloud.size() == 1000);
  for (int l : cloud.labels) CHECK(l == 2);

  // plane plus elevated box: points above the box footprint at roof
  // height carry the roof label
  Primitive roof;
  roof.kind = Primitive::Kind::Box;
  roof.class_id = 5;
  roof.count = 500;
  roof.x0 = 10;
  roof.y0 = 10;
  roof.x1 = 20;
  roof.y1 = 20;
  roof.z = 6.0;
  spec.primitives.push_back(roof);
  Rng rng2 = make_rng(60);
  const PointCloud two = synth_scene(spec, rng2);
  for (std::size_t i = 0; i < two.size(); ++i) {
    if (two.z[i] > 3.0) {
      CHECK(two.labels[i] == 5);
      CHECK(two.x[i] >= 10.0);
      CHECK(two.x[i] <= 20.0);
    }
  }

  // determinism
  Rng rng3 = make_rng(60), rng4 = make_rng(60);
  CHECK(synth_scene(spec, rng3).x == synth_scene(spec, rng4).x);

  // invalid primitives rejected
  Primitive bad = ground;
  bad.count = 0;
  SceneSpec bad_spec;
  bad_spec.n_classes = 9;
  bad_spec.primitives.push_back(bad);
  Rng rng5 = make_rng(1);
  CHECK_THROWS_AS(synth_scene(bad_spec, rng5), DataError);
}

TEST_CASE("demo scene covers nine classes in configured proportions") {
  const SceneSpec spec = demo_scene_spec(4, 3400, 7);
  Rng rng = make_rng(61);
  const PointCloud cloud = synth_scene(spec, rng);
  CHECK(cloud.size() <= 60000);

  std::vector<std::int64_t> expected(9, 0);
  for (const auto& p : spec.primitives) expected[(std::size_t)p.class_id] += p.count;
  std::vector<std::int64_t> got(9, 0);
  for (int l : cloud.labels) ++got[(std::size_t)l];

  // counts are exact per primitive, so the chi-square statistic
  // against the configured proportions is zero
  long double chi2 = 0.0L;
  for (int c = 0; c < 9; ++c) {
    CHECK(got[(std::size_t)c] == expected[(std::size_t)c]);
    CHECK(got[(std::size_t)c] > 0);
    const long double e = (long double)expected[(std::size_t)c];
    chi2 += (got[(std::size_t)c] - e) * (got[(std::size_t)c] - e) / e;
  }
  CHECK(chi2 <= 15.51);  // chi-square 95% critical value, 8 dof
}

TEST_CASE("scene spec files round-trip") {
  const SceneSpec spec = demo_scene_spec(2, 1000, 3);
  const auto path = temp_file("scene.spec");
  write_scene_spec(spec, path.string());
  const SceneSpec read = parse_scene_spec(path.string());
  CHECK(read.n_classes == spec.n_classes);
  CHECK(read.primitives.size() == spec.primitives.size());
  Rng r1 = make_rng(5), r2 = make_rng(5);
  const PointCloud a = synth_scene(spec, r1);
  const PointCloud b = synth_scene(read, r2);
  CHECK(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.labels[i] == b.labels[i]);
    CHECK(std::fabs(a.x[i] - b.x[i]) <= 1e-3);  // spec file rounds to 4 decimals
  }
}
