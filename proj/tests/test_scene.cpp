#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "metaslot/scene.hpp"

using namespace metaslot;
namespace ch = scene_channel;

namespace {

std::size_t feature_hash(const SyntheticScene& s) {
  std::size_t h = 1469598103934665603ULL;
  for (double v : s.features.data()) h = (h ^ std::hash<double>{}(v)) * 1099511628211ULL;
  return h;
}

}  // namespace

TEST_CASE("one object without jitter gives two label values") {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  spec.jitter_std = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_scene(seed, spec);
    const std::set<std::int32_t> ids(s.labels.begin(), s.labels.end());
    CHECK(ids == std::set<std::int32_t>{0, 1});
    CHECK(s.object_count == 1);
  }
}

TEST_CASE("same seed gives the byte-identical scene") {
  const SceneSpec spec;
  std::ostringstream a, b;
  write_scene(a, generate_scene(42, spec));
  write_scene(b, generate_scene(42, spec));
  CHECK(a.str() == b.str());
  std::ostringstream c;
  write_scene(c, generate_scene(43, spec));
  CHECK(a.str() != c.str());
}

TEST_CASE("scene invariants") {
  SceneSpec spec;
  spec.jitter_std = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_scene(seed, spec);
    REQUIRE(s.features.rows() == 256);
    REQUIRE(s.features.cols() == ch::kCount);
    std::vector<std::size_t> area(s.object_count + 1, 0);
    std::map<std::int32_t, std::vector<double>> signature;
    for (std::size_t i = 0; i < 256; ++i) {
      const auto l = s.labels[i];
      REQUIRE(l >= 0);
      REQUIRE(static_cast<std::size_t>(l) <= s.object_count);
      ++area[static_cast<std::size_t>(l)];
      const auto row = s.features.row(i);
      const std::vector<double> sig(row.begin(), row.begin() + ch::kX);
      if (!signature.count(l)) signature[l] = sig;
      CHECK(signature[l] == sig);
      CHECK(row[ch::kBackground] == (l == 0 ? 1.0 : 0.0));
      CHECK(row[ch::kX] == static_cast<double>(i % 16) / 15.0);
      CHECK(row[ch::kY] == static_cast<double>(i / 16) / 15.0);
    }
    for (std::size_t m = 1; m <= s.object_count; ++m) CHECK(area[m] > 0);
  }
}

TEST_CASE("jitter touches only colour and shape channels") {
  SceneSpec spec;
  spec.jitter_std = 0.1;
  const auto s = generate_scene(7, spec);
  double dev = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    const auto row = s.features.row(i);
    CHECK(row[ch::kBackground] == (s.labels[i] == 0 ? 1.0 : 0.0));
    if (s.labels[i] == 0) dev = std::max(dev, std::abs(row[ch::kColor]));
  }
  CHECK(dev > 0.0);
}

TEST_CASE("object-count histogram is uniform within sampling error") {
  const SceneSpec spec;
  const auto scenes = generate_split(11, spec, 1000);
  std::map<std::size_t, double> hist;
  for (const auto& s : scenes) hist[s.object_count] += 1;
  CHECK(hist.size() == 4);
  const double expect = 250.0, sd = std::sqrt(1000 * 0.25 * 0.75);
  for (const auto& [m, c] : hist) {
    CAPTURE(m);
    CHECK(std::abs(c - expect) <= 3 * sd);
  }
}

TEST_CASE("splits") {
  const SceneSpec spec;
  CHECK_THROWS_AS(generate_split(1, spec, 0), std::invalid_argument);
  const auto a = generate_split(1, spec, 10), b = generate_split(1, spec, 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(feature_hash(a[i]) == feature_hash(b[i]));
  const auto train = generate_split(0, spec, 500), eval = generate_split(7919, spec, 500);
  std::set<std::size_t> hashes;
  for (const auto& s : train) hashes.insert(feature_hash(s));
  std::size_t collisions = 0;
  for (const auto& s : eval) collisions += hashes.count(feature_hash(s));
  CHECK(collisions == 0);
}

TEST_CASE("spec validation") {
  SceneSpec s;
  s.min_objects = 0;
  CHECK_THROWS(validate(s));
  s = SceneSpec{};
  s.max_objects = 1;
  CHECK_THROWS(validate(s));
  s = SceneSpec{};
  s.color_vocab = 8;
  CHECK_THROWS(validate(s));
  s = SceneSpec{};
  s.height = s.width = 2;
  CHECK_THROWS_AS(generate_scene(1, s), std::invalid_argument);
  s = SceneSpec{};
  s.height = s.width = 4;
  s.min_objects = s.max_objects = 30;
  CHECK_THROWS_AS(generate_scene(1, s), std::invalid_argument);
}

TEST_CASE("scene dump round-trips") {
  const auto s = generate_scene(5, SceneSpec{});
  std::stringstream io;
  write_scene(io, s);
  const auto r = read_scene(io);
  CHECK(r.labels == s.labels);
  CHECK(r.object_count == s.object_count);
  CHECK(std::vector<double>(r.features.data().begin(), r.features.data().end()) ==
        std::vector<double>(s.features.data().begin(), s.features.data().end()));
}
