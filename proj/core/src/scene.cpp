#include "metaslot/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace metaslot {

namespace {

constexpr std::size_t kMinSize = 3;
constexpr int kPlacementAttempts = 64;

constexpr std::array<std::array<double, 3>, kMaxColors> kPalette{{
    {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}}};

constexpr std::array<std::array<double, 2>, kMaxShapes> kShapeCodes{{
    {1.0, 0.0}, {-0.5, 0.8660254037844386}, {-0.5, -0.8660254037844386}}};

struct Placement {
  ShapeKind kind;
  std::size_t top, left, height, width;
  std::size_t color;
};

bool covers(const Placement& p, std::size_t r, std::size_t c) {
  if (r < p.top || r >= p.top + p.height || c < p.left || c >= p.left + p.width) return false;
  const double y = static_cast<double>(r - p.top) + 0.5;
  const double x = static_cast<double>(c - p.left) + 0.5;
  const double h = static_cast<double>(p.height), w = static_cast<double>(p.width);
  switch (p.kind) {
    case ShapeKind::kRectangle: return true;
    case ShapeKind::kDisk: {
      const double dy = (y - h / 2) / (h / 2), dx = (x - w / 2) / (w / 2);
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::kTriangle: {
      // Apex at the top centre, base along the bottom row.
      const double half = 0.5 * w * (y / h);
      return std::abs(x - w / 2) <= half + 0.5;
    }
  }
  return false;
}

std::size_t max_size(const SceneSpec& spec) {
  return std::max(kMinSize, std::min(spec.height, spec.width) / 2);
}

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.min_objects < 1 || spec.max_objects < spec.min_objects) {
    throw std::invalid_argument("scene: need max_objects >= min_objects >= 1");
  }
  if (spec.shape_vocab < 1 || spec.shape_vocab > kMaxShapes) {
    throw std::invalid_argument("scene: shape_vocab must be in [1, 3]");
  }
  if (spec.color_vocab < 1 || spec.color_vocab > kMaxColors) {
    throw std::invalid_argument("scene: color_vocab must be in [1, 7]");
  }
  if (spec.jitter_std < 0.0) throw std::invalid_argument("scene: negative jitter");
  if (spec.height < kMinSize + 1 || spec.width < kMinSize + 1) {
    throw std::invalid_argument("scene: canvas too small for shapes of size " +
                                std::to_string(kMinSize));
  }
}

SyntheticScene generate_scene(Rng& rng, const SceneSpec& spec) {
  validate(spec);
  const std::size_t h = spec.height, w = spec.width, n = h * w;
  std::uniform_int_distribution<std::size_t> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<std::size_t> size_dist(kMinSize, max_size(spec));
  std::uniform_int_distribution<std::size_t> shape_dist(0, spec.shape_vocab - 1);
  std::uniform_int_distribution<std::size_t> color_dist(0, spec.color_vocab - 1);

  const std::size_t objects = count_dist(rng);
  std::vector<std::int32_t> labels(n, 0);
  std::vector<Placement> placed;

  for (std::size_t m = 0; m < objects; ++m) {
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      Placement p{};
      p.kind = static_cast<ShapeKind>(shape_dist(rng));
      p.height = size_dist(rng);
      p.width = p.kind == ShapeKind::kRectangle ? size_dist(rng) : p.height;
      p.top = std::uniform_int_distribution<std::size_t>(0, h - p.height)(rng);
      p.left = std::uniform_int_distribution<std::size_t>(0, w - p.width)(rng);
      p.color = color_dist(rng);

      std::vector<std::int32_t> trial = labels;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
          if (covers(p, r, c)) trial[r * w + c] = static_cast<std::int32_t>(m + 1);

      std::vector<std::size_t> area(m + 2, 0);
      for (auto l : trial) ++area[static_cast<std::size_t>(l)];
      ok = std::all_of(area.begin() + 1, area.end(), [](std::size_t a) { return a > 0; });
      if (ok) {
        labels = std::move(trial);
        placed.push_back(p);
      }
    }
    if (!ok) {
      throw std::invalid_argument("scene: canvas too small to keep " + std::to_string(objects) +
                                  " objects visible");
    }
  }

  namespace ch = scene_channel;
  std::normal_distribution<double> jitter(0.0, spec.jitter_std > 0.0 ? spec.jitter_std : 1.0);
  std::vector<double> features(n * ch::kCount, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      double* f = &features[i * ch::kCount];
      const auto label = labels[i];
      if (label == 0) {
        f[ch::kBackground] = 1.0;
      } else {
        const Placement& p = placed[static_cast<std::size_t>(label - 1)];
        for (std::size_t k = 0; k < 3; ++k) f[ch::kColor + k] = kPalette[p.color][k];
        const auto shape = static_cast<std::size_t>(p.kind);
        f[ch::kShape] = kShapeCodes[shape][0];
        f[ch::kShape + 1] = kShapeCodes[shape][1];
      }
      if (spec.jitter_std > 0.0) {
        for (std::size_t k = ch::kColor; k < ch::kX; ++k) f[k] += jitter(rng);
      }
      f[ch::kX] = w > 1 ? static_cast<double>(c) / static_cast<double>(w - 1) : 0.0;
      f[ch::kY] = h > 1 ? static_cast<double>(r) / static_cast<double>(h - 1) : 0.0;
    }
  }

  SyntheticScene scene;
  scene.height = h;
  scene.width = w;
  scene.features = Tensor({n, ch::kCount}, std::move(features));
  scene.labels = std::move(labels);
  scene.object_count = objects;
  return scene;
}

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  Rng rng(seed);
  return generate_scene(rng, spec);
}

std::vector<SyntheticScene> generate_split(std::uint64_t root_seed, const SceneSpec& spec,
                                           std::size_t n) {
  if (n == 0) throw std::invalid_argument("generate_split: n must be >= 1");
  std::vector<SyntheticScene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) scenes.push_back(generate_scene(derive_seed(root_seed, i), spec));
  return scenes;
}

void write_scene(std::ostream& os, const SyntheticScene& scene) {
  nlohmann::json j;
  j["height"] = scene.height;
  j["width"] = scene.width;
  j["dim"] = scene.features.cols();
  j["object_count"] = scene.object_count;
  j["labels"] = scene.labels;
  j["features"] = std::vector<double>(scene.features.data().begin(), scene.features.data().end());
  os << j.dump() << '\n';
}

SyntheticScene read_scene(std::istream& is) {
  const auto j = nlohmann::json::parse(is);
  SyntheticScene scene;
  scene.height = j.at("height").get<std::size_t>();
  scene.width = j.at("width").get<std::size_t>();
  scene.object_count = j.at("object_count").get<std::size_t>();
  scene.labels = j.at("labels").get<std::vector<std::int32_t>>();
  const auto dim = j.at("dim").get<std::size_t>();
  scene.features =
      Tensor({scene.height * scene.width, dim}, j.at("features").get<std::vector<double>>());
  if (scene.labels.size() != scene.height * scene.width) {
    throw std::invalid_argument("read_scene: label count does not match height*width");
  }
  return scene;
}

}  // namespace metaslot
