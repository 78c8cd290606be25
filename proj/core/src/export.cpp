#include "metaslot/export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "metaslot/trainer.hpp"

namespace metaslot {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string scene_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const LabelMap& map) {
  if (map.labels.size() != map.height * map.width) {
    throw std::invalid_argument("write_pgm: label count does not match height*width");
  }
  std::int32_t maxval = 1;
  for (auto v : map.labels) {
    if (v < 0) throw std::invalid_argument("write_pgm: negative label");
    maxval = std::max(maxval, v);
  }
  auto out = open_out(path);
  out << "P2\n" << map.width << ' ' << map.height << '\n' << maxval << '\n';
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      out << map.labels[r * map.width + c] << (c + 1 == map.width ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LabelMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  // Skips '#' comments between tokens.
  const auto token = [&]() {
    std::string t;
    while (in >> t) {
      if (t[0] != '#') return t;
      std::string rest;
      std::getline(in, rest);
    }
    throw std::runtime_error("truncated graymap: " + path.string());
  };
  if (token() != "P2") throw std::runtime_error("not a plain graymap: " + path.string());
  LabelMap map;
  map.width = std::stoul(token());
  map.height = std::stoul(token());
  const long maxval = std::stol(token());
  map.labels.resize(map.height * map.width);
  for (auto& v : map.labels) {
    const long x = std::stol(token());
    if (x < 0 || x > maxval) throw std::runtime_error("graymap value out of range: " + path.string());
    v = static_cast<std::int32_t>(x);
  }
  return map;
}

void write_sidecar(const std::filesystem::path& path, const MaskSidecar& s) {
  nlohmann::json j;
  j["scene"] = s.scene;
  j["height"] = s.height;
  j["width"] = s.width;
  j["active_count"] = s.active_count;
  j["object_count"] = s.object_count;
  j["smask"] = s.smask;
  j["idx"] = s.idx;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MaskSidecar read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  MaskSidecar s;
  s.scene = j.at("scene");
  s.height = j.at("height");
  s.width = j.at("width");
  s.active_count = j.at("active_count");
  s.object_count = j.at("object_count");
  s.smask = j.at("smask").get<std::vector<int>>();
  s.idx = j.at("idx").get<std::vector<std::size_t>>();
  return s;
}

std::vector<ExportedScene> export_masks(const TrainConfig& config, const Model& model,
                                        std::span<const SyntheticScene> scenes,
                                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<SceneEvaluation> details;
  evaluate(config, model, scenes, &details);
  std::vector<ExportedScene> files;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& scene = scenes[i];
    const auto& ev = details[i];
    const auto stem = scene_stem(i);
    ExportedScene f{dir / (stem + "_gt.pgm"), dir / (stem + "_pred.pgm"), dir / (stem + ".json")};
    write_pgm(f.gt, {scene.height, scene.width, scene.labels});
    write_pgm(f.pred, {scene.height, scene.width, ev.decoded.pred_labels});
    MaskSidecar s{i, scene.height, scene.width, ev.output.active_count, scene.object_count, {}, ev.output.idx};
    for (auto k : ev.output.mask.keep) s.smask.push_back(k);
    write_sidecar(f.sidecar, s);
    files.push_back(std::move(f));
  }
  return files;
}

}  // namespace metaslot
