#include "metaslot/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace metaslot {

namespace {

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number");
  return v;
}

template <typename T>
T parse_integer(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw std::invalid_argument("not an integer");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean");
}

template <typename T>
Field integer(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = parse_integer<T>(v); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

template <typename Owner, typename T>
Field nested_integer(Owner TrainConfig::*owner, T Owner::*member) {
  return {[=](TrainConfig& c, const std::string& v) { (c.*owner).*member = parse_integer<T>(v); },
          [=](const TrainConfig& c) { return std::to_string((c.*owner).*member); }};
}

template <typename Owner>
Field nested_double(Owner TrainConfig::*owner, double Owner::*member) {
  return {[=](TrainConfig& c, const std::string& v) { (c.*owner).*member = parse_double(v); },
          [=](const TrainConfig& c) { return format_double((c.*owner).*member); }};
}

Field flag(bool TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(v); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field metaslot_flag(bool MetaSlotConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.metaslot.*member = parse_bool(v); },
          [member](const TrainConfig& c) {
            return std::string(c.metaslot.*member ? "true" : "false");
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["aggregator"] = {
        [](TrainConfig& c, const std::string& v) { c.aggregator = aggregator_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.aggregator); }};

    f["scene.height"] = nested_integer(&TrainConfig::scene, &SceneSpec::height);
    f["scene.width"] = nested_integer(&TrainConfig::scene, &SceneSpec::width);
    f["scene.min_objects"] = nested_integer(&TrainConfig::scene, &SceneSpec::min_objects);
    f["scene.max_objects"] = nested_integer(&TrainConfig::scene, &SceneSpec::max_objects);
    f["scene.shape_vocab"] = nested_integer(&TrainConfig::scene, &SceneSpec::shape_vocab);
    f["scene.color_vocab"] = nested_integer(&TrainConfig::scene, &SceneSpec::color_vocab);
    f["scene.jitter_std"] = nested_double(&TrainConfig::scene, &SceneSpec::jitter_std);

    f["model.dim"] = integer(&TrainConfig::dim);
    f["model.mlp_hidden"] = integer(&TrainConfig::mlp_hidden);
    f["model.decoder_hidden"] = integer(&TrainConfig::decoder_hidden);
    f["model.positional_std"] = {
        [](TrainConfig& c, const std::string& v) { c.positional_std = parse_double(v); },
        [](const TrainConfig& c) { return format_double(c.positional_std); }};
    f["model.positional_init"] = {
        [](TrainConfig& c, const std::string& v) {
          if (v == "noise") c.positional_init = PositionalInit::kNoise;
          else if (v == "coordinates") c.positional_init = PositionalInit::kCoordinates;
          else throw std::invalid_argument("expected noise or coordinates");
        },
        [](const TrainConfig& c) {
          return std::string(c.positional_init == PositionalInit::kNoise ? "noise" : "coordinates");
        }};
    f["model.residual_mlp"] = flag(&TrainConfig::residual_mlp);
    f["model.max_slots"] = nested_integer(&TrainConfig::metaslot, &MetaSlotConfig::max_slots);
    f["model.iterations"] = nested_integer(&TrainConfig::metaslot, &MetaSlotConfig::iterations);

    f["metaslot.noise_sigma"] = nested_double(&TrainConfig::metaslot, &MetaSlotConfig::noise_sigma);
    f["metaslot.enable_noise"] = metaslot_flag(&MetaSlotConfig::enable_noise);
    f["metaslot.enable_mask"] = metaslot_flag(&MetaSlotConfig::enable_mask);
    f["metaslot.enable_straight_through"] = metaslot_flag(&MetaSlotConfig::enable_straight_through);
    f["metaslot.enable_codebook"] = metaslot_flag(&MetaSlotConfig::enable_codebook);
    f["metaslot.stochastic_stage_one"] = metaslot_flag(&MetaSlotConfig::stochastic_stage_one);

    f["codebook.size"] = {
        [](TrainConfig& c, const std::string& v) { c.metaslot.codebook.size = parse_integer<std::size_t>(v); },
        [](const TrainConfig& c) { return std::to_string(c.metaslot.codebook.size); }};
    f["codebook.ema_rate"] = {
        [](TrainConfig& c, const std::string& v) { c.metaslot.codebook.ema_rate = parse_double(v); },
        [](const TrainConfig& c) { return format_double(c.metaslot.codebook.ema_rate); }};
    f["codebook.timeout"] = {
        [](TrainConfig& c, const std::string& v) { c.metaslot.codebook.timeout = parse_integer<std::int64_t>(v); },
        [](const TrainConfig& c) { return std::to_string(c.metaslot.codebook.timeout); }};
    f["codebook.init_scale"] = {
        [](TrainConfig& c, const std::string& v) { c.metaslot.codebook.init_scale = parse_double(v); },
        [](const TrainConfig& c) { return format_double(c.metaslot.codebook.init_scale); }};
    f["codebook.assignment"] = {
        [](TrainConfig& c, const std::string& v) {
          if (v == "requantize") c.metaslot.ema_assignment = EmaAssignment::kRequantize;
          else if (v == "stage_one") c.metaslot.ema_assignment = EmaAssignment::kStageOne;
          else throw std::invalid_argument("expected requantize or stage_one");
        },
        [](const TrainConfig& c) {
          return std::string(c.metaslot.ema_assignment == EmaAssignment::kRequantize ? "requantize"
                                                                                     : "stage_one");
        }};

    f["optim.lr"] = nested_double(&TrainConfig::optimizer, &OptimizerConfig::learning_rate);
    f["optim.beta1"] = nested_double(&TrainConfig::optimizer, &OptimizerConfig::beta1);
    f["optim.beta2"] = nested_double(&TrainConfig::optimizer, &OptimizerConfig::beta2);
    f["optim.eps"] = nested_double(&TrainConfig::optimizer, &OptimizerConfig::eps);

    f["train.steps"] = integer(&TrainConfig::steps);
    f["train.batch_size"] = integer(&TrainConfig::batch_size);
    f["train.seed"] = integer(&TrainConfig::seed);
    f["train.eval_every"] = integer(&TrainConfig::eval_every);
    f["train.eval_scenes"] = integer(&TrainConfig::eval_scenes);
    f["train.eval_seed"] = integer(&TrainConfig::eval_seed);
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  metaslot::validate(scene);
  if (dim != scene_channel::kCount) {
    throw std::invalid_argument("config: model.dim must equal the scene feature width (" +
                                std::to_string(scene_channel::kCount) + ")");
  }
  if (metaslot.max_slots == 0) throw std::invalid_argument("config: model.max_slots must be >= 1");
  if (metaslot.iterations == 0) throw std::invalid_argument("config: model.iterations must be >= 1");
  if (aggregator == AggregatorKind::kMetaSlot && metaslot.codebook.size < metaslot.max_slots) {
    throw std::invalid_argument("config: codebook.size must be >= model.max_slots");
  }
  if (!(metaslot.codebook.ema_rate > 0.0 && metaslot.codebook.ema_rate <= 1.0)) {
    throw std::invalid_argument("config: codebook.ema_rate must lie in (0, 1]");
  }
  if (metaslot.noise_sigma < 0.0) throw std::invalid_argument("config: negative noise_sigma");
  if (!(positional_std >= 0.0)) throw std::invalid_argument("config: model.positional_std must be >= 0");
  if (steps < 0) throw std::invalid_argument("config: train.steps must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("config: train.batch_size must be >= 1");
  if (eval_scenes == 0) throw std::invalid_argument("config: train.eval_scenes must be >= 1");
  if (eval_every <= 0) throw std::invalid_argument("config: train.eval_every must be >= 1");
  if (optimizer.learning_rate <= 0.0) throw std::invalid_argument("config: optim.lr must be > 0");
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  try {
    it->second.set(config, value);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: bad value '" + value + "' for " + key + ": " + e.what());
  }
}

TrainConfig parse_config(std::istream& is) {
  TrainConfig config;
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in);
}

std::string format_config(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& [key, field] : fields()) os << key << " = " << field.get(config) << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

std::uint64_t config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : format_config(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace metaslot
