#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "metaslot/config.hpp"
#include "metaslot/metrics.hpp"
#include "metaslot/model.hpp"
#include "metaslot/scene.hpp"

namespace metaslot {

/// Everything the training loop produced for one optimisation step, exposed
/// to observers before the optimizer and codebook update run.
struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  std::span<const SyntheticScene> scenes;
  std::span<const MetaSlotOutput> outputs;
  std::span<const DecodedScene> decoded;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct EvalPoint {
  std::int64_t step = 0;
  double fg_ari = 0.0, mbo = 0.0;
  double count_error = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // mean batch loss per step
  std::vector<EvalPoint> history;
  MetricsReport report;        // on the held-out split after the last step
};

/// Per-scene evaluation products.
struct SceneEvaluation {
  MetaSlotOutput output;
  DecodedScene decoded;
  double loss = 0.0;
};

/// Deterministic, noise-free, gradient-free pass over one scene.
SceneEvaluation evaluate_scene(const TrainConfig& config, const Model& model,
                               const SyntheticScene& scene, std::uint64_t scene_seed);

/// Evaluates `scenes` scene by scene; scene i uses the noise seed derived from
/// eval_seed and i.
MetricsReport evaluate(const TrainConfig& config, const Model& model,
                       std::span<const SyntheticScene> scenes,
                       std::vector<SceneEvaluation>* details = nullptr);

/// Held-out split used for periodic and final evaluation.
std::vector<SyntheticScene> eval_split(const TrainConfig& config, std::size_t n);

/// Fresh model and optimizer state for `config`.
Checkpoint initial_checkpoint(const TrainConfig& config);

/// Runs config.steps Adam steps. Training scenes are drawn on the fly from a
/// stream seeded by config.seed. Throws std::runtime_error naming the step
/// on a non-finite loss.
TrainResult train(const TrainConfig& config, const StepObserver& observer = {});

}  // namespace metaslot
