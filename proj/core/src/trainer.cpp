#include "metaslot/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "metaslot/ops.hpp"

namespace metaslot {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kEvalNoiseStream = 0x6576616cULL;

EvalPoint summarize(std::int64_t step, const MetricsReport& report) {
  return {step, report.fg_ari.mean, report.mbo.mean, report.mean_count_error};
}

}  // namespace

SceneEvaluation evaluate_scene(const TrainConfig& config, const Model& model,
                               const SyntheticScene& scene, std::uint64_t scene_seed) {
  NoGradGuard no_grad;
  Rng rng(scene_seed);
  SceneEvaluation ev;
  ev.output = aggregate(config.aggregator, scene.features, model.slot_attention, model.codebook,
                        config.metaslot, rng, false);
  ev.decoded = decode(ev.output.final_slots.slots, ev.output.mask, model.decoder);
  ev.loss = reconstruction_loss(ev.decoded, scene.features).item();
  return ev;
}

MetricsReport evaluate(const TrainConfig& config, const Model& model,
                       std::span<const SyntheticScene> scenes,
                       std::vector<SceneEvaluation>* details) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes");
  std::vector<SceneOutcome> outcomes;
  outcomes.reserve(scenes.size());
  if (details) details->clear();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto ev = evaluate_scene(config, model, scenes[i], derive_seed(config.eval_seed, kEvalNoiseStream, i));
    outcomes.push_back({ev.decoded.pred_labels, scenes[i].labels, ev.output.active_count,
                        scenes[i].object_count});
    if (details) details->push_back(std::move(ev));
  }
  return evaluate_split(outcomes);
}

std::vector<SyntheticScene> eval_split(const TrainConfig& config, std::size_t n) {
  return generate_split(config.eval_seed, config.scene, n);
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.model = Model::create(config);
  std::vector<Tensor> tensors;
  for (const auto& p : ckpt.model.params()) tensors.push_back(p.tensor);
  ckpt.optimizer = AdamState::zeros_like(tensors);
  return ckpt;
}

TrainResult train(const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  TrainResult result;
  result.checkpoint = initial_checkpoint(config);
  Model& model = result.checkpoint.model;
  std::vector<Tensor> params;
  for (const auto& p : model.params()) params.push_back(p.tensor);

  const auto held_out = eval_split(config, config.eval_scenes);
  const std::uint64_t train_root = derive_seed(config.seed, kTrainStream);
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  std::vector<SyntheticScene> scenes(config.batch_size);
  std::vector<MetaSlotOutput> outputs(config.batch_size);
  std::vector<DecodedScene> decoded(config.batch_size);
  std::vector<std::vector<double>> grads(params.size());

  for (std::int64_t step = 1; step <= config.steps; ++step) {
    const auto s = static_cast<std::uint64_t>(step);
    double batch_loss = 0.0;
    try {
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        scenes[b] = generate_scene(derive_seed(train_root, s, b), config.scene);
        Rng rng(derive_seed(config.seed ^ kNoiseStream, s, b));
        Tape tape;
        Tape::Scope scope(tape);
        outputs[b] = aggregate(config.aggregator, scenes[b].features, model.slot_attention,
                               model.codebook, config.metaslot, rng, true);
        decoded[b] = decode(outputs[b].final_slots.slots, outputs[b].mask, model.decoder);
        const Tensor loss = reconstruction_loss(decoded[b], scenes[b].features);
        tape.backward(ops::scale(loss, inv_batch));
        batch_loss += loss.item();
      }
    } catch (const NumericError& e) {
      throw std::runtime_error("step " + std::to_string(step) + ": " + e.what());
    }
    batch_loss *= inv_batch;
    if (!std::isfinite(batch_loss)) {
      throw std::runtime_error("step " + std::to_string(step) + ": non-finite loss");
    }

    if (observer) observer({step, batch_loss, scenes, outputs, decoded});

    for (std::size_t p = 0; p < params.size(); ++p) {
      grads[p] = params[p].grad();
      params[p].zero_grad();
    }
    adam_step(params, grads, result.checkpoint.optimizer, config.optimizer);
    if (config.aggregator == AggregatorKind::kMetaSlot) {
      update_codebook(model.codebook, outputs, step, config.metaslot);
    }
    result.losses.push_back(batch_loss);
    result.checkpoint.step = step;

    if (step % config.eval_every == 0 && step != config.steps) {
      result.history.push_back(summarize(step, evaluate(config, model, held_out)));
    }
  }

  result.report = evaluate(config, model, held_out);
  result.history.push_back(summarize(result.checkpoint.step, result.report));
  return result;
}

}  // namespace metaslot
