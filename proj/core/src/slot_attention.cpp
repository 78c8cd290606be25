#include "metaslot/slot_attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "metaslot/ops.hpp"

namespace metaslot {

SlotAttentionParams SlotAttentionParams::create(const SlotAttentionConfig& config, Rng& rng) {
  const std::size_t d = config.dim;
  SlotAttentionParams p;
  p.config = config;
  p.query = LinearParams::xavier(d, d, rng);
  p.key = LinearParams::xavier(d, d, rng);
  p.value = LinearParams::xavier(d, d, rng);
  p.gru = GruParams::xavier(d, rng);
  p.mlp = MlpParams::xavier(d, config.mlp_hidden, d, rng);
  p.norm_inputs = LayerNormParams::identity(d);
  p.norm_slots = LayerNormParams::identity(d);
  p.norm_mlp = LayerNormParams::identity(d);

  const std::size_t rows = config.shared_init ? 1 : config.max_slots;
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> mu(rows * d);
  for (auto& v : mu) v = dist(rng);
  p.init_mu = Tensor({rows, d}, std::move(mu), true);
  p.init_log_sigma = Tensor::zeros({rows, d}, true);
  return p;
}

void SlotAttentionParams::collect(const std::string& prefix, ParamList& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  gru.collect(prefix + ".gru", out);
  mlp.collect(prefix + ".mlp", out);
  norm_inputs.collect(prefix + ".norm_inputs", out);
  norm_slots.collect(prefix + ".norm_slots", out);
  norm_mlp.collect(prefix + ".norm_mlp", out);
  out.push_back({prefix + ".init_mu", init_mu});
  out.push_back({prefix + ".init_log_sigma", init_log_sigma});
}

SlotState init_slots(const SlotAttentionParams& params, std::size_t slots, Rng& rng,
                     bool deterministic) {
  if (slots == 0 || slots > params.config.max_slots) {
    throw std::invalid_argument("init_slots: requested " + std::to_string(slots) +
                                " slots, maximum is " + std::to_string(params.config.max_slots));
  }
  std::vector<std::size_t> rows(slots);
  for (std::size_t i = 0; i < slots; ++i) rows[i] = params.config.shared_init ? 0 : i;
  Tensor mu = ops::gather_rows(params.init_mu, rows);
  if (deterministic) return {std::move(mu), 0};

  Tensor sigma = ops::exp(ops::gather_rows(params.init_log_sigma, rows));
  std::vector<double> eps(mu.numel());
  for (auto& v : eps) v = standard_normal(rng);
  Tensor noise(mu.shape(), std::move(eps));
  return {ops::add(mu, ops::mul(sigma, noise)), 0};
}

FeatureProjection project_features(const Tensor& features, const SlotAttentionParams& params) {
  if (features.rank() != 2 || features.cols() != params.config.dim) {
    throw ShapeError("project_features: expected [N x " + std::to_string(params.config.dim) +
                     "], got " + shape_string(features.shape()));
  }
  const Tensor normed = ops::layer_norm(features, params.norm_inputs);
  return {ops::linear(normed, params.key), ops::linear(normed, params.value)};
}

namespace {

void check_mask(const char* op, const SlotMask& mask, std::size_t slots) {
  if (mask.size() != slots) {
    throw ShapeError(std::string(op) + ": mask has " + std::to_string(mask.size()) +
                     " entries for " + std::to_string(slots) + " slots");
  }
  if (mask.active_count() == 0) throw std::invalid_argument(std::string(op) + ": all slots masked");
}

}  // namespace

AttentionResult attention_step(const SlotState& state, const FeatureProjection& projection,
                               const SlotAttentionParams& params, const SlotMask& mask) {
  const std::size_t k = state.slots.rows();
  check_mask("attention_step", mask, k);
  const auto weights = mask.weights();

  const Tensor queries = ops::linear(ops::layer_norm(state.slots, params.norm_slots), params.query);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.config.dim));
  const Tensor logits =
      ops::scale(ops::matmul(projection.keys, ops::transpose(queries)), inv_sqrt_d);
  Tensor attention = ops::softmax(logits, 1, weights);

  // Weighted mean over features per slot; masked columns are already zero.
  const Tensor mass = ops::add_scalar(ops::sum_axis(attention, 0), params.config.attention_eps);
  const Tensor normalised = ops::div(attention, mass);
  Tensor increments = ops::matmul(ops::transpose(normalised), projection.values);
  return {std::move(increments), std::move(attention)};
}

AttentionResult attention_step(const SlotState& state, const Tensor& features,
                               const SlotAttentionParams& params, const SlotMask& mask) {
  return attention_step(state, project_features(features, params), params, mask);
}

SlotState slot_update(const SlotState& state, const Tensor& increments,
                      const SlotAttentionParams& params, const SlotMask& mask) {
  if (state.slots.shape() != increments.shape()) {
    throw ShapeError("slot_update: slots " + shape_string(state.slots.shape()) +
                     " vs increments " + shape_string(increments.shape()));
  }
  check_mask("slot_update", mask, state.slots.rows());
  const Tensor hidden = ops::gru_cell(state.slots, increments, params.gru);
  Tensor updated = params.config.residual_mlp
                       ? ops::add(hidden, ops::mlp(ops::layer_norm(hidden, params.norm_mlp),
                                                   params.mlp))
                       : ops::mlp(hidden, params.mlp);
  if (!mask.all_kept()) {
    const auto w = mask.weights();
    std::vector<double> inverse(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) inverse[i] = 1.0 - w[i];
    const Tensor keep({w.size(), 1}, w);
    const Tensor pass({w.size(), 1}, std::move(inverse));
    updated = ops::add(ops::mul(updated, keep), ops::mul(state.slots, pass));
  }
  return {std::move(updated), state.iteration + 1};
}

IterationResult run_iterations(const Tensor& features, const SlotState& initial,
                               const SlotAttentionParams& params, const SlotMask& mask,
                               const IterationOptions& options, Rng& rng) {
  if (options.iterations == 0) throw std::invalid_argument("run_iterations: T must be >= 1");
  if (options.noise && options.noise->iterations != options.iterations) {
    throw std::invalid_argument("run_iterations: noise schedule length differs from T");
  }
  const bool noisy = options.noise && options.noise->sigma > 0.0;

  // Clean-feature projections are shared by every step that sees clean input.
  std::optional<FeatureProjection> clean;
  const auto projection_for = [&](std::size_t t) {
    const double alpha = noisy ? noise_sigma(t, *options.noise) : 0.0;
    if (alpha > 0.0) return project_features(inject_noise(features, alpha, rng), params);
    if (!clean) clean = project_features(features, params);
    return *clean;
  };

  SlotState state = initial;
  Tensor attention;
  const std::size_t last = options.iterations - 1;
  if (options.detach_until_last && last > 0) {
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < last; ++t) {
      auto step = attention_step(state, projection_for(t), params, mask);
      state = slot_update(state, step.increments, params, mask);
    }
    clean.reset();
    state.slots = ops::stop_gradient(state.slots);
  } else {
    for (std::size_t t = 0; t < last; ++t) {
      auto step = attention_step(state, projection_for(t), params, mask);
      state = slot_update(state, step.increments, params, mask);
    }
  }
  auto step = attention_step(state, projection_for(last), params, mask);
  state = slot_update(state, step.increments, params, mask);
  return {std::move(state), std::move(step.attention)};
}

}  // namespace metaslot
