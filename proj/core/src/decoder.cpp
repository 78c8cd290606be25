#include "metaslot/decoder.hpp"

#include <stdexcept>
#include <string>

#include "metaslot/ops.hpp"

namespace metaslot {

DecoderParams DecoderParams::create(std::size_t positions, std::size_t dim, std::size_t hidden,
                                    Rng& rng, double positional_std) {
  std::normal_distribution<double> dist(0.0, positional_std);
  std::vector<double> pos(positions * dim);
  for (auto& v : pos) v = dist(rng);
  DecoderParams p;
  p.positional = Tensor({positions, dim}, std::move(pos), true);
  p.mlp = MlpParams::xavier(dim, hidden, dim + 1, rng);
  return p;
}

void DecoderParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".positional", positional});
  mlp.collect(prefix + ".mlp", out);
}

DecodedScene decode(const Tensor& slots, const SlotMask& mask, const DecoderParams& params) {
  const std::size_t k = slots.rows(), d = params.dim(), n = params.positions();
  if (slots.rank() != 2 || slots.cols() != d) {
    throw ShapeError("decode: slots " + shape_string(slots.shape()) + " vs decoder width " +
                     std::to_string(d));
  }
  if (mask.size() != k) throw ShapeError("decode: mask size differs from slot count");
  std::vector<std::size_t> retained;
  for (std::size_t j = 0; j < k; ++j)
    if (mask.retained(j)) retained.push_back(j);
  if (retained.empty()) throw std::invalid_argument("decode: all slots masked");

  const Tensor kept = retained.size() == k ? slots : ops::gather_rows(slots, retained);
  const std::size_t kk = retained.size();
  const Tensor decoded = ops::mlp(ops::broadcast_pairs(kept, params.positional), params.mlp);
  const Tensor values = ops::slice_cols(decoded, 0, d);
  const Tensor logits = ops::transpose(ops::reshape(ops::slice_cols(decoded, d, d + 1), {kk, n}));
  const Tensor weights = ops::softmax(logits, 1);

  DecodedScene out;
  out.reconstruction = ops::mixture_combine(weights, values);
  std::vector<double> alpha(n * k, 0.0);
  const auto w = weights.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kk; ++j) alpha[i * k + retained[j]] = w[i * kk + j];
  out.alpha = Tensor({n, k}, std::move(alpha));
  out.pred_labels = predicted_masks(out.alpha, mask);
  return out;
}

Tensor reconstruction_loss(const DecodedScene& decoded, const Tensor& features) {
  if (decoded.reconstruction.shape() != features.shape()) {
    throw ShapeError("reconstruction_loss: " + shape_string(decoded.reconstruction.shape()) +
                     " vs " + shape_string(features.shape()));
  }
  return ops::mean(ops::square(ops::sub(decoded.reconstruction, features)));
}

std::vector<std::int32_t> predicted_masks(const Tensor& alpha, const SlotMask& mask) {
  const std::size_t n = alpha.rows(), k = alpha.cols();
  if (mask.size() != k) throw ShapeError("predicted_masks: mask size differs from alpha width");
  std::vector<std::int32_t> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask.retained(j)) continue;
      const double a = alpha.at(i, j);
      if (a > best) {
        best = a;
        labels[i] = static_cast<std::int32_t>(j + 1);
      }
    }
  }
  return labels;
}

}  // namespace metaslot
