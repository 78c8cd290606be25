#include "metaslot/nn.hpp"

#include <cmath>

#include "metaslot/ops.hpp"

namespace metaslot {

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

double xavier_bound(std::size_t in, std::size_t out) {
  return std::sqrt(6.0 / static_cast<double>(in + out));
}

}  // namespace

LinearParams LinearParams::xavier(std::size_t in, std::size_t out, Rng& rng) {
  return {uniform({in, out}, xavier_bound(in, out), rng), Tensor::zeros({1, out}, true)};
}

void LinearParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::identity(std::size_t width) {
  return {Tensor::full({1, width}, 1.0, true), Tensor::zeros({1, width}, true)};
}

void LayerNormParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

MlpParams MlpParams::xavier(std::size_t in, std::size_t width, std::size_t out, Rng& rng) {
  auto hidden = LinearParams::xavier(in, width, rng);
  auto output = LinearParams::xavier(width, out, rng);
  return {std::move(hidden), std::move(output)};
}

void MlpParams::collect(const std::string& prefix, ParamList& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

GruParams GruParams::xavier(std::size_t width, Rng& rng) {
  const double bound = xavier_bound(width, width);
  GruParams p;
  p.weight_input = uniform({width, 3 * width}, bound, rng);
  p.weight_hidden = uniform({width, 3 * width}, bound, rng);
  p.bias_input = Tensor::zeros({1, 3 * width}, true);
  p.bias_hidden = Tensor::zeros({1, 3 * width}, true);
  return p;
}

void GruParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight_input", weight_input});
  out.push_back({prefix + ".weight_hidden", weight_hidden});
  out.push_back({prefix + ".bias_input", bias_input});
  out.push_back({prefix + ".bias_hidden", bias_hidden});
}

namespace ops {

Tensor linear(const Tensor& x, const LinearParams& p) { return linear(x, p.weight, p.bias); }

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, x.rank() - 1, p.gamma, p.beta);
}

Tensor mlp(const Tensor& x, const MlpParams& p) {
  return linear(relu(linear(x, p.hidden)), p.output);
}

Tensor gru_cell(const Tensor& prev, const Tensor& input, const GruParams& p) {
  if (prev.shape() != input.shape() || prev.rank() != 2 || prev.cols() != p.width()) {
    throw ShapeError("gru_cell: prev " + shape_string(prev.shape()) + ", input " +
                     shape_string(input.shape()) + ", width " + std::to_string(p.width()));
  }
  const std::size_t d = p.width();
  const Tensor gi = linear(input, p.weight_input, p.bias_input);
  const Tensor gh = linear(prev, p.weight_hidden, p.bias_hidden);
  const Tensor reset = sigmoid(add(slice_cols(gi, 0, d), slice_cols(gh, 0, d)));
  const Tensor update = sigmoid(add(slice_cols(gi, d, 2 * d), slice_cols(gh, d, 2 * d)));
  const Tensor candidate =
      tanh(add(slice_cols(gi, 2 * d, 3 * d), mul(reset, slice_cols(gh, 2 * d, 3 * d))));
  const Tensor keep = add_scalar(scale(update, -1.0), 1.0);
  return add(mul(keep, prev), mul(update, candidate));
}

}  // namespace ops

}  // namespace metaslot
