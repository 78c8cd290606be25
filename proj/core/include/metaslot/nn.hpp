#pragma once

#include <string>
#include <vector>

#include "metaslot/random.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// Fully connected layer: weight [in x out], bias [1 x out].
struct LinearParams {
  Tensor weight;
  Tensor bias;

  static LinearParams xavier(std::size_t in, std::size_t out, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams identity(std::size_t width);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Two-layer perceptron with a ReLU between the layers.
struct MlpParams {
  LinearParams hidden;
  LinearParams output;

  static MlpParams xavier(std::size_t in, std::size_t width, std::size_t out, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// GRU cell weights. Gate blocks along the 3*D axis are ordered reset,
/// update, candidate.
struct GruParams {
  Tensor weight_input;   // [D x 3D]
  Tensor weight_hidden;  // [D x 3D]
  Tensor bias_input;     // [1 x 3D]
  Tensor bias_hidden;    // [1 x 3D]

  static GruParams xavier(std::size_t width, Rng& rng);
  std::size_t width() const { return weight_input.rows(); }
  void collect(const std::string& prefix, ParamList& out) const;
};

namespace ops {

Tensor linear(const Tensor& x, const LinearParams& p);
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);
Tensor mlp(const Tensor& x, const MlpParams& p);

/// Row-wise GRU cell. prev and input are [K x D]; output is
/// (1 - z) * prev + z * candidate, so an update gate of 0 keeps prev exactly.
Tensor gru_cell(const Tensor& prev, const Tensor& input, const GruParams& p);

}  // namespace ops

}  // namespace metaslot
