#include "metaslot/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace metaslot::ops {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor finish(const char* op, Shape shape, std::vector<double> data, bool grad) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
  return Tensor(std::move(shape), std::move(data), grad);
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

// Lane decomposition of a tensor around one axis: element (o, k, i) lives at
// (o * len + k) * inner + i.
struct Lanes {
  std::size_t outer = 1, len = 1, inner = 1;

  Lanes(const Shape& shape, std::size_t axis) {
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    len = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  }
  std::size_t at(std::size_t o, std::size_t k, std::size_t i) const {
    return (o * len + k) * inner + i;
  }
};

enum class Broadcast { kSame, kRow, kCol, kScalar };

struct BinaryLayout {
  Broadcast mode;
  std::size_t rows = 0, cols = 0;

  std::size_t b_index(std::size_t flat) const {
    switch (mode) {
      case Broadcast::kSame: return flat;
      case Broadcast::kRow: return flat % cols;
      case Broadcast::kCol: return flat / cols;
      case Broadcast::kScalar: return 0;
    }
    return 0;
  }
};

BinaryLayout binary_layout(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {Broadcast::kSame, 0, 0};
  if (a.rank() == 2 && b.rank() == 2) {
    const auto m = a.rows(), n = a.cols();
    if (b.rows() == 1 && b.cols() == 1) return {Broadcast::kScalar, m, n};
    if (b.rows() == 1 && b.cols() == n) return {Broadcast::kRow, m, n};
    if (b.rows() == m && b.cols() == 1) return {Broadcast::kCol, m, n};
  }
  throw ShapeError(std::string(op) + ": cannot combine " + shape_string(a.shape()) + " with " +
                   shape_string(b.shape()));
}

template <typename Forward, typename Backward>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Forward fwd, Backward bwd) {
  const auto layout = binary_layout(op, a, b);
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i], bd[layout.b_index(i)]);
  const bool grad = recording({&a, &b});
  Tensor result = finish(op, a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([an = a.node(), bn = b.node(), on = result.node(), layout, bwd] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      double* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
      double* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = layout.b_index(i);
        bwd(an->data[i], bn->data[j], on->data[i], g[i], ga ? &ga[i] : nullptr,
            gb ? &gb[j] : nullptr);
      }
    });
  }
  return result;
}

template <typename Forward, typename Backward>
Tensor unary(const char* op, const Tensor& x, Forward fwd, Backward bwd) {
  const auto& xd = x.node()->data;
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  const bool grad = recording({&x});
  Tensor result = finish(op, x.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(), bwd] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += on->grad[i] * bwd(xn->data[i], on->data[i]);
      }
    });
  }
  return result;
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ad[i * k + l];
      const double* brow = &bd[l * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const bool grad = recording({&a, &b});
  Tensor result = finish("matmul", {m, n}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([an = a.node(), bn = b.node(), on = result.node(), m, k, n] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t l = 0; l < k; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->data[l * n + j];
            ga[i * k + l] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t l = 0; l < k; ++l) {
            const double av = an->data[i * k + l];
            for (std::size_t j = 0; j < n; ++j) gb[l * n + j] += av * g[i * n + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  require_rank2("transpose", x);
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xd = x.node()->data;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xd[i * n + j];
  const bool grad = recording({&x});
  Tensor result = finish("transpose", {n, m}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(), m, n] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += on->grad[j * m + i];
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double, double g, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double, double g, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double, double g, double* ga, double* gb) {
        if (ga) *ga += g / y;
        if (gb) *gb -= g * x / (y * y);
      });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const bool grad = recording({&x});
  Tensor result = finish("sum", {1}, {acc}, grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node()] {
      if (on->grad.empty()) return;
      const double g = on->grad[0];
      for (auto& gx : xn->grad_buffer()) gx += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_rank2("sum_axis", x);
  if (axis > 1) throw ShapeError("sum_axis: axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xd = x.node()->data;
  std::vector<double> out(axis == 0 ? n : m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += xd[i * n + j];
  Shape shape = axis == 0 ? Shape{1, n} : Shape{m, 1};
  const bool grad = recording({&x});
  Tensor result = finish("sum_axis", std::move(shape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(), m, n, axis] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += on->grad[axis == 0 ? j : i];
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, std::size_t axis, std::span<const double> mask) {
  if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");
  const Lanes lanes(x.shape(), axis);
  if (!mask.empty() && mask.size() != lanes.len) {
    throw ShapeError("softmax: mask length " + std::to_string(mask.size()) + " != axis size " +
                     std::to_string(lanes.len));
  }
  const auto keep = [&](std::size_t k) { return mask.empty() || mask[k] != 0.0; };
  bool any = false;
  for (std::size_t k = 0; k < lanes.len; ++k) any = any || keep(k);
  if (!any) throw std::invalid_argument("softmax: mask excludes every position");

  const auto& xd = x.node()->data;
  std::vector<double> out(xd.size(), 0.0);
  for (std::size_t o = 0; o < lanes.outer; ++o) {
    for (std::size_t i = 0; i < lanes.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < lanes.len; ++k)
        if (keep(k)) mx = std::max(mx, xd[lanes.at(o, k, i)]);
      double total = 0.0;
      for (std::size_t k = 0; k < lanes.len; ++k) {
        if (!keep(k)) continue;
        const auto idx = lanes.at(o, k, i);
        out[idx] = std::exp(xd[idx] - mx);
        total += out[idx];
      }
      for (std::size_t k = 0; k < lanes.len; ++k)
        if (keep(k)) out[lanes.at(o, k, i)] /= total;
    }
  }
  const bool grad = recording({&x});
  Tensor result = finish("softmax", x.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(), lanes] {
      if (on->grad.empty()) return;
      const auto& y = on->data;
      const auto& g = on->grad;
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < lanes.outer; ++o) {
        for (std::size_t i = 0; i < lanes.inner; ++i) {
          double dot = 0.0;
          for (std::size_t k = 0; k < lanes.len; ++k) {
            const auto idx = lanes.at(o, k, i);
            dot += y[idx] * g[idx];
          }
          for (std::size_t k = 0; k < lanes.len; ++k) {
            const auto idx = lanes.at(o, k, i);
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (axis >= x.rank()) throw ShapeError("layer_norm: axis out of range");
  const Lanes lanes(x.shape(), axis);
  if (gamma.numel() != lanes.len || beta.numel() != lanes.len) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(lanes.len) +
                     " entries");
  }
  const auto& xd = x.node()->data;
  const auto& gd = gamma.node()->data;
  const auto& bd = beta.node()->data;
  const double inv_len = 1.0 / static_cast<double>(lanes.len);
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> rstd(lanes.outer * lanes.inner);
  for (std::size_t o = 0; o < lanes.outer; ++o) {
    for (std::size_t i = 0; i < lanes.inner; ++i) {
      double mu = 0.0;
      for (std::size_t k = 0; k < lanes.len; ++k) mu += xd[lanes.at(o, k, i)];
      mu *= inv_len;
      double var = 0.0;
      for (std::size_t k = 0; k < lanes.len; ++k) {
        const double c = xd[lanes.at(o, k, i)] - mu;
        var += c * c;
      }
      var *= inv_len;
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[o * lanes.inner + i] = r;
      for (std::size_t k = 0; k < lanes.len; ++k) {
        const auto idx = lanes.at(o, k, i);
        xhat[idx] = (xd[idx] - mu) * r;
        out[idx] = gd[k] * xhat[idx] + bd[k];
      }
    }
  }
  const bool grad = recording({&x, &gamma, &beta});
  Tensor result = finish("layer_norm", x.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), gn = gamma.node(), bn = beta.node(),
                            on = result.node(), lanes, xhat = std::move(xhat),
                            rstd = std::move(rstd), inv_len] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      double* gg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
      double* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
      double* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
      for (std::size_t o = 0; o < lanes.outer; ++o) {
        for (std::size_t i = 0; i < lanes.inner; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t k = 0; k < lanes.len; ++k) {
            const auto idx = lanes.at(o, k, i);
            const double dxhat = g[idx] * gn->data[k];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[idx];
            if (gg) gg[k] += g[idx] * xhat[idx];
            if (gb) gb[k] += g[idx];
          }
          if (!gx) continue;
          mean_dxhat *= inv_len;
          mean_dxhat_xhat *= inv_len;
          const double r = rstd[o * lanes.inner + i];
          for (std::size_t k = 0; k < lanes.len; ++k) {
            const auto idx = lanes.at(o, k, i);
            const double dxhat = g[idx] * gn->data[k];
            gx[idx] += r * (dxhat - mean_dxhat - xhat[idx] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank2("linear", x);
  require_rank2("linear", weight);
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  if (weight.rows() != k) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  if (bias.numel() != n) throw ShapeError("linear: bias must have " + std::to_string(n) + " entries");
  const auto& xd = x.node()->data;
  const auto& wd = weight.node()->data;
  const auto& bd = bias.node()->data;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    std::copy(bd.begin(), bd.end(), orow);
    for (std::size_t l = 0; l < k; ++l) {
      const double xv = xd[i * k + l];
      const double* wrow = &wd[l * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * wrow[j];
    }
  }
  const bool grad = recording({&x, &weight, &bias});
  Tensor result = finish("linear", {m, n}, std::move(out), grad);
  if (grad) {
    Tape::active()->record(
        [xn = x.node(), wn = weight.node(), bn = bias.node(), on = result.node(), m, k, n] {
          if (on->grad.empty()) return;
          const auto& g = on->grad;
          if (xn->requires_grad) {
            auto& gx = xn->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t l = 0; l < k; ++l) {
                double acc = 0.0;
                const double* wrow = &wn->data[l * n];
                const double* grow = &g[i * n];
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
                gx[i * k + l] += acc;
              }
            }
          }
          if (wn->requires_grad) {
            auto& gw = wn->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = &g[i * n];
              for (std::size_t l = 0; l < k; ++l) {
                const double xv = xn->data[i * k + l];
                double* gwrow = &gw[l * n];
                for (std::size_t j = 0; j < n; ++j) gwrow[j] += xv * grow[j];
              }
            }
          }
          if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
          }
        });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank2("gather_rows", x);
  const std::size_t n = x.cols();
  const auto& xd = x.node()->data;
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (auto r : rows) {
    if (r >= x.rows()) throw ShapeError("gather_rows: row index out of range");
    out.insert(out.end(), xd.begin() + static_cast<std::ptrdiff_t>(r * n),
               xd.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  const bool grad = recording({&x});
  Tensor result = finish("gather_rows", {rows.size(), n}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(),
                            idx = std::vector<std::size_t>(rows.begin(), rows.end()), n] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) gx[idx[i] * n + j] += on->grad[i * n + j];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) throw ShapeError("slice_cols: invalid column range");
  const std::size_t w = end - begin;
  const auto& xd = x.node()->data;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xd[i * n + begin + j];
  const bool grad = recording({&x});
  Tensor result = finish("slice_cols", {m, w}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node(), m, n, w, begin] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += on->grad[i * w + j];
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  const bool grad = recording({&x});
  Tensor result = Tensor(std::move(shape), x.node()->data, grad);
  if (grad) {
    Tape::active()->record([xn = x.node(), on = result.node()] {
      if (on->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
    });
  }
  return result;
}

Tensor stop_gradient(const Tensor& x) { return Tensor(x.shape(), x.node()->data, false); }

Tensor broadcast_pairs(const Tensor& slots, const Tensor& positions) {
  require_rank2("broadcast_pairs", slots);
  require_rank2("broadcast_pairs", positions);
  const std::size_t k = slots.rows(), d = slots.cols(), n = positions.rows();
  if (positions.cols() != d) throw ShapeError("broadcast_pairs: feature widths differ");
  const auto& sd = slots.node()->data;
  const auto& pd = positions.node()->data;
  std::vector<double> out(k * n * d);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) out[(j * n + i) * d + c] = sd[j * d + c] + pd[i * d + c];
  const bool grad = recording({&slots, &positions});
  Tensor result = finish("broadcast_pairs", {k * n, d}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([sn = slots.node(), pn = positions.node(), on = result.node(), k, n, d] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      double* gs = sn->requires_grad ? sn->grad_buffer().data() : nullptr;
      double* gp = pn->requires_grad ? pn->grad_buffer().data() : nullptr;
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < d; ++c) {
            const double v = g[(j * n + i) * d + c];
            if (gs) gs[j * d + c] += v;
            if (gp) gp[i * d + c] += v;
          }
        }
      }
    });
  }
  return result;
}

Tensor mixture_combine(const Tensor& weights, const Tensor& values) {
  require_rank2("mixture_combine", weights);
  require_rank2("mixture_combine", values);
  const std::size_t n = weights.rows(), k = weights.cols(), d = values.cols();
  if (values.rows() != k * n) throw ShapeError("mixture_combine: values must have K*N rows");
  const auto& wd = weights.node()->data;
  const auto& vd = values.node()->data;
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double w = wd[i * k + j];
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += w * vd[(j * n + i) * d + c];
    }
  const bool grad = recording({&weights, &values});
  Tensor result = finish("mixture_combine", {n, d}, std::move(out), grad);
  if (grad) {
    Tape::active()->record([wn = weights.node(), vn = values.node(), on = result.node(), n, k, d] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      double* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
      double* gv = vn->requires_grad ? vn->grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t row = (j * n + i) * d;
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            acc += g[i * d + c] * vn->data[row + c];
            if (gv) gv[row + c] += wn->data[i * k + j] * g[i * d + c];
          }
          if (gw) gw[i * k + j] += acc;
        }
      }
    });
  }
  return result;
}

}  // namespace metaslot::ops
