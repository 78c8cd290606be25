#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaslot {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf. The message names the op.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Dense row-major float64 tensor. Copies are shallow handles onto the same
/// node; use clone() for an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access for optimizers and initializers; bypasses the tape.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated so far, or zeros when nothing reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  Tensor clone() const;
  std::vector<double> row(std::size_t r) const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Define-by-run record of executed differentiable ops. Ops record onto the
/// tape that is active on the calling thread; with no active tape nothing is
/// recorded and results carry no gradient.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays entries in reverse order.
  void backward(const Tensor& loss);

  static Tape* active();

  /// Makes a tape active for the lifetime of the scope.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<BackwardFn> entries_;
};

/// Suspends recording on this thread; everything computed inside is a constant.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

namespace detail {
Tape* swap_active_tape(Tape* tape);
}  // namespace detail

}  // namespace metaslot
