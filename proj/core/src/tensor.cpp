#include "metaslot/tensor.hpp"

#include <cmath>
#include <sstream>

namespace metaslot {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

namespace detail {
Tape* swap_active_tape(Tape* tape) {
  Tape* previous = g_active_tape;
  g_active_tape = tape;
  return previous;
}
}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite value in constructor");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(node_->shape));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * node_->shape.back() + c];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (!node_ || node_->grad.empty()) return std::vector<double>(node_ ? numel() : 0, 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

std::vector<double> Tensor::row(std::size_t r) const {
  const std::size_t c = node_->shape.back();
  return {node_->data.begin() + static_cast<std::ptrdiff_t>(r * c),
          node_->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("tape: backward() needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(detail::swap_active_tape(&tape)) {}
Tape::Scope::~Scope() { detail::swap_active_tape(previous_); }

NoGradGuard::NoGradGuard() : previous_(detail::swap_active_tape(nullptr)) {}
NoGradGuard::~NoGradGuard() { detail::swap_active_tape(previous_); }

}  // namespace metaslot
