#include "siamapn/tensor.hpp"

#include <sstream>

namespace siamapn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::TensorNode>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::from_node(std::shared_ptr<detail::TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<double> Tensor::data_mut() {
  if (!node_) return {};
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("Tensor::item: expected a single element, got " + shape_str(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (!node_) throw std::logic_error("Tensor: undefined tensor");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorNode>();
  t.node_->shape = shape();
  t.node_->data = node_->data;
  return t;
}

}  // namespace siamapn
