#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace siamapn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by every op whose operands have incompatible shapes. The message
/// names the op and all offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the autodiff machinery (detached loss, double backward).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;

  // Position on the tape that produced this node; tape_id == 0 for leaves.
  std::uint64_t tape_id = 0;
  std::uint64_t tape_generation = 0;
  std::size_t tape_index = 0;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor of doubles. Copies are shallow: two Tensor handles
/// may refer to the same storage, which is how the autodiff graph and the
/// parameter registry share weights.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> data_mut();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Fresh leaf holding a copy of the data.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace siamapn
