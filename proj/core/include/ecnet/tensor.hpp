#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecnet {

using Shape = std::vector<std::size_t>;

/// Raised whenever operand extents do not conform to an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of doubles with optional reverse-mode gradient.
///
/// A Tensor is a cheap handle; copies share storage. Results of operations on
/// tensors that require a gradient keep a link to their inputs, so the graph
/// lives exactly as long as the last handle into it. Parameters are leaves and
/// never hold references to a previous step's graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view; intended for parameter initialisation and optimizer
  /// updates on leaves. Mutating a tensor already used in a graph invalidates
  /// that graph's gradients.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no graph link and no gradient requirement.
  Tensor detach() const;
  /// Deep copy of the values (no graph link, gradient flag preserved).
  Tensor clone() const;

  bool all_finite() const;

  /// Reverse-mode sweep from a scalar. Populates grad on every tensor in the
  /// graph that requires a gradient; leaf gradients accumulate across calls.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Throws std::domain_error naming `where` if any value is NaN or infinite.
void check_finite(const Tensor& t, const std::string& where);

}  // namespace ecnet
