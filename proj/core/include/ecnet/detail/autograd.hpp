#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ecnet/tensor.hpp"

namespace ecnet::detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

using BackwardFn = std::function<void(Node&)>;

/// Wraps a freshly computed value as an op result. The graph link is kept only
/// when at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn fn);

inline Node& node_of(const Tensor& t) { return *t.node(); }

}  // namespace ecnet::detail
