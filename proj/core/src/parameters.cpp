#include "ecnet/parameters.hpp"

#include <cmath>

namespace ecnet {

Tensor ParameterSet::add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  Tensor t = Tensor::zeros(shape, true);
  if (init == Init::kOnes) {
    for (auto& v : t.mutable_data()) v = 1.0;
  } else if (init == Init::kGlorot) {
    double fan_in = 0;
    double fan_out = 0;
    if (shape.size() == 2) {
      fan_in = static_cast<double>(shape[0]);
      fan_out = static_cast<double>(shape[1]);
    } else if (shape.size() == 3) {
      fan_in = static_cast<double>(shape[1] * shape[2]);
      fan_out = static_cast<double>(shape[0] * shape[2]);
    } else {
      throw ShapeError("glorot init needs a matrix or kernel, got " + to_string(shape));
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.mutable_data()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  entries_.push_back({name, t});
  return t;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.value;
  }
  return nullptr;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

}  // namespace ecnet
