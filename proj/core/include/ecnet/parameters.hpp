#pragma once

#include <random>
#include <string>
#include <vector>

#include "ecnet/tensor.hpp"

namespace ecnet {

enum class Init { kGlorot, kZeros, kOnes };

struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Ordered registry of trainable leaves. Registration order is the
/// serialisation order.
class ParameterSet {
 public:
  /// Glorot-uniform limit is sqrt(6 / (fan_in + fan_out)). For [in x out]
  /// matrices fans are in/out; for [out x in x k] kernels in*k / out*k.
  Tensor add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<NamedParameter>& entries() { return entries_; }
  const Tensor* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<NamedParameter> entries_;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace ecnet
