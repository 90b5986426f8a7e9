#include "ecnet/heads.hpp"

#include "ecnet/ops.hpp"

namespace ecnet {

std::vector<Candidate> HeadOutput::candidates(std::size_t b, std::size_t n) const {
  const std::size_t len = probs.dim(1);
  const std::size_t classes = probs.dim(2);
  if (b >= probs.dim(0) || n > len) throw std::out_of_range("candidate request outside batch");
  const auto p = probs.data();
  const auto l = left.data();
  const auto r = right.data();
  std::vector<Candidate> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = b * len + i;
    out[i].position = i;
    out[i].class_probs.assign(p.begin() + static_cast<std::ptrdiff_t>(row * classes),
                              p.begin() + static_cast<std::ptrdiff_t>((row + 1) * classes));
    out[i].left_offset = l[row];
    out[i].right_offset = r[row];
  }
  return out;
}

DetectHeads::DetectHeads(ParameterSet& params, std::size_t d_model, std::size_t n_types,
                         std::size_t kernel, bool logit_relu, std::mt19937_64& rng)
    : cls(params, "heads.cls", d_model, n_types + 1, kernel, rng),
      left(params, "heads.left", d_model, 1, kernel, rng),
      right(params, "heads.right", d_model, 1, kernel, rng),
      n_types_(n_types),
      logit_relu_(logit_relu) {
  if (n_types == 0) throw std::invalid_argument("at least one entity type is required");
}

Tensor DetectHeads::classify(const Tensor& h) const {
  Tensor logits = cls(h);
  if (logit_relu_) logits = ops::relu(logits);
  return ops::softmax(logits);
}

std::pair<Tensor, Tensor> DetectHeads::offsets(const Tensor& h) const {
  return {ops::relu(left(h)), ops::relu(right(h))};
}

HeadOutput DetectHeads::forward(const Tensor& h) const {
  auto [l, r] = offsets(h);
  return {classify(h), std::move(l), std::move(r)};
}

}  // namespace ecnet
