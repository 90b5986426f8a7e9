#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ecnet/encoder.hpp"
#include "ecnet/tensor.hpp"

namespace ecnet {

/// One position's prediction: class distribution over c entity types plus
/// the trailing non-entity slot, and nonnegative boundary offsets.
struct Candidate {
  std::size_t position = 0;
  std::vector<double> class_probs;
  double left_offset = 0;
  double right_offset = 0;
};

struct HeadOutput {
  Tensor probs;  // [B x T x (c + 1)]
  Tensor left;   // [B x T x 1]
  Tensor right;  // [B x T x 1]

  /// Candidates for the first n positions of sequence b.
  std::vector<Candidate> candidates(std::size_t b, std::size_t n) const;
};

/// Per-position classification and offset regression, each a same-padded
/// convolution over the encoder output.
class DetectHeads {
 public:
  DetectHeads(ParameterSet& params, std::size_t d_model, std::size_t n_types,
              std::size_t kernel, bool logit_relu, std::mt19937_64& rng);

  /// softmax(relu(conv(h))) over c + 1 slots; the relu is skipped when
  /// logit_relu is off.
  Tensor classify(const Tensor& h) const;
  /// relu(conv_left(h)), relu(conv_right(h)).
  std::pair<Tensor, Tensor> offsets(const Tensor& h) const;
  HeadOutput forward(const Tensor& h) const;

  std::size_t n_types() const { return n_types_; }

  Conv1d cls;
  Conv1d left;
  Conv1d right;

 private:
  std::size_t n_types_;
  bool logit_relu_;
};

}  // namespace ecnet
