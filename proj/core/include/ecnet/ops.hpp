#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ecnet/tensor.hpp"

// Differentiable operations. Unless stated otherwise operands must have
// identical shapes; there is no implicit broadcasting.
namespace ecnet::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
/// alpha = 1: x for x > 0, exp(x) - 1 otherwise.
Tensor elu(const Tensor& x);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Normalises each last-axis vector to zero mean / unit variance (biased
/// variance plus eps), then applies the affine gamma * xhat + beta.
/// gamma and beta have shape [D] where D is the last extent of x.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Inverted dropout. Returns `x` itself when not training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

/// [M x K] * [K x N] -> [M x N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map over the last axis: x[..., K] * w[K x N] + bias[N].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Concatenation along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Positionwise maximum across equally shaped tensors. On exact ties the
/// gradient goes to the lowest-indexed input.
Tensor max_of(const std::vector<Tensor>& parts);

/// Sum of all elements, as a shape-[1] tensor.
Tensor sum(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

/// Zeroes every row (last-axis vector) whose mask entry is 0. The mask has
/// one entry per row, i.e. numel / last extent entries.
Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask);

/// Same-padded 1-D convolution along the sequence axis.
/// input [B x T x Din] (or [T x Din]), weights [Dout x Din x k], bias [Dout].
/// Output position t sums the window [t - (k-1)/2, t + (k-1)/2]; positions
/// outside [0, T-1] contribute zero. Sequences in a batch never mix.
Tensor conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Row lookup: table [V x D], ids in [0, V) -> [ids.size() x D].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Multi-head scaled dot-product attention.
/// q, k, v: [B x T x D]; key_mask has B*T entries, 0 marking padding keys,
/// which receive exactly zero weight. Every sequence needs at least one real
/// key. Output [B x T x D] is the per-head weighted sum of values, heads
/// concatenated back along the last axis.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::span<const std::uint8_t> key_mask);

/// Attention probabilities [B x heads x T x T] (no gradient), as used by
/// attention().
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::span<const std::uint8_t> key_mask);

}  // namespace ecnet::ops
