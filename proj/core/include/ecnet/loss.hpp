#pragma once

#include <cstdint>
#include <span>

#include "ecnet/corpus.hpp"
#include "ecnet/heads.hpp"
#include "ecnet/tensor.hpp"

namespace ecnet {

/// Which class slots contribute focal terms at each position.
enum class FocalMode {
  kAllClasses,  // gold slot with y = 1, every other slot with y = 0
  kGoldOnly,    // only the gold slot
};

struct LossConfig {
  double alpha = 0.05;
  double gamma = 2.0;
  double beta = 10.0;
  FocalMode focal_mode = FocalMode::kAllClasses;

  void validate() const;
};

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

/// 0.5 r^2 for |r| < 1, |r| - 0.5 otherwise, with r = target - pred.
double smooth_l1(double target, double pred);

/// smooth_l1 on both offsets; meaningful at gold entity positions only.
double boundary_loss(const PositionTarget& target, const Candidate& cand);

/// y = 1: -alpha (1 - p)^gamma log p
/// y = 0: (alpha - 1) p^gamma log(1 - p)
double focal_loss(int y, double p, double alpha, double gamma);

struct LossParts {
  double classification = 0;  // beta / N * sum of focal terms
  double boundary = 0;        // 1 / T * sum of boundary terms (0 when T = 0)
  std::size_t positions = 0;         // N
  std::size_t entity_positions = 0;  // T

  double total() const { return classification + boundary; }
};

/// Scalar reference over unpadded positions (one target per candidate).
LossParts entity_loss(std::span<const PositionTarget> targets, std::span<const Candidate> cands,
                      const LossConfig& cfg);

/// Differentiable Entity Loss over a padded batch. `targets` and `mask` have
/// one entry per (sequence, position); masked positions contribute nothing.
/// N and T are counted over the whole batch. Throws if no position is real.
Tensor entity_loss(const HeadOutput& out, std::span<const PositionTarget> targets,
                   std::span<const std::uint8_t> mask, const LossConfig& cfg,
                   LossParts* parts = nullptr);

}  // namespace ecnet
