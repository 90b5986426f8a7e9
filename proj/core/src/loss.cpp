#include "ecnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecnet/detail/autograd.hpp"

namespace ecnet {

void LossConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(gamma >= 0)) throw std::invalid_argument("gamma must be nonnegative");
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
}

double smooth_l1(double target, double pred) {
  const double r = std::abs(target - pred);
  return r < 1.0 ? 0.5 * r * r : r - 0.5;
}

double boundary_loss(const PositionTarget& target, const Candidate& cand) {
  return smooth_l1(static_cast<double>(target.left), cand.left_offset) +
         smooth_l1(static_cast<double>(target.right), cand.right_offset);
}

double focal_loss(int y, double p, double alpha, double gamma) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  if (y == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return (alpha - 1.0) * std::pow(p, gamma) * std::log1p(-p);
}

namespace {

double smooth_l1_dpred(double target, double pred) {
  const double r = target - pred;
  if (std::abs(r) < 1.0) return -r;
  return r > 0 ? -1.0 : 1.0;
}

double focal_dp(int y, double p, double alpha, double gamma) {
  if (p < kProbClamp || p > 1.0 - kProbClamp) return 0.0;
  if (y == 1) {
    const double q = 1.0 - p;
    const double lead = gamma == 0 ? 0.0 : alpha * gamma * std::pow(q, gamma - 1.0) * std::log(p);
    return lead - alpha * std::pow(q, gamma) / p;
  }
  const double lead = gamma == 0 ? 0.0 : gamma * std::pow(p, gamma - 1.0) * std::log1p(-p);
  return (alpha - 1.0) * (lead - std::pow(p, gamma) / (1.0 - p));
}

template <class Visit>
void for_each_focal_term(std::size_t gold_slot, std::size_t classes, FocalMode mode, Visit visit) {
  if (mode == FocalMode::kGoldOnly) {
    visit(gold_slot, 1);
    return;
  }
  for (std::size_t c = 0; c < classes; ++c) visit(c, c == gold_slot ? 1 : 0);
}

}  // namespace

LossParts entity_loss(std::span<const PositionTarget> targets, std::span<const Candidate> cands,
                      const LossConfig& cfg) {
  if (targets.size() != cands.size()) throw std::invalid_argument("entity_loss: size mismatch");
  if (targets.empty()) throw std::invalid_argument("entity_loss: no positions");
  LossParts parts;
  double focal_sum = 0;
  double bound_sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& probs = cands[i].class_probs;
    const std::size_t n_types = probs.size() - 1;
    for_each_focal_term(targets[i].class_slot(n_types), probs.size(), cfg.focal_mode,
                        [&](std::size_t c, int y) {
                          focal_sum += focal_loss(y, probs[c], cfg.alpha, cfg.gamma);
                        });
    if (targets[i].is_entity()) {
      bound_sum += boundary_loss(targets[i], cands[i]);
      ++parts.entity_positions;
    }
  }
  parts.positions = targets.size();
  parts.classification = cfg.beta * focal_sum / static_cast<double>(parts.positions);
  if (parts.entity_positions > 0) {
    parts.boundary = bound_sum / static_cast<double>(parts.entity_positions);
  }
  return parts;
}

Tensor entity_loss(const HeadOutput& out, std::span<const PositionTarget> targets,
                   std::span<const std::uint8_t> mask, const LossConfig& cfg, LossParts* parts) {
  const Tensor& probs = out.probs;
  if (probs.rank() != 3) throw ShapeError("entity_loss: probs must be [B x T x C]");
  const std::size_t rows = probs.dim(0) * probs.dim(1);
  const std::size_t classes = probs.dim(2);
  const std::size_t n_types = classes - 1;
  if (targets.size() != rows || mask.size() != rows || out.left.numel() != rows ||
      out.right.numel() != rows) {
    throw ShapeError("entity_loss: targets/mask/offsets do not match probs " +
                     to_string(probs.shape()));
  }

  const auto p = probs.data();
  const auto lhat = out.left.data();
  const auto rhat = out.right.data();
  LossParts local;
  double focal_sum = 0;
  double bound_sum = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ++local.positions;
    const auto& t = targets[r];
    if (t.is_entity() && t.type_id > static_cast<int>(n_types)) {
      throw std::invalid_argument("entity_loss: target type outside the class range");
    }
    for_each_focal_term(t.class_slot(n_types), classes, cfg.focal_mode, [&](std::size_t c, int y) {
      focal_sum += focal_loss(y, p[r * classes + c], cfg.alpha, cfg.gamma);
    });
    if (t.is_entity()) {
      ++local.entity_positions;
      bound_sum += smooth_l1(static_cast<double>(t.left), lhat[r]) +
                   smooth_l1(static_cast<double>(t.right), rhat[r]);
    }
  }
  if (local.positions == 0) throw std::invalid_argument("entity_loss: batch has no real positions");
  const double cls_scale = cfg.beta / static_cast<double>(local.positions);
  const double bound_scale =
      local.entity_positions ? 1.0 / static_cast<double>(local.entity_positions) : 0.0;
  local.classification = cls_scale * focal_sum;
  local.boundary = bound_scale * bound_sum;
  if (parts) *parts = local;

  std::vector<PositionTarget> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return detail::make_result(
      {1}, {local.total()}, {out.probs, out.left, out.right},
      [cfg, classes, n_types, cls_scale, bound_scale, tgt = std::move(tgt),
       msk = std::move(msk)](detail::Node& self) {
        const double g = self.grad[0];
        detail::Node& pp = *self.parents[0];
        detail::Node& pl = *self.parents[1];
        detail::Node& pr = *self.parents[2];
        for (std::size_t r = 0; r < tgt.size(); ++r) {
          if (!msk[r]) continue;
          const auto& t = tgt[r];
          if (pp.requires_grad) {
            auto& gp = pp.grad_buffer();
            for_each_focal_term(t.class_slot(n_types), classes, cfg.focal_mode,
                                [&](std::size_t c, int y) {
                                  gp[r * classes + c] +=
                                      g * cls_scale *
                                      focal_dp(y, pp.data[r * classes + c], cfg.alpha, cfg.gamma);
                                });
          }
          if (!t.is_entity()) continue;
          if (pl.requires_grad) {
            pl.grad_buffer()[r] +=
                g * bound_scale * smooth_l1_dpred(static_cast<double>(t.left), pl.data[r]);
          }
          if (pr.requires_grad) {
            pr.grad_buffer()[r] +=
                g * bound_scale * smooth_l1_dpred(static_cast<double>(t.right), pr.data[r]);
          }
        }
      });
}

}  // namespace ecnet
