#include "ecnet/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ecnet/detail/autograd.hpp"

namespace ecnet::ops {

using detail::make_result;
using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Index = Eigen::Index;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

// Elementwise map whose derivative is expressed through input and output.
template <class Fwd, class Deriv>
Tensor pointwise(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return pointwise(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return pointwise(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& x) {
  return pointwise(
      x, [](double v) { return v > 0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

Tensor softmax(const Tensor& x) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * d;
    double* dst = out.data() + r * d;
    const double mx = *std::max_element(src, src + d);
    double total = 0;
    for (std::size_t j = 0; j < d; ++j) total += dst[j] = std::exp(src[j] - mx);
    for (std::size_t j = 0; j < d; ++j) dst[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                     to_string(gamma.shape()) + " and " + to_string(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> out(in.size());
  std::vector<double> xhat(in.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += src[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (src[j] - mean) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gm[j] + bt[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& gy = self.grad;
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j] * xhat[r * d + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j];
        }
        if (px.requires_grad) {
          auto& g = px.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0;
            double mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = gy[r * d + j] * pg.data[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = gy[r * d + j] * pg.data[j];
              g[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto in = x.data();
  std::vector<double> mask(in.size());
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    // 53-bit uniform in [0, 1), independent of the standard library's
    // distribution implementation.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
    out[i] = in[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index m = static_cast<Index>(a.dim(0));
  const Index k = static_cast<Index>(a.dim(1));
  const Index n = static_cast<Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() =
      CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  return make_result({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    CMapMat gy(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MapMat(pa.grad_buffer().data(), m, k).noalias() +=
          gy * CMapMat(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad_buffer().data(), k, n).noalias() +=
          CMapMat(pa.data.data(), m, k).transpose() * gy;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t k = x.shape().back();
  if (w.rank() != 2 || w.dim(0) != k || bias.shape() != Shape{w.dim(1)}) {
    throw ShapeError("linear: input " + to_string(x.shape()) + ", weights " +
                     to_string(w.shape()) + ", bias " + to_string(bias.shape()));
  }
  const std::size_t n = w.dim(1);
  const Index rows = static_cast<Index>(x.numel() / k);
  Shape out_shape = x.shape();
  out_shape.back() = n;
  std::vector<double> out(static_cast<std::size_t>(rows) * n);
  MapMat y(out.data(), rows, static_cast<Index>(n));
  y.noalias() = CMapMat(x.data().data(), rows, static_cast<Index>(k)) *
                CMapMat(w.data().data(), static_cast<Index>(k), static_cast<Index>(n));
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), static_cast<Index>(n));
  const Index ki = static_cast<Index>(k);
  const Index ni = static_cast<Index>(n);
  return make_result(std::move(out_shape), std::move(out), {x, w, bias},
                     [rows, ki, ni](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pw = *self.parents[1];
                       Node& pb = *self.parents[2];
                       CMapMat gy(self.grad.data(), rows, ni);
                       if (px.requires_grad) {
                         MapMat(px.grad_buffer().data(), rows, ki).noalias() +=
                             gy * CMapMat(pw.data.data(), ki, ni).transpose();
                       }
                       if (pw.requires_grad) {
                         MapMat(pw.grad_buffer().data(), ki, ni).noalias() +=
                             CMapMat(px.data.data(), rows, ki).transpose() * gy;
                       }
                       if (pb.requires_grad) {
                         Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), ni) +=
                             gy.colwise().sum();
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: extents differ off-axis: " + to_string(s) + " vs " +
                         to_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_block = out_shape[axis] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.shape()[axis] * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * block, block, out.data() + o * out_block + offset);
    }
    offset += block;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [outer, out_block, offsets](Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         Node& p = *self.parents[i];
                         if (!p.requires_grad) continue;
                         auto& g = p.grad_buffer();
                         const std::size_t block = g.size() / outer;
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = self.grad.data() + o * out_block + offsets[i];
                           double* dst = g.data() + o * block;
                           for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                         }
                       }
                     });
}

Tensor max_of(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("max_of: no inputs");
  for (const auto& p : parts) require_same_shape(parts.front(), p, "max_of");
  const std::size_t n = parts.front().numel();
  std::vector<double> out(parts.front().data().begin(), parts.front().data().end());
  std::vector<std::uint32_t> argmax(n, 0);
  for (std::size_t m = 1; m < parts.size(); ++m) {
    const auto src = parts[m].data();
    for (std::size_t i = 0; i < n; ++i) {
      if (src[i] > out[i]) {
        out[i] = src[i];
        argmax[i] = static_cast<std::uint32_t>(m);
      }
    }
  }
  return make_result(parts.front().shape(), std::move(out), parts,
                     [argmax = std::move(argmax)](Node& self) {
                       for (std::size_t i = 0; i < argmax.size(); ++i) {
                         Node& p = *self.parents[argmax[i]];
                         if (p.requires_grad) p.grad_buffer()[i] += self.grad[i];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  if (mask.size() != rows) {
    throw ShapeError("mask_rows: mask has " + std::to_string(mask.size()) + " entries for " +
                     std::to_string(rows) + " rows");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(r * d), d, 0.0);
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result(x.shape(), std::move(out), {x}, [d, keep = std::move(keep)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < keep.size(); ++r) {
      if (!keep[r]) continue;
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j];
    }
  });
}

Tensor conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw ShapeError("conv1d: input must be [T x Din] or [B x T x Din], got " +
                     to_string(input.shape()));
  }
  const bool batched = input.rank() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t len = input.dim(batched ? 1 : 0);
  const std::size_t din = input.shape().back();
  if (weights.rank() != 3 || weights.dim(1) != din) {
    throw ShapeError("conv1d: weights " + to_string(weights.shape()) + " do not match input " +
                     to_string(input.shape()));
  }
  const std::size_t dout = weights.dim(0);
  const std::size_t k = weights.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (bias.shape() != Shape{dout}) {
    throw ShapeError("conv1d: bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(dout) + " output channels");
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t rows = batch * len;
  const std::size_t width = din * k;

  // im2col: cols[(b, t), c * k + j] = x[b, t + j - pad, c]
  std::vector<double> cols(rows * width, 0.0);
  const auto x = input.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double* dst = cols.data() + (b * len + t) * width;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
        const double* src = x.data() + (b * len + static_cast<std::size_t>(s)) * din;
        for (std::size_t c = 0; c < din; ++c) dst[c * k + j] = src[c];
      }
    }
  }

  const Index r = static_cast<Index>(rows);
  const Index w = static_cast<Index>(width);
  const Index o = static_cast<Index>(dout);
  std::vector<double> out(rows * dout);
  MapMat y(out.data(), r, o);
  y.noalias() = CMapMat(cols.data(), r, w) * CMapMat(weights.data().data(), o, w).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), o);

  Shape out_shape = input.shape();
  out_shape.back() = dout;
  return make_result(
      std::move(out_shape), std::move(out), {input, weights, bias},
      [batch, len, din, k, pad, r, w, o, cols = std::move(cols)](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        CMapMat gy(self.grad.data(), r, o);
        if (pw.requires_grad) {
          MapMat(pw.grad_buffer().data(), o, w).noalias() +=
              gy.transpose() * CMapMat(cols.data(), r, w);
        }
        if (pb.requires_grad) {
          Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), o) += gy.colwise().sum();
        }
        if (px.requires_grad) {
          RowMat gcols = gy * CMapMat(pw.data.data(), o, w);
          auto& gx = px.grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) {
              const double* src = gcols.data() + (b * len + t) * static_cast<std::size_t>(w);
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t s =
                    static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
                double* dst = gx.data() + (b * len + static_cast<std::size_t>(s)) * din;
                for (std::size_t c = 0; c < din; ++c) dst[c] += src[c * k + j];
              }
            }
          }
        }
      });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be 2-D");
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) throw std::out_of_range("gather_rows: id out of range");
    std::copy_n(src.data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table},
                     [d, idx = std::move(idx)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
                       }
                     });
}

namespace {

struct AttnDims {
  std::size_t batch, len, d, heads, dh;
};

AttnDims attention_dims(const Tensor& q, const Tensor& k, std::size_t heads,
                        std::span<const std::uint8_t> key_mask) {
  if (q.rank() != 3) throw ShapeError("attention: expected [B x T x D], got " + to_string(q.shape()));
  require_same_shape(q, k, "attention");
  const AttnDims dims{q.dim(0), q.dim(1), q.dim(2), heads, heads ? q.dim(2) / heads : 0};
  if (heads == 0 || dims.d % heads != 0) {
    throw ShapeError("attention: model width " + std::to_string(dims.d) +
                     " not divisible by head count " + std::to_string(heads));
  }
  if (key_mask.size() != dims.batch * dims.len) {
    throw ShapeError("attention: mask has " + std::to_string(key_mask.size()) + " entries, need " +
                     std::to_string(dims.batch * dims.len));
  }
  for (std::size_t b = 0; b < dims.batch; ++b) {
    if (std::none_of(key_mask.begin() + static_cast<std::ptrdiff_t>(b * dims.len),
                     key_mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * dims.len),
                     [](std::uint8_t m) { return m != 0; })) {
      throw std::invalid_argument("attention: sequence " + std::to_string(b) +
                                  " has no unmasked positions");
    }
  }
  return dims;
}

// probs laid out [B, H, T, T].
std::vector<double> compute_weights(const AttnDims& a, const double* q, const double* k,
                                    std::span<const std::uint8_t> key_mask) {
  const Index t = static_cast<Index>(a.len);
  const Index dh = static_cast<Index>(a.dh);
  const Eigen::OuterStride<> stride(static_cast<Index>(a.d));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a.dh));
  std::vector<double> probs(a.batch * a.heads * a.len * a.len);
  for (std::size_t b = 0; b < a.batch; ++b) {
    const std::uint8_t* mask = key_mask.data() + b * a.len;
    for (std::size_t h = 0; h < a.heads; ++h) {
      CStrided qh(q + b * a.len * a.d + h * a.dh, t, dh, stride);
      CStrided kh(k + b * a.len * a.d + h * a.dh, t, dh, stride);
      MapMat s(probs.data() + (b * a.heads + h) * a.len * a.len, t, t);
      s.noalias() = (qh * kh.transpose()) * inv_sqrt;
      for (Index i = 0; i < t; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < t; ++j)
          if (mask[j]) mx = std::max(mx, s(i, j));
        double total = 0;
        for (Index j = 0; j < t; ++j) {
          s(i, j) = mask[j] ? std::exp(s(i, j) - mx) : 0.0;
          total += s(i, j);
        }
        s.row(i) /= total;
      }
    }
  }
  return probs;
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::span<const std::uint8_t> key_mask) {
  const AttnDims a = attention_dims(q, k, heads, key_mask);
  auto probs = compute_weights(a, q.data().data(), k.data().data(), key_mask);
  return Tensor::from({a.batch, a.heads, a.len, a.len}, std::move(probs));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::span<const std::uint8_t> key_mask) {
  const AttnDims a = attention_dims(q, k, heads, key_mask);
  require_same_shape(q, v, "attention");
  auto probs = compute_weights(a, q.data().data(), k.data().data(), key_mask);

  const Index t = static_cast<Index>(a.len);
  const Index dh = static_cast<Index>(a.dh);
  const Eigen::OuterStride<> stride(static_cast<Index>(a.d));
  std::vector<double> out(q.numel());
  const double* vd = v.data().data();
  for (std::size_t b = 0; b < a.batch; ++b) {
    for (std::size_t h = 0; h < a.heads; ++h) {
      const std::size_t off = b * a.len * a.d + h * a.dh;
      CMapMat p(probs.data() + (b * a.heads + h) * a.len * a.len, t, t);
      Strided(out.data() + off, t, dh, stride).noalias() = p * CStrided(vd + off, t, dh, stride);
    }
  }

  return make_result(q.shape(), std::move(out), {q, k, v}, [a, probs = std::move(probs)](Node& self) {
    Node& pq = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pv = *self.parents[2];
    const Index t = static_cast<Index>(a.len);
    const Index dh = static_cast<Index>(a.dh);
    const Eigen::OuterStride<> stride(static_cast<Index>(a.d));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a.dh));
    double* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
    double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
    double* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
    RowMat dp(t, t);
    for (std::size_t b = 0; b < a.batch; ++b) {
      for (std::size_t h = 0; h < a.heads; ++h) {
        const std::size_t off = b * a.len * a.d + h * a.dh;
        CMapMat p(probs.data() + (b * a.heads + h) * a.len * a.len, t, t);
        CStrided go(self.grad.data() + off, t, dh, stride);
        if (gv) Strided(gv + off, t, dh, stride).noalias() += p.transpose() * go;
        if (!gq && !gk) continue;
        dp.noalias() = go * CStrided(pv.data.data() + off, t, dh, stride).transpose();
        // softmax backward, rowwise: ds = p * (dp - <dp, p>)
        for (Index i = 0; i < t; ++i) {
          const double dot = dp.row(i).dot(p.row(i));
          dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
        }
        dp *= inv_sqrt;
        if (gq) {
          Strided(gq + off, t, dh, stride).noalias() +=
              dp * CStrided(pk.data.data() + off, t, dh, stride);
        }
        if (gk) {
          Strided(gk + off, t, dh, stride).noalias() +=
              dp.transpose() * CStrided(pq.data.data() + off, t, dh, stride);
        }
      }
    }
  });
}

}  // namespace ecnet::ops
