// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/num/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace zebra::num {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

using Index = std::int64_t;

void check_broadcast(const Shape& a, const Shape& b, const char* op) {
  bool ok = b.size() <= a.size();
  for (std::size_t i = 0; ok && i < b.size(); ++i) {
    ok = a[a.size() - b.size() + i] == b[i];
  }
  if (!ok) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                     " are not leading-axis broadcast compatible");
  }
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

Index prod(const Shape& s, std::size_t from, std::size_t to) {
  Index n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

template <typename T>
std::vector<T> copy_values(const BasicTensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_broadcast(a.shape(), b.shape(), "add");
  auto out = copy_values(a);
  const Index m = b.numel();
  const auto bd = b.data();
  if (m > 0) {
    for (Index blk = 0; blk < a.numel(); blk += m)
      for (Index j = 0; j < m; ++j) out[blk + j] += bd[j];
  }
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, "add", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const T* g = self.grad.data();
    const Index n = static_cast<Index>(self.value.size());
    if (A.requires_grad) {
      T* ga = A.grad_buffer();
      for (Index i = 0; i < n; ++i) ga[i] += g[i];
    }
    const Index m = static_cast<Index>(B.value.size());
    if (B.requires_grad && m > 0) {
      T* gb = B.grad_buffer();
      for (Index blk = 0; blk < n; blk += m)
        for (Index j = 0; j < m; ++j) gb[j] += g[blk + j];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_broadcast(a.shape(), b.shape(), "sub");
  auto out = copy_values(a);
  const Index m = b.numel();
  const auto bd = b.data();
  if (m > 0) {
    for (Index blk = 0; blk < a.numel(); blk += m)
      for (Index j = 0; j < m; ++j) out[blk + j] -= bd[j];
  }
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const T* g = self.grad.data();
    const Index n = static_cast<Index>(self.value.size());
    if (A.requires_grad) {
      T* ga = A.grad_buffer();
      for (Index i = 0; i < n; ++i) ga[i] += g[i];
    }
    const Index m = static_cast<Index>(B.value.size());
    if (B.requires_grad && m > 0) {
      T* gb = B.grad_buffer();
      for (Index blk = 0; blk < n; blk += m)
        for (Index j = 0; j < m; ++j) gb[j] -= g[blk + j];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_broadcast(a.shape(), b.shape(), "mul");
  auto out = copy_values(a);
  const Index m = b.numel();
  const auto bd = b.data();
  if (m > 0) {
    for (Index blk = 0; blk < a.numel(); blk += m)
      for (Index j = 0; j < m; ++j) out[blk + j] *= bd[j];
  }
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const T* g = self.grad.data();
    const Index n = static_cast<Index>(self.value.size());
    const Index m = static_cast<Index>(B.value.size());
    if (m == 0) return;
    if (A.requires_grad) {
      T* ga = A.grad_buffer();
      for (Index blk = 0; blk < n; blk += m)
        for (Index j = 0; j < m; ++j) ga[blk + j] += g[blk + j] * B.value[j];
    }
    if (B.requires_grad) {
      T* gb = B.grad_buffer();
      for (Index blk = 0; blk < n; blk += m)
        for (Index j = 0; j < m; ++j) gb[j] += g[blk + j] * A.value[blk + j];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  auto out = copy_values(a);
  for (auto& v : out) v *= factor;
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, "scale",
                                     [factor](Node<T>& self) {
                                       T* ga = self.inputs[0]->grad_buffer();
                                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         ga[i] += factor * self.grad[i];
                                     });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.dim(-1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index k = b.dim(0);
  const Index n = b.dim(1);
  const Index m = k == 0 ? 0 : a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(static_cast<std::size_t>(m * n));
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {a, b}, "matmul", [m, k, n](Node<T>& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        ConstMatMap<T> g(self.grad.data(), m, n);
        if (A.requires_grad) {
          MatMap<T>(A.grad_buffer(), m, k).noalias() +=
              g * ConstMatMap<T>(B.value.data(), k, n).transpose();
        }
        if (B.requires_grad) {
          MatMap<T>(B.grad_buffer(), k, n).noalias() +=
              ConstMatMap<T>(A.value.data(), m, k).transpose() * g;
        }
      });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 for shape " + to_string(a.shape()));
  const Index r = a.dim(-2);
  const Index c = a.dim(-1);
  const Index batch = r * c == 0 ? 0 : a.numel() / (r * c);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<T> out(a.data().size());
  const T* src = a.data().data();
  for (Index bi = 0; bi < batch; ++bi) {
    MatMap<T>(out.data() + bi * r * c, c, r) = ConstMatMap<T>(src + bi * r * c, r, c).transpose();
  }
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {a}, "transpose", [batch, r, c](Node<T>& self) {
        T* ga = self.inputs[0]->grad_buffer();
        for (Index bi = 0; bi < batch; ++bi) {
          MatMap<T>(ga + bi * r * c, r, c) +=
              ConstMatMap<T>(self.grad.data() + bi * r * c, c, r).transpose();
        }
      });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 in " + to_string(shape));
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.numel() % known != 0) {
      throw ShapeError("reshape: cannot infer extent for " + to_string(shape) + " from " +
                       to_string(a.shape()));
    }
    shape[static_cast<std::size_t>(infer)] = a.numel() / known;
  }
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape) +
                     " changes element count");
  }
  return BasicTensor<T>::make_result(std::move(shape), copy_values(a), {a}, "reshape",
                                     [](Node<T>& self) {
                                       T* ga = self.inputs[0]->grad_buffer();
                                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         ga[i] += self.grad[i];
                                     });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, int axis, Index start, Index length) {
  const int ax = normalize_axis(axis, a.rank(), "slice");
  const Index extent = a.dim(ax);
  if (start < 0 || length < 0 || start + length > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                     ") outside axis of extent " + std::to_string(extent) + " in " +
                     to_string(a.shape()));
  }
  const auto& s = a.shape();
  const Index outer = prod(s, 0, static_cast<std::size_t>(ax));
  const Index inner = prod(s, static_cast<std::size_t>(ax) + 1, s.size());
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(ax)] = length;
  std::vector<T> out(static_cast<std::size_t>(outer * length * inner));
  const T* src = a.data().data();
  for (Index o = 0; o < outer; ++o) {
    std::copy_n(src + (o * extent + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {a}, "slice",
      [outer, extent, start, length, inner](Node<T>& self) {
        T* ga = self.inputs[0]->grad_buffer();
        for (Index o = 0; o < outer; ++o) {
          const T* g = self.grad.data() + o * length * inner;
          T* dst = ga + (o * extent + start) * inner;
          for (Index i = 0; i < length * inner; ++i) dst[i] += g[i];
        }
      });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int ax = normalize_axis(axis, parts[0].rank(), "concat");
  Shape out_shape = parts[0].shape();
  Index total = 0;
  std::vector<Index> extents;
  for (const auto& p : parts) {
    bool ok = p.rank() == parts[0].rank();
    for (int i = 0; ok && i < p.rank(); ++i) {
      ok = i == ax || p.dim(i) == parts[0].dim(i);
    }
    if (!ok) {
      throw ShapeError("concat: shape " + to_string(p.shape()) + " incompatible with " +
                       to_string(parts[0].shape()) + " along axis " + std::to_string(ax));
    }
    extents.push_back(p.dim(ax));
    total += p.dim(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  const Index outer = prod(out_shape, 0, static_cast<std::size_t>(ax));
  const Index inner = prod(out_shape, static_cast<std::size_t>(ax) + 1, out_shape.size());
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  Index offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].data().data();
    const Index len = extents[p];
    for (Index o = 0; o < outer; ++o) {
      std::copy_n(src + o * len * inner, len * inner, out.data() + (o * total + offset) * inner);
    }
    offset += len;
  }
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), parts, "concat",
      [extents, outer, inner, total](Node<T>& self) {
        Index offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          auto& in = *self.inputs[p];
          const Index len = extents[p];
          if (in.requires_grad) {
            T* gi = in.grad_buffer();
            for (Index o = 0; o < outer; ++o) {
              const T* g = self.grad.data() + (o * total + offset) * inner;
              for (Index i = 0; i < len * inner; ++i) gi[o * len * inner + i] += g[i];
            }
          }
          offset += len;
        }
      });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& a) {
  auto out = copy_values(a);
  for (auto& v : out) v = v / (T(1) + std::exp(-v));
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, "silu", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    T* ga = A.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T x = A.value[i];
      const T s = T(1) / (T(1) + std::exp(-x));
      ga[i] += self.grad[i] * s * (T(1) + x * (T(1) - s));
    }
  });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  auto out = copy_values(a);
  for (auto& v : out) v = T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2)));
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, "gelu", [](Node<T>& self) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    auto& A = *self.inputs[0];
    T* ga = A.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T x = A.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * T(kInvSqrt2)));
      const T pdf = T(kInvSqrt2Pi) * std::exp(T(-0.5) * x * x);
      ga[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, T eps) {
  if (x.rank() < 1 || gain.rank() != 1 || gain.dim(0) != x.dim(-1)) {
    throw ShapeError("rms_norm: gain " + to_string(gain.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const Index d = x.dim(-1);
  const Index rows = d == 0 ? 0 : x.numel() / d;
  auto inv = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  std::vector<T> out(x.data().size());
  const T* xv = x.data().data();
  const T* gv = gain.data().data();
  for (Index r = 0; r < rows; ++r) {
    T ms = 0;
    for (Index j = 0; j < d; ++j) ms += xv[r * d + j] * xv[r * d + j];
    const T ir = T(1) / std::sqrt(ms / T(d) + eps);
    (*inv)[r] = ir;
    for (Index j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * ir * gv[j];
  }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x, gain}, "rms_norm", [inv, rows, d](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& G = *self.inputs[1];
        const T* g = self.grad.data();
        T* gx = X.requires_grad ? X.grad_buffer() : nullptr;
        T* gg = G.requires_grad ? G.grad_buffer() : nullptr;
        for (Index r = 0; r < rows; ++r) {
          const T ir = (*inv)[r];
          const T* xr = X.value.data() + r * d;
          const T* gr = g + r * d;
          T dot = 0;
          for (Index j = 0; j < d; ++j) dot += gr[j] * G.value[j] * xr[j] * ir;
          dot /= T(d);
          for (Index j = 0; j < d; ++j) {
            const T xhat = xr[j] * ir;
            if (gx) gx[r * d + j] += ir * (gr[j] * G.value[j] - xhat * dot);
            if (gg) gg[j] += gr[j] * xhat;
          }
        }
      });
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids,
                         Shape id_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V,D], got " + to_string(table.shape()));
  if (numel(id_shape) != static_cast<Index>(ids.size())) {
    throw ShapeError("embedding: id shape " + to_string(id_shape) + " does not match " +
                     std::to_string(ids.size()) + " ids");
  }
  const Index vocab = table.dim(0);
  const Index d = table.dim(1);
  std::vector<T> out(ids.size() * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside [0," + std::to_string(vocab) + ")");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  Shape out_shape = std::move(id_shape);
  out_shape.push_back(d);
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {table}, "embedding",
      [saved = std::move(saved), d](Node<T>& self) {
        T* gt = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < saved.size(); ++i) {
          T* row = gt + saved[i] * d;
          const T* g = self.grad.data() + i * d;
          for (Index j = 0; j < d; ++j) row[j] += g[j];
        }
      });
}

namespace {

struct Conv1dGeom {
  Index batch, channels, length, out_channels, kernel, stride, pad, out_length;
};

template <typename T>
void im2col_1d(const T* x, const Conv1dGeom& g, T* cols) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index j = 0; j < g.kernel; ++j) {
      T* row = cols + (c * g.kernel + j) * g.out_length;
      for (Index t = 0; t < g.out_length; ++t) {
        const Index src = t * g.stride - g.pad + j;
        row[t] = (src >= 0 && src < g.length) ? x[c * g.length + src] : T(0);
      }
    }
  }
}

template <typename T>
void col2im_1d(const T* cols, const Conv1dGeom& g, T* dx) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index j = 0; j < g.kernel; ++j) {
      const T* row = cols + (c * g.kernel + j) * g.out_length;
      for (Index t = 0; t < g.out_length; ++t) {
        const Index src = t * g.stride - g.pad + j;
        if (src >= 0 && src < g.length) dx[c * g.length + src] += row[t];
      }
    }
  }
}

struct Conv2dGeom {
  Index batch, channels, height, width, out_channels, kh, kw, stride, pad, out_h, out_w;
};

template <typename T>
void im2col_2d(const T* x, const Conv2dGeom& g, T* cols) {
  const Index plane = g.out_h * g.out_w;
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            row[oy * g.out_w + ox] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                                         ? x[(c * g.height + iy) * g.width + ix]
                                         : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_2d(const T* cols, const Conv2dGeom& g, T* dx) {
  const Index plane = g.out_h * g.out_w;
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.width) dx[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight, int stride, int pad) {
  if (input.rank() != 3 || weight.rank() != 3 || input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv1d: input " + to_string(input.shape()) + " and weight " +
                     to_string(weight.shape()) + " are incompatible");
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv1d: stride must be >= 1 and pad >= 0");
  Conv1dGeom g{input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2), stride, pad, 0};
  const Index span = g.length + 2 * g.pad - g.kernel;
  g.out_length = span < 0 ? 0 : span / g.stride + 1;
  if (g.out_length <= 0) {
    throw ShapeError("conv1d: output length <= 0 for input " + to_string(input.shape()) +
                     " and kernel " + std::to_string(g.kernel));
  }
  const Index ck = g.channels * g.kernel;
  std::vector<T> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_length));
  std::vector<T> cols(static_cast<std::size_t>(ck * g.out_length));
  ConstMatMap<T> w(weight.data().data(), g.out_channels, ck);
  for (Index b = 0; b < g.batch; ++b) {
    im2col_1d(input.data().data() + b * g.channels * g.length, g, cols.data());
    MatMap<T>(out.data() + b * g.out_channels * g.out_length, g.out_channels, g.out_length).noalias() =
        w * ConstMatMap<T>(cols.data(), ck, g.out_length);
  }
  return BasicTensor<T>::make_result(
      {g.batch, g.out_channels, g.out_length}, std::move(out), {input, weight}, "conv1d",
      [g, ck](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        std::vector<T> cols(static_cast<std::size_t>(ck * g.out_length));
        ConstMatMap<T> w(W.value.data(), g.out_channels, ck);
        for (Index b = 0; b < g.batch; ++b) {
          ConstMatMap<T> gy(self.grad.data() + b * g.out_channels * g.out_length, g.out_channels,
                            g.out_length);
          if (W.requires_grad) {
            im2col_1d(X.value.data() + b * g.channels * g.length, g, cols.data());
            MatMap<T>(W.grad_buffer(), g.out_channels, ck).noalias() +=
                gy * ConstMatMap<T>(cols.data(), ck, g.out_length).transpose();
          }
          if (X.requires_grad) {
            MatMap<T>(cols.data(), ck, g.out_length).noalias() = w.transpose() * gy;
            col2im_1d(cols.data(), g, X.grad_buffer() + b * g.channels * g.length);
          }
        }
      });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, int stride, int pad) {
  if (input.rank() != 4 || weight.rank() != 4 || input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " and weight " +
                     to_string(weight.shape()) + " are incompatible");
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  Conv2dGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
               weight.dim(2), weight.dim(3), stride, pad, 0, 0};
  const Index sh = g.height + 2 * g.pad - g.kh;
  const Index sw = g.width + 2 * g.pad - g.kw;
  g.out_h = sh < 0 ? 0 : sh / g.stride + 1;
  g.out_w = sw < 0 ? 0 : sw / g.stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) {
    throw ShapeError("conv2d: empty output for input " + to_string(input.shape()) +
                     " and weight " + to_string(weight.shape()));
  }
  const Index ck = g.channels * g.kh * g.kw;
  const Index plane = g.out_h * g.out_w;
  std::vector<T> out(static_cast<std::size_t>(g.batch * g.out_channels * plane));
  std::vector<T> cols(static_cast<std::size_t>(ck * plane));
  ConstMatMap<T> w(weight.data().data(), g.out_channels, ck);
  for (Index b = 0; b < g.batch; ++b) {
    im2col_2d(input.data().data() + b * g.channels * g.height * g.width, g, cols.data());
    MatMap<T>(out.data() + b * g.out_channels * plane, g.out_channels, plane).noalias() =
        w * ConstMatMap<T>(cols.data(), ck, plane);
  }
  return BasicTensor<T>::make_result(
      {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), {input, weight}, "conv2d",
      [g, ck, plane](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& W = *self.inputs[1];
        std::vector<T> cols(static_cast<std::size_t>(ck * plane));
        ConstMatMap<T> w(W.value.data(), g.out_channels, ck);
        const Index in_plane = g.channels * g.height * g.width;
        for (Index b = 0; b < g.batch; ++b) {
          ConstMatMap<T> gy(self.grad.data() + b * g.out_channels * plane, g.out_channels, plane);
          if (W.requires_grad) {
            im2col_2d(X.value.data() + b * in_plane, g, cols.data());
            MatMap<T>(W.grad_buffer(), g.out_channels, ck).noalias() +=
                gy * ConstMatMap<T>(cols.data(), ck, plane).transpose();
          }
          if (X.requires_grad) {
            MatMap<T>(cols.data(), ck, plane).noalias() = w.transpose() * gy;
            col2im_2d(cols.data(), g, X.grad_buffer() + b * in_plane);
          }
        }
      });
}

template <typename T>
BasicTensor<T> channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("channel_bias: bias " + to_string(bias.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const Index batch = x.dim(0);
  const Index channels = x.dim(1);
  const Index inner = prod(x.shape(), 2, x.shape().size());
  auto out = copy_values(x);
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      T* row = out.data() + (b * channels + c) * inner;
      for (Index i = 0; i < inner; ++i) row[i] += bias.data()[c];
    }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x, bias}, "channel_bias",
      [batch, channels, inner](Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (X.requires_grad) {
          T* gx = X.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
        if (B.requires_grad) {
          T* gb = B.grad_buffer();
          for (Index b = 0; b < batch; ++b)
            for (Index c = 0; c < channels; ++c) {
              const T* row = self.grad.data() + (b * channels + c) * inner;
              T acc = 0;
              for (Index i = 0; i < inner; ++i) acc += row[i];
              gb[c] += acc;
            }
        }
      });
}

template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& x) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("upsample2x: expects [B,C,L] or [B,C,H,W], got " + to_string(x.shape()));
  }
  const bool two_d = x.rank() == 4;
  const Index planes = x.dim(0) * x.dim(1);
  const Index h = two_d ? x.dim(2) : 1;
  const Index w = x.dim(-1);
  const Index oh = two_d ? 2 * h : 1;
  const Index ow = 2 * w;
  Shape out_shape = x.shape();
  if (two_d) out_shape[2] = oh;
  out_shape.back() = ow;
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  const T* src = x.data().data();
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j)
        out[(p * oh + i) * ow + j] = src[(p * h + (two_d ? i / 2 : 0)) * w + j / 2];
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {x}, "upsample2x",
      [planes, h, w, oh, ow, two_d](Node<T>& self) {
        T* gx = self.inputs[0]->grad_buffer();
        for (Index p = 0; p < planes; ++p)
          for (Index i = 0; i < oh; ++i)
            for (Index j = 0; j < ow; ++j)
              gx[(p * h + (two_d ? i / 2 : 0)) * w + j / 2] += self.grad[(p * oh + i) * ow + j];
      });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits, int axis) {
  const int ax = normalize_axis(axis, logits.rank(), "softmax");
  const auto& s = logits.shape();
  const Index outer = prod(s, 0, static_cast<std::size_t>(ax));
  const Index len = s[static_cast<std::size_t>(ax)];
  const Index inner = prod(s, static_cast<std::size_t>(ax) + 1, s.size());
  const T* x = logits.data().data();
  for (Index i = 0; i < logits.numel(); ++i) {
    if (std::isnan(x[i])) throw NumericError("softmax: NaN logit at flat index " + std::to_string(i));
  }
  std::vector<T> out(logits.data().size());
  for (Index o = 0; o < outer; ++o)
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (Index j = 0; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      T total = 0;
      for (Index j = 0; j < len; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (Index j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  return BasicTensor<T>::make_result(
      s, std::move(out), {logits}, "softmax", [outer, len, inner](Node<T>& self) {
        T* gx = self.inputs[0]->grad_buffer();
        const T* y = self.value.data();
        const T* g = self.grad.data();
        for (Index o = 0; o < outer; ++o)
          for (Index in = 0; in < inner; ++in) {
            const Index base = o * len * inner + in;
            T dot = 0;
            for (Index j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
            for (Index j = 0; j < len; ++j) {
              const Index idx = base + j * inner;
              gx[idx] += y[idx] * (g[idx] - dot);
            }
          }
      });
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::span<const std::uint8_t> mask) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N,V], got " + to_string(logits.shape()));
  const Index rows = logits.dim(0);
  const Index vocab = logits.dim(1);
  if (static_cast<Index>(targets.size()) != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  if (!mask.empty() && static_cast<Index>(mask.size()) != rows) {
    throw ShapeError("cross_entropy: mask length " + std::to_string(mask.size()) + " != rows " +
                     std::to_string(rows));
  }
  const T* x = logits.data().data();
  Index counted = 0;
  double total = 0;
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * vocab));
  for (Index r = 0; r < rows; ++r) {
    if (!mask.empty() && mask[r] == 0) continue;
    const Index t = targets[r];
    if (t < 0 || t >= vocab) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " at row " + std::to_string(r) +
                       " outside [0," + std::to_string(vocab) + ")");
    }
    const T* row = x + r * vocab;
    T mx = *std::max_element(row, row + vocab);
    T acc = 0;
    T* p = probs->data() + r * vocab;
    for (Index j = 0; j < vocab; ++j) {
      p[j] = std::exp(row[j] - mx);
      acc += p[j];
    }
    for (Index j = 0; j < vocab; ++j) p[j] /= acc;
    total += static_cast<double>(std::log(acc) + mx - row[t]);
    ++counted;
  }
  if (counted == 0) throw ShapeError("cross_entropy: every position is masked");
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return BasicTensor<T>::make_result(
      {}, {static_cast<T>(total / static_cast<double>(counted))}, {logits}, "cross_entropy",
      [probs, tgt = std::move(tgt), msk = std::move(msk), rows, vocab, counted](Node<T>& self) {
        T* gx = self.inputs[0]->grad_buffer();
        const T g = self.grad[0] / static_cast<T>(counted);
        for (Index r = 0; r < rows; ++r) {
          if (!msk.empty() && msk[r] == 0) continue;
          const T* p = probs->data() + r * vocab;
          T* gr = gx + r * vocab;
          for (Index j = 0; j < vocab; ++j) gr[j] += g * p[j];
          gr[tgt[r]] -= g;
        }
      });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return BasicTensor<T>::make_result({}, {total}, {a}, "sum", [](Node<T>& self) {
    auto& A = *self.inputs[0];
    T* ga = A.grad_buffer();
    for (std::size_t i = 0; i < A.value.size(); ++i) ga[i] += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
BasicTensor<T> row_norm(const BasicTensor<T>& a) {
  if (a.rank() < 1) throw ShapeError("row_norm: rank 0 input");
  const Index rows = a.dim(0);
  const Index inner = rows == 0 ? 0 : a.numel() / rows;
  std::vector<T> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    T acc = 0;
    for (Index i = 0; i < inner; ++i) acc += a.data()[r * inner + i] * a.data()[r * inner + i];
    out[r] = std::sqrt(acc);
  }
  return BasicTensor<T>::make_result({rows}, std::move(out), {a}, "row_norm",
                                     [rows, inner](Node<T>& self) {
                                       auto& A = *self.inputs[0];
                                       T* ga = A.grad_buffer();
                                       for (Index r = 0; r < rows; ++r) {
                                         const T n = self.value[r];
                                         if (n == T(0)) continue;
                                         const T f = self.grad[r] / n;
                                         for (Index i = 0; i < inner; ++i)
                                           ga[r * inner + i] += f * A.value[r * inner + i];
                                       }
                                     });
}

template <typename T>
BasicTensor<T> stop_gradient(const BasicTensor<T>& a) {
  return a.detach();
}

template <typename T>
BasicTensor<T> straight_through(const BasicTensor<T>& continuous, const BasicTensor<T>& quantized) {
  if (continuous.shape() != quantized.shape()) {
    throw ShapeError("straight_through: " + to_string(continuous.shape()) + " vs " +
                     to_string(quantized.shape()));
  }
  return BasicTensor<T>::make_result(continuous.shape(), copy_values(quantized), {continuous},
                                     "straight_through", [](Node<T>& self) {
                                       T* gz = self.inputs[0]->grad_buffer();
                                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                                         gz[i] += self.grad[i];
                                     });
}

template <typename T>
BasicTensor<T> rope(const BasicTensor<T>& x, std::int64_t offset, double base) {
  if (x.rank() != 4 || x.dim(3) % 2 != 0) {
    throw ShapeError("rope: expects [B,T,H,D] with even D, got " + to_string(x.shape()));
  }
  const Index batch = x.dim(0), steps = x.dim(1), heads = x.dim(2), d = x.dim(3);
  const Index half = d / 2;
  auto cs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(steps * half * 2));
  for (Index t = 0; t < steps; ++t)
    for (Index i = 0; i < half; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(offset + t) * freq;
      (*cs)[(t * half + i) * 2] = static_cast<T>(std::cos(angle));
      (*cs)[(t * half + i) * 2 + 1] = static_cast<T>(std::sin(angle));
    }
  auto out = copy_values(x);
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < steps; ++t)
      for (Index h = 0; h < heads; ++h) {
        T* row = out.data() + ((b * steps + t) * heads + h) * d;
        for (Index i = 0; i < half; ++i) {
          const T c = (*cs)[(t * half + i) * 2], s = (*cs)[(t * half + i) * 2 + 1];
          const T x0 = row[i], x1 = row[i + half];
          row[i] = x0 * c - x1 * s;
          row[i + half] = x0 * s + x1 * c;
        }
      }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x}, "rope", [cs, batch, steps, heads, d, half](Node<T>& self) {
        T* gx = self.inputs[0]->grad_buffer();
        for (Index b = 0; b < batch; ++b)
          for (Index t = 0; t < steps; ++t)
            for (Index h = 0; h < heads; ++h) {
              const Index off = ((b * steps + t) * heads + h) * d;
              const T* g = self.grad.data() + off;
              for (Index i = 0; i < half; ++i) {
                const T c = (*cs)[(t * half + i) * 2], s = (*cs)[(t * half + i) * 2 + 1];
                gx[off + i] += g[i] * c + g[i + half] * s;
                gx[off + i + half] += -g[i] * s + g[i + half] * c;
              }
            }
      });
}

namespace {

constexpr Index kQueryBlock = 128;

template <typename T>
void gather_head(const T* src, Index rows, Index heads, Index d, Index h, RowMat<T>& dst) {
  dst.resize(rows, d);
  for (Index i = 0; i < rows; ++i) std::copy_n(src + (i * heads + h) * d, d, dst.data() + i * d);
}

template <typename T>
void scatter_head_add(const RowMat<T>& src, Index heads, Index d, Index h, T* dst) {
  for (Index i = 0; i < src.rows(); ++i) {
    T* row = dst + (i * heads + h) * d;
    for (Index j = 0; j < d; ++j) row[j] += src(i, j);
  }
}

// Key layout for one batch item. When segment ids never decrease (packed
// windows), each query only needs keys from the start of its own segment.
struct KeyRanges {
  const std::int32_t* seg = nullptr;
  bool monotone = false;
  std::vector<Index> begin;  // first key of the segment holding each position

  KeyRanges(const std::int32_t* s, Index n) : seg(s) {
    if (!seg) return;
    monotone = true;
    for (Index j = 1; j < n && monotone; ++j) monotone = seg[j] >= seg[j - 1];
    if (!monotone) return;
    begin.resize(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) begin[j] = (j > 0 && seg[j] == seg[j - 1]) ? begin[j - 1] : j;
  }
  Index first_key(Index pos) const { return monotone ? begin[pos] : 0; }
};

// Masks S in place (disallowed entries -> -inf) for query rows [i0, i0 + rows);
// column c of S is key k0 + c.
template <typename T>
void apply_mask(RowMat<T>& s, Index i0, Index q_offset, Index k0, const KeyRanges& kr) {
  const T neg = -std::numeric_limits<T>::infinity();
  const Index cols = s.cols();
  for (Index r = 0; r < s.rows(); ++r) {
    const Index pos = q_offset + i0 + r;
    T* row = s.data() + r * cols;
    for (Index c = std::max<Index>(0, pos + 1 - k0); c < cols; ++c) row[c] = neg;
    if (!kr.seg) continue;
    if (kr.monotone) {
      for (Index c = 0; c < std::min(cols, kr.begin[pos] - k0); ++c) row[c] = neg;
    } else {
      for (Index c = 0; c < std::min(cols, pos + 1 - k0); ++c)
        if (kr.seg[k0 + c] != kr.seg[pos]) row[c] = neg;
    }
  }
}

}  // namespace

template <typename T>
void attention_forward_kernel(const T* q, const T* k, const T* v, T* out, T* lse, Index batch,
                              Index tq, Index tk, Index heads, Index head_dim, Index q_offset,
                              Index q_stride, Index kv_stride, const std::int32_t* segments,
                              Index seg_stride) {
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(head_dim));
  RowMat<T> Q, K, V, S, O;
  for (Index b = 0; b < batch; ++b) {
    const std::int32_t* seg = segments ? segments + b * seg_stride : nullptr;
    const Index keys = std::min(tk, q_offset + tq);
    const KeyRanges kr(seg, keys);
    for (Index h = 0; h < heads; ++h) {
      gather_head(q + b * q_stride, tq, heads, head_dim, h, Q);
      gather_head(k + b * kv_stride, keys, heads, head_dim, h, K);
      gather_head(v + b * kv_stride, keys, heads, head_dim, h, V);
      for (Index i0 = 0; i0 < tq; i0 += kQueryBlock) {
        const Index rows = std::min(kQueryBlock, tq - i0);
        const Index kl = std::min(keys, q_offset + i0 + rows);
        const Index k0 = kr.first_key(q_offset + i0);
        const Index kn = kl - k0;
        S.noalias() = (Q.middleRows(i0, rows) * K.middleRows(k0, kn).transpose()) * scale_factor;
        apply_mask(S, i0, q_offset, k0, kr);
        for (Index r = 0; r < rows; ++r) {
          const T mx = S.row(r).maxCoeff();
          S.row(r) = (S.row(r).array() - mx).exp().matrix();
          const T total = S.row(r).sum();
          S.row(r) /= total;
          if (lse) lse[(b * heads + h) * tq + i0 + r] = mx + std::log(total);
        }
        O.noalias() = S * V.middleRows(k0, kn);
        for (Index r = 0; r < rows; ++r)
          std::copy_n(O.data() + r * head_dim, head_dim,
                      out + b * q_stride + ((i0 + r) * heads + h) * head_dim);
      }
    }
  }
}

template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, Index q_offset,
                                std::span<const std::int32_t> segments) {
  if (q.rank() != 4 || k.shape() != v.shape() || k.rank() != 4 || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2) || q.dim(3) != k.dim(3)) {
    throw ShapeError("causal_attention: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                     ", v " + to_string(v.shape()) + " are incompatible");
  }
  const Index batch = q.dim(0), tq = q.dim(1), heads = q.dim(2), d = q.dim(3), tk = k.dim(1);
  if (q_offset < 0 || q_offset + tq > tk) {
    throw ShapeError("causal_attention: queries at offset " + std::to_string(q_offset) + " exceed " +
                     std::to_string(tk) + " keys");
  }
  if (!segments.empty() && static_cast<Index>(segments.size()) != batch * tk) {
    throw ShapeError("causal_attention: segment ids must be [B,Tk]");
  }
  std::vector<T> out(static_cast<std::size_t>(q.numel()));
  auto lse = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch * heads * tq));
  attention_forward_kernel(q.data().data(), k.data().data(), v.data().data(), out.data(), lse->data(),
                           batch, tq, tk, heads, d, q_offset, tq * heads * d, tk * heads * d,
                           segments.empty() ? nullptr : segments.data(), tk);
  std::vector<std::int32_t> seg(segments.begin(), segments.end());
  return BasicTensor<T>::make_result(
      q.shape(), std::move(out), {q, k, v}, "causal_attention",
      [lse, seg = std::move(seg), batch, tq, tk, heads, d, q_offset](Node<T>& self) {
        auto& Qn = *self.inputs[0];
        auto& Kn = *self.inputs[1];
        auto& Vn = *self.inputs[2];
        const T scale_factor = T(1) / std::sqrt(static_cast<T>(d));
        const Index keys = std::min(tk, q_offset + tq);
        RowMat<T> Q, K, V, O, dO, S, dP;
        for (Index b = 0; b < batch; ++b) {
          const std::int32_t* sg = seg.empty() ? nullptr : seg.data() + b * tk;
          const KeyRanges kr(sg, keys);
          const Index qs = tq * heads * d, ks = tk * heads * d;
          for (Index h = 0; h < heads; ++h) {
            gather_head(Qn.value.data() + b * qs, tq, heads, d, h, Q);
            gather_head(Kn.value.data() + b * ks, keys, heads, d, h, K);
            gather_head(Vn.value.data() + b * ks, keys, heads, d, h, V);
            gather_head(self.value.data() + b * qs, tq, heads, d, h, O);
            gather_head(self.grad.data() + b * qs, tq, heads, d, h, dO);
            RowMat<T> dQ = RowMat<T>::Zero(tq, d);
            RowMat<T> dK = RowMat<T>::Zero(keys, d);
            RowMat<T> dV = RowMat<T>::Zero(keys, d);
            for (Index i0 = 0; i0 < tq; i0 += kQueryBlock) {
              const Index rows = std::min(kQueryBlock, tq - i0);
              const Index kl = std::min(keys, q_offset + i0 + rows);
              const Index k0 = kr.first_key(q_offset + i0);
              const Index kn = kl - k0;
              S.noalias() = (Q.middleRows(i0, rows) * K.middleRows(k0, kn).transpose()) * scale_factor;
              apply_mask(S, i0, q_offset, k0, kr);
              for (Index r = 0; r < rows; ++r) {
                const T l = (*lse)[(b * heads + h) * tq + i0 + r];
                S.row(r) = (S.row(r).array() - l).exp().matrix();
              }
              dV.middleRows(k0, kn).noalias() += S.transpose() * dO.middleRows(i0, rows);
              dP.noalias() = dO.middleRows(i0, rows) * V.middleRows(k0, kn).transpose();
              for (Index r = 0; r < rows; ++r) {
                const T delta = dO.row(i0 + r).dot(O.row(i0 + r));
                dP.row(r) = (S.row(r).array() * (dP.row(r).array() - delta)).matrix();
              }
              dQ.middleRows(i0, rows).noalias() += (dP * K.middleRows(k0, kn)) * scale_factor;
              dK.middleRows(k0, kn).noalias() += (dP.transpose() * Q.middleRows(i0, rows)) * scale_factor;
            }
            if (Qn.requires_grad) scatter_head_add(dQ, heads, d, h, Qn.grad_buffer() + b * qs);
            if (Kn.requires_grad) scatter_head_add(dK, heads, d, h, Kn.grad_buffer() + b * ks);
            if (Vn.requires_grad) scatter_head_add(dV, heads, d, h, Vn.grad_buffer() + b * ks);
          }
        }
      });
}

#define ZEBRA_INSTANTIATE_OPS(T)                                                                  \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                       \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                  \
  template BasicTensor<T> slice(const BasicTensor<T>&, int, Index, Index);                        \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, int);                        \
  template BasicTensor<T> silu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> rms_norm(const BasicTensor<T>&, const BasicTensor<T>&, T);              \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>, Shape); \
  template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&, int, int);         \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int, int);         \
  template BasicTensor<T> channel_bias(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> upsample2x(const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                                    \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>,     \
                                        std::span<const std::uint8_t>);                           \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                             \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                            \
  template BasicTensor<T> row_norm(const BasicTensor<T>&);                                        \
  template BasicTensor<T> stop_gradient(const BasicTensor<T>&);                                   \
  template BasicTensor<T> straight_through(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> rope(const BasicTensor<T>&, std::int64_t, double);                      \
  template BasicTensor<T> causal_attention(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                           const BasicTensor<T>&, Index,                          \
                                           std::span<const std::int32_t>);                        \
  template void attention_forward_kernel(const T*, const T*, const T*, T*, T*, Index, Index,      \
                                         Index, Index, Index, Index, Index, Index,                \
                                         const std::int32_t*, Index);

ZEBRA_INSTANTIATE_OPS(float)
ZEBRA_INSTANTIATE_OPS(double)

#undef ZEBRA_INSTANTIATE_OPS

}  // namespace zebra::num
