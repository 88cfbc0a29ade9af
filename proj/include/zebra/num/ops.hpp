// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zebra/num/tensor.hpp"

// Differentiable operators. Every op records its backward rule when grad mode
// is on. Binary elementwise ops broadcast only along leading axes: the second
// operand's shape must equal, or be a suffix of, the first operand's shape.
namespace zebra::num {

template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// [..., K] x [K, N] -> [..., N]
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Swaps the last two axes.
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& a);
/// One extent may be -1 and is inferred.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, int axis, std::int64_t start, std::int64_t length);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);

template <typename T> BasicTensor<T> silu(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& a);

/// x / rms(x) * gain over the last axis.
template <typename T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, T eps = T(1e-6));

/// Gathers rows of `table` [V, D]; output shape is id_shape + [D].
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids,
                         Shape id_shape);

/// Cross-correlation, no bias. input [B,C,L], weight [O,C,k].
template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight, int stride,
                      int pad);
/// input [B,C,H,W], weight [O,C,kh,kw]; stride and pad apply to both axes.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, int stride,
                      int pad);
/// Adds bias [C] along axis 1 of x [B,C,...].
template <typename T>
BasicTensor<T> channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
/// Nearest-neighbour x2 upsampling over every axis after [B,C].
template <typename T> BasicTensor<T> upsample2x(const BasicTensor<T>& x);

template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& logits, int axis);

/// Mean over unmasked rows of -log softmax(logits)[target]. logits [N,V];
/// mask is empty (all rows count) or has N entries, nonzero = counted.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::span<const std::uint8_t> mask = {});

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& a);
/// L2 norm over all axes but the first: [B, ...] -> [B].
template <typename T> BasicTensor<T> row_norm(const BasicTensor<T>& a);

template <typename T> BasicTensor<T> stop_gradient(const BasicTensor<T>& a);
/// Forward value of `quantized`, gradient routed to `continuous` unchanged.
template <typename T>
BasicTensor<T> straight_through(const BasicTensor<T>& continuous, const BasicTensor<T>& quantized);

/// Rotary embedding on x [B,T,H,D] (half-split pairing); token t sits at
/// absolute position offset + t.
template <typename T>
BasicTensor<T> rope(const BasicTensor<T>& x, std::int64_t offset, double base);

/// Causal multi-head attention. q [B,Tq,H,D], k/v [B,Tk,H,D]. Query i sits at
/// absolute position q_offset + i and sees keys j <= q_offset + i. When
/// `segments` is non-empty ([B,Tk] ids) attention is further restricted to
/// keys of the same segment.
template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::int64_t q_offset = 0,
                                std::span<const std::int32_t> segments = {});

/// Raw forward kernel shared with the KV-cache path. Strides are in elements
/// between consecutive batch items; rows inside a batch item are [T,H,D].
/// `lse` (optional) receives log-sum-exp per (b,h,i).
template <typename T>
void attention_forward_kernel(const T* q, const T* k, const T* v, T* out, T* lse,
                              std::int64_t batch, std::int64_t tq, std::int64_t tk,
                              std::int64_t heads, std::int64_t head_dim, std::int64_t q_offset,
                              std::int64_t q_stride, std::int64_t kv_stride,
                              const std::int32_t* segments, std::int64_t seg_stride);

}  // namespace zebra::num
