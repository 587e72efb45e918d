#pragma once

#include <cstddef>

#include "siamapn/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// any input requires a gradient; otherwise it is a plain forward computation.
// Broadcasting is limited to scale() (scalar) and mul_channelwise() (per-channel
// vector); any other shape mismatch throws ShapeError.

namespace siamapn {

/// Cross-correlation convolution. x: [N,Cin,H,W], weight: [Cout,Cin,kh,kw],
/// bias: [Cout] or undefined. Output spatial size floor((H+2p-kh)/s)+1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t pad = 0);

/// Max pooling without padding; ties resolve to the first (row-major) cell.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

/// Depth-wise cross-correlation: each channel of `search` is correlated with
/// the matching channel of `templ` (valid mode, no channel mixing).
Tensor dwxcorr(const Tensor& search, const Tensor& templ);

/// [M,K]x[K,P] or batched [B,M,K]x[B,K,P].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose_last2(const Tensor& x);

/// Softmax along the last axis, with max subtraction.
Tensor softmax_lastaxis(const Tensor& x);

/// Global average / max pooling to [N,C,1,1]. gmp routes the gradient to the
/// first maximal cell.
Tensor gap(const Tensor& x);
Tensor gmp(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x * s where s holds a single (typically trainable) value.
Tensor scale(const Tensor& x, const Tensor& s);
/// x * c for a constant c.
Tensor scale_by(const Tensor& x, double c);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);

/// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W] into [N,Ca+Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, end) of an [N,C,H,W] tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);
/// x[N,C,H,W] * w[N,C,1,1] broadcast over H and W.
Tensor mul_channelwise(const Tensor& x, const Tensor& w);
Tensor reshape(const Tensor& x, Shape shape);

/// Sum / mean of all elements into a [1] tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace siamapn
