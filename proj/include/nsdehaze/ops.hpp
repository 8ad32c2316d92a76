#ifndef NSDEHAZE_OPS_HPP
#define NSDEHAZE_OPS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "nsdehaze/autograd.hpp"

namespace nsd::ag {

// Elementwise arithmetic. Binary ops broadcast any dimension of size 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(double s, const Var& a) { return add_scalar(scale(a, -1.0), s); }

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var abs(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Zero gradient outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over H and W: (N, C, 1, 1).
Var mean_hw(const Var& a);
/// Mean over channels: (N, 1, H, W).
Var mean_c(const Var& a);

Var concat_c(const Var& a, const Var& b);
/// Repeats a single-channel tensor `channels` times.
Var repeat_c(const Var& a, int channels);
Var reflect_pad(const Var& a, int pad);
/// Bilinear, half-pixel centers; identical convention to imaging::resize.
Var resize_bilinear(const Var& a, int h, int w);
/// Non-overlapping k x k max pooling (H, W divisible by k).
Var max_pool(const Var& a, int k);

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
  static Padding uniform(int p) { return {p, p, p, p}; }
};

/// x: (N, Cin, H, W); weight: (Cout, Cin, k, k); bias: (Cout) as (1, Cout, 1, 1) or empty.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, Padding pad);
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  return conv2d(x, weight, bias, stride, Padding::uniform(pad));
}
/// x: (N, Cin, H, W); weight: (Cin, Cout, k, k). Output (H-1)s - 2p + k + output_padding.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_padding);

Var instance_norm(const Var& x, double eps = 1e-5);

/// Channel batch normalization. In training mode batch statistics are used
/// and the running estimates are updated (unbiased variance, PyTorch style).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

/// Mean over the border-truncated (2r+1)^2 window of each plane.
Var box_mean(const Var& x, int radius);
/// 1-D correlation along rows (horizontal) or columns (vertical) with a fixed
/// kernel of odd length. `same` zero-pads; otherwise the output shrinks.
Var filter_rows(const Var& x, std::span<const double> kernel, bool same);
Var filter_cols(const Var& x, std::span<const double> kernel, bool same);

/// softmax over keys of q^T k: q (B, c, H, W), k (B, c, h, w) -> (B, 1, H*W, h*w).
Var attention_weights(const Var& q, const Var& k);
/// weights (B, 1, N, M) applied to v (B, c, h, w) with M = h*w -> (B, c, out_h, out_w), N = out_h*out_w.
Var attend(const Var& weights, const Var& v, int out_h, int out_w);

/// Indices of the ceil(frac * n) largest values, ties to the lower index,
/// returned in ascending order.
std::vector<std::size_t> top_fraction_indices(std::span<const double> values, double frac);
/// Per batch item: mean of each channel over the top-`frac` brightest pixels
/// (brightness = channel mean), broadcast back to every pixel.
Var top_fraction_mean(const Var& x, double frac);

/// Contextual similarity CX(X, Y) per batch item, (B, 1, 1, 1).
///
/// Positions of each map are flattened into a feature set; when a map has
/// more than `max_positions` positions it is subsampled on a regular strided
/// grid. Both sets are centered by the mean of Y.
Var contextual_similarity(const Var& x, const Var& y, double bandwidth, double eps,
                          std::size_t max_positions);

/// Mean binary cross-entropy of logits against a constant target, logits
/// clamped to [-30, 30].
Var bce_with_logits(const Var& logits, double target);

}  // namespace nsd::ag

#endif  // NSDEHAZE_OPS_HPP
