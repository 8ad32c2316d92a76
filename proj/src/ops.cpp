#include "nsdehaze/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nsdehaze/error.hpp"

namespace nsd::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool wants(Node& n, std::size_t i) { return n.parent_wants[i] != 0; }
Tensor& pgrad(Node& n, std::size_t i) { return n.parents[i]->grad_buffer(); }
const Tensor& pval(Node& n, std::size_t i) { return n.parents[i]->value; }

// ---------------------------------------------------------------- broadcast

struct Strides {
  std::size_t n, c, h, w;
};

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto dim = [&](int x, int y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
  };
  return {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
}

Strides broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t sw = 1;
  const std::size_t sh = static_cast<std::size_t>(in.w);
  const std::size_t sc = sh * in.h;
  const std::size_t sn = sc * in.c;
  return {in.n == 1 && out.n > 1 ? 0 : sn, in.c == 1 && out.c > 1 ? 0 : sc,
          in.h == 1 && out.h > 1 ? 0 : sh, in.w == 1 && out.w > 1 ? 0 : sw};
}

template <class F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  std::size_t o = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int h = 0; h < out.h; ++h) {
        const std::size_t ba = n * sa.n + c * sa.c + h * sa.h;
        const std::size_t bb = n * sb.n + c * sb.c + h * sb.h;
        for (int w = 0; w < out.w; ++w, ++o) f(o, ba + w * sa.w, bb + w * sb.w);
      }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Var binary(const Var& a, const Var& b, BinOp op, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const Strides sa = broadcast_strides(a.shape(), out_shape);
  const Strides sb = broadcast_strides(b.shape(), out_shape);
  Tensor out(out_shape);
  const double* av = a.value().ptr();
  const double* bv = b.value().ptr();
  double* ov = out.ptr();
  switch (op) {
    case BinOp::kAdd: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] + bv[j]; }); break;
    case BinOp::kSub: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] - bv[j]; }); break;
    case BinOp::kMul: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] * bv[j]; }); break;
    case BinOp::kDiv: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] / bv[j]; }); break;
  }
  return make_result(std::move(out), {a, b}, [op, out_shape, sa, sb](Node& n) {
    const double* g = n.grad.ptr();
    const double* av = pval(n, 0).ptr();
    const double* bv = pval(n, 1).ptr();
    if (wants(n, 0)) {
      double* ga = pgrad(n, 0).ptr();
      switch (op) {
        case BinOp::kAdd:
        case BinOp::kSub: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; }); break;
        case BinOp::kMul: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * bv[j]; }); break;
        case BinOp::kDiv: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] / bv[j]; }); break;
      }
    }
    if (wants(n, 1)) {
      double* gb = pgrad(n, 1).ptr();
      switch (op) {
        case BinOp::kAdd: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; }); break;
        case BinOp::kSub: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; }); break;
        case BinOp::kMul: for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * av[i]; }); break;
        case BinOp::kDiv:
          for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
            gb[j] -= g[o] * av[i] / (bv[j] * bv[j]);
          });
          break;
      }
    }
  });
}

// Elementwise unary op given value and derivative (from input x and output y).
template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const double* x = a.value().ptr();
  double* y = out.ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = fwd(x[i]);
  return make_result(std::move(out), {a}, [deriv](Node& n) {
    const double* g = n.grad.ptr();
    const double* x = pval(n, 0).ptr();
    const double* y = n.value.ptr();
    double* gx = pgrad(n, 0).ptr();
    for (std::size_t i = 0; i < n.value.numel(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
  });
}

// ------------------------------------------------------------- im2col etc.

struct ConvGeom {
  int channels;
  int in_h, in_w;    // image being sampled
  int k, stride;
  int pad_top, pad_left;
  int out_h, out_w;  // sampling grid
};

void im2col(const double* img, const ConvGeom& g, double* cols) {
  const std::size_t positions = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int ci = 0; ci < g.channels; ++ci) {
    const double* plane = img + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * positions;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_top + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_left + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, double* img) {
  const std::size_t positions = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int ci = 0; ci < g.channels; ++ci) {
    double* plane = img + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * positions;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_left + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) {
  return g.k == 1 && g.stride == 1 && g.pad_top == 0 && g.pad_left == 0 && g.out_h == g.in_h &&
         g.out_w == g.in_w;
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (bias && bias.value().numel() != static_cast<std::size_t>(channels)) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias.value().numel()) +
                     " elements, expected " + std::to_string(channels));
  }
}

// ------------------------------------------------------------ bilinear taps

struct Tap {
  int lo, hi;
  double frac;
};

std::vector<Tap> taps(int in, int out) {
  std::vector<Tap> t(out);
  const double s = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = std::clamp((i + 0.5) * s - 0.5, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    t[i] = {lo, std::min(lo + 1, in - 1), src - lo};
  }
  return t;
}

// Box sum over the truncated window via an integral image.
void box_sum_plane(const double* src, int h, int w, int r, double* dst, bool divide_by_count) {
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  auto s = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += src[y * w + x];
      s(y + 1, x + 1) = s(y, x + 1) + row;
    }
  }
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h - 1, y + r) + 1;
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w - 1, x + r) + 1;
      double v = s(y1, x1) - s(y0, x1) - s(y1, x0) + s(y0, x0);
      if (divide_by_count) v /= static_cast<double>((y1 - y0) * (x1 - x0));
      dst[y * w + x] = v;
    }
  }
}

int window_count(int y, int x, int h, int w, int r) {
  const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
  const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
  return ny * nx;
}

// 1-D correlation along one axis of a plane.
void filter_axis(const double* src, int h, int w, std::span<const double> k, bool same,
                 bool along_rows, double* dst, int oh, int ow) {
  const int half = static_cast<int>(k.size()) / 2;
  const int offset = same ? half : 0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < static_cast<int>(k.size()); ++t) {
        int sy = y;
        int sx = x;
        if (along_rows) sx = x + t - offset; else sy = y + t - offset;
        if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
        acc += k[t] * src[sy * w + sx];
      }
      dst[y * ow + x] = acc;
    }
  }
}

void filter_axis_transpose(const double* g, int h, int w, std::span<const double> k, bool same,
                           bool along_rows, double* dsrc, int oh, int ow) {
  const int half = static_cast<int>(k.size()) / 2;
  const int offset = same ? half : 0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double gv = g[y * ow + x];
      for (int t = 0; t < static_cast<int>(k.size()); ++t) {
        int sy = y;
        int sx = x;
        if (along_rows) sx = x + t - offset; else sy = y + t - offset;
        if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
        dsrc[sy * w + sx] += k[t] * gv;
      }
    }
  }
}

Var filter_1d(const Var& x, std::span<const double> kernel, bool same, bool along_rows) {
  if (kernel.size() % 2 == 0) throw ArgumentError("filter: kernel length must be odd");
  const Shape s = x.shape();
  const int k = static_cast<int>(kernel.size());
  Shape os = s;
  if (!same) {
    if (along_rows) os.w = s.w - k + 1; else os.h = s.h - k + 1;
    if (os.w < 1 || os.h < 1) throw ShapeError("filter: input smaller than kernel");
  }
  std::vector<double> kv(kernel.begin(), kernel.end());
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      filter_axis(x.value().plane(n, c), s.h, s.w, kv, same, along_rows, out.plane(n, c), os.h, os.w);
  return make_result(std::move(out), {x}, [kv, same, along_rows, s, os](Node& nd) {
    Tensor& gx = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        filter_axis_transpose(nd.grad.plane(n, c), s.h, s.w, kv, same, along_rows, gx.plane(n, c), os.h, os.w);
  });
}

}  // namespace

// ------------------------------------------------------------- arithmetic

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::kAdd, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::kSub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::kMul, "mul"); }
Var div(const Var& a, const Var& b) { return binary(a, b, BinOp::kDiv, "div"); }

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary(a,
               [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ------------------------------------------------------------- reductions

Var sum(const Var& a) {
  return make_result(Tensor::scalar(a.value().sum()), {a}, [](Node& n) {
    const double g = n.grad[0];
    Tensor& ga = pgrad(n, 0);
    for (double& v : ga.data()) v += g;
  });
}

Var mean(const Var& a) {
  const double count = static_cast<double>(a.value().numel());
  return make_result(Tensor::scalar(a.value().sum() / count), {a}, [count](Node& n) {
    const double g = n.grad[0] / count;
    Tensor& ga = pgrad(n, 0);
    for (double& v : ga.data()) v += g;
  });
}

Var mean_hw(const Var& a) {
  const Shape s = a.shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  const double count = static_cast<double>(s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = a.value().plane(n, c);
      out.at(n, c, 0, 0) = std::accumulate(p, p + s.plane(), 0.0) / count;
    }
  return make_result(std::move(out), {a}, [s, count](Node& nd) {
    Tensor& ga = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double g = nd.grad.at(n, c, 0, 0) / count;
        double* p = ga.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g;
      }
  });
}

Var mean_c(const Var& a) {
  const Shape s = a.shape();
  Tensor out(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    double* o = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const double* p = a.value().plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) o[i] += p[i];
    }
    for (std::size_t i = 0; i < s.plane(); ++i) o[i] /= s.c;
  }
  return make_result(std::move(out), {a}, [s](Node& nd) {
    Tensor& ga = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n) {
      const double* g = nd.grad.plane(n, 0);
      for (int c = 0; c < s.c; ++c) {
        double* p = ga.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g[i] / s.c;
      }
    }
  });
}

// ----------------------------------------------------------------- layout

Var concat_c(const Var& a, const Var& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_c: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pl = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a.value().plane(n, 0), a.value().plane(n, 0) + sa.c * pl, out.plane(n, 0));
    std::copy(b.value().plane(n, 0), b.value().plane(n, 0) + sb.c * pl, out.plane(n, sa.c));
  }
  return make_result(std::move(out), {a, b}, [sa, sb, pl](Node& nd) {
    for (int n = 0; n < sa.n; ++n) {
      if (wants(nd, 0)) {
        double* ga = pgrad(nd, 0).plane(n, 0);
        const double* g = nd.grad.plane(n, 0);
        for (std::size_t i = 0; i < sa.c * pl; ++i) ga[i] += g[i];
      }
      if (wants(nd, 1)) {
        double* gb = pgrad(nd, 1).plane(n, 0);
        const double* g = nd.grad.plane(n, sa.c);
        for (std::size_t i = 0; i < sb.c * pl; ++i) gb[i] += g[i];
      }
    }
  });
}

Var repeat_c(const Var& a, int channels) {
  if (a.shape().c != 1) throw ShapeError("repeat_c: input must have one channel");
  Shape s = a.shape();
  s.c = channels;
  return add(a, constant(Tensor(s, 0.0)));
}

Var reflect_pad(const Var& a, int pad) {
  const Shape s = a.shape();
  if (pad >= s.h || pad >= s.w) throw ShapeError("reflect_pad: padding must be smaller than the input");
  const Shape os{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  std::vector<std::size_t> src_index(os.plane());
  for (int y = 0; y < os.h; ++y)
    for (int x = 0; x < os.w; ++x)
      src_index[y * os.w + x] = static_cast<std::size_t>(reflect(y - pad, s.h)) * s.w + reflect(x - pad, s.w);
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < os.plane(); ++i) dst[i] = src[src_index[i]];
    }
  return make_result(std::move(out), {a}, [s, os, src_index = std::move(src_index)](Node& nd) {
    Tensor& ga = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double* g = nd.grad.plane(n, c);
        double* dst = ga.plane(n, c);
        for (std::size_t i = 0; i < os.plane(); ++i) dst[src_index[i]] += g[i];
      }
  });
}

Var resize_bilinear(const Var& a, int h, int w) {
  const Shape s = a.shape();
  if (h < 1 || w < 1) throw ArgumentError("resize_bilinear: dimensions must be positive");
  if (h == s.h && w == s.w) return a;
  const auto ty = taps(s.h, h);
  const auto tx = taps(s.w, w);
  const Shape os{s.n, s.c, h, w};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < h; ++y) {
        const Tap& ay = ty[y];
        for (int x = 0; x < w; ++x) {
          const Tap& ax = tx[x];
          const double top = src[ay.lo * s.w + ax.lo] * (1 - ax.frac) + src[ay.lo * s.w + ax.hi] * ax.frac;
          const double bot = src[ay.hi * s.w + ax.lo] * (1 - ax.frac) + src[ay.hi * s.w + ax.hi] * ax.frac;
          dst[y * w + x] = top * (1 - ay.frac) + bot * ay.frac;
        }
      }
    }
  return make_result(std::move(out), {a}, [s, os, ty, tx](Node& nd) {
    Tensor& ga = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double* g = nd.grad.plane(n, c);
        double* dst = ga.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          const Tap& ay = ty[y];
          for (int x = 0; x < os.w; ++x) {
            const Tap& ax = tx[x];
            const double gv = g[y * os.w + x];
            dst[ay.lo * s.w + ax.lo] += gv * (1 - ay.frac) * (1 - ax.frac);
            dst[ay.lo * s.w + ax.hi] += gv * (1 - ay.frac) * ax.frac;
            dst[ay.hi * s.w + ax.lo] += gv * ay.frac * (1 - ax.frac);
            dst[ay.hi * s.w + ax.hi] += gv * ay.frac * ax.frac;
          }
        }
      }
  });
}

Var max_pool(const Var& a, int k) {
  const Shape s = a.shape();
  if (k < 1 || s.h % k != 0 || s.w % k != 0) {
    throw ShapeError("max_pool: input " + s.str() + " not divisible by " + std::to_string(k));
  }
  const Shape os{s.n, s.c, s.h / k, s.w / k};
  Tensor out(os);
  std::vector<std::size_t> arg(os.numel());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x, ++o) {
          std::size_t best = static_cast<std::size_t>(y * k) * s.w + x * k;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const std::size_t idx = static_cast<std::size_t>(y * k + dy) * s.w + x * k + dx;
              if (src[idx] > src[best]) best = idx;
            }
          arg[o] = best;
          out[o] = src[best];
        }
    }
  return make_result(std::move(out), {a}, [s, os, arg = std::move(arg)](Node& nd) {
    Tensor& ga = pgrad(nd, 0);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        double* dst = ga.plane(n, c);
        for (std::size_t i = 0; i < os.plane(); ++i, ++o) dst[arg[o]] += nd.grad[o];
      }
  });
}

// ------------------------------------------------------------ convolutions

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, Padding pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  check_bias(bias, ws.n, "conv2d");
  const int k = ws.h;
  const int oh = (xs.h + pad.top + pad.bottom - k) / stride + 1;
  const int ow = (xs.w + pad.left + pad.right - k) / stride + 1;
  if (oh < 1 || ow < 1 || xs.h + pad.top + pad.bottom < k || xs.w + pad.left + pad.right < k) {
    throw ShapeError("conv2d: input " + xs.str() + " too small for kernel " + std::to_string(k));
  }
  const ConvGeom g{xs.c, xs.h, xs.w, k, stride, pad.top, pad.left, oh, ow};
  const int rows = xs.c * k * k;
  const int positions = oh * ow;
  const bool pointwise = is_pointwise(g);
  const Shape os{xs.n, ws.n, oh, ow};
  Tensor out(os);
  ConstMapMat W(weight.value().ptr(), ws.n, rows);
  RowMat cols;
  if (!pointwise) cols.resize(rows, positions);
  for (int n = 0; n < xs.n; ++n) {
    MapMat O(out.plane(n, 0), ws.n, positions);
    if (pointwise) {
      O.noalias() = W * ConstMapMat(x.value().plane(n, 0), rows, positions);
    } else {
      im2col(x.value().plane(n, 0), g, cols.data());
      O.noalias() = W * cols;
    }
    if (bias) {
      for (int co = 0; co < ws.n; ++co) O.row(co).array() += bias.value()[co];
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g, xs, ws, rows, positions, pointwise](Node& nd) {
    ConstMapMat W(pval(nd, 1).ptr(), ws.n, rows);
    RowMat cols;
    RowMat dcols;
    if (!pointwise) cols.resize(rows, positions);
    const bool want_x = wants(nd, 0);
    const bool want_w = wants(nd, 1);
    const bool want_b = nd.parents.size() > 2 && wants(nd, 2);
    for (int n = 0; n < xs.n; ++n) {
      ConstMapMat G(nd.grad.plane(n, 0), ws.n, positions);
      if (want_w) {
        MapMat dW(pgrad(nd, 1).ptr(), ws.n, rows);
        if (pointwise) {
          dW.noalias() += G * ConstMapMat(pval(nd, 0).plane(n, 0), rows, positions).transpose();
        } else {
          im2col(pval(nd, 0).plane(n, 0), g, cols.data());
          dW.noalias() += G * cols.transpose();
        }
      }
      if (want_b) {
        double* db = pgrad(nd, 2).ptr();
        for (int co = 0; co < ws.n; ++co) db[co] += G.row(co).sum();
      }
      if (want_x) {
        if (pointwise) {
          MapMat dX(pgrad(nd, 0).plane(n, 0), rows, positions);
          dX.noalias() += W.transpose() * G;
        } else {
          dcols.noalias() = W.transpose() * G;
          col2im(dcols.data(), g, pgrad(nd, 0).plane(n, 0));
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();  // (Cin, Cout, k, k)
  if (ws.n != xs.c || ws.h != ws.w) {
    throw ShapeError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  check_bias(bias, ws.c, "conv_transpose2d");
  const int k = ws.h;
  const int oh = (xs.h - 1) * stride - 2 * pad + k + output_padding;
  const int ow = (xs.w - 1) * stride - 2 * pad + k + output_padding;
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: empty output");
  // Geometry of the equivalent forward convolution from the output image to the input grid.
  const ConvGeom g{ws.c, oh, ow, k, stride, pad, pad, xs.h, xs.w};
  const int rows = ws.c * k * k;
  const int positions = xs.h * xs.w;
  const Shape os{xs.n, ws.c, oh, ow};
  Tensor out(os);
  ConstMapMat W(weight.value().ptr(), ws.n, rows);
  RowMat cols(rows, positions);
  for (int n = 0; n < xs.n; ++n) {
    cols.noalias() = W.transpose() * ConstMapMat(x.value().plane(n, 0), xs.c, positions);
    col2im(cols.data(), g, out.plane(n, 0));
    if (bias) {
      for (int co = 0; co < ws.c; ++co) {
        double* p = out.plane(n, co);
        for (std::size_t i = 0; i < os.plane(); ++i) p[i] += bias.value()[co];
      }
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g, xs, ws, os, rows, positions](Node& nd) {
    ConstMapMat W(pval(nd, 1).ptr(), ws.n, rows);
    RowMat gcols(rows, positions);
    const bool want_x = wants(nd, 0);
    const bool want_w = wants(nd, 1);
    const bool want_b = nd.parents.size() > 2 && wants(nd, 2);
    for (int n = 0; n < xs.n; ++n) {
      if (want_x || want_w) im2col(nd.grad.plane(n, 0), g, gcols.data());
      if (want_x) {
        MapMat dX(pgrad(nd, 0).plane(n, 0), xs.c, positions);
        dX.noalias() += W * gcols;
      }
      if (want_w) {
        MapMat dW(pgrad(nd, 1).ptr(), ws.n, rows);
        dW.noalias() += ConstMapMat(pval(nd, 0).plane(n, 0), xs.c, positions) * gcols.transpose();
      }
      if (want_b) {
        double* db = pgrad(nd, 2).ptr();
        for (int co = 0; co < ws.c; ++co) {
          const double* gp = nd.grad.plane(n, co);
          db[co] += std::accumulate(gp, gp + os.plane(), 0.0);
        }
      }
    }
  });
}

// ---------------------------------------------------------- normalization

Var instance_norm(const Var& x, double eps) {
  const Shape s = x.shape();
  const std::size_t m = s.plane();
  Tensor out(s);
  Tensor inv_std(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += p[i];
      mu /= m;
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (p[i] - mu) * (p[i] - mu);
      var /= m;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std.at(n, c, 0, 0) = is;
      double* o = out.plane(n, c);
      for (std::size_t i = 0; i < m; ++i) o[i] = (p[i] - mu) * is;
    }
  return make_result(std::move(out), {x}, [s, m, inv_std](Node& nd) {
    Tensor& gx = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double* g = nd.grad.plane(n, c);
        const double* y = nd.value.plane(n, c);
        double mg = 0.0;
        double mgy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          mg += g[i];
          mgy += g[i] * y[i];
        }
        mg /= m;
        mgy /= m;
        const double is = inv_std.at(n, c, 0, 0);
        double* d = gx.plane(n, c);
        for (std::size_t i = 0; i < m; ++i) d[i] += is * (g[i] - mg - y[i] * mgy);
      }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
  const Shape s = x.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  if (gamma.value().numel() != channels || beta.value().numel() != channels ||
      running_mean.numel() != channels || running_var.numel() != channels) {
    throw ShapeError("batch_norm: parameter size does not match channel count of " + s.str());
  }
  const std::size_t m = s.plane() * s.n;
  std::vector<double> mu(channels);
  std::vector<double> inv_std(channels);
  if (training) {
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      }
      mu[c] = acc / m;
      double var = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) var += (p[i] - mu[c]) * (p[i] - mu[c]);
      }
      var /= m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = m > 1 ? var * m / (m - 1) : var;
      running_mean[c] = (1 - momentum) * running_mean[c] + momentum * mu[c];
      running_var[c] = (1 - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor xhat(s);
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double* xh = xhat.plane(n, c);
      double* o = out.plane(n, c);
      const double gm = gamma.value()[c];
      const double bt = beta.value()[c];
      for (std::size_t i = 0; i < s.plane(); ++i) {
        xh[i] = (p[i] - mu[c]) * inv_std[c];
        o[i] = gm * xh[i] + bt;
      }
    }
  return make_result(std::move(out), {x, gamma, beta},
                     [s, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& nd) {
    const double* gm = pval(nd, 1).ptr();
    for (int c = 0; c < s.c; ++c) {
      double sg = 0.0;
      double sgx = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* g = nd.grad.plane(n, c);
        const double* xh = xhat.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          sg += g[i];
          sgx += g[i] * xh[i];
        }
      }
      if (wants(nd, 1)) pgrad(nd, 1)[c] += sgx;
      if (wants(nd, 2)) pgrad(nd, 2)[c] += sg;
      if (wants(nd, 0)) {
        const double k = gm[c] * inv_std[c];
        for (int n = 0; n < s.n; ++n) {
          const double* g = nd.grad.plane(n, c);
          const double* xh = xhat.plane(n, c);
          double* d = pgrad(nd, 0).plane(n, c);
          for (std::size_t i = 0; i < s.plane(); ++i) {
            d[i] += training ? k * (g[i] - sg / m - xh[i] * sgx / m) : k * g[i];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------- filters

Var box_mean(const Var& x, int radius) {
  if (radius < 0) throw ArgumentError("box_mean: radius must be >= 0");
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) box_sum_plane(x.value().plane(n, c), s.h, s.w, radius, out.plane(n, c), true);
  return make_result(std::move(out), {x}, [s, radius](Node& nd) {
    Tensor& gx = pgrad(nd, 0);
    std::vector<double> scaled(s.plane());
    std::vector<double> summed(s.plane());
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        // The truncated window relation is symmetric, so the adjoint is a box
        // sum of the count-normalized gradient.
        const double* g = nd.grad.plane(n, c);
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx)
            scaled[y * s.w + xx] = g[y * s.w + xx] / window_count(y, xx, s.h, s.w, radius);
        box_sum_plane(scaled.data(), s.h, s.w, radius, summed.data(), false);
        double* d = gx.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) d[i] += summed[i];
      }
  });
}

Var filter_rows(const Var& x, std::span<const double> kernel, bool same) {
  return filter_1d(x, kernel, same, true);
}

Var filter_cols(const Var& x, std::span<const double> kernel, bool same) {
  return filter_1d(x, kernel, same, false);
}

// -------------------------------------------------------------- attention

Var attention_weights(const Var& q, const Var& k) {
  const Shape qs = q.shape();
  const Shape ks = k.shape();
  if (qs.n != ks.n || qs.c != ks.c) {
    throw ShapeError("attention_weights: query " + qs.str() + " and key " + ks.str() + " differ");
  }
  const int c = qs.c;
  const int nq = static_cast<int>(qs.plane());
  const int nk = static_cast<int>(ks.plane());
  Tensor out(Shape{qs.n, 1, nq, nk});
  for (int b = 0; b < qs.n; ++b) {
    ConstMapMat Q(q.value().plane(b, 0), c, nq);
    ConstMapMat K(k.value().plane(b, 0), c, nk);
    MapMat P(out.plane(b, 0), nq, nk);
    P.noalias() = Q.transpose() * K;
    for (int i = 0; i < nq; ++i) {
      const double mx = P.row(i).maxCoeff();
      P.row(i) = (P.row(i).array() - mx).exp();
      P.row(i) /= P.row(i).sum();
    }
  }
  return make_result(std::move(out), {q, k}, [qs, c, nq, nk](Node& nd) {
    RowMat dL(nq, nk);
    for (int b = 0; b < qs.n; ++b) {
      ConstMapMat P(nd.value.plane(b, 0), nq, nk);
      ConstMapMat G(nd.grad.plane(b, 0), nq, nk);
      dL = P.cwiseProduct(G);
      const Eigen::VectorXd row_dot = dL.rowwise().sum();
      dL -= (P.array().colwise() * row_dot.array()).matrix();
      if (wants(nd, 0)) {
        MapMat dQ(pgrad(nd, 0).plane(b, 0), c, nq);
        dQ.noalias() += ConstMapMat(pval(nd, 1).plane(b, 0), c, nk) * dL.transpose();
      }
      if (wants(nd, 1)) {
        MapMat dK(pgrad(nd, 1).plane(b, 0), c, nk);
        dK.noalias() += ConstMapMat(pval(nd, 0).plane(b, 0), c, nq) * dL;
      }
    }
  });
}

Var attend(const Var& weights, const Var& v, int out_h, int out_w) {
  const Shape ps = weights.shape();
  const Shape vs = v.shape();
  const int nq = out_h * out_w;
  const int nk = static_cast<int>(vs.plane());
  if (ps.n != vs.n || ps.c != 1 || ps.h != nq || ps.w != nk) {
    throw ShapeError("attend: weights " + ps.str() + " incompatible with values " + vs.str());
  }
  const int c = vs.c;
  Tensor out(Shape{vs.n, c, out_h, out_w});
  for (int b = 0; b < vs.n; ++b) {
    MapMat F(out.plane(b, 0), c, nq);
    F.noalias() = ConstMapMat(v.value().plane(b, 0), c, nk) * ConstMapMat(weights.value().plane(b, 0), nq, nk).transpose();
  }
  return make_result(std::move(out), {weights, v}, [vs, c, nq, nk](Node& nd) {
    for (int b = 0; b < vs.n; ++b) {
      ConstMapMat G(nd.grad.plane(b, 0), c, nq);
      if (wants(nd, 0)) {
        MapMat dP(pgrad(nd, 0).plane(b, 0), nq, nk);
        dP.noalias() += G.transpose() * ConstMapMat(pval(nd, 1).plane(b, 0), c, nk);
      }
      if (wants(nd, 1)) {
        MapMat dV(pgrad(nd, 1).plane(b, 0), c, nk);
        dV.noalias() += G * ConstMapMat(pval(nd, 0).plane(b, 0), nq, nk);
      }
    }
  });
}

std::vector<std::size_t> top_fraction_indices(std::span<const double> values, double frac) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ArgumentError("top_fraction: fraction must lie in (0,1]");
  const std::size_t n = values.size();
  if (n == 0) return {};
  const auto count = static_cast<std::size_t>(
      std::clamp(std::ceil(frac * static_cast<double>(n) - 1e-9), 1.0, static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] > values[b] || (values[a] == values[b] && a < b);
                    });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

Var top_fraction_mean(const Var& x, double frac) {
  const Shape s = x.shape();
  Tensor out(s);
  std::vector<std::vector<std::size_t>> selected(s.n);
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> brightness(s.plane(), 0.0);
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) brightness[i] += p[i];
    }
    for (double& b : brightness) b /= s.c;
    selected[n] = top_fraction_indices(brightness, frac);
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      double acc = 0.0;
      for (std::size_t idx : selected[n]) acc += p[idx];
      const double m = acc / static_cast<double>(selected[n].size());
      std::fill(out.plane(n, c), out.plane(n, c) + s.plane(), m);
    }
  }
  return make_result(std::move(out), {x}, [s, selected = std::move(selected)](Node& nd) {
    Tensor& gx = pgrad(nd, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double* g = nd.grad.plane(n, c);
        const double gsum = std::accumulate(g, g + s.plane(), 0.0) / static_cast<double>(selected[n].size());
        double* d = gx.plane(n, c);
        for (std::size_t idx : selected[n]) d[idx] += gsum;
      }
  });
}

// --------------------------------------------------------- contextual loss

namespace {

struct FeatureSet {
  std::vector<std::size_t> positions;  // plane offsets of the sampled positions
};

FeatureSet sample_positions(const Shape& s, std::size_t max_positions) {
  int stride = 1;
  auto count = [&](int st) {
    return static_cast<std::size_t>((s.h + st - 1) / st) * static_cast<std::size_t>((s.w + st - 1) / st);
  };
  while (count(stride) > max_positions) ++stride;
  FeatureSet fs;
  for (int y = 0; y < s.h; y += stride)
    for (int x = 0; x < s.w; x += stride) fs.positions.push_back(static_cast<std::size_t>(y) * s.w + x);
  return fs;
}

RowMat gather(const Tensor& t, int b, const FeatureSet& fs) {
  const int c = t.shape().c;
  RowMat m(static_cast<int>(fs.positions.size()), c);
  for (int ch = 0; ch < c; ++ch) {
    const double* p = t.plane(b, ch);
    for (std::size_t i = 0; i < fs.positions.size(); ++i) m(static_cast<int>(i), ch) = p[fs.positions[i]];
  }
  return m;
}

void scatter_add(Tensor& t, int b, const FeatureSet& fs, const RowMat& m) {
  const int c = t.shape().c;
  for (int ch = 0; ch < c; ++ch) {
    double* p = t.plane(b, ch);
    for (std::size_t i = 0; i < fs.positions.size(); ++i) p[fs.positions[i]] += m(static_cast<int>(i), ch);
  }
}

constexpr double kNormFloor = 1e-12;

// Row-normalizes a centered feature matrix, returning the norms.
Eigen::VectorXd normalize_rows(RowMat& m) {
  Eigen::VectorXd norms = (m.rowwise().squaredNorm().array() + kNormFloor).sqrt();
  for (int i = 0; i < m.rows(); ++i) m.row(i) /= norms[i];
  return norms;
}

struct CxForward {
  RowMat dist;       // d_ij
  RowMat cx;         // CX_ij
  Eigen::VectorXd dmin;
  std::vector<int> argmin;  // per row
  std::vector<int> argmax;  // per column
  double value = 0.0;
};

CxForward cx_forward(const RowMat& xn, const RowMat& yn, double bandwidth, double eps) {
  CxForward f;
  f.dist = RowMat::Ones(xn.rows(), yn.rows()) - xn * yn.transpose();
  const int nx = static_cast<int>(xn.rows());
  const int ny = static_cast<int>(yn.rows());
  f.dmin.resize(nx);
  f.argmin.resize(nx);
  f.cx.resize(nx, ny);
  for (int i = 0; i < nx; ++i) {
    Eigen::Index j = 0;
    f.dmin[i] = f.dist.row(i).minCoeff(&j);
    f.argmin[i] = static_cast<int>(j);
    const double denom = f.dmin[i] + eps;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < ny; ++k) {
      const double z = (1.0 - f.dist(i, k) / denom) / bandwidth;
      f.cx(i, k) = z;
      max_logit = std::max(max_logit, z);
    }
    double total = 0.0;
    for (int k = 0; k < ny; ++k) {
      f.cx(i, k) = std::exp(f.cx(i, k) - max_logit);
      total += f.cx(i, k);
    }
    f.cx.row(i) /= total;
  }
  f.argmax.resize(ny);
  double acc = 0.0;
  for (int j = 0; j < ny; ++j) {
    Eigen::Index i = 0;
    acc += f.cx.col(j).maxCoeff(&i);
    f.argmax[j] = static_cast<int>(i);
  }
  f.value = acc / ny;
  return f;
}

}  // namespace

Var contextual_similarity(const Var& x, const Var& y, double bandwidth, double eps,
                          std::size_t max_positions) {
  const Shape xs = x.shape();
  const Shape ys = y.shape();
  if (xs.n != ys.n || xs.c != ys.c) {
    throw ShapeError("contextual_similarity: features " + xs.str() + " and " + ys.str() + " differ");
  }
  if (xs.numel() == 0 || ys.numel() == 0) throw ArgumentError("contextual_similarity: empty feature set");
  if (!(bandwidth > 0.0)) throw ArgumentError("contextual_similarity: bandwidth must be positive");
  const FeatureSet fx = sample_positions(xs, std::max<std::size_t>(max_positions, 1));
  const FeatureSet fy = sample_positions(ys, std::max<std::size_t>(max_positions, 1));
  Tensor out(Shape{xs.n, 1, 1, 1});
  for (int b = 0; b < xs.n; ++b) {
    RowMat X = gather(x.value(), b, fx);
    RowMat Y = gather(y.value(), b, fy);
    const Eigen::RowVectorXd mu = Y.colwise().mean();
    X.rowwise() -= mu;
    Y.rowwise() -= mu;
    normalize_rows(X);
    normalize_rows(Y);
    out[b] = cx_forward(X, Y, bandwidth, eps).value;
  }
  return make_result(std::move(out), {x, y}, [xs, fx, fy, bandwidth, eps](Node& nd) {
    for (int b = 0; b < xs.n; ++b) {
      const double g = nd.grad[b];
      if (g == 0.0) continue;
      RowMat X = gather(pval(nd, 0), b, fx);
      RowMat Y = gather(pval(nd, 1), b, fy);
      const Eigen::RowVectorXd mu = Y.colwise().mean();
      X.rowwise() -= mu;
      Y.rowwise() -= mu;
      const Eigen::VectorXd nx_norm = normalize_rows(X);
      const Eigen::VectorXd ny_norm = normalize_rows(Y);
      const CxForward f = cx_forward(X, Y, bandwidth, eps);
      const int nx = static_cast<int>(X.rows());
      const int ny = static_cast<int>(Y.rows());

      // d value / d CX_ij is g / ny at each column's argmax; reduce through the
      // row softmax, the min-normalization, and the cosine distance.
      RowMat dd = RowMat::Zero(nx, ny);
      std::vector<std::vector<int>> cols_of_row(nx);
      for (int j = 0; j < ny; ++j) cols_of_row[f.argmax[j]].push_back(j);
      for (int i = 0; i < nx; ++i) {
        if (cols_of_row[i].empty()) continue;
        double dot = 0.0;
        for (int j : cols_of_row[i]) dot += (g / ny) * f.cx(i, j);
        const double denom = f.dmin[i] + eps;
        double through_min = 0.0;
        for (int k = 0; k < ny; ++k) {
          double gk = 0.0;
          for (int j : cols_of_row[i]) {
            if (j == k) gk += g / ny;
          }
          const double dz = f.cx(i, k) * (gk - dot);
          const double dnorm = -dz / bandwidth;  // d/d(d~_ik)
          dd(i, k) += dnorm / denom;
          through_min += dnorm * (-f.dist(i, k) / (denom * denom));
        }
        dd(i, f.argmin[i]) += through_min;
      }
      const RowMat dS = -dd;
      RowMat dXn = dS * Y;
      RowMat dYn = dS.transpose() * X;
      // Through row normalization.
      for (int i = 0; i < nx; ++i) {
        const double proj = X.row(i).dot(dXn.row(i));
        dXn.row(i) = (dXn.row(i) - proj * X.row(i)) / nx_norm[i];
      }
      for (int j = 0; j < ny; ++j) {
        const double proj = Y.row(j).dot(dYn.row(j));
        dYn.row(j) = (dYn.row(j) - proj * Y.row(j)) / ny_norm[j];
      }
      if (wants(nd, 0)) scatter_add(pgrad(nd, 0), b, fx, dXn);
      if (wants(nd, 1)) {
        // Both sets were centered by the mean of Y.
        const Eigen::RowVectorXd dmu = -(dXn.colwise().sum() + dYn.colwise().sum());
        dYn.rowwise() += dmu / static_cast<double>(ny);
        scatter_add(pgrad(nd, 1), b, fy, dYn);
      }
    }
  });
}

Var bce_with_logits(const Var& logits, double target) {
  const std::size_t count = logits.value().numel();
  double acc = 0.0;
  const double* z = logits.value().ptr();
  for (std::size_t i = 0; i < count; ++i) {
    const double zc = std::clamp(z[i], -30.0, 30.0);
    acc += std::max(zc, 0.0) - zc * target + std::log1p(std::exp(-std::abs(zc)));
  }
  return make_result(Tensor::scalar(acc / count), {logits}, [count, target](Node& nd) {
    const double g = nd.grad[0] / count;
    const double* z = pval(nd, 0).ptr();
    double* gz = pgrad(nd, 0).ptr();
    for (std::size_t i = 0; i < count; ++i) {
      if (z[i] < -30.0 || z[i] > 30.0) continue;
      const double p = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      gz[i] += g * (p - target);
    }
  });
}

}  // namespace nsd::ag
