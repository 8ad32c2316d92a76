#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "nsdehaze/autograd.hpp"
#include "nsdehaze/error.hpp"
#include "nsdehaze/gradcheck.hpp"
#include "nsdehaze/ops.hpp"
#include "physics_oracles.hpp"
#include "cx_oracle.hpp"
#include "test_util.hpp"

using namespace nsd;
using namespace nsd::ag;

namespace {

constexpr double kTol = 1e-3;

Var param(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return parameter(test::random_tensor(s, seed, lo, hi));
}

/// Weighted sum so every output element gets a distinct upstream gradient.
Var probe(const Var& out, std::uint64_t seed) {
  Tensor w = test::random_tensor(out.shape(), seed + 1000, 0.5, 1.5);
  return sum(mul(out, constant(std::move(w))));
}

void expect_grad(const std::function<Var()>& f, std::vector<Var> in, double tol = kTol,
                 const GradCheckOptions& opt = {}) {
  const GradCheckResult r = gradcheck(f, std::move(in), opt);
  EXPECT_LE(r.max_rel_error, tol) << r.worst;
  EXPECT_GT(r.probes, 0u);
}

/// Direct-definition convolution with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor out(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xq = 0; xq < ow; ++xq) {
          double s = b.empty() ? 0.0 : b[o];
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = y * stride + ky - pad;
                const int ix = xq * stride + kx - pad;
                if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                s += x.at(n, c, iy, ix) * w.at(o, c, ky, kx);
              }
          out.at(n, o, y, xq) = s;
        }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ------------------------------------------------------------ graph

TEST(Autograd, ParameterVersusConstant) {
  const Var p = parameter(Tensor(Shape{1, 1, 1, 2}, 1.0));
  const Var c = constant(Tensor(Shape{1, 1, 1, 2}, 2.0));
  backward(sum(mul(p, c)));
  EXPECT_EQ(p.grad()[0], 2.0);
  EXPECT_TRUE(c.grad().empty());
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  const Var p = parameter(Tensor(Shape{}, 3.0));
  backward(add(mul(p, p), p));
  EXPECT_EQ(p.grad()[0], 7.0);
}

TEST(Autograd, DetachCutsTheGraph) {
  const Var p = parameter(Tensor(Shape{}, 3.0));
  backward(add(mul(detach(p), p), p));
  EXPECT_EQ(p.grad()[0], 4.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  const Var p = parameter(Tensor(Shape{}, 3.0));
  Var y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = mul(p, p);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, FreezingAtBuildTimeIsHonouredByBackward) {
  Var p = parameter(Tensor(Shape{}, 3.0));
  Var q = parameter(Tensor(Shape{}, 5.0));
  p.set_requires_grad(false);
  const Var loss = mul(p, q);
  p.set_requires_grad(true);
  backward(loss);
  EXPECT_TRUE(p.grad().empty());
  EXPECT_EQ(q.grad()[0], 3.0);
}

TEST(Autograd, BackwardNeedsScalar) {
  const Var p = param(Shape{1, 1, 2, 2}, 1);
  EXPECT_THROW(backward(p), ShapeError);
}

// ------------------------------------------------------ elementwise

TEST(Ops, BroadcastingValues) {
  const Var a = constant(Tensor(Shape{2, 3, 1, 1}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  const Var b = constant(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{10, 20, 30, 40}));
  const Tensor s = add(a, b).value();
  EXPECT_EQ(s.shape(), (Shape{2, 3, 2, 2}));
  EXPECT_EQ(s.at(1, 2, 1, 0), 36.0);
  EXPECT_THROW(add(a, constant(Tensor(Shape{1, 2, 1, 1}))), ShapeError);
}

TEST(Ops, ElementwiseGradients) {
  const Shape s{2, 2, 3, 3};
  Var a = param(s, 1);
  Var b = param(s, 2, 0.5, 1.5);
  Var pos = param(s, 3, 0.2, 1.0);
  expect_grad([&] { return probe(add(a, b), 1); }, {a, b});
  expect_grad([&] { return probe(sub(a, b), 2); }, {a, b});
  expect_grad([&] { return probe(mul(a, b), 3); }, {a, b});
  expect_grad([&] { return probe(div(a, b), 4); }, {a, b});
  expect_grad([&] { return probe(scale(a, -2.5) + 0.3, 5); }, {a});
  expect_grad([&] { return probe(sigmoid(a), 6); }, {a});
  expect_grad([&] { return probe(ag::tanh(a), 7); }, {a});
  expect_grad([&] { return probe(ag::log(pos), 8); }, {pos});
  expect_grad([&] { return probe(square(a), 9); }, {a});
}

TEST(Ops, BroadcastGradients) {
  Var a = param(Shape{2, 3, 4, 4}, 4);
  Var b = param(Shape{1, 3, 1, 1}, 5);
  Var c = param(Shape{2, 1, 4, 4}, 6, 0.5, 1.5);
  expect_grad([&] { return probe(mul(add(a, b), c), 10); }, {a, b, c});
  expect_grad([&] { return probe(div(a, c), 11); }, {a, c});
}

TEST(Ops, PiecewiseGradientsAwayFromKinks) {
  Tensor t = test::random_tensor(Shape{1, 2, 4, 4}, 7);
  for (double& v : t.data()) v += v >= 0 ? 0.1 : -0.1;
  Var a = parameter(t);
  expect_grad([&] { return probe(relu(a), 12); }, {a});
  expect_grad([&] { return probe(leaky_relu(a, 0.2), 13); }, {a});
  expect_grad([&] { return probe(ag::abs(a), 14); }, {a});
  expect_grad([&] { return probe(clamp(a, -0.05, 0.05), 15); }, {a});
}

TEST(Ops, ReductionsAndLayout) {
  Var a = param(Shape{2, 3, 4, 5}, 8);
  Var b = param(Shape{2, 2, 4, 5}, 9);
  Var m = param(Shape{2, 1, 4, 5}, 10);
  expect_grad([&] { return sum(a); }, {a});
  expect_grad([&] { return mean(square(a)); }, {a});
  expect_grad([&] { return probe(mean_hw(a), 16); }, {a});
  expect_grad([&] { return probe(mean_c(a), 17); }, {a});
  expect_grad([&] { return probe(concat_c(a, b), 18); }, {a, b});
  expect_grad([&] { return probe(repeat_c(m, 3), 19); }, {m});
  EXPECT_NEAR(mean(a).value().item(), a.value().sum() / a.value().numel(), 1e-15);
  EXPECT_EQ(concat_c(a, b).shape(), (Shape{2, 5, 4, 5}));
}

// ---------------------------------------------------------- spatial

TEST(Ops, ReflectPadValuesAndGradient) {
  const Tensor t(Shape{1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor p = reflect_pad(constant(t), 2).value();
  ASSERT_EQ(p.shape(), (Shape{1, 1, 7, 7}));
  const std::vector<double> row = {9, 8, 7, 8, 9, 8, 7};
  for (int x = 0; x < 7; ++x) EXPECT_EQ(p.at(0, 0, 0, x), row[x]);
  EXPECT_THROW(reflect_pad(constant(t), 3), ShapeError);
  Var a = param(Shape{1, 2, 4, 5}, 11);
  expect_grad([&] { return probe(reflect_pad(a, 3), 20); }, {a});
}

TEST(Ops, ResizeBilinearMatchesImageResize) {
  const imaging::Image img = test::random_image(5, 7, 12);
  const Tensor t = from_image(img);
  const Tensor r = resize_bilinear(constant(t), 9, 4).value();
  const imaging::Image want = imaging::resize(img, 9, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 4; ++x) EXPECT_NEAR(r.at(0, c, y, x), want.at(y, x, c), 1e-12);
  Var a = param(Shape{1, 2, 6, 6}, 13);
  expect_grad([&] { return probe(resize_bilinear(a, 3, 3), 21); }, {a});
  expect_grad([&] { return probe(resize_bilinear(a, 12, 12), 22); }, {a});
}

TEST(Ops, MaxPool) {
  const Tensor t(Shape{1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 9, 8});
  const Tensor p = max_pool(constant(t), 2).value();
  EXPECT_EQ(p[0], 5.0);
  EXPECT_EQ(p[1], 9.0);
  Var a = param(Shape{1, 2, 8, 8}, 14);
  expect_grad([&] { return probe(max_pool(a, 4), 23); }, {a});
  EXPECT_THROW(max_pool(a, 3), ShapeError);
}

TEST(Ops, ConvMatchesDirectDefinition) {
  for (int stride : {1, 2}) {
    for (int pad : {0, 1, 2}) {
      const Tensor x = test::random_tensor(Shape{2, 3, 7, 6}, 15 + stride + pad);
      const Tensor w = test::random_tensor(Shape{4, 3, 3, 3}, 16);
      const Tensor b = test::random_tensor(Shape{1, 4, 1, 1}, 17);
      const Tensor got = conv2d(constant(x), constant(w), constant(b), stride, pad).value();
      const Tensor want = naive_conv(x, w, b, stride, pad);
      ASSERT_EQ(got.shape(), want.shape());
      for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
  const Tensor x = test::random_tensor(Shape{1, 5, 4, 4}, 18);
  const Tensor w = test::random_tensor(Shape{2, 5, 1, 1}, 19);
  const Tensor got = conv2d(constant(x), constant(w), Var{}, 1, 0).value();
  const Tensor want = naive_conv(x, w, Tensor(), 1, 0);
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Ops, ConvGradients) {
  Var x = param(Shape{2, 3, 6, 6}, 20);
  Var w = param(Shape{4, 3, 3, 3}, 21);
  Var b = param(Shape{1, 4, 1, 1}, 22);
  expect_grad([&] { return probe(conv2d(x, w, b, 1, 1), 24); }, {x, w, b});
  expect_grad([&] { return probe(conv2d(x, w, b, 2, Padding{0, 1, 0, 1}), 25); }, {x, w, b});
  Var w1 = param(Shape{2, 3, 1, 1}, 23);
  expect_grad([&] { return probe(conv2d(x, w1, Var{}, 1, 0), 26); }, {x, w1});
}

TEST(Ops, ConvTransposeIsTheAdjointOfConv) {
  const Tensor x = test::random_tensor(Shape{1, 3, 8, 8}, 24);
  const Tensor w = test::random_tensor(Shape{4, 3, 2, 2}, 25);
  const Tensor y = test::random_tensor(Shape{1, 4, 4, 4}, 26);
  const Tensor cx = conv2d(constant(x), constant(w), Var{}, 2, 0).value();
  // Transposed-conv weights are (Cin, Cout, k, k) with Cin the conv's output.
  const Tensor ty = conv_transpose2d(constant(y), constant(w), Var{}, 2, 0, 0).value();
  ASSERT_EQ(ty.shape(), x.shape());
  EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10);
}

TEST(Ops, ConvTransposeGradients) {
  Var x = param(Shape{1, 3, 4, 4}, 27);
  Var w = param(Shape{3, 2, 2, 2}, 28);
  Var b = param(Shape{1, 2, 1, 1}, 29);
  expect_grad([&] { return probe(conv_transpose2d(x, w, b, 2, 0, 0), 27); }, {x, w, b});
  Var w3 = param(Shape{3, 2, 3, 3}, 30);
  expect_grad([&] { return probe(conv_transpose2d(x, w3, b, 2, 1, 1), 28); }, {x, w3, b});
  EXPECT_EQ(conv_transpose2d(x, w3, b, 2, 1, 1).shape(), (Shape{1, 2, 8, 8}));
}

TEST(Ops, InstanceNorm) {
  Var x = param(Shape{2, 3, 5, 5}, 31);
  const Tensor y = instance_norm(x).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      double s2 = 0.0;
      for (int i = 0; i < 25; ++i) {
        s += y.plane(n, c)[i];
        s2 += y.plane(n, c)[i] * y.plane(n, c)[i];
      }
      EXPECT_NEAR(s / 25, 0.0, 1e-12);
      EXPECT_NEAR(s2 / 25, 1.0, 1e-3);
    }
  expect_grad([&] { return probe(instance_norm(x), 29); }, {x});
}

TEST(Ops, BatchNormTrainingAndRunningStats) {
  Var x = param(Shape{3, 2, 4, 4}, 32);
  Var g = param(Shape{1, 2, 1, 1}, 33, 0.5, 1.5);
  Var b = param(Shape{1, 2, 1, 1}, 34);
  Tensor rm(Shape{1, 2, 1, 1}, 0.0);
  Tensor rv(Shape{1, 2, 1, 1}, 1.0);
  batch_norm(x, g, b, rm, rv, true);
  double mean0 = 0.0;
  double sq0 = 0.0;
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 16; ++i) mean0 += x.value().plane(n, 0)[i];
  mean0 /= 48;
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 16; ++i) sq0 += std::pow(x.value().plane(n, 0)[i] - mean0, 2);
  EXPECT_NEAR(rm[0], 0.1 * mean0, 1e-12);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * sq0 / 47, 1e-12);
  Tensor rm2 = rm;
  Tensor rv2 = rv;
  expect_grad([&] { return probe(batch_norm(x, g, b, rm2, rv2, true), 30); }, {x, g, b});
  const Tensor evald = batch_norm(constant(x.value()), constant(g.value()), constant(b.value()), rm, rv, false).value();
  EXPECT_NEAR(evald[0], (x.value()[0] - rm[0]) / std::sqrt(rv[0] + 1e-5) * g.value()[0] + b.value()[0], 1e-12);
}

TEST(Ops, BoxMeanMatchesOracleAndGradient) {
  const imaging::Map m = test::random_map(7, 9, 35);
  Tensor t(Shape{1, 1, 7, 9});
  std::copy(m.data().begin(), m.data().end(), t.ptr());
  const Tensor got = box_mean(constant(t), 2).value();
  const imaging::Map want = test::naive_box_mean(m, 2);
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want.data()[i], 1e-12);
  Var a = param(Shape{1, 2, 6, 7}, 36);
  expect_grad([&] { return probe(box_mean(a, 2), 31); }, {a});
}

TEST(Ops, SeparableFilters) {
  const std::vector<double> k = {0.25, 0.5, 0.25};
  Var a = param(Shape{1, 2, 6, 7}, 37);
  expect_grad([&] { return probe(filter_rows(a, k, true), 32); }, {a});
  expect_grad([&] { return probe(filter_cols(a, k, false), 33); }, {a});
  EXPECT_EQ(filter_rows(a, k, false).shape(), (Shape{1, 2, 6, 5}));
  EXPECT_EQ(filter_cols(a, k, false).shape(), (Shape{1, 2, 4, 7}));
  const Tensor r = filter_rows(a, k, true).value();
  EXPECT_NEAR(r.at(0, 0, 0, 0), 0.5 * a.value().at(0, 0, 0, 0) + 0.25 * a.value().at(0, 0, 0, 1), 1e-15);
}

// -------------------------------------------------------- attention

TEST(Ops, AttentionRowsSumToOne) {
  Var q = param(Shape{2, 3, 4, 4}, 38);
  Var k = param(Shape{2, 3, 2, 2}, 39);
  const Tensor w = attention_weights(q, k).value();
  ASSERT_EQ(w.shape(), (Shape{2, 1, 16, 4}));
  for (int r = 0; r < 32; ++r) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += w[r * 4 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  expect_grad([&] { return probe(attention_weights(q, k), 34); }, {q, k});
}

TEST(Ops, AttendIsConvexCombination) {
  Var q = param(Shape{1, 2, 4, 4}, 40);
  Var k = param(Shape{1, 2, 2, 2}, 41);
  Var v = param(Shape{1, 3, 2, 2}, 42);
  const Var w = attention_weights(q, k);
  const Tensor o = attend(w, v, 4, 4).value();
  for (int c = 0; c < 3; ++c) {
    const double* vp = v.value().plane(0, c);
    const double lo = *std::min_element(vp, vp + 4);
    const double hi = *std::max_element(vp, vp + 4);
    for (int i = 0; i < 16; ++i) {
      EXPECT_GE(o.plane(0, c)[i], lo - 1e-12);
      EXPECT_LE(o.plane(0, c)[i], hi + 1e-12);
    }
  }
  expect_grad([&] { return probe(attend(attention_weights(q, k), v, 4, 4), 35); }, {q, k, v});
}

TEST(Ops, TopFractionIndicesMatchSortOracle) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 500;
    std::vector<double> v(n);
    // Coarse values force ties.
    for (double& e : v) e = static_cast<double>(rng() % 20) / 19.0;
    const double frac = static_cast<double>(1 + rng() % 100) / 1000.0;
    EXPECT_EQ(top_fraction_indices(v, frac), test::sort_top_fraction(v, frac));
  }
}

TEST(Ops, TopFractionMeanGradient) {
  Var a = param(Shape{2, 3, 5, 5}, 44, 0.0, 1.0);
  expect_grad([&] { return probe(top_fraction_mean(a, 0.1), 36); }, {a});
  const Tensor m = top_fraction_mean(a, 0.1).value();
  EXPECT_EQ(m.at(0, 1, 0, 0), m.at(0, 1, 4, 3));
}

// --------------------------------------------------- contextual / BCE

TEST(Ops, ContextualSimilarityMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = test::random_tensor(Shape{2, 4, 3, 3}, seed);
    const Tensor y = test::random_tensor(Shape{2, 4, 2, 3}, seed + 77);
    const Tensor cx = contextual_similarity(constant(x), constant(y), 0.5, 1e-5, 1024).value();
    for (int b = 0; b < 2; ++b) EXPECT_NEAR(cx[b], test::naive_cx(x, y, b, 0.5, 1e-5), 1e-9);
  }
}

TEST(Ops, ContextualSimilarityOfIdenticalDistinctFeaturesIsOne) {
  const Tensor x = test::random_tensor(Shape{1, 6, 3, 3}, 45);
  const double cx = contextual_similarity(constant(x), constant(x), 0.1, 1e-5, 1024).value().item();
  EXPECT_NEAR(cx, 1.0, 1e-6);
}

TEST(Ops, ContextualSimilarityGradient) {
  Var x = param(Shape{2, 4, 3, 3}, 46);
  Var y = param(Shape{2, 4, 3, 2}, 47);
  expect_grad([&] { return sum(contextual_similarity(x, y, 0.5, 1e-5, 1024)); }, {x, y});
}

TEST(Ops, ContextualSimilaritySubsamplesLargeMaps) {
  const Tensor x = test::random_tensor(Shape{1, 3, 8, 8}, 48);
  const Tensor y = test::random_tensor(Shape{1, 3, 8, 8}, 49);
  const double full = contextual_similarity(constant(x), constant(y), 0.5, 1e-5, 64).value().item();
  EXPECT_NEAR(full, test::naive_cx(x, y, 0, 0.5, 1e-5), 1e-9);
  // A 16-position budget keeps every other row and column.
  Tensor xs(Shape{1, 3, 4, 4});
  Tensor ys(Shape{1, 3, 4, 4});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        xs.at(0, c, i, j) = x.at(0, c, 2 * i, 2 * j);
        ys.at(0, c, i, j) = y.at(0, c, 2 * i, 2 * j);
      }
  const double sub = contextual_similarity(constant(x), constant(y), 0.5, 1e-5, 16).value().item();
  EXPECT_NEAR(sub, test::naive_cx(xs, ys, 0, 0.5, 1e-5), 1e-9);
}

TEST(Ops, BceWithLogits) {
  const Var z = constant(Tensor(Shape{1, 1, 2, 2}, 0.0));
  EXPECT_NEAR(bce_with_logits(z, 1.0).value().item(), std::log(2.0), 1e-15);
  const Var big = constant(Tensor(Shape{}, 50.0));
  EXPECT_NEAR(bce_with_logits(big, 0.0).value().item(), 30.0, 1e-9);
  Var a = param(Shape{2, 1, 3, 3}, 50, -3.0, 3.0);
  expect_grad([&] { return bce_with_logits(a, 1.0); }, {a});
  expect_grad([&] { return bce_with_logits(a, 0.0); }, {a});
}

TEST(GradCheck, DetectsAWrongGradient) {
  Var a = param(Shape{1, 1, 2, 2}, 51);
  // A forward that the recorded backward does not describe.
  auto wrong = [&] {
    Tensor out = a.value();
    for (double& v : out.data()) v = v * v * v;
    return sum(make_result(std::move(out), {a}, [](Node& n) {
      Tensor& g = n.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
    }));
  };
  EXPECT_GT(gradcheck(wrong, {a}).max_rel_error, 0.1);
}
