#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nsdehaze/error.hpp"
#include "nsdehaze/gradcheck.hpp"
#include "nsdehaze/losses.hpp"
#include "test_util.hpp"

using namespace nsd;
using namespace nsd::ag;
using losses::LossWeights;

namespace {

nets::NetworkConfig tiny_config() {
  nets::NetworkConfig cfg;
  cfg.base_channels = 8;
  cfg.generator_res_blocks = 1;
  cfg.discriminator_channels = 4;
  cfg.seed = 3;
  return cfg;
}

const nets::FeatureExtractor& extractor() {
  static const nets::FeatureExtractor fx = nets::FeatureExtractor::random(16, 8, 7);
  return fx;
}

Tensor images(int n, int h, int w, std::uint64_t seed) { return test::random_tensor(Shape{n, 3, h, w}, seed, 0.05, 0.95); }

/// Blocky image whose positions carry distinct local structure.
Tensor structured(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(Shape{1, 3, h, w});
  for (int by = 0; by < h; by += 4)
    for (int bx = 0; bx < w; bx += 4) {
      const double c[3] = {u(rng), u(rng), u(rng)};
      for (int y = by; y < std::min(h, by + 4); ++y)
        for (int x = bx; x < std::min(w, bx + 4); ++x)
          for (int ch = 0; ch < 3; ++ch) t.at(0, ch, y, x) = std::clamp(c[ch] + 0.2 * u(rng) - 0.1, 0.0, 1.0);
    }
  return t;
}

Tensor shuffle_positions(const Tensor& t, std::uint64_t seed) {
  const Shape s = t.shape();
  std::vector<std::size_t> perm(s.plane());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor out(s);
  for (int c = 0; c < s.c; ++c)
    for (std::size_t i = 0; i < perm.size(); ++i) out.plane(0, c)[i] = t.plane(0, c)[perm[i]];
  return out;
}

/// Same-padded Gaussian SSIM over every channel by explicit window sums.
double naive_ssim(const Tensor& x, const Tensor& y) {
  const int r = 5;
  double g[11];
  double total = 0.0;
  for (int i = 0; i < 11; ++i) total += g[i] = std::exp(-(i - r) * (i - r) / (2 * 1.5 * 1.5));
  for (double& v : g) v /= total;
  const Shape s = x.shape();
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int py = 0; py < s.h; ++py)
        for (int px = 0; px < s.w; ++px) {
          double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy_ = py + dy;
              const int xx_ = px + dx;
              if (yy_ < 0 || xx_ < 0 || yy_ >= s.h || xx_ >= s.w) continue;
              const double wgt = g[dy + r] * g[dx + r];
              const double a = x.at(n, c, yy_, xx_);
              const double b = y.at(n, c, yy_, xx_);
              mx += wgt * a;
              my += wgt * b;
              xx += wgt * a * a;
              yy += wgt * b * b;
              xy += wgt * a * b;
            }
          const double c1 = 1e-4;
          const double c2 = 9e-4;
          acc += (2 * mx * my + c1) * (2 * (xy - mx * my) + c2) /
                 ((mx * mx + my * my + c1) * (xx - mx * mx + yy - my * my + c2));
        }
  return acc / static_cast<double>(s.numel());
}

void zero_all(nets::ParamSet& p) {
  for (auto& e : p.entries()) e.var.mutable_value().fill(0.0);
}

}  // namespace

TEST(LossWeights, DefaultsAndValidation) {
  const LossWeights w;
  EXPECT_EQ(w.omega1, 1.0);
  EXPECT_EQ(w.omega2, 1.0);
  EXPECT_EQ(w.theta, 5.0);
  EXPECT_EQ(w.gamma, 1.0);
  EXPECT_EQ(w.eta, 1.0);
  LossWeights bad;
  bad.theta = -1.0;
  EXPECT_THROW(bad.validate(), ArgumentError);
  bad = LossWeights{};
  bad.cx_bandwidth = 0.0;
  EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(Pyramid, ScalesAndIdentityLevel) {
  const Var x = constant(images(2, 16, 12, 1));
  const auto p = losses::pyramid(x);
  EXPECT_EQ(p[0].shape(), (Shape{2, 3, 8, 6}));
  EXPECT_EQ(p[1].value(), x.value());
  EXPECT_EQ(p[2].shape(), (Shape{2, 3, 32, 24}));
}

// ------------------------------------------------------------ adversarial

TEST(Msa, ZeroLogitGoldenValues) {
  nets::ParamSet d = nets::make_discriminator(tiny_config());
  zero_all(d);
  const auto ref = losses::pyramid(constant(images(2, 32, 32, 2)));
  const auto out = losses::pyramid(constant(images(2, 32, 32, 3)));
  const LossWeights w;
  const auto disc = losses::msa_loss_discriminator(d, ref, out, w);
  const auto gen = losses::msa_loss_generator(d, out, w);
  EXPECT_NEAR(disc.total.value().item(), 6.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(disc.total.value().item(), 4.1589, 1e-4);
  EXPECT_NEAR(gen.total.value().item(), 2.0794, 1e-4);
  for (double v : gen.per_scale) EXPECT_NEAR(v, std::log(2.0), 1e-12);
}

TEST(Msa, GeneratorLossLeavesDiscriminatorUntouched) {
  nets::ParamSet d = nets::make_discriminator(tiny_config());
  Var j = parameter(images(2, 32, 32, 4));
  const auto gen = losses::msa_loss_generator(d, losses::pyramid(j), LossWeights{});
  backward(gen.total);
  for (const auto& e : d.entries()) {
    EXPECT_TRUE(e.var.grad().empty()) << e.name;
    EXPECT_TRUE(e.var.requires_grad()) << e.name;
  }
  EXPECT_FALSE(j.grad().empty());
}

TEST(Msa, DiscriminatorLossSeesOnlyDetachedFakes) {
  nets::ParamSet d = nets::make_discriminator(tiny_config());
  Var j = parameter(images(2, 32, 32, 5));
  const auto ref = losses::pyramid(constant(images(2, 32, 32, 6)));
  const auto loss = losses::msa_loss_discriminator(d, ref, losses::pyramid(detach(j)), LossWeights{});
  backward(loss.total);
  EXPECT_TRUE(j.grad().empty());
  for (const auto& e : d.entries()) EXPECT_FALSE(e.var.grad().empty()) << e.name;
}

TEST(Msa, DisabledScalesContributeNothing) {
  nets::ParamSet d = nets::make_discriminator(tiny_config());
  LossWeights w;
  w.scales = {false, true, false};
  const auto out = losses::pyramid(constant(images(1, 32, 32, 7)));
  const auto gen = losses::msa_loss_generator(d, out, w, false);
  EXPECT_EQ(gen.per_scale[0], 0.0);
  EXPECT_EQ(gen.per_scale[2], 0.0);
  EXPECT_EQ(gen.total.value().item(), gen.per_scale[1]);
}

TEST(Msa, GradientChecks) {
  nets::ParamSet d = nets::make_discriminator(tiny_config());
  for (auto& e : d.entries())
    if (e.name.find(".bn.") == std::string::npos)
      for (double& v : e.var.mutable_value().data()) v *= 20.0;
  Var j = parameter(images(2, 16, 16, 8));
  const Var ref = constant(images(2, 16, 16, 9));
  LossWeights w;
  w.scales = {false, true, true};  // the 0.5x level of a 16x16 input is below the discriminator minimum
  const auto g = gradcheck([&] { return losses::msa_loss_generator(d, losses::pyramid(j), w, false).total; }, {j});
  EXPECT_LE(g.max_rel_error, 1e-3) << g.worst;
  const auto r = gradcheck(
      [&] { return losses::msa_loss_discriminator(d, losses::pyramid(ref), losses::pyramid(j), w, false).total; },
      d.vars(), GradCheckOptions{.max_probes = 4});
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
}

// -------------------------------------------------------------- contextual

TEST(Msc, NineTermsAndNonNegative) {
  const auto out = losses::pyramid(constant(images(2, 16, 16, 10)));
  const auto ref = losses::pyramid(constant(images(2, 16, 16, 11)));
  const auto t = losses::msc_loss(extractor(), out, ref, {2, 4, 7}, LossWeights{});
  EXPECT_GE(t.total.value().item(), 0.0);
  double sum = 0.0;
  for (double v : t.per_scale) {
    EXPECT_GT(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, t.total.value().item(), 1e-12);
  // Each level sums three layer terms, each at most -log(1e-12).
  for (double v : t.per_scale) EXPECT_LE(v, 3 * -std::log(1e-12));
}

TEST(Msc, IdenticalBeatsShuffledReference) {
  int wins = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const Tensor img = structured(16, 16, trial);
    const auto same = losses::pyramid(constant(img));
    const auto shuffled = losses::pyramid(constant(shuffle_positions(img, trial + 100)));
    const double a = losses::msc_loss(extractor(), same, same, {2, 4, 7}, LossWeights{}).total.value().item();
    const double b = losses::msc_loss(extractor(), same, shuffled, {2, 4, 7}, LossWeights{}).total.value().item();
    wins += a <= b;
  }
  EXPECT_EQ(wins, 10);
}

TEST(Msc, ShapeMismatchThrows) {
  const auto a = losses::pyramid(constant(images(1, 16, 16, 12)));
  const auto b = losses::pyramid(constant(images(1, 8, 16, 13)));
  EXPECT_THROW(losses::msc_loss(extractor(), a, b, {2}, LossWeights{}), ShapeError);
}

TEST(Msc, GradientCheck) {
  Var j = parameter(images(1, 8, 8, 14));
  const auto ref = losses::pyramid(constant(images(1, 8, 8, 15)));
  const auto r = gradcheck([&] { return losses::msc_loss(extractor(), losses::pyramid(j), ref, {2, 4}, LossWeights{}).total; },
                           {j});
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
}

// ------------------------------------------------------------- reconstruction

TEST(Ssim, MatchesWindowOracleAndIdentity) {
  const Tensor x = images(1, 12, 14, 16);
  const Tensor y = images(1, 12, 14, 17);
  EXPECT_NEAR(losses::ssim(constant(x), constant(y)).value().item(), naive_ssim(x, y), 1e-12);
  EXPECT_NEAR(losses::ssim(constant(x), constant(x)).value().item(), 1.0, 1e-12);
}

TEST(Ssim, GradientCheck) {
  Var x = parameter(images(1, 10, 10, 18));
  const Var y = constant(images(1, 10, 10, 19));
  const auto r = gradcheck([&] { return losses::ssim(x, y); }, {x});
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
}

TEST(Reconstruction, IdentityIsZero) {
  const Var i = constant(images(1, 16, 16, 20));
  const auto r = losses::reconstruction_loss(i, i, extractor(), {2, 4, 7}, LossWeights{});
  EXPECT_EQ(r.l1.value().item(), 0.0);
  EXPECT_EQ(r.perceptual.value().item(), 0.0);
  EXPECT_NEAR(r.ssim_term.value().item(), 0.0, 1e-12);
}

TEST(Reconstruction, UniformOffsetL1) {
  const Tensor base = test::random_tensor(Shape{1, 3, 16, 16}, 21, 0.0, 0.9);
  Tensor shifted = base;
  for (double& v : shifted.data()) v += 0.1;
  const auto r = losses::reconstruction_loss(constant(shifted), constant(base), extractor(), {2, 4, 7}, LossWeights{});
  EXPECT_NEAR(r.l1.value().item(), 0.1, 1e-12);
  EXPECT_NEAR(5.0 * r.l1.value().item(), 0.5, 1e-12);
  EXPECT_GE(r.perceptual.value().item(), 0.0);
  EXPECT_GE(r.ssim_term.value().item(), 0.0);
  const double weighted = r.weighted.value().item();
  EXPECT_NEAR(weighted, 5.0 * 0.1 + r.perceptual.value().item() + r.ssim_term.value().item(), 1e-12);
}

TEST(Reconstruction, ShapeMismatchThrows) {
  EXPECT_THROW(losses::reconstruction_loss(constant(images(1, 8, 8, 1)), constant(images(1, 8, 12, 1)), extractor(),
                                           {2}, LossWeights{}),
               ShapeError);
}

TEST(Reconstruction, GradientChecks) {
  Var x = parameter(images(1, 8, 8, 22));
  const Var y = constant(images(1, 8, 8, 23));
  const LossWeights w;
  for (int which = 0; which < 3; ++which) {
    const auto r = gradcheck(
        [&] {
          const auto t = losses::reconstruction_loss(x, y, extractor(), {2, 4}, w);
          return which == 0 ? t.l1 : which == 1 ? t.perceptual : t.ssim_term;
        },
        {x});
    EXPECT_LE(r.max_rel_error, 1e-3) << which << ": " << r.worst;
  }
}

// ------------------------------------------------------------------ total

TEST(TotalLoss, ReportIdentityAndGradientFlow) {
  auto model = nets::ModelBundle::create(tiny_config());
  const Tensor hazy = images(2, 32, 32, 24);
  const Tensor ref = images(2, 32, 32, 25);
  const auto out = nets::run_pipeline(model, hazy);
  const LossWeights w;
  auto g = losses::total_loss(model.discriminator, extractor(), losses::pyramid(out.dehazed),
                              losses::pyramid(constant(ref)), out.rehazed, out.hazy, {2, 4, 7}, w);
  const auto& r = g.report;
  EXPECT_EQ(r.total, losses::LossReport::weighted_total(r, w));
  EXPECT_NEAR(g.total.value().item(), r.total, 1e-9 * std::abs(r.total));
  EXPECT_NEAR(r.msa, r.msa_scales[0] + r.msa_scales[1] + r.msa_scales[2], 1e-12);
  backward(g.total);
  for (const auto& e : model.discriminator.entries()) EXPECT_TRUE(e.var.grad().empty()) << e.name;
  for (const auto* set : {&model.generator, &model.encoder, &model.mvsa, &model.transmission}) {
    bool any = false;
    for (const auto& e : set->entries()) any = any || !e.var.grad().empty();
    EXPECT_TRUE(any);
  }
}

TEST(TotalLoss, ReconstructionNeverSeesTheReference) {
  auto model = nets::ModelBundle::create(tiny_config());
  const Tensor hazy = images(1, 32, 32, 26);
  Var ref = parameter(images(1, 32, 32, 27));
  const auto out = nets::run_pipeline(model, hazy);
  const auto rec = losses::reconstruction_loss(out.rehazed, out.hazy, extractor(), {2, 4, 7}, LossWeights{});
  backward(rec.weighted);
  EXPECT_TRUE(ref.grad().empty());
  for (const auto& e : model.discriminator.entries()) EXPECT_TRUE(e.var.grad().empty());
}

TEST(LossCsv, HeaderAndRoundTrippableRow) {
  EXPECT_EQ(losses::csv_header(), "step,total,msa,msc,rec_l1,rec_p,rec_ssim");
  losses::LossReport r;
  r.total = 0.1;
  r.msa = 1.0 / 3.0;
  const std::string row = losses::csv_row(7, r);
  EXPECT_EQ(row.substr(0, 2), "7,");
  double total = 0.0;
  double msa = 0.0;
  ASSERT_EQ(std::sscanf(row.c_str(), "7,%lf,%lf", &total, &msa), 2);
  EXPECT_EQ(total, 0.1);
  EXPECT_EQ(msa, 1.0 / 3.0);
}
