#include "nsdehaze/losses.hpp"

#include <cmath>
#include <cstdio>

#include "nsdehaze/error.hpp"

namespace nsd::losses {

using namespace nsd::ag;

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kCxFloor = 1e-12;

std::vector<double> gaussian_window() {
  std::vector<double> k(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

Var gaussian_blur(const Var& x, const std::vector<double>& k) {
  return filter_cols(filter_rows(x, k, true), k, true);
}

// Temporarily excludes a parameter set from graph recording.
class FreezeGuard {
 public:
  explicit FreezeGuard(nets::ParamSet& p) : params_(p) {
    for (const auto& e : p.entries()) previous_.push_back(e.var.requires_grad());
    p.set_trainable(false);
  }
  ~FreezeGuard() {
    auto& entries = params_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].var.set_requires_grad(previous_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nets::ParamSet& params_;
  std::vector<bool> previous_;
};

Var zero() { return constant(Tensor::scalar(0.0)); }

}  // namespace

void LossWeights::validate() const {
  for (double v : {omega1, omega2, theta, gamma, eta}) {
    if (!(v >= 0.0)) throw ArgumentError("LossWeights: weights must be non-negative");
  }
  if (!(cx_bandwidth > 0.0)) throw ArgumentError("LossWeights: cx_bandwidth must be positive");
  if (!(cx_epsilon > 0.0)) throw ArgumentError("LossWeights: cx_epsilon must be positive");
  if (cx_max_positions < 1) throw ArgumentError("LossWeights: cx_max_positions must be >= 1");
}

VarPyramid pyramid(const Var& x) {
  const Shape s = x.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("pyramid: input " + s.str() + " smaller than 2x2");
  VarPyramid p;
  for (std::size_t i = 0; i < 3; ++i) {
    const double f = imaging::ScalePyramid::kScales[i];
    p[i] = resize_bilinear(x, static_cast<int>(std::lround(s.h * f)), static_cast<int>(std::lround(s.w * f)));
  }
  return p;
}

Var contextual_similarity(const Var& fx, const Var& fy, const LossWeights& w) {
  return ag::contextual_similarity(fx, fy, w.cx_bandwidth, w.cx_epsilon, w.cx_max_positions);
}

ScaleTerms msc_loss(const nets::FeatureExtractor& fx, const VarPyramid& out, const VarPyramid& ref,
                    const std::vector<int>& layers, const LossWeights& w) {
  ScaleTerms t;
  t.total = zero();
  for (std::size_t i = 0; i < 3; ++i) {
    if (!w.scales[i]) continue;
    if (!(out[i].shape() == ref[i].shape())) {
      throw ShapeError("msc_loss: level " + std::to_string(i) + " shapes " + out[i].shape().str() + " and " +
                       ref[i].shape().str() + " differ");
    }
    const std::vector<Var> fo = fx.extract(out[i], layers);
    const std::vector<Var> fr = fx.extract(ref[i], layers);
    Var level = zero();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Var cx = clamp(contextual_similarity(fo[l], fr[l], w), kCxFloor, 1.0);
      level = level + mean(scale(log(cx), -1.0));
    }
    t.per_scale[i] = level.value().item();
    t.total = t.total + level;
  }
  return t;
}

ScaleTerms msa_loss_discriminator(nets::ParamSet& disc, const VarPyramid& ref, const VarPyramid& out,
                                  const LossWeights& w, bool training) {
  ScaleTerms t;
  t.total = zero();
  for (std::size_t i = 0; i < 3; ++i) {
    if (!w.scales[i]) continue;
    const Var real = nets::discriminator_forward(disc, ref[i], training);
    const Var fake = nets::discriminator_forward(disc, out[i], training);
    const Var level = bce_with_logits(real, 1.0) + bce_with_logits(fake, 0.0);
    t.per_scale[i] = level.value().item();
    t.total = t.total + level;
  }
  return t;
}

ScaleTerms msa_loss_generator(nets::ParamSet& disc, const VarPyramid& out, const LossWeights& w, bool training) {
  FreezeGuard freeze(disc);
  ScaleTerms t;
  t.total = zero();
  for (std::size_t i = 0; i < 3; ++i) {
    if (!w.scales[i]) continue;
    const Var level = bce_with_logits(nets::discriminator_forward(disc, out[i], training), 1.0);
    t.per_scale[i] = level.value().item();
    t.total = t.total + level;
  }
  return t;
}

Var ssim(const Var& x, const Var& y) {
  if (!(x.shape() == y.shape())) {
    throw ShapeError("ssim: shapes " + x.shape().str() + " and " + y.shape().str() + " differ");
  }
  static const std::vector<double> k = gaussian_window();
  const Var mx = gaussian_blur(x, k);
  const Var my = gaussian_blur(y, k);
  const Var mxx = mx * mx;
  const Var myy = my * my;
  const Var mxy = mx * my;
  const Var sxx = gaussian_blur(x * x, k) - mxx;
  const Var syy = gaussian_blur(y * y, k) - myy;
  const Var sxy = gaussian_blur(x * y, k) - mxy;
  const Var num = add_scalar(scale(mxy, 2.0), kSsimC1) * add_scalar(scale(sxy, 2.0), kSsimC2);
  const Var den = add_scalar(mxx + myy, kSsimC1) * add_scalar(sxx + syy, kSsimC2);
  return mean(num / den);
}

ReconstructionTerms reconstruction_loss(const Var& rehazed, const Var& hazy, const nets::FeatureExtractor& fx,
                                        const std::vector<int>& layers, const LossWeights& w) {
  if (!(rehazed.shape() == hazy.shape())) {
    throw ShapeError("reconstruction_loss: shapes " + rehazed.shape().str() + " and " + hazy.shape().str() +
                     " differ");
  }
  ReconstructionTerms r;
  r.l1 = mean(ag::abs(rehazed - hazy));
  const std::vector<Var> fr = fx.extract(rehazed, layers);
  const std::vector<Var> fh = fx.extract(hazy, layers);
  r.perceptual = zero();
  for (std::size_t l = 0; l < layers.size(); ++l) r.perceptual = r.perceptual + mean(ag::abs(fr[l] - fh[l]));
  r.ssim_term = 1.0 - ssim(rehazed, hazy);
  r.weighted = scale(r.l1, w.theta) + scale(r.perceptual, w.gamma) + scale(r.ssim_term, w.eta);
  return r;
}

double LossReport::weighted_total(const LossReport& r, const LossWeights& w) {
  return w.omega1 * r.msa + w.omega2 * r.msc + w.theta * r.rec_l1 + w.gamma * r.rec_perceptual + w.eta * r.rec_ssim;
}

GeneratorObjective total_loss(nets::ParamSet& disc, const nets::FeatureExtractor& fx, const VarPyramid& out,
                              const VarPyramid& ref, const Var& rehazed, const Var& hazy,
                              const std::vector<int>& layers, const LossWeights& w) {
  w.validate();
  const ScaleTerms msa = msa_loss_generator(disc, out, w);
  const ScaleTerms msc = msc_loss(fx, out, ref, layers, w);
  const ReconstructionTerms rec = reconstruction_loss(rehazed, hazy, fx, layers, w);
  GeneratorObjective g;
  g.total = scale(msa.total, w.omega1) + scale(msc.total, w.omega2) + rec.weighted;
  LossReport& r = g.report;
  r.msa = msa.total.value().item();
  r.msc = msc.total.value().item();
  r.msa_scales = msa.per_scale;
  r.msc_scales = msc.per_scale;
  r.rec_l1 = rec.l1.value().item();
  r.rec_perceptual = rec.perceptual.value().item();
  r.rec_ssim = rec.ssim_term.value().item();
  r.total = LossReport::weighted_total(r, w);
  return g;
}

std::string csv_header() { return "step,total,msa,msc,rec_l1,rec_p,rec_ssim"; }

std::string csv_row(std::size_t step, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", step, r.total, r.msa, r.msc, r.rec_l1,
                r.rec_perceptual, r.rec_ssim);
  return buf;
}

}  // namespace nsd::losses
