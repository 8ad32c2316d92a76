#include "nsdehaze/metrics.hpp"

#include <cmath>

#include "nsdehaze/error.hpp"
#include "nsdehaze/physics.hpp"

namespace nsd::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": images differ in shape");
  }
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Valid-mode separable Gaussian filter.
Map blur_valid(const Map& m, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = m.height() - n + 1;
  const int ow = m.width() - n + 1;
  Map rows(m.height(), ow);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += k[t] * m.at(y, x + t);
      rows.at(y, x) = acc;
    }
  Map out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += k[t] * rows.at(y + t, x);
      out.at(y, x) = acc;
    }
  return out;
}

Map product(const Map& a, const Map& b) {
  Map out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.height() < kWindow || a.width() < kWindow) throw ShapeError("ssim: images must be at least 11x11");
  std::vector<double> k(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  const Map x = a.luminance();
  const Map y = b.luminance();
  const Map mx = blur_valid(x, k);
  const Map my = blur_valid(y, k);
  const Map xx = blur_valid(product(x, x), k);
  const Map yy = blur_valid(product(y, y), k);
  const Map xy = blur_valid(product(x, y), k);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx.data()[i];
    const double uy = my.data()[i];
    const double sxx = xx.data()[i] - ux * ux;
    const double syy = yy.data()[i] - uy * uy;
    const double sxy = xy.data()[i] - ux * uy;
    acc += ((2 * ux * uy + kC1) * (2 * sxy + kC2)) / ((ux * ux + uy * uy + kC1) * (sxx + syy + kC2));
  }
  return acc / static_cast<double>(mx.size());
}

double fog_density(const Image& img) { return physics::dark_channel(img, 7).values.mean(); }

MetricReport evaluate_pair(const Image& output, const Image& truth, const std::optional<NiqeModel>& model) {
  MetricReport r;
  r.psnr = psnr(output, truth);
  r.ssim = ssim(output, truth);
  r.fog_density = fog_density(output);
  if (model) r.niqe = niqe_score(output, *model);
  return r;
}

}  // namespace nsd::metrics
