#include "nsdehaze/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nsdehaze/error.hpp"

namespace nsd::physics {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

// Separable running minimum with truncated windows.
Map min_filter(const Map& src, int r) {
  const int h = src.height();
  const int w = src.width();
  if (r == 0) return src;
  Map rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double m = src.at(y, x);
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w - 1, x + r);
      for (int k = x0; k <= x1; ++k) m = std::min(m, src.at(y, k));
      rows.at(y, x) = m;
    }
  }
  Map out(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h - 1, y + r);
    for (int x = 0; x < w; ++x) {
      double m = rows.at(y, x);
      for (int k = y0; k <= y1; ++k) m = std::min(m, rows.at(k, x));
      out.at(y, x) = m;
    }
  }
  return out;
}

}  // namespace

TransmissionMap::TransmissionMap(Image values, double t_floor)
    : values_(std::move(values)), t_floor_(t_floor) {
  if (!(t_floor >= 0.0 && t_floor < 1.0)) throw ArgumentError("TransmissionMap: t_floor must lie in [0,1)");
  for (double& v : values_.data()) v = std::clamp(std::isfinite(v) ? v : t_floor, t_floor, 1.0);
}

TransmissionMap TransmissionMap::uniform(int height, int width, double t, double t_floor) {
  return TransmissionMap(Image(height, width, std::clamp(t, 0.0, 1.0)), t_floor);
}

TransmissionMap TransmissionMap::from_map(const Map& t, double t_floor) {
  Image img(t.height(), t.width());
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = t.at(y, x);
  return TransmissionMap(std::move(img), t_floor);
}

Image compose_haze(const Image& J, const TransmissionMap& t, const Image& A) {
  require_same_shape(J, t.values(), "compose_haze");
  require_same_shape(J, A, "compose_haze");
  Image out(J.height(), J.width());
  auto o = out.data();
  const auto j = J.data();
  const auto tv = t.values().data();
  const auto a = A.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = j[i] * tv[i] + a[i] * (1.0 - tv[i]);
  return out.clamp();
}

Image invert_haze(const Image& I, const TransmissionMap& t, const Image& A, double t_floor) {
  if (!(t_floor > 0.0)) throw ArgumentError("invert_haze: t_floor must be positive");
  require_same_shape(I, t.values(), "invert_haze");
  require_same_shape(I, A, "invert_haze");
  Image out(I.height(), I.width());
  auto o = out.data();
  const auto iv = I.data();
  const auto tv = t.values().data();
  const auto a = A.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = (iv[i] - a[i] * (1.0 - tv[i])) / std::max(tv[i], t_floor);
  }
  return out.clamp();
}

Map dark_channel_raw(const std::vector<double>& rgb, int height, int width, int patch_radius) {
  if (patch_radius < 0) throw ArgumentError("dark_channel: patch_radius must be >= 0");
  Map chan_min(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
      chan_min.at(y, x) = std::min({rgb[i], rgb[i + 1], rgb[i + 2]});
    }
  }
  return min_filter(chan_min, patch_radius);
}

DarkChannel dark_channel(const Image& I, int patch_radius) {
  std::vector<double> rgb(I.data().begin(), I.data().end());
  return {dark_channel_raw(rgb, I.height(), I.width(), patch_radius), patch_radius};
}

AirlightConstant dcp_airlight(const Image& I, const DarkChannel& D, double top_frac) {
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw ArgumentError("dcp_airlight: top_frac must lie in (0,1]");
  if (D.values.height() != I.height() || D.values.width() != I.width()) {
    throw ShapeError("dcp_airlight: dark channel and image differ in shape");
  }
  const std::size_t n = D.values.size();
  const auto count = static_cast<std::size_t>(
      std::clamp(std::ceil(top_frac * static_cast<double>(n) - 1e-9), 1.0, static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto dv = D.values.data();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dv[a] > dv[b]; });
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::array<double, 3> sum{};
  const auto px = I.data();
  for (std::size_t idx : order)
    for (int c = 0; c < 3; ++c) sum[c] += px[idx * 3 + c];
  AirlightConstant a;
  for (int c = 0; c < 3; ++c) a.rgb[c] = std::clamp(sum[c] / static_cast<double>(count), 0.0, 1.0);
  return a;
}

TransmissionMap dcp_transmission(const Image& I, const AirlightConstant& A, double omega,
                                 int patch_radius, double t_floor) {
  for (double a : A.rgb) {
    if (!(a > 0.0)) throw ArgumentError("dcp_transmission: airlight components must be positive");
  }
  if (!(omega > 0.0 && omega <= 1.0)) throw ArgumentError("dcp_transmission: omega must lie in (0,1]");
  std::vector<double> normalized(I.data().begin(), I.data().end());
  for (std::size_t i = 0; i < normalized.size(); ++i) normalized[i] /= A.rgb[i % 3];
  Map dark = dark_channel_raw(normalized, I.height(), I.width(), patch_radius);
  for (double& v : dark.data()) v = 1.0 - omega * v;
  return TransmissionMap::from_map(dark, t_floor);
}

Map box_mean(const Map& src, int radius) {
  const int h = src.height();
  const int w = src.width();
  // Integral image with a zero guard row/column.
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  auto s = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += src.at(y, x);
      s(y + 1, x + 1) = s(y, x + 1) + row;
    }
  }
  Map out(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h - 1, y + radius) + 1;
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w - 1, x + radius) + 1;
      const double total = s(y1, x1) - s(y0, x1) - s(y1, x0) + s(y0, x0);
      out.at(y, x) = total / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

Map guided_filter(const Map& guide, const Map& src, int radius, double eps) {
  if (guide.height() != src.height() || guide.width() != src.width()) {
    throw ShapeError("guided_filter: guide and source differ in shape");
  }
  if (!(eps > 0.0)) throw ArgumentError("guided_filter: eps must be positive");
  if (radius < 0) throw ArgumentError("guided_filter: radius must be >= 0");
  const int h = src.height();
  const int w = src.width();
  Map gp(h, w);
  Map gg(h, w);
  for (std::size_t i = 0; i < src.size(); ++i) {
    gp.data()[i] = guide.data()[i] * src.data()[i];
    gg.data()[i] = guide.data()[i] * guide.data()[i];
  }
  const Map mean_g = box_mean(guide, radius);
  const Map mean_p = box_mean(src, radius);
  const Map corr_gp = box_mean(gp, radius);
  const Map corr_gg = box_mean(gg, radius);
  Map a(h, w);
  Map b(h, w);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double var = corr_gg.data()[i] - mean_g.data()[i] * mean_g.data()[i];
    const double cov = corr_gp.data()[i] - mean_g.data()[i] * mean_p.data()[i];
    a.data()[i] = cov / (var + eps);
    b.data()[i] = mean_p.data()[i] - a.data()[i] * mean_g.data()[i];
  }
  const Map mean_a = box_mean(a, radius);
  const Map mean_b = box_mean(b, radius);
  Map q(h, w);
  for (std::size_t i = 0; i < src.size(); ++i) {
    q.data()[i] = mean_a.data()[i] * guide.data()[i] + mean_b.data()[i];
  }
  return q;
}

Map guided_filter(const Image& guide, const Map& src, int radius, double eps) {
  return guided_filter(guide.gray(), src, radius, eps);
}

Image guided_filter(const Image& guide, const Image& src, int radius, double eps) {
  if (guide.height() != src.height() || guide.width() != src.width()) {
    throw ShapeError("guided_filter: guide and source differ in shape");
  }
  const Map g = guide.gray();
  // Channel results may leave [0,1]; build the raw buffer and wrap unchecked.
  std::vector<double> out(src.size());
  for (int c = 0; c < 3; ++c) {
    const Map q = guided_filter(g, src.channel(c), radius, eps);
    for (std::size_t i = 0; i < q.size(); ++i) out[i * 3 + c] = q.data()[i];
  }
  Image img(src.height(), src.width());
  std::copy(out.begin(), out.end(), img.data().begin());
  return img;
}

DcpResult dcp_estimate(const Image& I, const DcpParams& p) {
  const DarkChannel dark = dark_channel(I, p.patch_radius);
  AirlightConstant airlight = dcp_airlight(I, dark, p.top_frac);
  for (double& a : airlight.rgb) a = std::max(a, 1e-3);
  const TransmissionMap rough = dcp_transmission(I, airlight, p.omega, p.patch_radius, p.t_floor);
  const Map refined = guided_filter(I, rough.values().channel(0), p.guided_radius, p.guided_eps);
  TransmissionMap t = TransmissionMap::from_map(refined, p.t_floor);
  Image J = invert_haze(I, t, airlight.as_image(I.height(), I.width()), p.t_floor);
  return {std::move(J), std::move(t), airlight};
}

Image dcp_dehaze(const Image& I, const DcpParams& params) { return dcp_estimate(I, params).dehazed; }

}  // namespace nsd::physics
