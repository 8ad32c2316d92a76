#include "nsdehaze/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nsdehaze/error.hpp"

namespace nsd::plot {

namespace {

using imaging::Image;

// 3x5 glyphs, one row per 3-bit mask, top to bottom.
struct Glyph {
  char ch;
  std::array<unsigned char, 5> rows;
};

constexpr std::array<Glyph, 14> kGlyphs = {{
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}},
    {'e', {0, 7, 7, 4, 7}}, {'+', {0, 2, 7, 2, 0}},
}};

void put(Image& img, int y, int x, const std::array<double, 3>& c) {
  if (y < 0 || x < 0 || y >= img.height() || x >= img.width()) return;
  for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
}

void text(Image& img, int y, int x, const std::string& s, int scale = 2) {
  const std::array<double, 3> ink{0.1, 0.1, 0.1};
  for (char ch : s) {
    const auto it = std::find_if(kGlyphs.begin(), kGlyphs.end(), [&](const Glyph& g) { return g.ch == ch; });
    if (it != kGlyphs.end()) {
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c)
          if (it->rows[r] & (4 >> c))
            for (int dy = 0; dy < scale; ++dy)
              for (int dx = 0; dx < scale; ++dx) put(img, y + r * scale + dy, x + c * scale + dx, ink);
    }
    x += 4 * scale;
  }
}

void line(Image& img, double y0, double x0, double y1, double x1, const std::array<double, 3>& c, int thick) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int y = static_cast<int>(std::lround(y0 + (y1 - y0) * t));
    const int x = static_cast<int>(std::lround(x0 + (x1 - x0) * t));
    for (int dy = -thick / 2; dy <= thick / 2; ++dy)
      for (int dx = -thick / 2; dx <= thick / 2; ++dx) put(img, y + dy, x + dx, c);
  }
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::array<double, 3> palette(std::size_t i) {
  static constexpr std::array<std::array<double, 3>, 6> kColors = {{{0.12, 0.47, 0.71},
                                                                    {0.84, 0.15, 0.16},
                                                                    {0.17, 0.63, 0.17},
                                                                    {1.00, 0.50, 0.05},
                                                                    {0.58, 0.40, 0.74},
                                                                    {0.55, 0.34, 0.29}}};
  return kColors[i % kColors.size()];
}

Image line_plot(const std::vector<Series>& series, int width, int height) {
  if (width < 80 || height < 60) throw ArgumentError("line_plot: canvas too small");
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ArgumentError("line_plot: series '" + s.label + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  Image img(height, width, 1.0);
  const int left = 70;
  const int right = width - 20;
  const int top = 20;
  const int bottom = height - 40;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (right - left); };
  auto py = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); };

  const std::array<double, 3> grid{0.88, 0.88, 0.88};
  const std::array<double, 3> axis{0.2, 0.2, 0.2};
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double yv = ymin + (ymax - ymin) * i / kTicks;
    const double xv = xmin + (xmax - xmin) * i / kTicks;
    line(img, py(yv), left, py(yv), right, grid, 1);
    line(img, top, px(xv), bottom, px(xv), grid, 1);
    text(img, static_cast<int>(py(yv)) - 5, 4, tick_label(yv));
    text(img, bottom + 8, static_cast<int>(px(xv)) - 10, tick_label(xv));
  }
  line(img, bottom, left, bottom, right, axis, 1);
  line(img, top, left, bottom, left, axis, 1);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.y[i + 1])) continue;
      line(img, py(s.y[i]), px(s.x[i]), py(s.y[i + 1]), px(s.x[i + 1]), s.color, 2);
    }
    if (s.x.size() == 1) line(img, py(s.y[0]), px(s.x[0]) - 2, py(s.y[0]), px(s.x[0]) + 2, s.color, 3);
    // Legend swatch per series, stacked top-right.
    const int ly = top + 6 + static_cast<int>(k) * 10;
    line(img, ly, right - 30, ly, right - 10, s.color, 3);
  }
  return img;
}

void save_line_plot(const std::vector<Series>& series, const std::filesystem::path& path, int width, int height) {
  imaging::save_image(line_plot(series, width, height), path);
}

}  // namespace nsd::plot
