#include "nsdehaze/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "nsdehaze/error.hpp"

namespace nsd::imaging {

namespace {

void check_dims(int h, int w, const char* what) {
  if (h < 1 || w < 1) {
    throw ArgumentError(std::string(what) + ": dimensions must be positive, got " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
}

// Source coordinate and bilinear weights for one output sample (half-pixel centers).
struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

Map::Map(int height, int width, double fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  check_dims(height, width, "Map");
}

double Map::mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}
double Map::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Map::max() const { return *std::max_element(data_.begin(), data_.end()); }

Image::Image(int height, int width, double fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) * kChannels, fill) {
  check_dims(height, width, "Image");
  if (!(fill >= 0.0 && fill <= 1.0)) throw ArgumentError("Image: fill value outside [0,1]");
}

Image::Image(int height, int width, std::array<double, 3> rgb) : Image(height, width, 0.0) {
  for (double v : rgb) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("Image: fill value outside [0,1]");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = rgb[i % kChannels];
}

Image Image::from_pixels(int height, int width, std::vector<double> pixels) {
  check_dims(height, width, "Image");
  if (pixels.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw ArgumentError("Image: pixel buffer size does not match dimensions");
  }
  Image img;
  img.height_ = height;
  img.width_ = width;
  img.data_ = std::move(pixels);
  if (!img.in_range()) throw ArgumentError("Image: pixel values must be finite and in [0,1]");
  return img;
}

Image& Image::clamp() {
  for (double& v : data_) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  return *this;
}

bool Image::in_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Map Image::channel(int c) const {
  Map m(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) m.at(y, x) = at(y, x, c);
  return m;
}

Map Image::gray() const {
  Map m(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) m.at(y, x) = (at(y, x, 0) + at(y, x, 1) + at(y, x, 2)) / 3.0;
  return m;
}

Map Image::luminance() const {
  Map m(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      m.at(y, x) = 0.299 * at(y, x, 0) + 0.587 * at(y, x, 1) + 0.114 * at(y, x, 2);
  return m;
}

Image Image::broadcast(const Map& map) {
  Image img(map.height(), map.width());
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      for (int c = 0; c < kChannels; ++c) img.at(y, x, c) = map.at(y, x);
  return img;
}

double Image::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Image::max() const { return *std::max_element(data_.begin(), data_.end()); }
double Image::mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

Image resize(const Image& img, int h, int w) {
  check_dims(h, w, "resize");
  if (h == img.height() && w == img.width()) return img;
  const auto ty = bilinear_taps(img.height(), h);
  const auto tx = bilinear_taps(img.width(), w);
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < w; ++x) {
      const Tap& b = tx[x];
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = img.at(a.lo, b.lo, c) * (1 - b.frac) + img.at(a.lo, b.hi, c) * b.frac;
        const double bot = img.at(a.hi, b.lo, c) * (1 - b.frac) + img.at(a.hi, b.hi, c) * b.frac;
        out.at(y, x, c) = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

Map resize(const Map& map, int h, int w) {
  check_dims(h, w, "resize");
  if (h == map.height() && w == map.width()) return map;
  const auto ty = bilinear_taps(map.height(), h);
  const auto tx = bilinear_taps(map.width(), w);
  Map out(h, w);
  for (int y = 0; y < h; ++y) {
    const Tap& a = ty[y];
    for (int x = 0; x < w; ++x) {
      const Tap& b = tx[x];
      const double top = map.at(a.lo, b.lo) * (1 - b.frac) + map.at(a.lo, b.hi) * b.frac;
      const double bot = map.at(a.hi, b.lo) * (1 - b.frac) + map.at(a.hi, b.hi) * b.frac;
      out.at(y, x) = top * (1 - a.frac) + bot * a.frac;
    }
  }
  return out;
}

Image crop(const Image& img, int top, int left, int h, int w) {
  check_dims(h, w, "crop");
  if (top < 0 || left < 0 || top + h > img.height() || left + w > img.width()) {
    throw ArgumentError("crop: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                        std::to_string(top) + "," + std::to_string(left) +
                        ") exceeds image bounds");
  }
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

CropResult random_crop(const Image& img, int h, int w, std::uint64_t seed) {
  check_dims(h, w, "random_crop");
  if (h > img.height() || w > img.width()) {
    throw ArgumentError("random_crop: crop larger than image");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dy(0, img.height() - h);
  std::uniform_int_distribution<int> dx(0, img.width() - w);
  const int top = dy(rng);
  const int left = dx(rng);
  return {crop(img, top, left, h, w), {top, left}};
}

Image center_crop(const Image& img, int h, int w) {
  if (h > img.height() || w > img.width()) {
    throw ArgumentError("center_crop: crop larger than image");
  }
  return crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

Image rotate(const Image& img, double degrees) {
  if (!(degrees >= 0.0 && degrees < 360.0)) {
    throw ArgumentError("rotate: angle must lie in [0, 360)");
  }
  const int h = img.height();
  const int w = img.width();
  if (degrees == 0.0) return img;

  // Exact permutations for quarter turns.
  const bool quarter = std::fmod(degrees, 90.0) == 0.0;
  const int turns = static_cast<int>(degrees / 90.0);
  if (quarter && (turns == 2 || h == w)) {
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int sy = y;
        int sx = x;
        switch (turns) {
          case 1: sy = x; sx = w - 1 - y; break;
          case 2: sy = h - 1 - y; sx = w - 1 - x; break;
          case 3: sy = h - 1 - x; sx = y; break;
          default: break;
        }
        for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
      }
    }
    return out;
  }

  const double rad = degrees * std::acos(-1.0) / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = h / 2.0;
  const double cx = w / 2.0;
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse mapping of the output pixel center into the source.
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      double sx = cs * dx - sn * dy + cx - 0.5;
      double sy = sn * dx + cs * dy + cy - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
        const double bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

ScalePyramid pyramid(const Image& img) {
  if (img.height() < 2 || img.width() < 2) {
    throw ArgumentError("pyramid: image must be at least 2x2");
  }
  ScalePyramid p;
  for (std::size_t i = 0; i < ScalePyramid::kScales.size(); ++i) {
    const double s = ScalePyramid::kScales[i];
    const int h = static_cast<int>(std::lround(img.height() * s));
    const int w = static_cast<int>(std::lround(img.width() * s));
    p.levels[i] = resize(img, h, w);
  }
  return p;
}

Image hstack(std::span<const Image> images, int gap) {
  if (images.empty()) throw ArgumentError("hstack: no images");
  int h = 0;
  int w = 0;
  for (const auto& im : images) {
    h = std::max(h, im.height());
    w += im.width();
  }
  w += gap * static_cast<int>(images.size() - 1);
  Image out(h, w, 1.0);
  int x0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < im.height(); ++y)
      for (int x = 0; x < im.width(); ++x)
        for (int c = 0; c < Image::kChannels; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
    x0 += im.width() + gap;
  }
  return out;
}

Image vstack(std::span<const Image> images, int gap) {
  if (images.empty()) throw ArgumentError("vstack: no images");
  int h = 0;
  int w = 0;
  for (const auto& im : images) {
    w = std::max(w, im.width());
    h += im.height();
  }
  h += gap * static_cast<int>(images.size() - 1);
  Image out(h, w, 1.0);
  int y0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < im.height(); ++y)
      for (int x = 0; x < im.width(); ++x)
        for (int c = 0; c < Image::kChannels; ++c) out.at(y0 + y, x, c) = im.at(y, x, c);
    y0 += im.height() + gap;
  }
  return out;
}

}  // namespace nsd::imaging
