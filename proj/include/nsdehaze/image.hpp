#ifndef NSDEHAZE_IMAGE_HPP
#define NSDEHAZE_IMAGE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace nsd::imaging {

/// Single-channel H x W floating map (dark channels, depth, guided-filter input).
class Map {
 public:
  Map() = default;
  Map(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double mean() const;
  double min() const;
  double max() const;

  bool operator==(const Map&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// H x W x 3 RGB image with interleaved channels and values in [0,1].
///
/// The constructors validate the invariant; `at()` gives unchecked mutable
/// access, and `clamp()` restores the range after arithmetic.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0);
  Image(int height, int width, std::array<double, 3> rgb);

  /// Wraps interleaved RGB data; throws ArgumentError on bad size or range.
  static Image from_pixels(int height, int width, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Image& clamp();
  bool in_range() const;

  Map channel(int c) const;
  /// Mean over the three channels.
  Map gray() const;
  /// ITU-R BT.601 luma.
  Map luminance() const;
  /// Replicates a map into all three channels.
  static Image broadcast(const Map& map);

  double min() const;
  double max() const;
  double mean() const;

  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// The three resolutions used by the multi-scale losses.
struct ScalePyramid {
  static constexpr std::array<double, 3> kScales = {0.5, 1.0, 2.0};
  std::array<Image, 3> levels;
};

/// Bilinear resize with half-pixel centers and edge clamping.
Image resize(const Image& img, int h, int w);
Map resize(const Map& map, int h, int w);

struct CropResult {
  Image image;
  std::pair<int, int> offset;  // (row, col) of the top-left corner
};

/// Uniform random crop; offsets drawn from a generator seeded with `seed`.
CropResult random_crop(const Image& img, int h, int w, std::uint64_t seed);
Image crop(const Image& img, int top, int left, int h, int w);
Image center_crop(const Image& img, int h, int w);

/// Counter-clockwise rotation about the image center, bilinear sampling,
/// edge-replicated fill. Multiples of 90 degrees are exact permutations on
/// square images.
Image rotate(const Image& img, double degrees);

ScalePyramid pyramid(const Image& img);

/// Reads an 8-bit PNG or JPEG as v/255 per channel. Grayscale and 16-bit
/// files are rejected; a PNG alpha channel is dropped.
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG.
void save_image(const Image& img, const std::filesystem::path& path);
/// Writes a single-channel map as an 8-bit gray PNG (values clamped to [0,1]).
void save_map(const Map& map, const std::filesystem::path& path);

/// Places images side by side (separated by `gap` white columns).
Image hstack(std::span<const Image> images, int gap = 2);
Image vstack(std::span<const Image> images, int gap = 2);

}  // namespace nsd::imaging

#endif  // NSDEHAZE_IMAGE_HPP
