#ifndef NSDEHAZE_PHYSICS_HPP
#define NSDEHAZE_PHYSICS_HPP

#include <array>

#include "nsdehaze/image.hpp"

namespace nsd::physics {

using imaging::Image;
using imaging::Map;

inline constexpr double kDefaultTFloor = 0.05;

/// Per-pixel, per-channel transmission t(x) in [t_floor, 1].
///
/// Construction clamps into range. A floor of 0 is admitted for physically
/// synthesized maps (exp(-beta d) underflows toward zero at large depth).
class TransmissionMap {
 public:
  TransmissionMap() = default;
  explicit TransmissionMap(Image values, double t_floor = kDefaultTFloor);
  static TransmissionMap uniform(int height, int width, double t, double t_floor = kDefaultTFloor);
  /// Broadcasts one map into three identical channels.
  static TransmissionMap from_map(const Map& t, double t_floor = kDefaultTFloor);

  const Image& values() const { return values_; }
  double t_floor() const { return t_floor_; }
  int height() const { return values_.height(); }
  int width() const { return values_.width(); }

 private:
  Image values_;
  double t_floor_ = kDefaultTFloor;
};

struct DarkChannel {
  Map values;
  int patch_radius = 0;
};

struct AirlightConstant {
  std::array<double, 3> rgb{};
  Image as_image(int height, int width) const { return Image(height, width, rgb); }
};

/// I = J t + A (1 - t), clamped to [0,1].
Image compose_haze(const Image& J, const TransmissionMap& t, const Image& A);

/// J = (I - A (1 - t)) / max(t, t_floor), clamped to [0,1].
Image invert_haze(const Image& I, const TransmissionMap& t, const Image& A, double t_floor);

/// Channel minimum followed by a (2r+1)^2 spatial minimum; windows are
/// truncated at the borders.
DarkChannel dark_channel(const Image& I, int patch_radius);

/// Same as dark_channel but over an arbitrary (possibly out-of-range)
/// interleaved RGB buffer.
Map dark_channel_raw(const std::vector<double>& rgb, int height, int width, int patch_radius);

/// Mean RGB of I over the ceil(top_frac * H * W) pixels with the largest
/// dark-channel value. Ties keep the earlier pixel in row-major order; the
/// mean is accumulated in row-major order of the selected set.
AirlightConstant dcp_airlight(const Image& I, const DarkChannel& D, double top_frac);

/// t = max(1 - omega * dark_channel(I / A), t_floor), three identical channels.
TransmissionMap dcp_transmission(const Image& I, const AirlightConstant& A, double omega,
                                 int patch_radius, double t_floor = kDefaultTFloor);

/// Mean over the truncated (2r+1)^2 window around each pixel.
Map box_mean(const Map& src, int radius);

/// Guided filter with the grayscale (channel mean) of `guide` as guidance.
Map guided_filter(const Image& guide, const Map& src, int radius, double eps);
Map guided_filter(const Map& guide, const Map& src, int radius, double eps);
/// Channel-wise application to a three-channel source.
Image guided_filter(const Image& guide, const Image& src, int radius, double eps);

struct DcpParams {
  int patch_radius = 7;
  double omega = 0.95;
  double top_frac = 0.001;
  double t_floor = kDefaultTFloor;
  int guided_radius = 20;
  double guided_eps = 1e-3;
};

struct DcpResult {
  Image dehazed;
  TransmissionMap transmission;
  AirlightConstant airlight;
};

/// Dark channel -> airlight -> transmission -> guided refinement -> inversion.
DcpResult dcp_estimate(const Image& I, const DcpParams& params = {});
Image dcp_dehaze(const Image& I, const DcpParams& params = {});

}  // namespace nsd::physics

#endif  // NSDEHAZE_PHYSICS_HPP
