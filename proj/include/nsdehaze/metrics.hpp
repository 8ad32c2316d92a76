#ifndef NSDEHAZE_METRICS_HPP
#define NSDEHAZE_METRICS_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nsdehaze/image.hpp"

namespace nsd::metrics {

using imaging::Image;
using imaging::Map;

inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double fog_density = 0.0;
  std::optional<double> niqe;
};

/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const Image& a, const Image& b);
/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) of BT.601 luma.
double ssim(const Image& a, const Image& b);
/// Mean dark channel (radius 7). A haze proxy, not FADE.
double fog_density(const Image& img);

// ---------------------------------------------------------------- NIQE

inline constexpr int kNiqeFeatures = 36;

/// Multivariate Gaussian over natural-scene-statistics patch features.
struct NiqeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  /// Text header (feature dim, mean offset, covariance offset; offsets in
  /// bytes from the file start) followed by little-endian float64 data.
  static NiqeModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// First-scale patch side: half the shorter image side, rounded down to even, at most 96.
int niqe_patch_size(int height, int width);
/// One 36-dim feature row per patch (18 at full and 18 at half resolution).
Eigen::MatrixXd niqe_patch_features(const Image& img);
/// Fits a model to the patch features of a set of pristine images.
NiqeModel fit_niqe_model(std::span<const Image> images);
double niqe_score(const Image& img, const NiqeModel& model);
/// No model path: no score.
std::optional<double> niqe(const Image& img, const std::optional<std::filesystem::path>& model_path);

MetricReport evaluate_pair(const Image& output, const Image& truth, const std::optional<NiqeModel>& model = {});

}  // namespace nsd::metrics

#endif  // NSDEHAZE_METRICS_HPP
