#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nsdehaze/data.hpp"
#include "nsdehaze/error.hpp"
#include "nsdehaze/metrics.hpp"
#include "nsdehaze/physics.hpp"
#include "test_util.hpp"

using namespace nsd;
using imaging::Image;
using imaging::Map;

namespace {

Image offset_by(const Image& img, double delta) {
  Image out = img;
  for (double& v : out.data()) v += delta;
  return out;
}

Image add_noise(const Image& img, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Image out = img;
  for (double& v : out.data()) v = std::clamp(v + u(rng), 0.0, 1.0);
  return out;
}

Image box_blur(const Image& img, int radius) {
  Image out(img.height(), img.width());
  for (int c = 0; c < 3; ++c) {
    const Map m = physics::box_mean(img.channel(c), radius);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(y, x, c) = m.at(y, x);
  }
  return out;
}

const metrics::NiqeModel& toy_niqe_model() {
  static const metrics::NiqeModel model = [] {
    std::vector<Image> pristine;
    for (std::uint64_t s = 0; s < 24; ++s) pristine.push_back(data::toy_scene(64, 64, 1000 + s));
    return metrics::fit_niqe_model(pristine);
  }();
  return model;
}

}  // namespace

// ------------------------------------------------------------------- PSNR

TEST(Psnr, CapAndUniformOffset) {
  const Image a = test::random_image(16, 16, 1, 0.0, 0.8);
  EXPECT_EQ(metrics::psnr(a, a), 99.0);
  EXPECT_NEAR(metrics::psnr(a, offset_by(a, 0.1)), 20.0, 1e-9);
}

TEST(Psnr, MatchesDirectFormula) {
  const Image a = test::random_image(13, 17, 2);
  const Image b = test::random_image(13, 17, 3);
  double se = 0.0;
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x)
      for (int c = 0; c < 3; ++c) se += std::pow(a.at(y, x, c) - b.at(y, x, c), 2);
  EXPECT_NEAR(metrics::psnr(a, b), -10.0 * std::log10(se / (13 * 17 * 3)), 1e-9);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  const Image a = test::random_image(32, 32, 4, 0.2, 0.8);
  const double p1 = metrics::psnr(a, add_noise(a, 0.01, 5));
  const double p2 = metrics::psnr(a, add_noise(a, 0.05, 5));
  const double p3 = metrics::psnr(a, add_noise(a, 0.1, 5));
  EXPECT_GT(p1, p2);
  EXPECT_GT(p2, p3);
  EXPECT_GE(p3, 0.0);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(metrics::psnr(Image(4, 4), Image(4, 5)), ShapeError);
}

// ------------------------------------------------------------------- SSIM

TEST(Ssim, IdentityAndSymmetry) {
  const Image a = test::random_image(24, 20, 6);
  const Image b = test::random_image(24, 20, 7);
  EXPECT_NEAR(metrics::ssim(a, a), 1.0, 1e-9);
  EXPECT_NEAR(metrics::ssim(a, b), metrics::ssim(b, a), 1e-9);
  EXPECT_LT(metrics::ssim(a, b), 1.0 - 1e-3);
}

TEST(Ssim, ConstantPatchesClosedForm) {
  const double m1 = 0.4;
  const double m2 = 0.5;
  const double c1 = 1e-4;
  const double c2 = 9e-4;
  const double expected = (2 * m1 * m2 + c1) * c2 / ((m1 * m1 + m2 * m2 + c1) * c2);
  EXPECT_NEAR(metrics::ssim(Image(16, 16, m1), Image(16, 16, m2)), expected, 1e-9);
}

TEST(Ssim, PositiveForCorrelatedImages) {
  const Image a = test::random_image(32, 32, 8, 0.1, 0.9);
  for (double amp : {0.01, 0.05, 0.1}) {
    const double s = metrics::ssim(a, add_noise(a, amp, 9));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(metrics::ssim(Image(10, 20), Image(10, 20)), ShapeError); }

// ------------------------------------------------------------ fog density

TEST(FogDensity, Extremes) {
  EXPECT_EQ(metrics::fog_density(Image(16, 16, 0.0)), 0.0);
  EXPECT_EQ(metrics::fog_density(Image(16, 16, 1.0)), 1.0);
}

TEST(FogDensity, HazeRaisesDensityOverToyRanges) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> t_draw(0.1, 0.9);
  std::uniform_real_distribution<double> a_draw(0.6, 0.95);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image j = data::toy_scene(32, 32, s);
    const double a = a_draw(rng);
    ASSERT_GT(a, physics::dark_channel(j, 7).values.mean());
    const Image hazy = physics::compose_haze(j, physics::TransmissionMap::uniform(32, 32, t_draw(rng), 0.0), Image(32, 32, a));
    EXPECT_GE(metrics::fog_density(hazy), metrics::fog_density(j)) << s;
  }
}

// ------------------------------------------------------------------- NIQE

TEST(Niqe, MissingModelIsNoScore) {
  EXPECT_FALSE(metrics::niqe(Image(32, 32, 0.5), std::nullopt).has_value());
  EXPECT_THROW(metrics::niqe(Image(32, 32, 0.5), std::filesystem::path("/nonexistent/model.bin")), NotFound);
}

TEST(Niqe, PatchSizeAdaptsToImage) {
  EXPECT_EQ(metrics::niqe_patch_size(512, 512), 96);
  EXPECT_EQ(metrics::niqe_patch_size(64, 64), 32);
  EXPECT_EQ(metrics::niqe_patch_size(150, 300), 74);
  EXPECT_EQ(metrics::niqe_patch_size(16, 40), 8);
  EXPECT_THROW(metrics::niqe_patch_size(15, 64), ShapeError);
  const auto f = metrics::niqe_patch_features(data::toy_scene(64, 48, 1));
  EXPECT_EQ(f.rows(), 2 * 2);
  EXPECT_EQ(f.cols(), metrics::kNiqeFeatures);
  EXPECT_TRUE(f.allFinite());
}

TEST(Niqe, DeterministicAndBlurScoresWorse) {
  const auto& model = toy_niqe_model();
  int worse = 0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const Image img = data::toy_scene(64, 64, 50 + s);
    const double a = metrics::niqe_score(img, model);
    EXPECT_EQ(a, metrics::niqe_score(img, model));
    worse += metrics::niqe_score(box_blur(img, 3), model) > a;
  }
  EXPECT_EQ(worse, 6);
}

TEST(Niqe, ModelFileRoundTripAndErrors) {
  const auto dir = test::scratch_dir("niqe");
  const auto& model = toy_niqe_model();
  model.save(dir / "model.bin");
  const auto back = metrics::NiqeModel::load(dir / "model.bin");
  EXPECT_EQ(back.mean, model.mean);
  EXPECT_EQ(back.covariance, model.covariance);
  const Image img = data::toy_scene(64, 64, 3);
  EXPECT_EQ(metrics::niqe(img, dir / "model.bin").value(), metrics::niqe_score(img, model));

  std::filesystem::resize_file(dir / "model.bin", 200);
  EXPECT_THROW(metrics::NiqeModel::load(dir / "model.bin"), FormatError);
  metrics::NiqeModel small;
  small.mean = Eigen::VectorXd::Zero(4);
  small.covariance = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_THROW(metrics::niqe_score(img, small), FormatError);
}

TEST(EvaluatePair, FillsEveryField) {
  const Image a = test::random_image(16, 16, 11);
  const auto r = metrics::evaluate_pair(a, a);
  EXPECT_EQ(r.psnr, 99.0);
  EXPECT_NEAR(r.ssim, 1.0, 1e-12);
  EXPECT_EQ(r.fog_density, metrics::fog_density(a));
  EXPECT_FALSE(r.niqe.has_value());
}
