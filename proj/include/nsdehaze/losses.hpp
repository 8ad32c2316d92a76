#ifndef NSDEHAZE_LOSSES_HPP
#define NSDEHAZE_LOSSES_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "nsdehaze/networks.hpp"

namespace nsd::losses {

using ag::Tensor;
using ag::Var;

struct LossWeights {
  double omega1 = 1.0;  // adversarial
  double omega2 = 1.0;  // contextual
  double theta = 5.0;   // l1
  double gamma = 1.0;   // perceptual
  double eta = 1.0;     // SSIM
  double cx_bandwidth = 0.5;
  double cx_epsilon = 1e-5;
  /// Feature positions per map beyond which contextual similarity subsamples.
  std::size_t cx_max_positions = 1024;
  /// Pyramid levels (0.5x, 1x, 2x) entering the adversarial and contextual terms.
  std::array<bool, 3> scales = {true, true, true};

  void validate() const;
};

/// Levels at 0.5x, 1x and 2x of a (B, 3, H, W) batch; the 1x level is the input itself.
using VarPyramid = std::array<Var, 3>;
VarPyramid pyramid(const Var& x);

/// Contextual similarity of two feature maps, averaged over the batch.
Var contextual_similarity(const Var& fx, const Var& fy, const LossWeights& w);

struct ScaleTerms {
  Var total;
  std::array<double, 3> per_scale{};  // zero for disabled scales
};

/// Sum over enabled scales and the given layers of -log CX(phi(out), phi(ref)).
ScaleTerms msc_loss(const nets::FeatureExtractor& fx, const VarPyramid& out, const VarPyramid& ref,
                    const std::vector<int>& layers, const LossWeights& w);

/// Sum over enabled scales of BCE(D(ref), 1) + BCE(D(out), 0).
ScaleTerms msa_loss_discriminator(nets::ParamSet& disc, const VarPyramid& ref, const VarPyramid& out,
                                  const LossWeights& w, bool training = true);
/// Sum over enabled scales of BCE(D(out), 1).
ScaleTerms msa_loss_generator(nets::ParamSet& disc, const VarPyramid& out, const LossWeights& w,
                              bool training = true);

/// Mean local SSIM over all channels, 11x11 Gaussian window (sigma 1.5),
/// zero-padded to the input size.
Var ssim(const Var& x, const Var& y);

struct ReconstructionTerms {
  Var l1;          // mean |I_rec - I|
  Var perceptual;  // sum over layers of mean |phi(I_rec) - phi(I)|
  Var ssim_term;   // 1 - SSIM
  Var weighted;    // theta l1 + gamma perceptual + eta ssim_term
};

ReconstructionTerms reconstruction_loss(const Var& rehazed, const Var& hazy, const nets::FeatureExtractor& fx,
                                        const std::vector<int>& layers, const LossWeights& w);

struct LossReport {
  double total = 0.0;
  double msa = 0.0;
  double msc = 0.0;
  double rec_l1 = 0.0;
  double rec_perceptual = 0.0;
  double rec_ssim = 0.0;
  std::array<double, 3> msa_scales{};
  std::array<double, 3> msc_scales{};
  /// Discriminator objective of the same step; not part of `total`.
  double discriminator = 0.0;

  /// omega1 msa + omega2 msc + theta rec_l1 + gamma rec_perceptual + eta rec_ssim.
  static double weighted_total(const LossReport& r, const LossWeights& w);
};

struct GeneratorObjective {
  Var total;
  LossReport report;
};

/// Generator-side objective: adversarial (non-saturating) + contextual + reconstruction.
GeneratorObjective total_loss(nets::ParamSet& disc, const nets::FeatureExtractor& fx, const VarPyramid& out,
                              const VarPyramid& ref, const Var& rehazed, const Var& hazy,
                              const std::vector<int>& layers, const LossWeights& w);

/// CSV header and row (step, total, msa, msc, rec_l1, rec_p, rec_ssim).
std::string csv_header();
std::string csv_row(std::size_t step, const LossReport& r);

}  // namespace nsd::losses

#endif  // NSDEHAZE_LOSSES_HPP
