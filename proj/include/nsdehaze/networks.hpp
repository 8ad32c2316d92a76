#ifndef NSDEHAZE_NETWORKS_HPP
#define NSDEHAZE_NETWORKS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nsdehaze/ops.hpp"
#include "nsdehaze/params.hpp"
#include "nsdehaze/physics.hpp"

namespace nsd::nets {

struct NetworkConfig {
  int base_channels = 64;
  int generator_res_blocks = 9;
  /// Base width of the discriminator (layers use 1, 2, 4, 8 times this).
  int discriminator_channels = 64;
  double alpha = 1.2;
  double mu = 0.25e-3;
  double top_frac = 0.01;
  double t_floor = physics::kDefaultTFloor;
  /// Guided refinement of the predicted transmission.
  int guided_radius = 20;
  double guided_eps = 1e-3;
  /// Adds logit(J_rough) before the generator's output sigmoid.
  bool generator_rough_skip = true;
  /// Starting value of the A_m projection bias.
  double airlight_bias_init = 0.6;
  /// Rough dehaze feeding the generator and dark channel feeding the encoder.
  physics::DcpParams dcp{};
  std::uint64_t seed = 0;

  void validate() const;
};

// ------------------------------------------------------------- generator

/// CycleGAN ResNet generator: c7s1-F, d2F, d4F, N x R4F, u2F, uF, c7s1-3, sigmoid.
ParamSet make_generator(const NetworkConfig& cfg);
/// j_rough: (B, 3, H, W) with H, W multiples of 4. Output in [0, 1].
Var generator_forward(const ParamSet& p, const Var& j_rough, const NetworkConfig& cfg);

// ---------------------------------------------------- U-shaped networks

/// Four-level encoder-decoder with skip connections; F_d and F_h come from
/// the same parameters. Output channels = base_channels.
ParamSet make_shared_encoder(const NetworkConfig& cfg);
Var shared_encode_one(const ParamSet& p, const Var& x);

struct EncodedFeatures {
  Var dark;   // F_d
  Var hazy;   // F_h
};
/// dark: dark channel of I broadcast to 3 channels.
EncodedFeatures shared_encode(const ParamSet& p, const Var& dark, const Var& hazy);

/// U-shaped net with squeeze-excitation after every encoder block.
ParamSet make_transmission_net(const NetworkConfig& cfg);
/// Raw sigmoid output rescaled to [t_floor, 1] before refinement.
Var transmission_raw(const ParamSet& p, const Var& hazy, const NetworkConfig& cfg);
/// Refined with a guided filter (guide = gray of I) and clamped to [t_floor, 1].
Var transmission_forward(const ParamSet& p, const Var& hazy, const NetworkConfig& cfg);

/// Differentiable guided filter; guide is a constant (B, 1, H, W) map and
/// src is filtered per channel.
Var guided_filter(const Tensor& guide, const Var& src, int radius, double eps);

// ----------------------------------------------------------------- mvSA

ParamSet make_mvsa(const NetworkConfig& cfg);

struct AirlightEstimate {
  Var a_mean;      // A_m, spatially constant per image
  Var a_var;       // A_v
  Var a_inf_raw;   // alpha A_m + mu A_v
  Var a_inf;       // clamped to [0, 1]
  Var attention;   // (B, 1, H*W, H*W/16) softmax weights
  Var f_att;       // (B, C/8, H, W)
  Var v_full;      // v_h before pooling
  Var v_pooled;    // v_h after 4x4 max pooling
};

AirlightEstimate mvsa_forward(const ParamSet& p, const Var& f_dark, const Var& f_hazy,
                              const NetworkConfig& cfg);

// -------------------------------------------------------- discriminator

/// Five 4x4 stride-2 convolutions (64, 128, 256, 512, 1 scaled by the
/// configured width), batch norm on layers 2-4, LeakyReLU 0.2.
ParamSet make_discriminator(const NetworkConfig& cfg);
/// Pre-pool logit map.
Var discriminator_map(ParamSet& p, const Var& img, bool training);
/// One logit per batch item, (B, 1, 1, 1).
Var discriminator_forward(ParamSet& p, const Var& img, bool training);
inline constexpr int kDiscriminatorMinSize = 16;

// ----------------------------------------------------- feature extractor

/// VGG-16 convolutional stack. Layer ids 1..13 name the conv+ReLU outputs
/// (conv1_1 = 1, conv1_2 = 2, conv2_1 = 3, ..., conv5_3 = 13).
class FeatureExtractor {
 public:
  static constexpr int kLayers = 13;
  static std::vector<int> default_layers() { return {2, 4, 7}; }

  /// Fixed-seed He-initialized weights. Widths are the VGG widths divided
  /// by `width_divisor`; the stack stops at the deepest requested layer.
  static FeatureExtractor random(std::uint64_t seed, int width_divisor = 1,
                                 int max_layer = 7);
  /// Loads "convX_Y.weight" / "convX_Y.bias" from a checkpoint directory.
  static FeatureExtractor pretrained(const std::filesystem::path& dir, int max_layer = 7);
  /// NSDEHAZE_WEIGHTS if set, otherwise the random fallback.
  static FeatureExtractor from_environment(std::uint64_t seed, int width_divisor, int max_layer = 7);

  int channels(int layer) const;
  int max_layer() const { return max_layer_; }
  bool is_pretrained() const { return pretrained_; }
  const ParamSet& params() const { return params_; }

  /// x in [0,1], (B, 3, H, W). Returns activations at `layers`, in order.
  std::vector<Var> extract(const Var& x, const std::vector<int>& layers) const;

 private:
  FeatureExtractor() = default;
  ParamSet params_;
  std::vector<int> widths_;
  int max_layer_ = 0;
  bool pretrained_ = false;
};

/// VGG-16 layer name for a conv id ("conv3_2" for 6).
std::string vgg_layer_name(int layer);

// ------------------------------------------------------------- bundle

struct ModelBundle {
  NetworkConfig config;
  ParamSet generator;
  ParamSet encoder;
  ParamSet mvsa;
  ParamSet transmission;
  ParamSet discriminator;

  static ModelBundle create(const NetworkConfig& cfg);
  ModelBundle clone() const;

  /// Sets grouped as (name, set) in a fixed order.
  std::vector<std::pair<std::string, ParamSet*>> groups();
  std::vector<std::pair<std::string, const ParamSet*>> groups() const;
  /// Generator, encoder, mvSA and transmission parameters.
  std::vector<Var> generator_side_vars() const;

  void save(const std::filesystem::path& dir) const;
  static ModelBundle load(const std::filesystem::path& dir);
};

/// Full inference graph for a batch of hazy images.
struct PipelineOutput {
  Var hazy;
  Var j_rough;
  Var dark;        // 3-channel dark channel of I
  Var dehazed;     // J
  Var transmission;
  AirlightEstimate airlight;
  Var rehazed;     // I_rec = J t + A (1 - t)
};

PipelineOutput run_pipeline(const ModelBundle& model, const Tensor& hazy);

/// I = J t + A (1 - t) on tensors. Inputs in [0, 1] keep the result in [0, 1].
Var compose_haze(const Var& J, const Var& t, const Var& A);

}  // namespace nsd::nets

#endif  // NSDEHAZE_NETWORKS_HPP
