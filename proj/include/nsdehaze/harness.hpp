#ifndef NSDEHAZE_HARNESS_HPP
#define NSDEHAZE_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsdehaze/data.hpp"
#include "nsdehaze/losses.hpp"
#include "nsdehaze/metrics.hpp"
#include "nsdehaze/networks.hpp"

namespace nsd::harness {

using ag::Tensor;

struct TrainConfig {
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 5;
  int batch = 4;
  /// Overrides epochs * batches-per-epoch when positive.
  int max_steps = 0;
  losses::LossWeights loss_weights{};
  nets::NetworkConfig network{};
  std::uint64_t seed = 0;
  /// Checkpoint period in steps; 0 disables intermediate checkpoints.
  int checkpoint_every = 0;
  std::string out_dir = "runs/default";
  /// Training crop side; 0 keeps the sample size.
  int crop = 0;
  std::vector<int> feature_layers = nets::FeatureExtractor::default_layers();
  /// Widths of the fallback feature extractor are divided by this.
  int feature_width_divisor = 1;

  void validate() const;
  std::string to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t steps = 0;
};

struct TrainState {
  nets::ModelBundle model;
  AdamState generator_opt;
  AdamState discriminator_opt;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::vector<losses::LossReport> history;

  static TrainState create(const TrainConfig& cfg);
  void save(const std::filesystem::path& dir) const;
  static TrainState load(const std::filesystem::path& dir);
};

/// Learning rate at `step` of `total`: constant, then linear decay over the final half.
double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total);

/// Adam update of `params` from their gradients; values and moments are
/// stored at float32 precision so checkpoints round-trip exactly.
void adam_update(std::vector<ag::Var>& params, AdamState& state, double lr, const TrainConfig& cfg);

/// One discriminator update followed by one generator-side update.
losses::LossReport train_step(TrainState& state, const Tensor& hazy, const Tensor& ref, const TrainConfig& cfg,
                              const nets::FeatureExtractor& fx, double lr);

nets::FeatureExtractor make_feature_extractor(const TrainConfig& cfg);
std::size_t total_steps(const TrainConfig& cfg, const data::Dataset& ds);
data::BatchOptions batch_options(const TrainConfig& cfg, bool train_prep);

using StepCallback = std::function<void(std::size_t step, const losses::LossReport&)>;

/// Runs steps [state.step, min(total, state.step + steps)) and returns the new reports.
std::vector<losses::LossReport> train(TrainState& state, const TrainConfig& cfg, const data::Dataset& ds,
                                      std::size_t steps, const StepCallback& on_step = {});

/// Full run: trains, writes losses.csv, a loss plot, checkpoints and the final model under cfg.out_dir.
TrainState run_training(const TrainConfig& cfg, const data::PairManifest& manifest);

// ----------------------------------------------------------- inference

struct SideOutputs {
  imaging::Image transmission;
  imaging::Image airlight;
  imaging::Map attention;  // attention received per position, normalized to [0, 1]
};

/// Reflect-pads to a multiple of 16, runs the pipeline, crops back.
imaging::Image dehaze_image(const nets::ModelBundle& model, const imaging::Image& hazy, SideOutputs* side = nullptr);

/// Writes the dehazed PNG; side outputs go to `side_dir` when given.
void dehaze(const nets::ModelBundle& model, const std::filesystem::path& in, const std::filesystem::path& out,
            const std::optional<std::filesystem::path>& side_dir = {});

struct EvalRow {
  std::size_t index = 0;
  metrics::MetricReport input;   // hazy against the truth
  metrics::MetricReport output;  // dehazed against the truth
};

struct EvalTable {
  std::vector<EvalRow> rows;
  metrics::MetricReport mean_input;
  metrics::MetricReport mean_output;

  void write_csv(const std::filesystem::path& path) const;
};

using ImageModel = std::function<imaging::Image(const imaging::Image&)>;

/// Truth is the clear image when present, the reference otherwise.
EvalTable evaluate(const ImageModel& model, const data::Dataset& ds, const std::optional<metrics::NiqeModel>& niqe = {});
EvalTable evaluate(const nets::ModelBundle& model, const data::Dataset& ds,
                   const std::optional<metrics::NiqeModel>& niqe = {});

// --------------------------------------------------------------- study

struct StudyConfig {
  TrainConfig train;
  data::ToyConfig toy;
  std::vector<int> shifts = {0, 30, 60, 90, 120};
  std::vector<double> rotations = {0.0};
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path work_dir = "runs/study";
};

struct StudyRow {
  int shift_px = 0;
  double rotation_deg = 0.0;
  double scale = 0.0;  // shift / crop width
  std::uint64_t seed = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double fog_density = 0.0;
};

struct StudyTable {
  std::vector<StudyRow> rows;

  void write_csv(const std::filesystem::path& path) const;
  /// Seed-averaged PSNR over shift, one line per rotation.
  void write_plot(const std::filesystem::path& path) const;
};

/// Trains and evaluates one model per (shift, rotation, seed); the toy
/// scenes are shared across shifts so only the reference offset changes.
StudyTable misalignment_study(const StudyConfig& cfg);

}  // namespace nsd::harness

#endif  // NSDEHAZE_HARNESS_HPP
