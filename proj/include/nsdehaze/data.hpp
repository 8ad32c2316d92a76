#ifndef NSDEHAZE_DATA_HPP
#define NSDEHAZE_DATA_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nsdehaze/image.hpp"
#include "nsdehaze/physics.hpp"

namespace nsd::data {

using imaging::Image;
using imaging::Map;

struct SynthConfig {
  std::array<double, 3> beta{1.0, 1.0, 1.0};
  Image airlight;  // H x W x 3 field
  Map depth;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  Image hazy;
  physics::TransmissionMap transmission;
};

/// t_c = exp(-beta_c d); hazy = compose_haze(clear, t, airlight).
SynthResult synth_hazy(const Image& clear, const SynthConfig& cfg);

struct MisalignSpec {
  int shift_px = 0;
  double rotation_deg = 0.0;
  int crop_h = 0;
  int crop_w = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// shift / crop width.
double misalignment_scale(const MisalignSpec& spec);
/// Unit step of one of the 8 compass directions chosen by `seed`, as (dy, dx).
std::pair<int, int> shift_direction(std::uint64_t seed);
/// Centered crop moved by shift_px along a seeded compass direction, then rotated.
Image misalign_reference(const Image& ref, const MisalignSpec& spec);

struct PairRecord {
  std::filesystem::path hazy;
  std::filesystem::path ref;
  std::optional<std::filesystem::path> clear;  // ground truth, synthetic sets only
  int shift_px = 0;
  double rotation_deg = 0.0;
  std::string split = "train";
};

struct PairManifest {
  std::vector<PairRecord> records;

  std::vector<PairRecord> split(const std::string& name) const;
  /// JSON lines; relative paths are resolved against the manifest's directory.
  static PairManifest load(const std::filesystem::path& path);
  /// Paths are written relative to the manifest's directory when possible.
  void save(const std::filesystem::path& path) const;
  void validate() const;
};

struct ToyConfig {
  int n_pairs = 16;
  int height = 64;
  int width = 64;
  int test_pairs = 0;
  int shift_px = 0;
  double rotation_deg = 0.0;
  /// Scene border around the crop; negative means shift_px. Scenes depend on
  /// (seed, size, margin) only, so a fixed margin shares content across shifts.
  int margin = -1;
  std::array<double, 2> beta_range{0.5, 2.0};
  std::array<double, 2> airlight_range{0.6, 0.95};
  std::array<double, 2> depth_range{0.2, 1.2};
  std::uint64_t seed = 0;
};

/// Procedural clear scenes, depth ramps, hazy counterparts and misaligned
/// references written to `out_dir/{hazy,ref,clear}/NNNN.png` plus
/// `out_dir/manifest.jsonl`.
PairManifest make_toy_dataset(const ToyConfig& cfg, const std::filesystem::path& out_dir);
/// Procedural clear scene: sky gradient, textured ground, colored blocks.
Image toy_scene(int height, int width, std::uint64_t seed);

struct Sample {
  Image hazy;
  Image ref;
  std::optional<Image> clear;
};

/// Images of one split, decoded once.
class Dataset {
 public:
  Dataset(const PairManifest& manifest, const std::string& split);
  explicit Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}

  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

 private:
  std::vector<Sample> samples_;
};

struct BatchOptions {
  int batch = 4;
  bool train_prep = true;
  /// Output crop; zero means the sample size.
  int crop_h = 0;
  int crop_w = 0;
  /// Train-time resize before cropping; zero means round(crop * 286 / 256).
  int resize_h = 0;
  int resize_w = 0;
};

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<Image> hazy;
  std::vector<Image> ref;
  std::vector<Image> clear;  // empty when ground truth is absent
  std::vector<std::pair<int, int>> hazy_offsets;
  std::vector<std::pair<int, int>> ref_offsets;
};

/// Batches of one epoch in seeded shuffled order (eval mode keeps index
/// order and center-crops). The last batch may be short.
std::vector<Batch> epoch_batches(const Dataset& ds, const BatchOptions& opt, std::uint64_t seed, std::size_t epoch);
std::size_t batches_per_epoch(const Dataset& ds, const BatchOptions& opt);

/// Stateless 64-bit mixing of (seed, a, b, c).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace nsd::data

#endif  // NSDEHAZE_DATA_HPP
