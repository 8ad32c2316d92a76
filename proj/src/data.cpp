#include "nsdehaze/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "nsdehaze/error.hpp"

namespace nsd::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

// ---------------------------------------------------------------- synthesis

void SynthConfig::validate() const {
  for (double b : beta) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ArgumentError("SynthConfig: beta components must be positive");
  }
  for (double d : depth.data()) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ArgumentError("SynthConfig: depth must be finite and non-negative");
  }
}

SynthResult synth_hazy(const Image& clear, const SynthConfig& cfg) {
  cfg.validate();
  const int h = clear.height();
  const int w = clear.width();
  if (cfg.depth.height() != h || cfg.depth.width() != w || cfg.airlight.height() != h || cfg.airlight.width() != w) {
    throw ShapeError("synth_hazy: depth and airlight must match the " + std::to_string(h) + "x" + std::to_string(w) +
                     " clear image");
  }
  Image t(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = std::exp(-cfg.beta[c] * cfg.depth.at(y, x));
  physics::TransmissionMap tm(std::move(t), 0.0);
  Image hazy = physics::compose_haze(clear, tm, cfg.airlight);
  return {std::move(hazy), std::move(tm)};
}

// -------------------------------------------------------------- misalignment

void MisalignSpec::validate() const {
  if (shift_px < 0) throw ArgumentError("MisalignSpec: shift_px must be >= 0");
  if (!(rotation_deg >= 0.0 && rotation_deg <= 90.0)) throw ArgumentError("MisalignSpec: rotation_deg must lie in [0, 90]");
  if (crop_h < 1 || crop_w < 1) throw ArgumentError("MisalignSpec: crop size must be positive");
}

double misalignment_scale(const MisalignSpec& spec) {
  spec.validate();
  return static_cast<double>(spec.shift_px) / spec.crop_w;
}

std::pair<int, int> shift_direction(std::uint64_t seed) {
  static constexpr std::array<std::pair<int, int>, 8> kDirs = {
      {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 7);
  return kDirs[pick(rng)];
}

Image misalign_reference(const Image& ref, const MisalignSpec& spec) {
  spec.validate();
  if (spec.crop_h > ref.height() || spec.crop_w > ref.width()) {
    throw ArgumentError("misalign_reference: crop larger than the reference");
  }
  const auto [dy, dx] = shift_direction(spec.seed);
  const int top = (ref.height() - spec.crop_h) / 2 + dy * spec.shift_px;
  const int left = (ref.width() - spec.crop_w) / 2 + dx * spec.shift_px;
  if (top < 0 || left < 0 || top + spec.crop_h > ref.height() || left + spec.crop_w > ref.width()) {
    throw ArgumentError("misalign_reference: shift of " + std::to_string(spec.shift_px) + " px leaves the image");
  }
  Image out = imaging::crop(ref, top, left, spec.crop_h, spec.crop_w);
  if (spec.rotation_deg > 0.0) out = imaging::rotate(out, spec.rotation_deg);
  return out;
}

// ----------------------------------------------------------------- manifest

std::vector<PairRecord> PairManifest::split(const std::string& name) const {
  std::vector<PairRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const PairRecord& r) { return r.split == name; });
  return out;
}

void PairManifest::validate() const {
  for (const auto& r : records) {
    if (r.split != "train" && r.split != "test") throw FormatError("manifest: unknown split '" + r.split + "'");
    for (const fs::path& p : {r.hazy, r.ref}) {
      if (!fs::exists(p)) throw NotFound("manifest: missing file " + p.string());
    }
    if (r.clear && !fs::exists(*r.clear)) throw NotFound("manifest: missing file " + r.clear->string());
  }
  std::vector<fs::path> train;
  for (const auto& r : records) {
    if (r.split == "train") train.push_back(r.hazy);
  }
  std::sort(train.begin(), train.end());
  for (const auto& r : records) {
    if (r.split == "test" && std::binary_search(train.begin(), train.end(), r.hazy)) {
      throw FormatError("manifest: " + r.hazy.string() + " appears in both splits");
    }
  }
}

PairManifest PairManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("manifest: cannot open " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  PairManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PairRecord r;
      r.hazy = resolve(j.at("hazy").get<std::string>());
      r.ref = resolve(j.at("ref").get<std::string>());
      if (j.contains("clear")) r.clear = resolve(j.at("clear").get<std::string>());
      r.shift_px = j.value("shift_px", 0);
      r.rotation_deg = j.value("rotation_deg", 0.0);
      r.split = j.value("split", std::string("train"));
      m.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  m.validate();
  return m;
}

void PairManifest::save(const fs::path& path) const {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path r = p.lexically_relative(base.empty() ? fs::path(".") : base);
    return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("manifest: cannot write " + path.string());
  for (const auto& r : records) {
    json j;
    j["hazy"] = rel(r.hazy);
    j["ref"] = rel(r.ref);
    if (r.clear) j["clear"] = rel(*r.clear);
    j["shift_px"] = r.shift_px;
    j["rotation_deg"] = r.rotation_deg;
    j["split"] = r.split;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("manifest: short write to " + path.string());
}

// -------------------------------------------------------------- toy scenes

namespace {

// Bilinearly interpolated value noise on a coarse lattice.
Map value_noise(int h, int w, int cell, std::mt19937_64& rng) {
  const int gh = h / cell + 2;
  const int gw = w / cell + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (double& v : lattice) v = u(rng);
  Map m(h, w);
  for (int y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int iy = static_cast<int>(fy);
    const double ty = fy - iy;
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int ix = static_cast<int>(fx);
      const double tx = fx - ix;
      auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      m.at(y, x) = top * (1 - ty) + bot * ty;
    }
  }
  return m;
}

Map toy_depth(int h, int w, const ToyConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tilt = 0.15 * (u(rng) - 0.5);
  const Map noise = value_noise(h, w, std::max(4, h / 4), rng);
  Map d(h, w);
  const double lo = cfg.depth_range[0];
  const double hi = cfg.depth_range[1];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Far at the top, near at the bottom.
      const double ramp = 1.0 - static_cast<double>(y) / std::max(1, h - 1) + tilt * (static_cast<double>(x) / w - 0.5);
      const double v = std::clamp(0.85 * ramp + 0.15 * noise.at(y, x), 0.0, 1.0);
      d.at(y, x) = lo + (hi - lo) * v;
    }
  return d;
}

}  // namespace

Image toy_scene(int height, int width, std::uint64_t seed) {
  if (height < 4 || width < 4) throw ArgumentError("toy_scene: size must be at least 4x4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(height, width);
  const double horizon = 0.3 + 0.2 * u(rng);
  const std::array<double, 3> sky = {0.45 + 0.2 * u(rng), 0.6 + 0.2 * u(rng), 0.8 + 0.15 * u(rng)};
  const std::array<double, 3> ground = {0.15 + 0.25 * u(rng), 0.2 + 0.3 * u(rng), 0.05 + 0.15 * u(rng)};
  const Map texture = value_noise(height, width, std::max(2, height / 12), rng);
  const Map grain = value_noise(height, width, 2, rng);
  for (int y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / height;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v;
        if (fy < horizon) {
          v = sky[c] * (0.8 + 0.2 * fy / horizon);
        } else {
          v = ground[c] * (0.6 + 0.8 * texture.at(y, x));
        }
        img.at(y, x, c) = v + 0.06 * (grain.at(y, x) - 0.5);
      }
    }
  }
  std::uniform_int_distribution<int> count(4, 8);
  const int blocks = count(rng);
  for (int b = 0; b < blocks; ++b) {
    const int bh = std::max(2, static_cast<int>(height * (0.1 + 0.25 * u(rng))));
    const int bw = std::max(2, static_cast<int>(width * (0.08 + 0.2 * u(rng))));
    const int top = static_cast<int>((height - bh) * (0.2 + 0.8 * u(rng)));
    const int left = static_cast<int>((width - bw) * u(rng));
    std::array<double, 3> color{};
    for (double& c : color) c = 0.05 + 0.9 * u(rng);
    color[static_cast<std::size_t>(b % 3)] *= 0.25;  // keeps a dark channel
    for (int y = top; y < std::min(height, top + bh); ++y)
      for (int x = left; x < std::min(width, left + bw); ++x) {
        const double shade = 0.85 + 0.3 * texture.at(y, x);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c] * shade;
      }
  }
  return img.clamp();
}

PairManifest make_toy_dataset(const ToyConfig& cfg, const fs::path& out_dir) {
  if (cfg.n_pairs < 1) throw ArgumentError("make_toy_dataset: n_pairs must be >= 1");
  if (cfg.test_pairs < 0 || cfg.test_pairs > cfg.n_pairs) throw ArgumentError("make_toy_dataset: invalid test_pairs");
  if (cfg.height < 4 || cfg.width < 4) throw ArgumentError("make_toy_dataset: size must be at least 4x4");
  std::error_code ec;
  for (const char* sub : {"hazy", "ref", "clear"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("make_toy_dataset: cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  PairManifest manifest;
  const int margin = cfg.margin < 0 ? cfg.shift_px : cfg.margin;
  if (margin < cfg.shift_px) throw ArgumentError("make_toy_dataset: margin smaller than shift_px");
  for (int k = 0; k < cfg.n_pairs; ++k) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 1));
    const Image scene = toy_scene(cfg.height + 2 * margin, cfg.width + 2 * margin,
                                  derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 2));
    const Image clear = imaging::center_crop(scene, cfg.height, cfg.width);
    std::uniform_real_distribution<double> beta(cfg.beta_range[0], cfg.beta_range[1]);
    std::uniform_real_distribution<double> air(cfg.airlight_range[0], cfg.airlight_range[1]);
    SynthConfig sc;
    const double b0 = beta(rng);
    // Shorter wavelengths scatter slightly more.
    sc.beta = {b0 * 0.9, b0, b0 * 1.1};
    const double a0 = air(rng);
    const double tint = 0.03 * (std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
    sc.airlight = Image(cfg.height, cfg.width,
                        {std::clamp(a0 - tint, 0.0, 1.0), a0, std::clamp(a0 + tint, 0.0, 1.0)});
    sc.depth = toy_depth(cfg.height, cfg.width, cfg, rng);
    sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 3);
    const SynthResult synth = synth_hazy(clear, sc);
    MisalignSpec ms{cfg.shift_px, cfg.rotation_deg, cfg.height, cfg.width, derive_seed(cfg.seed, static_cast<std::uint64_t>(k), 4)};
    const Image ref = misalign_reference(scene, ms);

    char name[32];
    std::snprintf(name, sizeof name, "%04d.png", k);
    PairRecord r;
    r.hazy = out_dir / "hazy" / name;
    r.ref = out_dir / "ref" / name;
    r.clear = out_dir / "clear" / name;
    r.shift_px = cfg.shift_px;
    r.rotation_deg = cfg.rotation_deg;
    r.split = k >= cfg.n_pairs - cfg.test_pairs ? "test" : "train";
    imaging::save_image(synth.hazy, r.hazy);
    imaging::save_image(ref, r.ref);
    imaging::save_image(clear, *r.clear);
    manifest.records.push_back(std::move(r));
  }
  manifest.save(out_dir / "manifest.jsonl");
  return manifest;
}

// ------------------------------------------------------------------ batches

Dataset::Dataset(const PairManifest& manifest, const std::string& split) {
  for (const auto& r : manifest.split(split)) {
    Sample s{imaging::load_image(r.hazy), imaging::load_image(r.ref), std::nullopt};
    if (r.clear) s.clear = imaging::load_image(*r.clear);
    samples_.push_back(std::move(s));
  }
}

std::size_t batches_per_epoch(const Dataset& ds, const BatchOptions& opt) {
  if (opt.batch < 1) throw ArgumentError("batches: batch must be >= 1");
  return (ds.size() + static_cast<std::size_t>(opt.batch) - 1) / static_cast<std::size_t>(opt.batch);
}

std::vector<Batch> epoch_batches(const Dataset& ds, const BatchOptions& opt, std::uint64_t seed, std::size_t epoch) {
  if (ds.size() == 0) throw ArgumentError("batches: empty dataset");
  const std::size_t nb = batches_per_epoch(ds, opt);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opt.train_prep) {
    std::mt19937_64 rng(derive_seed(seed, epoch, 0x5eed));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out(nb);
  for (std::size_t i = 0; i < order.size(); ++i) {
    Batch& b = out[i / static_cast<std::size_t>(opt.batch)];
    const std::size_t idx = order[i];
    const Sample& s = ds[idx];
    const int ch = opt.crop_h > 0 ? opt.crop_h : s.hazy.height();
    const int cw = opt.crop_w > 0 ? opt.crop_w : s.hazy.width();
    b.indices.push_back(idx);
    if (opt.train_prep) {
      const int rh = opt.resize_h > 0 ? opt.resize_h : static_cast<int>(std::lround(ch * 286.0 / 256.0));
      const int rw = opt.resize_w > 0 ? opt.resize_w : static_cast<int>(std::lround(cw * 286.0 / 256.0));
      const Image hz = imaging::resize(s.hazy, rh, rw);
      const Image rf = imaging::resize(s.ref, rh, rw);
      auto hc = imaging::random_crop(hz, ch, cw, derive_seed(seed, epoch, idx, 1));
      auto rc = imaging::random_crop(rf, ch, cw, derive_seed(seed, epoch, idx, 2));
      if (s.clear) {
        b.clear.push_back(imaging::crop(imaging::resize(*s.clear, rh, rw), hc.offset.first, hc.offset.second, ch, cw));
      }
      b.hazy.push_back(std::move(hc.image));
      b.ref.push_back(std::move(rc.image));
      b.hazy_offsets.push_back(hc.offset);
      b.ref_offsets.push_back(rc.offset);
    } else {
      b.hazy.push_back(imaging::center_crop(s.hazy, ch, cw));
      b.ref.push_back(imaging::center_crop(s.ref, ch, cw));
      if (s.clear) b.clear.push_back(imaging::center_crop(*s.clear, ch, cw));
      const std::pair<int, int> off{(s.hazy.height() - ch) / 2, (s.hazy.width() - cw) / 2};
      b.hazy_offsets.push_back(off);
      b.ref_offsets.push_back(off);
    }
  }
  for (Batch& b : out) {
    if (b.clear.size() != b.hazy.size()) b.clear.clear();
  }
  return out;
}

}  // namespace nsd::data
