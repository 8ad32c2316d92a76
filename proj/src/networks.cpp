#include "nsdehaze/networks.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <random>

#include "config_json.hpp"
#include "nsdehaze/checkpoint.hpp"
#include "nsdehaze/error.hpp"

namespace nsd::nets {

using namespace nsd::ag;
namespace fs = std::filesystem;

namespace {

constexpr double kInitStd = 0.02;

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 31;
  return h;
}

Tensor normal(Shape s, double stddev, std::mt19937_64& rng) {
  Tensor t(s);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void add_conv(ParamSet& p, const std::string& name, int cout, int cin, int k, std::mt19937_64& rng,
              double stddev = kInitStd, bool bias = true) {
  p.add(name + ".weight", normal(Shape{cout, cin, k, k}, stddev, rng));
  if (bias) p.add(name + ".bias", Tensor(Shape{1, cout, 1, 1}, 0.0));
}

void add_deconv(ParamSet& p, const std::string& name, int cin, int cout, int k, std::mt19937_64& rng) {
  p.add(name + ".weight", normal(Shape{cin, cout, k, k}, kInitStd, rng));
  p.add(name + ".bias", Tensor(Shape{1, cout, 1, 1}, 0.0));
}

Var conv(const ParamSet& p, const std::string& name, const Var& x, int stride, Padding pad) {
  const Var bias = p.contains(name + ".bias") ? p.get(name + ".bias") : Var();
  return conv2d(x, p.get(name + ".weight"), bias, stride, pad);
}

Var conv(const ParamSet& p, const std::string& name, const Var& x, int stride = 1, int pad = 0) {
  return conv(p, name, x, stride, Padding::uniform(pad));
}

void require_multiple(const Shape& s, int m, const char* what) {
  if (s.h % m != 0 || s.w % m != 0 || s.h < m || s.w < m) {
    throw ShapeError(std::string(what) + ": spatial dims of " + s.str() + " must be positive multiples of " +
                     std::to_string(m));
  }
}

// ---------------------------------------------------------------- U-Net

constexpr int kUnetLevels = 4;

int unet_width(int base, int level) { return base * std::min(1 << level, 8); }

void add_block(ParamSet& p, const std::string& name, int cin, int cout, std::mt19937_64& rng) {
  add_conv(p, name + ".conv1", cout, cin, 3, rng);
  add_conv(p, name + ".conv2", cout, cout, 3, rng);
}

Var block(const ParamSet& p, const std::string& name, const Var& x) {
  Var y = relu(instance_norm(conv(p, name + ".conv1", x, 1, 1)));
  return relu(instance_norm(conv(p, name + ".conv2", y, 1, 1)));
}

int se_width(int channels) { return std::max(1, channels / 8); }

void add_se(ParamSet& p, const std::string& name, int channels, std::mt19937_64& rng) {
  add_conv(p, name + ".squeeze", se_width(channels), channels, 1, rng);
  add_conv(p, name + ".excite", channels, se_width(channels), 1, rng);
}

Var squeeze_excite(const ParamSet& p, const std::string& name, const Var& x) {
  Var s = relu(conv(p, name + ".squeeze", mean_hw(x)));
  return x * sigmoid(conv(p, name + ".excite", s));
}

void build_unet(ParamSet& p, int in_ch, int out_ch, int base, bool channel_attention, std::mt19937_64& rng) {
  int prev = in_ch;
  for (int l = 0; l <= kUnetLevels; ++l) {
    const int w = unet_width(base, l);
    add_block(p, "enc" + std::to_string(l), prev, w, rng);
    if (channel_attention) add_se(p, "se" + std::to_string(l), w, rng);
    prev = w;
  }
  for (int l = kUnetLevels - 1; l >= 0; --l) {
    const int w = unet_width(base, l);
    add_deconv(p, "up" + std::to_string(l), prev, w, 2, rng);
    add_block(p, "dec" + std::to_string(l), 2 * w, w, rng);
    prev = w;
  }
  add_conv(p, "head", out_ch, prev, 1, rng);
}

Var unet_forward(const ParamSet& p, const Var& x, bool channel_attention, const char* what) {
  require_multiple(x.shape(), 1 << kUnetLevels, what);
  std::vector<Var> skips;
  Var h = x;
  for (int l = 0; l <= kUnetLevels; ++l) {
    if (l > 0) h = max_pool(h, 2);
    h = block(p, "enc" + std::to_string(l), h);
    if (channel_attention) h = squeeze_excite(p, "se" + std::to_string(l), h);
    skips.push_back(h);
  }
  for (int l = kUnetLevels - 1; l >= 0; --l) {
    const std::string up = "up" + std::to_string(l);
    h = conv_transpose2d(h, p.get(up + ".weight"), p.get(up + ".bias"), 2, 0, 0);
    h = block(p, "dec" + std::to_string(l), concat_c(h, skips[l]));
  }
  return conv(p, "head", h);
}

// -------------------------------------------------------- discriminator

Padding same_padding(const Shape& s) {
  auto split = [](int in) {
    const int out = (in + 1) / 2;
    const int total = std::max((out - 1) * 2 + 4 - in, 0);
    return std::pair{total / 2, total - total / 2};
  };
  const auto [top, bottom] = split(s.h);
  const auto [left, right] = split(s.w);
  return {top, bottom, left, right};
}

// ----------------------------------------------------- feature extractor

constexpr std::array<int, 13> kVggWidths = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
constexpr std::array<int, 13> kVggBlock = {1, 1, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 5};

bool pool_after(int layer) { return layer == 2 || layer == 4 || layer == 7 || layer == 10; }

constexpr std::array<double, 3> kImagenetMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetStd = {0.229, 0.224, 0.225};

}  // namespace

void NetworkConfig::validate() const {
  if (base_channels < 8 || base_channels % 8 != 0) {
    throw ArgumentError("NetworkConfig: base_channels must be a positive multiple of 8");
  }
  if (generator_res_blocks < 0) throw ArgumentError("NetworkConfig: generator_res_blocks must be >= 0");
  if (discriminator_channels < 1) throw ArgumentError("NetworkConfig: discriminator_channels must be >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("NetworkConfig: alpha must be positive");
  if (!(mu >= 0.0)) throw ArgumentError("NetworkConfig: mu must be non-negative");
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw ArgumentError("NetworkConfig: top_frac must lie in (0, 1]");
  if (!(t_floor > 0.0 && t_floor < 1.0)) throw ArgumentError("NetworkConfig: t_floor must lie in (0, 1)");
  if (guided_radius < 0 || !(guided_eps > 0.0)) throw ArgumentError("NetworkConfig: invalid guided filter settings");
}

// ------------------------------------------------------------- generator

ParamSet make_generator(const NetworkConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, "generator"));
  const int f = cfg.base_channels;
  ParamSet p;
  add_conv(p, "in", f, 3, 7, rng);
  add_conv(p, "down1", 2 * f, f, 3, rng);
  add_conv(p, "down2", 4 * f, 2 * f, 3, rng);
  for (int r = 0; r < cfg.generator_res_blocks; ++r) {
    add_conv(p, "res" + std::to_string(r) + ".conv1", 4 * f, 4 * f, 3, rng);
    add_conv(p, "res" + std::to_string(r) + ".conv2", 4 * f, 4 * f, 3, rng);
  }
  add_deconv(p, "up1", 4 * f, 2 * f, 3, rng);
  add_deconv(p, "up2", 2 * f, f, 3, rng);
  // With the rough-image skip the generator starts near the identity.
  add_conv(p, "out", 3, f, 7, rng, cfg.generator_rough_skip ? 1e-3 : kInitStd);
  return p;
}

Var generator_forward(const ParamSet& p, const Var& j_rough, const NetworkConfig& cfg) {
  const Shape s = j_rough.shape();
  if (s.c != 3) throw ShapeError("generator: input must have 3 channels, got " + s.str());
  if (s.h % 4 != 0 || s.w % 4 != 0 || s.h < 8 || s.w < 8) {
    throw ShapeError("generator: spatial dims of " + s.str() + " must be multiples of 4 and at least 8");
  }
  Var x = relu(instance_norm(conv(p, "in", reflect_pad(j_rough, 3))));
  x = relu(instance_norm(conv(p, "down1", x, 2, 1)));
  x = relu(instance_norm(conv(p, "down2", x, 2, 1)));
  for (int r = 0; r < cfg.generator_res_blocks; ++r) {
    const std::string name = "res" + std::to_string(r);
    Var y = relu(instance_norm(conv(p, name + ".conv1", reflect_pad(x, 1))));
    y = instance_norm(conv(p, name + ".conv2", reflect_pad(y, 1)));
    x = x + y;
  }
  x = relu(instance_norm(conv_transpose2d(x, p.get("up1.weight"), p.get("up1.bias"), 2, 1, 1)));
  x = relu(instance_norm(conv_transpose2d(x, p.get("up2.weight"), p.get("up2.bias"), 2, 1, 1)));
  x = conv(p, "out", reflect_pad(x, 3));
  if (cfg.generator_rough_skip) {
    Tensor logit(s);
    const double* src = j_rough.value().ptr();
    for (std::size_t i = 0; i < logit.numel(); ++i) {
      const double v = std::clamp(src[i], 0.02, 0.98);
      logit[i] = std::log(v / (1.0 - v));
    }
    x = x + constant(std::move(logit));
  }
  return sigmoid(x);
}

// ---------------------------------------------------- U-shaped networks

ParamSet make_shared_encoder(const NetworkConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, "encoder"));
  ParamSet p;
  build_unet(p, 3, cfg.base_channels, cfg.base_channels, false, rng);
  return p;
}

Var shared_encode_one(const ParamSet& p, const Var& x) { return unet_forward(p, x, false, "shared_encode"); }

EncodedFeatures shared_encode(const ParamSet& p, const Var& dark, const Var& hazy) {
  if (!(dark.shape() == hazy.shape())) {
    throw ShapeError("shared_encode: dark " + dark.shape().str() + " and hazy " + hazy.shape().str() + " differ");
  }
  return {shared_encode_one(p, dark), shared_encode_one(p, hazy)};
}

ParamSet make_transmission_net(const NetworkConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, "transmission"));
  ParamSet p;
  build_unet(p, 3, 3, cfg.base_channels, true, rng);
  return p;
}

Var transmission_raw(const ParamSet& p, const Var& hazy, const NetworkConfig& cfg) {
  Var logits = unet_forward(p, hazy, true, "transmission");
  return add_scalar(scale(sigmoid(logits), 1.0 - cfg.t_floor), cfg.t_floor);
}

Var guided_filter(const Tensor& guide, const Var& src, int radius, double eps) {
  const Shape gs = guide.shape();
  const Shape ss = src.shape();
  if (gs.c != 1 || gs.n != ss.n || gs.h != ss.h || gs.w != ss.w) {
    throw ShapeError("guided_filter: guide " + gs.str() + " incompatible with source " + ss.str());
  }
  const Var g = constant(guide);
  const Var mean_i = box_mean(g, radius);
  const Var var_i = box_mean(g * g, radius) - mean_i * mean_i;
  const Var mean_p = box_mean(src, radius);
  const Var cov = box_mean(g * src, radius) - mean_i * mean_p;
  const Var a = cov / add_scalar(var_i, eps);
  const Var b = mean_p - a * mean_i;
  return box_mean(a, radius) * g + box_mean(b, radius);
}

Var transmission_forward(const ParamSet& p, const Var& hazy, const NetworkConfig& cfg) {
  const Var raw = transmission_raw(p, hazy, cfg);
  const Shape s = hazy.shape();
  Tensor gray(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    double* dst = gray.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const double* src = hazy.value().plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i] / s.c;
    }
  }
  return clamp(guided_filter(gray, raw, cfg.guided_radius, cfg.guided_eps), cfg.t_floor, 1.0);
}

// ----------------------------------------------------------------- mvSA

ParamSet make_mvsa(const NetworkConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, "mvsa"));
  const int c = cfg.base_channels;
  const int e = c / 8;
  ParamSet p;
  add_conv(p, "query", e, c, 1, rng);
  add_conv(p, "key", e, c, 1, rng);
  add_conv(p, "value", e, c, 1, rng);
  add_conv(p, "variation", 3, e, 1, rng);
  add_conv(p, "mean", 3, e, 1, rng);
  Tensor bias(Shape{1, 3, 1, 1}, cfg.airlight_bias_init);
  p.entries().back().var.mutable_value() = bias;
  return p;
}

AirlightEstimate mvsa_forward(const ParamSet& p, const Var& f_dark, const Var& f_hazy, const NetworkConfig& cfg) {
  const Shape s = f_hazy.shape();
  if (!(f_dark.shape() == s)) {
    throw ShapeError("mvsa: F_d " + f_dark.shape().str() + " and F_h " + s.str() + " differ");
  }
  if (s.c % 8 != 0) throw ShapeError("mvsa: channel count " + std::to_string(s.c) + " not divisible by 8");
  require_multiple(s, 4, "mvsa");
  AirlightEstimate out;
  const Var q = conv(p, "query", f_hazy);
  const Var k = max_pool(conv(p, "key", f_dark), 4);
  out.v_full = conv(p, "value", f_hazy);
  out.v_pooled = max_pool(out.v_full, 4);
  out.attention = attention_weights(q, k);
  out.f_att = attend(out.attention, out.v_pooled, s.h, s.w);
  out.a_var = conv(p, "variation", ag::abs(out.v_full - out.f_att));
  out.a_mean = top_fraction_mean(conv(p, "mean", out.f_att), cfg.top_frac);
  out.a_inf_raw = scale(out.a_mean, cfg.alpha) + scale(out.a_var, cfg.mu);
  out.a_inf = clamp(out.a_inf_raw, 0.0, 1.0);
  return out;
}

// -------------------------------------------------------- discriminator

ParamSet make_discriminator(const NetworkConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, "discriminator"));
  const int d = cfg.discriminator_channels;
  const std::array<int, 6> widths = {3, d, 2 * d, 4 * d, 8 * d, 1};
  ParamSet p;
  for (int l = 1; l <= 5; ++l) {
    const std::string name = "layer" + std::to_string(l);
    const bool bn = l >= 2 && l <= 4;
    add_conv(p, name, widths[l], widths[l - 1], 4, rng, kInitStd, !bn);
    if (bn) {
      p.add(name + ".bn.weight", Tensor(Shape{1, widths[l], 1, 1}, 1.0));
      p.add(name + ".bn.bias", Tensor(Shape{1, widths[l], 1, 1}, 0.0));
      p.add_buffer(name + ".bn.running_mean", Tensor(Shape{1, widths[l], 1, 1}, 0.0));
      p.add_buffer(name + ".bn.running_var", Tensor(Shape{1, widths[l], 1, 1}, 1.0));
    }
  }
  return p;
}

Var discriminator_map(ParamSet& p, const Var& img, bool training) {
  const Shape s = img.shape();
  if (s.h < kDiscriminatorMinSize || s.w < kDiscriminatorMinSize) {
    throw ShapeError("discriminator: input " + s.str() + " smaller than " + std::to_string(kDiscriminatorMinSize));
  }
  Var x = img;
  for (int l = 1; l <= 5; ++l) {
    const std::string name = "layer" + std::to_string(l);
    x = conv(p, name, x, 2, same_padding(x.shape()));
    if (l == 5) break;
    if (l >= 2) {
      x = batch_norm(x, p.get(name + ".bn.weight"), p.get(name + ".bn.bias"), p.buffer(name + ".bn.running_mean"),
                     p.buffer(name + ".bn.running_var"), training);
    }
    x = leaky_relu(x, 0.2);
  }
  return x;
}

Var discriminator_forward(ParamSet& p, const Var& img, bool training) {
  return mean_hw(discriminator_map(p, img, training));
}

// ----------------------------------------------------- feature extractor

std::string vgg_layer_name(int layer) {
  if (layer < 1 || layer > FeatureExtractor::kLayers) {
    throw ArgumentError("feature extractor: layer id " + std::to_string(layer) + " outside 1..13");
  }
  int index = 1;
  for (int l = 1; l < layer; ++l) {
    index = kVggBlock[l] == kVggBlock[l - 1] ? index + 1 : 1;
  }
  return "conv" + std::to_string(kVggBlock[layer - 1]) + "_" + std::to_string(index);
}

FeatureExtractor FeatureExtractor::random(std::uint64_t seed, int width_divisor, int max_layer) {
  if (width_divisor < 1) throw ArgumentError("feature extractor: width divisor must be >= 1");
  vgg_layer_name(max_layer);
  FeatureExtractor fx;
  fx.max_layer_ = max_layer;
  std::mt19937_64 rng(mix_seed(seed, "vgg16"));
  int prev = 3;
  for (int l = 1; l <= max_layer; ++l) {
    const int w = std::max(1, kVggWidths[l - 1] / width_divisor);
    const std::string name = vgg_layer_name(l);
    fx.params_.add(name + ".weight", normal(Shape{w, prev, 3, 3}, std::sqrt(2.0 / (prev * 9)), rng));
    fx.params_.add(name + ".bias", Tensor(Shape{1, w, 1, 1}, 0.0));
    fx.widths_.push_back(w);
    prev = w;
  }
  for (auto& e : fx.params_.entries()) ckpt::round_to_float(e.var.mutable_value());
  fx.params_.set_trainable(false);
  return fx;
}

FeatureExtractor FeatureExtractor::pretrained(const fs::path& dir, int max_layer) {
  vgg_layer_name(max_layer);
  const ckpt::Contents contents = ckpt::read(dir);
  FeatureExtractor fx;
  fx.max_layer_ = max_layer;
  fx.pretrained_ = true;
  int prev = 3;
  for (int l = 1; l <= max_layer; ++l) {
    const std::string name = vgg_layer_name(l);
    const Tensor& w = contents.get(name + ".weight");
    const Tensor& b = contents.get(name + ".bias");
    if (w.shape().c != prev || w.shape().h != 3 || w.shape().w != 3 ||
        b.numel() != static_cast<std::size_t>(w.shape().n)) {
      throw FormatError("feature extractor: unexpected shape for " + name);
    }
    fx.params_.add(name + ".weight", w);
    fx.params_.add(name + ".bias", Tensor(Shape{1, w.shape().n, 1, 1}, std::vector<double>(b.data().begin(), b.data().end())));
    fx.widths_.push_back(w.shape().n);
    prev = w.shape().n;
  }
  fx.params_.set_trainable(false);
  return fx;
}

FeatureExtractor FeatureExtractor::from_environment(std::uint64_t seed, int width_divisor, int max_layer) {
  if (const char* path = std::getenv("NSDEHAZE_WEIGHTS"); path != nullptr && *path != '\0') {
    return pretrained(path, max_layer);
  }
  return random(seed, width_divisor, max_layer);
}

int FeatureExtractor::channels(int layer) const {
  if (layer < 1 || layer > max_layer_) throw ArgumentError("feature extractor: layer " + std::to_string(layer) + " not built");
  return widths_[layer - 1];
}

std::vector<Var> FeatureExtractor::extract(const Var& x, const std::vector<int>& layers) const {
  if (x.shape().c != 3) throw ShapeError("feature extractor: input must have 3 channels");
  int deepest = 0;
  for (int l : layers) {
    if (l < 1 || l > max_layer_) throw ArgumentError("feature extractor: layer " + std::to_string(l) + " not built");
    deepest = std::max(deepest, l);
  }
  Tensor mean(Shape{1, 3, 1, 1});
  Tensor inv_std(Shape{1, 3, 1, 1});
  for (int c = 0; c < 3; ++c) {
    mean[c] = kImagenetMean[c];
    inv_std[c] = 1.0 / kImagenetStd[c];
  }
  Var h = (x - constant(mean)) * constant(inv_std);
  std::vector<Var> taps(layers.size());
  for (int l = 1; l <= deepest; ++l) {
    const std::string name = vgg_layer_name(l);
    h = relu(conv2d(h, params_.get(name + ".weight"), params_.get(name + ".bias"), 1, 1));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i] == l) taps[i] = h;
    }
    if (pool_after(l) && l < deepest) h = max_pool(h, 2);
  }
  return taps;
}

// ------------------------------------------------------------- bundle

ModelBundle ModelBundle::create(const NetworkConfig& cfg) {
  cfg.validate();
  ModelBundle m;
  m.config = cfg;
  m.generator = make_generator(cfg);
  m.encoder = make_shared_encoder(cfg);
  m.mvsa = make_mvsa(cfg);
  m.transmission = make_transmission_net(cfg);
  m.discriminator = make_discriminator(cfg);
  for (auto& [name, set] : m.groups()) {
    for (auto& e : set->entries()) ckpt::round_to_float(e.var.mutable_value());
  }
  return m;
}

ModelBundle ModelBundle::clone() const {
  ModelBundle m;
  m.config = config;
  m.generator = generator.clone();
  m.encoder = encoder.clone();
  m.mvsa = mvsa.clone();
  m.transmission = transmission.clone();
  m.discriminator = discriminator.clone();
  return m;
}

std::vector<std::pair<std::string, ParamSet*>> ModelBundle::groups() {
  return {{"generator", &generator},
          {"encoder", &encoder},
          {"mvsa", &mvsa},
          {"transmission", &transmission},
          {"discriminator", &discriminator}};
}

std::vector<std::pair<std::string, const ParamSet*>> ModelBundle::groups() const {
  return {{"generator", &generator},
          {"encoder", &encoder},
          {"mvsa", &mvsa},
          {"transmission", &transmission},
          {"discriminator", &discriminator}};
}

std::vector<Var> ModelBundle::generator_side_vars() const {
  std::vector<Var> out;
  for (const ParamSet* s : {&generator, &encoder, &mvsa, &transmission}) {
    for (const auto& e : s->entries()) out.push_back(e.var);
  }
  return out;
}

void ModelBundle::save(const fs::path& dir) const {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [group, set] : groups()) {
    for (const auto& e : set->entries()) tensors.emplace_back(group + "/" + e.name, &e.var.value());
    for (const auto& b : set->buffers()) tensors.emplace_back(group + "/" + b.name, &b.value);
  }
  nlohmann::json meta;
  meta["network"] = config;
  ckpt::write(dir, tensors, meta.dump());
}

ModelBundle ModelBundle::load(const fs::path& dir) {
  const ckpt::Contents contents = ckpt::read(dir);
  NetworkConfig cfg;
  try {
    cfg = nlohmann::json::parse(contents.meta_json).at("network").get<NetworkConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + dir.string() + " lacks a network config: " + e.what());
  }
  ModelBundle m = create(cfg);
  for (auto& [group, set] : m.groups()) {
    auto assign = [&](const std::string& name, Tensor& dst) {
      const Tensor& src = contents.get(group + "/" + name);
      if (!(src.shape() == dst.shape())) {
        throw FormatError("checkpoint: shape mismatch for " + group + "/" + name + ": " + src.shape().str() +
                          " vs " + dst.shape().str());
      }
      dst = src;
    };
    for (auto& e : set->entries()) assign(e.name, e.var.mutable_value());
    for (auto& b : set->buffers()) assign(b.name, b.value);
  }
  return m;
}

// ------------------------------------------------------------ pipeline

Var compose_haze(const Var& J, const Var& t, const Var& A) { return J * t + A * (1.0 - t); }

PipelineOutput run_pipeline(const ModelBundle& model, const Tensor& hazy) {
  const NetworkConfig& cfg = model.config;
  const Shape s = hazy.shape();
  if (s.c != 3) throw ShapeError("pipeline: hazy batch must have 3 channels, got " + s.str());
  Tensor rough(s);
  Tensor dark(s);
  for (int b = 0; b < s.n; ++b) {
    const imaging::Image img = to_image(hazy, b);
    const imaging::Image j = physics::dcp_dehaze(img, cfg.dcp);
    const imaging::Map d = physics::dark_channel(img, cfg.dcp.patch_radius).values;
    for (int c = 0; c < 3; ++c) {
      double* rp = rough.plane(b, c);
      double* dp = dark.plane(b, c);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          rp[y * s.w + x] = j.at(y, x, c);
          dp[y * s.w + x] = d.at(y, x);
        }
    }
  }
  PipelineOutput out;
  out.hazy = constant(hazy);
  out.j_rough = constant(std::move(rough));
  out.dark = constant(std::move(dark));
  out.dehazed = generator_forward(model.generator, out.j_rough, cfg);
  const EncodedFeatures f = shared_encode(model.encoder, out.dark, out.hazy);
  out.airlight = mvsa_forward(model.mvsa, f.dark, f.hazy, cfg);
  out.transmission = transmission_forward(model.transmission, out.hazy, cfg);
  out.rehazed = compose_haze(out.dehazed, out.transmission, out.airlight.a_inf);
  return out;
}

}  // namespace nsd::nets
