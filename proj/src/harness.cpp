#include "nsdehaze/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "config_json.hpp"
#include "nsdehaze/checkpoint.hpp"
#include "nsdehaze/error.hpp"
#include "nsdehaze/plot.hpp"

namespace nsd {

namespace detail {

void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& reference, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!reference.contains(key)) throw ArgumentError("config: unknown key '" + where + key + "'");
    if (value.is_object() && reference[key].is_object()) reject_unknown_keys(value, reference[key], where + key + ".");
  }
}

}  // namespace detail

namespace harness {

namespace fs = std::filesystem;
using nlohmann::json;
using losses::LossReport;

// ------------------------------------------------------------ config

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("TrainConfig: lr must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ArgumentError("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (epochs < 1) throw ArgumentError("TrainConfig: epochs must be >= 1");
  if (batch < 1) throw ArgumentError("TrainConfig: batch must be >= 1");
  if (max_steps < 0 || checkpoint_every < 0 || crop < 0) throw ArgumentError("TrainConfig: negative count");
  if (crop > 0 && crop % 16 != 0) throw ArgumentError("TrainConfig: crop must be a multiple of 16");
  if (feature_layers.empty()) throw ArgumentError("TrainConfig: feature_layers must not be empty");
  if (feature_width_divisor < 1) throw ArgumentError("TrainConfig: feature_width_divisor must be >= 1");
  loss_weights.validate();
  network.validate();
}

std::string TrainConfig::to_json() const { return json(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  detail::reject_unknown_keys(j, json(TrainConfig{}), "");
  TrainConfig cfg;
  try {
    cfg = j.get<TrainConfig>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --------------------------------------------------------- optimizer

double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  const std::size_t half = total / 2;
  if (step < half || total <= 1) return cfg.lr;
  return cfg.lr * static_cast<double>(total - step) / static_cast<double>(total - half);
}

void adam_update(std::vector<ag::Var>& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: moment count does not match parameters");
  ++state.steps;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (std::size_t k = 0; k < params.size(); ++k) {
    ag::Var& p = params[k];
    if (p.grad().empty()) continue;
    Tensor& value = p.mutable_value();
    const Tensor& g = p.grad();
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < value.numel(); ++i) {
      m[i] = f32(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = f32(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      value[i] = f32(value[i] - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps));
    }
  }
}

// ------------------------------------------------------------- state

TrainState TrainState::create(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.model = nets::ModelBundle::create(cfg.network);
  s.seed = cfg.seed;
  return s;
}

namespace {

json report_to_json(const LossReport& r) {
  return json::array({r.total, r.msa, r.msc, r.rec_l1, r.rec_perceptual, r.rec_ssim, r.msa_scales, r.msc_scales,
                      r.discriminator});
}

LossReport report_from_json(const json& j) {
  LossReport r;
  r.total = j.at(0);
  r.msa = j.at(1);
  r.msc = j.at(2);
  r.rec_l1 = j.at(3);
  r.rec_perceptual = j.at(4);
  r.rec_ssim = j.at(5);
  r.msa_scales = j.at(6);
  r.msc_scales = j.at(7);
  r.discriminator = j.at(8);
  return r;
}

void append_moments(std::vector<std::pair<std::string, const Tensor*>>& out, const std::string& prefix,
                    const AdamState& s) {
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.emplace_back(prefix + "/m/" + std::to_string(i), &s.m[i]);
    out.emplace_back(prefix + "/v/" + std::to_string(i), &s.v[i]);
  }
}

void read_moments(const ckpt::Contents& c, const std::string& prefix, std::size_t count, AdamState& s) {
  if (!c.contains(prefix + "/m/0")) return;
  for (std::size_t i = 0; i < count; ++i) {
    s.m.push_back(c.get(prefix + "/m/" + std::to_string(i)));
    s.v.push_back(c.get(prefix + "/v/" + std::to_string(i)));
  }
}

}  // namespace

void TrainState::save(const fs::path& dir) const {
  model.save(dir / "model");
  std::vector<std::pair<std::string, const Tensor*>> moments;
  append_moments(moments, "generator", generator_opt);
  append_moments(moments, "discriminator", discriminator_opt);
  json meta;
  meta["step"] = step;
  meta["seed"] = seed;
  meta["generator_opt_steps"] = generator_opt.steps;
  meta["discriminator_opt_steps"] = discriminator_opt.steps;
  json hist = json::array();
  for (const auto& r : history) hist.push_back(report_to_json(r));
  meta["history"] = std::move(hist);
  ckpt::write(dir / "optimizer", moments, meta.dump());
}

TrainState TrainState::load(const fs::path& dir) {
  TrainState s;
  s.model = nets::ModelBundle::load(dir / "model");
  const ckpt::Contents c = ckpt::read(dir / "optimizer");
  try {
    const json meta = json::parse(c.meta_json);
    s.step = meta.at("step");
    s.seed = meta.at("seed");
    s.generator_opt.steps = meta.at("generator_opt_steps");
    s.discriminator_opt.steps = meta.at("discriminator_opt_steps");
    for (const auto& r : meta.at("history")) s.history.push_back(report_from_json(r));
  } catch (const json::exception& e) {
    throw FormatError("train state " + dir.string() + ": " + e.what());
  }
  read_moments(c, "generator", s.model.generator_side_vars().size(), s.generator_opt);
  read_moments(c, "discriminator", s.model.discriminator.entries().size(), s.discriminator_opt);
  return s;
}

// ---------------------------------------------------------- training

nets::FeatureExtractor make_feature_extractor(const TrainConfig& cfg) {
  constexpr std::uint64_t kExtractorSeed = 16;
  const int deepest = *std::max_element(cfg.feature_layers.begin(), cfg.feature_layers.end());
  return nets::FeatureExtractor::from_environment(kExtractorSeed, cfg.feature_width_divisor, deepest);
}

data::BatchOptions batch_options(const TrainConfig& cfg, bool train_prep) {
  data::BatchOptions opt;
  opt.batch = cfg.batch;
  opt.train_prep = train_prep;
  opt.crop_h = cfg.crop;
  opt.crop_w = cfg.crop;
  return opt;
}

std::size_t total_steps(const TrainConfig& cfg, const data::Dataset& ds) {
  if (cfg.max_steps > 0) return static_cast<std::size_t>(cfg.max_steps);
  return static_cast<std::size_t>(cfg.epochs) * data::batches_per_epoch(ds, batch_options(cfg, true));
}

namespace {

void check_finite(double v, const char* component, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError("step " + std::to_string(step) + ": non-finite " + component + " loss (" +
                         std::to_string(v) + ")");
  }
}

std::vector<ag::Var> vars_of(const nets::ParamSet& p) { return p.vars(); }

}  // namespace

LossReport train_step(TrainState& state, const Tensor& hazy, const Tensor& ref, const TrainConfig& cfg,
                      const nets::FeatureExtractor& fx, double lr) {
  if (!(hazy.shape() == ref.shape())) {
    throw ShapeError("train_step: hazy " + hazy.shape().str() + " and reference " + ref.shape().str() + " differ");
  }
  nets::ModelBundle& model = state.model;
  const losses::LossWeights& w = cfg.loss_weights;

  for (auto& [name, set] : model.groups()) set->zero_grad();
  const nets::PipelineOutput out = nets::run_pipeline(model, hazy);
  const losses::VarPyramid pyr_ref = losses::pyramid(ag::constant(ref));

  // Discriminator: reference pyramid against the detached dehazed pyramid.
  const losses::VarPyramid pyr_fake = losses::pyramid(ag::detach(out.dehazed));
  const losses::ScaleTerms d = losses::msa_loss_discriminator(model.discriminator, pyr_ref, pyr_fake, w);
  check_finite(d.total.value().item(), "discriminator", state.step);
  ag::backward(d.total);
  std::vector<ag::Var> dvars = vars_of(model.discriminator);
  adam_update(dvars, state.discriminator_opt, lr, cfg);

  // Generator side, against the updated discriminator.
  const losses::VarPyramid pyr_out = losses::pyramid(out.dehazed);
  losses::GeneratorObjective g = losses::total_loss(model.discriminator, fx, pyr_out, pyr_ref, out.rehazed, out.hazy,
                                                    cfg.feature_layers, w);
  check_finite(g.report.msa, "msa", state.step);
  check_finite(g.report.msc, "msc", state.step);
  check_finite(g.report.rec_l1, "rec_l1", state.step);
  check_finite(g.report.rec_perceptual, "rec_perceptual", state.step);
  check_finite(g.report.rec_ssim, "rec_ssim", state.step);
  ag::backward(g.total);
  std::vector<ag::Var> gvars = model.generator_side_vars();
  adam_update(gvars, state.generator_opt, lr, cfg);
  for (auto& [name, set] : model.groups()) set->zero_grad();

  g.report.discriminator = d.total.value().item();
  state.history.push_back(g.report);
  ++state.step;
  return g.report;
}

std::vector<LossReport> train(TrainState& state, const TrainConfig& cfg, const data::Dataset& ds, std::size_t steps,
                              const StepCallback& on_step) {
  cfg.validate();
  const nets::FeatureExtractor fx = make_feature_extractor(cfg);
  const data::BatchOptions opt = batch_options(cfg, true);
  const std::size_t per_epoch = data::batches_per_epoch(ds, opt);
  const std::size_t total = total_steps(cfg, ds);
  const std::size_t end = std::min(total, state.step + steps);
  std::vector<LossReport> reports;
  std::vector<data::Batch> batches;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  while (state.step < end) {
    const std::size_t epoch = state.step / per_epoch;
    if (epoch != cached_epoch) {
      batches = data::epoch_batches(ds, opt, state.seed, epoch);
      cached_epoch = epoch;
    }
    const data::Batch& b = batches[state.step % per_epoch];
    const Tensor hazy = ag::from_images(b.hazy);
    const Tensor ref = ag::from_images(b.ref);
    const std::size_t step = state.step;
    reports.push_back(train_step(state, hazy, ref, cfg, fx, learning_rate(cfg, step, total)));
    if (on_step) on_step(step, reports.back());
  }
  return reports;
}

namespace {

void write_loss_plot(const std::vector<LossReport>& history, const fs::path& path) {
  std::vector<plot::Series> series(4);
  const char* labels[] = {"total", "msa", "msc", "rec"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    series[k].label = labels[k];
    series[k].color = plot::palette(k);
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    const LossReport& r = history[i];
    const double x = static_cast<double>(i);
    const double rec = r.total - r.msa - r.msc;
    const double ys[] = {r.total, r.msa, r.msc, rec};
    for (std::size_t k = 0; k < series.size(); ++k) {
      series[k].x.push_back(x);
      series[k].y.push_back(ys[k]);
    }
  }
  plot::save_line_plot(series, path);
}

}  // namespace

TrainState run_training(const TrainConfig& cfg, const data::PairManifest& manifest) {
  cfg.validate();
  const fs::path out_dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const data::Dataset train_set(manifest, "train");
  if (train_set.size() == 0) throw ArgumentError("run_training: manifest has no train records");
  {
    std::ofstream cfg_out(out_dir / "config.json", std::ios::trunc);
    cfg_out << cfg.to_json() << '\n';
  }

  TrainState state = TrainState::create(cfg);
  const std::size_t total = total_steps(cfg, train_set);
  std::ofstream csv(out_dir / "losses.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (out_dir / "losses.csv").string());
  csv << losses::csv_header() << '\n';
  train(state, cfg, train_set, total, [&](std::size_t step, const LossReport& r) {
    csv << losses::csv_row(step, r) << '\n';
    csv.flush();
    if (cfg.checkpoint_every > 0 && (step + 1) % static_cast<std::size_t>(cfg.checkpoint_every) == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06zu", step + 1);
      state.save(out_dir / "checkpoints" / name);
    }
  });
  state.save(out_dir / "final");
  write_loss_plot(state.history, out_dir / "losses.png");

  const data::Dataset test_set(manifest, "test");
  const data::Dataset& shown = test_set.size() > 0 ? test_set : train_set;
  if (test_set.size() > 0) evaluate(state.model, test_set).write_csv(out_dir / "metrics.csv");
  std::vector<imaging::Image> grid_rows;
  for (std::size_t i = 0; i < std::min<std::size_t>(shown.size(), 4); ++i) {
    std::vector<imaging::Image> row = {shown[i].hazy, dehaze_image(state.model, shown[i].hazy)};
    if (shown[i].clear) row.push_back(*shown[i].clear);
    grid_rows.push_back(imaging::hstack(row));
  }
  imaging::save_image(imaging::vstack(grid_rows), out_dir / "before_after.png");
  return state;
}

// --------------------------------------------------------- inference

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int padded(int n) { return std::max(16, (n + 15) / 16 * 16); }

}  // namespace

imaging::Image dehaze_image(const nets::ModelBundle& model, const imaging::Image& hazy, SideOutputs* side) {
  const int h = hazy.height();
  const int w = hazy.width();
  const int ph = padded(h);
  const int pw = padded(w);
  imaging::Image in(ph, pw);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      for (int c = 0; c < 3; ++c) in.at(y, x, c) = hazy.at(reflect_index(y, h), reflect_index(x, w), c);

  ag::NoGradGuard no_grad;
  const nets::PipelineOutput out = nets::run_pipeline(model, ag::from_image(in));
  const imaging::Image j = imaging::crop(ag::to_image(out.dehazed.value()), 0, 0, h, w);
  if (side != nullptr) {
    side->transmission = imaging::crop(ag::to_image(out.transmission.value()), 0, 0, h, w);
    side->airlight = imaging::crop(ag::to_image(out.airlight.a_inf.value()), 0, 0, h, w);
    const Tensor& att = out.airlight.attention.value();
    const int kh = ph / 4;
    const int kw = pw / 4;
    imaging::Map received(kh, kw);
    const std::size_t queries = static_cast<std::size_t>(att.shape().h);
    const std::size_t keys = static_cast<std::size_t>(att.shape().w);
    for (std::size_t q = 0; q < queries; ++q)
      for (std::size_t k = 0; k < keys; ++k) received.data()[k] += att[q * keys + k];
    const double peak = received.max();
    if (peak > 0.0) {
      for (double& v : received.data()) v /= peak;
    }
    const imaging::Map up = imaging::resize(received, ph, pw);
    side->attention = imaging::Map(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) side->attention.at(y, x) = up.at(y, x);
  }
  return j;
}

void dehaze(const nets::ModelBundle& model, const fs::path& in, const fs::path& out,
            const std::optional<fs::path>& side_dir) {
  const imaging::Image hazy = imaging::load_image(in);
  SideOutputs side;
  const imaging::Image j = dehaze_image(model, hazy, side_dir ? &side : nullptr);
  imaging::save_image(j, out);
  if (side_dir) {
    std::error_code ec;
    fs::create_directories(*side_dir, ec);
    if (ec) throw IoError("cannot create " + side_dir->string() + ": " + ec.message());
    const std::string stem = out.stem().string();
    imaging::save_image(side.transmission, *side_dir / (stem + "_t.png"));
    imaging::save_image(side.airlight, *side_dir / (stem + "_airlight.png"));
    imaging::save_map(side.attention, *side_dir / (stem + "_attention.png"));
  }
}

// -------------------------------------------------------- evaluation

namespace {

void accumulate(metrics::MetricReport& acc, const metrics::MetricReport& r) {
  acc.psnr += r.psnr;
  acc.ssim += r.ssim;
  acc.fog_density += r.fog_density;
  if (r.niqe) acc.niqe = acc.niqe.value_or(0.0) + *r.niqe;
}

void divide(metrics::MetricReport& acc, double n) {
  acc.psnr /= n;
  acc.ssim /= n;
  acc.fog_density /= n;
  if (acc.niqe) *acc.niqe /= n;
}

}  // namespace

EvalTable evaluate(const ImageModel& model, const data::Dataset& ds, const std::optional<metrics::NiqeModel>& niqe) {
  if (ds.size() == 0) throw ArgumentError("evaluate: empty split");
  EvalTable t;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const data::Sample& s = ds[i];
    const imaging::Image& truth = s.clear ? *s.clear : s.ref;
    EvalRow row;
    row.index = i;
    row.input = metrics::evaluate_pair(s.hazy, truth, niqe);
    row.output = metrics::evaluate_pair(model(s.hazy), truth, niqe);
    accumulate(t.mean_input, row.input);
    accumulate(t.mean_output, row.output);
    t.rows.push_back(row);
  }
  divide(t.mean_input, static_cast<double>(ds.size()));
  divide(t.mean_output, static_cast<double>(ds.size()));
  return t;
}

EvalTable evaluate(const nets::ModelBundle& model, const data::Dataset& ds,
                   const std::optional<metrics::NiqeModel>& niqe) {
  return evaluate([&](const imaging::Image& img) { return dehaze_image(model, img); }, ds, niqe);
}

void EvalTable::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,input_psnr,input_ssim,input_fog,output_psnr,output_ssim,output_fog,output_niqe\n";
  char buf[256];
  auto line = [&](const std::string& idx, const metrics::MetricReport& in, const metrics::MetricReport& o) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", idx.c_str(), in.psnr, in.ssim, in.fog_density,
                  o.psnr, o.ssim, o.fog_density);
    out << buf;
    if (o.niqe) {
      std::snprintf(buf, sizeof buf, "%.6f", *o.niqe);
      out << buf;
    }
    out << '\n';
  };
  for (const auto& r : rows) line(std::to_string(r.index), r.input, r.output);
  line("mean", mean_input, mean_output);
  if (!out) throw IoError("short write to " + path.string());
}

// ------------------------------------------------------------- study

void StudyTable::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "shift_px,rotation_deg,scale,seed,psnr,ssim,fog_density\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.3f,%.3f,%llu,%.17g,%.17g,%.17g\n", r.shift_px, r.rotation_deg, r.scale,
                  static_cast<unsigned long long>(r.seed), r.psnr, r.ssim, r.fog_density);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

void StudyTable::write_plot(const fs::path& path) const {
  std::vector<double> rotations;
  for (const auto& r : rows) {
    if (std::find(rotations.begin(), rotations.end(), r.rotation_deg) == rotations.end()) rotations.push_back(r.rotation_deg);
  }
  std::vector<plot::Series> series;
  for (std::size_t k = 0; k < rotations.size(); ++k) {
    plot::Series s;
    s.label = "rotation " + std::to_string(rotations[k]);
    s.color = plot::palette(k);
    std::vector<int> shifts;
    for (const auto& r : rows) {
      if (r.rotation_deg == rotations[k] && std::find(shifts.begin(), shifts.end(), r.shift_px) == shifts.end()) {
        shifts.push_back(r.shift_px);
      }
    }
    std::sort(shifts.begin(), shifts.end());
    for (int shift : shifts) {
      double acc = 0.0;
      int n = 0;
      for (const auto& r : rows) {
        if (r.rotation_deg == rotations[k] && r.shift_px == shift) {
          acc += r.psnr;
          ++n;
        }
      }
      s.x.push_back(shift);
      s.y.push_back(acc / n);
    }
    series.push_back(std::move(s));
  }
  plot::save_line_plot(series, path);
}

StudyTable misalignment_study(const StudyConfig& cfg) {
  if (cfg.shifts.empty() || cfg.rotations.empty() || cfg.seeds.empty()) {
    throw ArgumentError("misalignment_study: shifts, rotations and seeds must be non-empty");
  }
  const int margin = std::max(0, *std::max_element(cfg.shifts.begin(), cfg.shifts.end()));
  StudyTable table;
  for (std::uint64_t seed : cfg.seeds) {
    for (double rot : cfg.rotations) {
      for (int shift : cfg.shifts) {
        char name[96];
        std::snprintf(name, sizeof name, "seed%llu_rot%g_shift%d", static_cast<unsigned long long>(seed), rot, shift);
        const fs::path dir = cfg.work_dir / name;
        data::ToyConfig toy = cfg.toy;
        toy.shift_px = shift;
        toy.rotation_deg = rot;
        toy.margin = margin;
        toy.seed = seed;
        const data::PairManifest manifest = data::make_toy_dataset(toy, dir / "data");
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.network.seed = seed;
        tc.out_dir = (dir / "run").string();
        const TrainState state = run_training(tc, manifest);
        const data::Dataset test(manifest, "test");
        const data::Dataset& eval_set = test.size() > 0 ? test : data::Dataset(manifest, "train");
        const EvalTable et = evaluate(state.model, eval_set);
        StudyRow row;
        row.shift_px = shift;
        row.rotation_deg = rot;
        row.scale = data::misalignment_scale({shift, rot, toy.height, toy.width, seed});
        row.seed = seed;
        row.psnr = et.mean_output.psnr;
        row.ssim = et.mean_output.ssim;
        row.fog_density = et.mean_output.fog_density;
        table.rows.push_back(row);
      }
    }
  }
  std::error_code ec;
  fs::create_directories(cfg.work_dir, ec);
  table.write_csv(cfg.work_dir / "study.csv");
  table.write_plot(cfg.work_dir / "study.png");
  return table;
}

}  // namespace harness
}  // namespace nsd
