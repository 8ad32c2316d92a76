// nsdehaze command line: synth, train, eval, dehaze, study.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsdehaze/data.hpp"
#include "nsdehaze/error.hpp"
#include "nsdehaze/harness.hpp"
#include "nsdehaze/metrics.hpp"

namespace fs = std::filesystem;
using namespace nsd;

namespace {

// Accepts a bundle directory or a training-state directory holding model/.
nets::ModelBundle load_model(const fs::path& dir) {
  if (fs::exists(dir / "model" / "manifest.json")) return nets::ModelBundle::load(dir / "model");
  return nets::ModelBundle::load(dir);
}

harness::TrainConfig load_config(const std::optional<fs::path>& path) {
  if (!path) return {};
  return harness::TrainConfig::load(*path);
}

void print_report(const char* label, const metrics::MetricReport& r) {
  std::printf("%-8s psnr %.3f  ssim %.4f  fog %.4f", label, r.psnr, r.ssim, r.fog_density);
  if (r.niqe) std::printf("  niqe %.3f", *r.niqe);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-aligned supervision dehazing toolkit"};
  app.require_subcommand(1);

  data::ToyConfig toy;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic non-aligned toy dataset");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("-n,--pairs", toy.n_pairs, "Number of pairs");
  synth->add_option("--height", toy.height, "Image height");
  synth->add_option("--width", toy.width, "Image width");
  synth->add_option("--shift", toy.shift_px, "Reference shift in pixels");
  synth->add_option("--rotation", toy.rotation_deg, "Reference rotation in degrees");
  synth->add_option("--test-pairs", toy.test_pairs, "Pairs assigned to the test split");
  synth->add_option("--seed", toy.seed, "Dataset seed");

  std::optional<fs::path> train_config;
  fs::path train_manifest;
  std::optional<std::string> train_out;
  std::optional<int> train_steps;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("-c,--config", train_config, "TrainConfig JSON");
  train->add_option("-m,--manifest", train_manifest, "Dataset manifest (JSON lines)")->required();
  train->add_option("-o,--out", train_out, "Output directory (overrides out_dir)");
  train->add_option("--steps", train_steps, "Step budget (overrides max_steps)");

  fs::path eval_model;
  fs::path eval_manifest;
  std::string eval_split = "test";
  std::optional<fs::path> eval_csv;
  std::optional<fs::path> eval_niqe;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a manifest split");
  eval->add_option("--model", eval_model, "Model or training-state directory")->required();
  eval->add_option("-m,--manifest", eval_manifest, "Dataset manifest")->required();
  eval->add_option("--split", eval_split, "Split name");
  eval->add_option("-o,--out", eval_csv, "metrics.csv path");
  eval->add_option("--niqe", eval_niqe, "NIQE model file");

  fs::path dh_model;
  fs::path dh_in;
  fs::path dh_out;
  std::optional<fs::path> dh_side;
  auto* dh = app.add_subcommand("dehaze", "Dehaze one image");
  dh->add_option("--model", dh_model, "Model or training-state directory")->required();
  dh->add_option("-i,--in", dh_in, "Input image (PNG or JPEG)")->required();
  dh->add_option("-o,--out", dh_out, "Output PNG")->required();
  dh->add_option("--side", dh_side, "Directory for t, airlight and attention maps");

  std::optional<fs::path> study_config;
  harness::StudyConfig study;
  auto* st = app.add_subcommand("study", "Misalignment study over shifts and rotations");
  st->add_option("-c,--config", study_config, "TrainConfig JSON");
  st->add_option("--shifts", study.shifts, "Shift list in pixels")->delimiter(',');
  st->add_option("--rotations", study.rotations, "Rotation list in degrees")->delimiter(',');
  st->add_option("--seeds", study.seeds, "Seed list")->delimiter(',');
  st->add_option("-o,--out", study.work_dir, "Work directory");
  st->add_option("-n,--pairs", study.toy.n_pairs, "Pairs per dataset");
  st->add_option("--test-pairs", study.toy.test_pairs, "Held-out pairs per dataset");
  st->add_option("--size", study.toy.height, "Square image side");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const data::PairManifest m = data::make_toy_dataset(toy, synth_out);
      std::printf("wrote %zu pairs to %s\n", m.records.size(), (synth_out / "manifest.jsonl").c_str());
    } else if (*train) {
      harness::TrainConfig cfg = load_config(train_config);
      if (train_out) cfg.out_dir = *train_out;
      if (train_steps) cfg.max_steps = *train_steps;
      cfg.validate();
      const harness::TrainState s = harness::run_training(cfg, data::PairManifest::load(train_manifest));
      const auto& last = s.history.back();
      std::printf("trained %zu steps, final total %.6f, outputs in %s\n", s.step, last.total, cfg.out_dir.c_str());
    } else if (*eval) {
      const nets::ModelBundle model = load_model(eval_model);
      const data::Dataset ds(data::PairManifest::load(eval_manifest), eval_split);
      std::optional<metrics::NiqeModel> niqe;
      if (eval_niqe) niqe = metrics::NiqeModel::load(*eval_niqe);
      const harness::EvalTable t = harness::evaluate(model, ds, niqe);
      if (eval_csv) t.write_csv(*eval_csv);
      print_report("input", t.mean_input);
      print_report("output", t.mean_output);
    } else if (*dh) {
      harness::dehaze(load_model(dh_model), dh_in, dh_out, dh_side);
      std::printf("wrote %s\n", dh_out.c_str());
    } else if (*st) {
      study.train = load_config(study_config);
      study.toy.width = study.toy.height;
      const harness::StudyTable t = harness::misalignment_study(study);
      for (const auto& r : t.rows) {
        std::printf("shift %4d rot %6.2f seed %llu scale %.3f  psnr %.3f ssim %.4f fog %.4f\n", r.shift_px,
                    r.rotation_deg, static_cast<unsigned long long>(r.seed), r.scale, r.psnr, r.ssim, r.fog_density);
      }
    }
  } catch (const nsd::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
