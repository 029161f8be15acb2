#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "se/cli/commands.hpp"
#include "se/errors.hpp"

namespace {

constexpr const char* kSnapshotName = "resolved_config.ini";

// Only the selected subcommand is recorded, with unset options left out, so
// the file replays as `se --config <file>`.
void write_snapshot(const CLI::App& sub, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  std::istringstream lines(sub.config_to_str(true, false));
  std::string text = "[" + sub.get_name() + "]\n";
  for (std::string line; std::getline(lines, line);) {
    if (line.empty() || line.ends_with("=\"\"")) continue;
    text += line + "\n";
  }
  std::ofstream file(out / kSnapshotName, std::ios::binary | std::ios::trunc);
  file << text;
  if (!file) throw se::DataError("cannot write " + (out / kSnapshotName).string());
}

}  // namespace

int main(int argc, char** argv) {
  using namespace se::cli;
  CLI::App app{"Speech enhancement with flow and NMF speech priors"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "Flat sectioned settings file; command-line flags win");
  app.require_subcommand(1, 1);

  ToyCorpusOptions toy;
  auto* toy_cmd = app.add_subcommand("make-toy-corpus", "Write synthetic utterances and a manifest")->configurable();
  toy_cmd->add_option("--out", toy.out, "Output directory")->required();
  toy_cmd->add_option("--count", toy.count, "Number of utterances")->capture_default_str();
  toy_cmd->add_option("--duration", toy.duration_s, "Seconds per utterance")->capture_default_str();
  toy_cmd->add_option("--voiced-rms", toy.voiced_rms, "RMS level of voiced segments")->capture_default_str();
  toy_cmd->add_option("--seed", toy.seed, "Corpus seed")->capture_default_str();

  MixOptions mix;
  auto* mix_cmd = app.add_subcommand("mix", "Add white noise at the given SNRs")->configurable();
  mix_cmd->add_option("--manifest", mix.manifest, "Clean manifest")->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--out", mix.out, "Output directory")->required();
  mix_cmd->add_option("--snr", mix.snrs, "SNRs in dB, comma separated")->delimiter(',')->capture_default_str();
  mix_cmd->add_option("--seed", mix.seed, "Noise seed")->capture_default_str();

  TrainFlowOptions tf;
  auto* tf_cmd = app.add_subcommand("train-flow", "Train the coupling flow by maximum likelihood")->configurable();
  tf_cmd->add_option("--manifest", tf.manifest, "Manifest of clean training audio")->required()->check(CLI::ExistingFile);
  tf_cmd->add_option("--out", tf.out, "Output directory")->required();
  tf_cmd->add_option("--steps", tf.steps, "Total optimizer steps")->capture_default_str();
  tf_cmd->add_option("--batch", tf.batch, "Windows per batch")->capture_default_str();
  tf_cmd->add_option("--lr", tf.learning_rate, "Adam learning rate")->capture_default_str();
  tf_cmd->add_option("--hop", tf.hop, "Hop between training windows")->capture_default_str();
  tf_cmd->add_option("--blocks", tf.blocks, "Flow blocks")->capture_default_str();
  tf_cmd->add_option("--hidden", tf.hidden, "Conditioner hidden width")->capture_default_str();
  tf_cmd->add_option("--checkpoint-every", tf.checkpoint_every, "Steps between checkpoints")->capture_default_str();
  tf_cmd->add_option("--seed", tf.seed, "Initialisation and batch seed")->capture_default_str();
  tf_cmd->add_option("--resume", tf.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  TrainNmfOptions tn;
  auto* tn_cmd = app.add_subcommand("train-nmf", "Fit speech and white-noise NMF bases")->configurable();
  tn_cmd->add_option("--manifest", tn.manifest, "Manifest of clean training audio")->required()->check(CLI::ExistingFile);
  tn_cmd->add_option("--out", tn.out, "Output directory")->required();
  tn_cmd->add_option("--rank", tn.rank, "Bases per source")->capture_default_str();
  tn_cmd->add_option("--iters", tn.iters, "Multiplicative update iterations")->capture_default_str();
  tn_cmd->add_option("--noise-seconds", tn.noise_seconds, "Seconds of noise per power level")->capture_default_str();
  tn_cmd->add_option("--seed", tn.seed, "Initialisation seed")->capture_default_str();

  EnhanceOptions en;
  bool no_stop = false;
  double stop_threshold = *en.stop_threshold;
  auto* en_cmd = app.add_subcommand("enhance", "Enhance the noisy files of a manifest")->configurable();
  en_cmd->add_option("--method", en.method, "nmf, flow-gauss-est, flow-gauss-opt or noisy")
      ->required()
      ->check(CLI::IsMember({"nmf", "flow-gauss-est", "flow-gauss-opt", "noisy"}));
  en_cmd->add_option("--manifest", en.manifest, "Manifest with noisy entries")->required()->check(CLI::ExistingFile);
  en_cmd->add_option("--out", en.out, "Output directory")->required();
  en_cmd->add_option("--flow", en.flow, "Flow model file")->check(CLI::ExistingFile);
  en_cmd->add_option("--speech-bases", en.speech_bases, "Speech NMF bases")->check(CLI::ExistingFile);
  en_cmd->add_option("--noise-bases", en.noise_bases, "Noise NMF bases")->check(CLI::ExistingFile);
  en_cmd->add_option("--iters", en.iters, "Maximum ascent iterations")->capture_default_str();
  en_cmd->add_option("--lr", en.learning_rate, "Ascent learning rate")->capture_default_str();
  en_cmd->add_option("--stop-threshold", stop_threshold, "Prior log-likelihood stop level")->capture_default_str();
  en_cmd->add_flag("--no-stop", no_stop, "Disable the likelihood stop");
  en_cmd->add_option("--stop-normalization", en.stop_normalization, "per-window or per-sample")
      ->check(CLI::IsMember({"per-window", "per-sample"}))
      ->capture_default_str();
  en_cmd->add_option("--optimizer", en.optimizer, "adam or gd")->check(CLI::IsMember({"adam", "gd"}))->capture_default_str();
  en_cmd->add_option("--trace-every", en.trace_every, "Iterations between trace records")->capture_default_str();
  en_cmd->add_option("--nmf-iters", en.nmf_iters, "Activation updates for nmf")->capture_default_str();
  en_cmd->add_option("--jobs", en.jobs, "Parallel utterances")->capture_default_str();

  DiagnoseOptions dg;
  auto* dg_cmd = app.add_subcommand("diagnose", "Likelihood pitfall experiments")->configurable();
  dg_cmd->add_option("--kind", dg.kind, "histogram, sweep, prior-only or simulate-2d")
      ->required()
      ->check(CLI::IsMember({"histogram", "sweep", "prior-only", "simulate-2d"}));
  dg_cmd->add_option("--out", dg.out, "Output directory")->required();
  dg_cmd->add_option("--flow", dg.flow, "Flow model file")->check(CLI::ExistingFile);
  dg_cmd->add_option("--manifest", dg.manifest, "Manifest")->check(CLI::ExistingFile);
  dg_cmd->add_option("--count", dg.count, "Utterances for sweep and prior-only")->capture_default_str();
  dg_cmd->add_option("--classes", dg.classes, "Histogram classes")->delimiter(',')->capture_default_str();
  dg_cmd->add_option("--bins", dg.bins, "Histogram bins")->capture_default_str();
  dg_cmd->add_option("--iters", dg.iters, "Ascent iterations")->capture_default_str();
  dg_cmd->add_option("--lr", dg.learning_rate, "Ascent learning rate")->capture_default_str();
  dg_cmd->add_option("--trace-every", dg.trace_every, "Iterations between trace records")->capture_default_str();
  dg_cmd->add_option("--snapshots", dg.snapshots, "Prior-only snapshot iterations")->delimiter(',')->capture_default_str();
  dg_cmd->add_option("--seed", dg.seed, "Seed")->capture_default_str();
  dg_cmd->add_option("--points", dg.points, "simulate-2d sample count")->capture_default_str();
  dg_cmd->add_option("--maf-blocks", dg.maf_blocks, "simulate-2d MAF blocks")->capture_default_str();
  dg_cmd->add_option("--maf-hidden", dg.maf_hidden, "simulate-2d MADE width")->capture_default_str();
  dg_cmd->add_option("--maf-iters", dg.maf_iters, "simulate-2d training iterations")->capture_default_str();
  dg_cmd->add_option("--maf-lr", dg.maf_learning_rate, "simulate-2d learning rate")->capture_default_str();
  dg_cmd->add_option("--resolution", dg.resolution, "simulate-2d grid cells per axis")->capture_default_str();
  dg_cmd->add_option("--jobs", dg.jobs, "Parallel utterances")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*toy_cmd) {
      write_snapshot(*toy_cmd, toy.out);
      return cmd_make_toy_corpus(toy);
    }
    if (*mix_cmd) {
      write_snapshot(*mix_cmd, mix.out);
      return cmd_mix(mix);
    }
    if (*tf_cmd) {
      write_snapshot(*tf_cmd, tf.out);
      return cmd_train_flow(tf);
    }
    if (*tn_cmd) {
      write_snapshot(*tn_cmd, tn.out);
      return cmd_train_nmf(tn);
    }
    if (*en_cmd) {
      en.stop_threshold = no_stop ? std::nullopt : std::optional<double>(stop_threshold);
      write_snapshot(*en_cmd, en.out);
      return cmd_enhance(en);
    }
    if (*dg_cmd) {
      write_snapshot(*dg_cmd, dg.out);
      return cmd_diagnose(dg);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
