#include "se/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include "se/cli/manifest.hpp"
#include "se/dsp/metrics.hpp"
#include "se/dsp/mix.hpp"
#include "se/dsp/stft.hpp"
#include "se/dsp/toy_corpus.hpp"
#include "se/dsp/wav.hpp"
#include "se/errors.hpp"
#include "se/flow/coupling_flow.hpp"
#include "se/flow/train.hpp"
#include "se/io/csv.hpp"
#include "se/map/flow_gauss.hpp"
#include "se/nmf/nmf.hpp"
#include "se/parallel.hpp"
#include "se/pitfall/pitfall.hpp"

namespace se::cli {

namespace fs = std::filesystem;

namespace {

std::mutex log_mutex;

void note(const std::string& message) {
  std::lock_guard lock(log_mutex);
  std::fprintf(stderr, "%s\n", message.c_str());
}

std::uint64_t mix_seeds(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string snr_tag(double snr) {
  const long rounded = std::lround(snr);
  if (static_cast<double>(rounded) == snr) return std::to_string(rounded);
  return io::format_double(snr);
}

void require(bool condition, const std::string& message) {
  if (!condition) throw UsageError(message);
}

std::vector<dsp::Signal> load_clean(const Manifest& m) {
  std::vector<dsp::Signal> out;
  std::set<fs::path> seen;
  for (const auto& e : m.entries) {
    if (seen.insert(e.clean).second) out.push_back(dsp::read_wav(e.clean));
  }
  return out;
}

std::vector<ManifestEntry> first_entries(const Manifest& m, std::size_t count) {
  std::vector<ManifestEntry> out(m.entries.begin(),
                                 m.entries.begin() + static_cast<std::ptrdiff_t>(std::min(count, m.entries.size())));
  if (out.empty()) throw ContractError("manifest has no entries");
  return out;
}

map::StopNormalization parse_normalization(const std::string& s) {
  if (s == "per-window") return map::StopNormalization::kPerWindow;
  if (s == "per-sample") return map::StopNormalization::kPerSample;
  throw UsageError("unknown stop normalization '" + s + "'");
}

map::Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam") return map::Optimizer::kAdam;
  if (s == "gd") return map::Optimizer::kGradientDescent;
  throw UsageError("unknown optimizer '" + s + "'");
}

}  // namespace

int cmd_make_toy_corpus(const ToyCorpusOptions& o) {
  dsp::ToyCorpusConfig config;
  config.duration_s = o.duration_s;
  config.voiced_rms = o.voiced_rms;
  Manifest m;
  for (std::size_t i = 0; i < o.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "toy_%04zu", i);
    ManifestEntry e;
    e.id = id;
    e.clean = o.out / "clean" / (e.id + ".wav");
    e.seed = o.seed;
    dsp::write_wav(e.clean, dsp::toy_utterance(o.seed, i, config));
    m.entries.push_back(std::move(e));
  }
  write_manifest(o.out / "manifest.csv", m);
  note("wrote " + std::to_string(o.count) + " utterances to " + o.out.string());
  return 0;
}

int cmd_mix(const MixOptions& o) {
  if (o.snrs.empty()) return 0;
  const Manifest in = read_manifest(o.manifest);
  Manifest out;
  int status = 0;
  for (std::size_t i = 0; i < in.entries.size(); ++i) {
    const auto& e = in.entries[i];
    try {
      const dsp::Signal clean = dsp::read_wav(e.clean);
      for (std::size_t k = 0; k < o.snrs.size(); ++k) {
        ManifestEntry n;
        n.id = e.id + "_snr" + snr_tag(o.snrs[k]);
        n.clean = e.clean;
        n.seed = mix_seeds(o.seed, i * o.snrs.size() + k);
        const dsp::MixResult mix = dsp::mix_at_snr(clean, dsp::NoiseKind::kWhiteGaussian, o.snrs[k], n.seed);
        n.noisy = o.out / "noisy" / (n.id + ".wav");
        n.snr_db = o.snrs[k];
        n.sigma_true = mix.sigma;
        dsp::write_wav(*n.noisy, mix.noisy);
        out.entries.push_back(std::move(n));
      }
    } catch (const std::exception& ex) {
      note("mix: " + e.id + ": " + ex.what());
      status = 1;
    }
  }
  write_manifest(o.out / "manifest.csv", out);
  return status;
}

int cmd_train_flow(const TrainFlowOptions& o) {
  const Manifest m = read_manifest(o.manifest);
  const std::vector<dsp::Signal> clean = load_clean(m);
  flow::CouplingFlowConfig fc;
  fc.blocks = o.blocks;
  fc.hidden = o.hidden;
  fc.seed = o.seed;
  const std::size_t d = fc.dim;
  require(o.hop >= 1, "--hop must be >= 1");
  std::vector<double> rows;
  for (const auto& s : clean) {
    for (std::size_t p = 0; p + d <= s.size(); p += o.hop) rows.insert(rows.end(), s.samples.begin() + p, s.samples.begin() + p + d);
  }
  if (rows.empty()) throw ContractError("train-flow: corpus has no complete windows");
  const Matrix data = Eigen::Map<const Matrix>(rows.data(), static_cast<Eigen::Index>(rows.size() / d), static_cast<Eigen::Index>(d));

  flow::TrainConfig tc;
  tc.batch_size = o.batch;
  tc.learning_rate = o.learning_rate;
  tc.max_steps = static_cast<std::int64_t>(o.steps);
  tc.seed = o.seed;
  tc.checkpoint_path = o.out / "checkpoint.bin";
  tc.checkpoint_every = static_cast<std::int64_t>(o.checkpoint_every);
  fs::create_directories(o.out);
  flow::MlTrainer trainer = o.resume ? flow::MlTrainer::resume(*o.resume, tc)
                                     : flow::MlTrainer(std::make_unique<flow::CouplingFlow>(fc), tc);
  const std::int64_t start = trainer.step();
  io::CsvWriter csv(o.out / "train_loss.csv", {"step", "loss"});
  const flow::TrainResult result = trainer.run(data, [&](std::int64_t step, double loss) {
    csv.cell(static_cast<std::size_t>(step)).cell(loss);
    csv.end_row();
    if (step % 1000 == 0) note("train-flow: step " + std::to_string(step) + " loss " + io::format_double(loss));
  });
  csv.close();
  flow::save_flow(o.out / "flow.bin", trainer.model());
  note("train-flow: steps " + std::to_string(start) + " -> " + std::to_string(result.step) + ", model in " +
       (o.out / "flow.bin").string());
  return 0;
}

int cmd_train_nmf(const TrainNmfOptions& o) {
  const Manifest m = read_manifest(o.manifest);
  const std::vector<dsp::Signal> clean = load_clean(m);
  if (clean.empty()) throw ContractError("train-nmf: empty corpus");
  const nmf::NmfFit speech = nmf::train_speech_bases(clean, o.rank, o.iters, o.seed);
  nmf::NoiseBasisConfig nc;
  nc.rank = o.rank;
  nc.iters = o.iters;
  nc.seconds_per_level = o.noise_seconds;
  nc.seed = mix_seeds(o.seed, 1);
  const nmf::NmfFit noise = nmf::train_noise_bases(nc);
  nmf::save_bases(o.out / "speech_bases.bin", speech.model.w, "speech");
  nmf::save_bases(o.out / "noise_bases.bin", noise.model.w, "noise");
  io::CsvWriter csv(o.out / "nmf_curve.csv", {"role", "iter", "divergence"});
  for (const auto& [role, fit] : {std::pair{"speech", &speech}, std::pair{"noise", &noise}}) {
    csv.cell(role).cell(std::size_t{0}).cell(fit->initial_divergence);
    csv.end_row();
    for (std::size_t k = 0; k < fit->history.size(); ++k) {
      csv.cell(role).cell(k + 1).cell(fit->history[k]);
      csv.end_row();
    }
  }
  csv.close();
  return 0;
}

int cmd_enhance(const EnhanceOptions& o) {
  static const std::set<std::string> methods{"nmf", "flow-gauss-est", "flow-gauss-opt", "noisy"};
  require(methods.count(o.method) == 1, "unknown method '" + o.method + "'");
  const bool is_flow = o.method.rfind("flow-gauss", 0) == 0;
  require(!is_flow || o.flow, o.method + " needs --flow");
  require(o.method != "nmf" || (o.speech_bases && o.noise_bases), "nmf needs --speech-bases and --noise-bases");
  require(o.method == "nmf" || (!o.speech_bases && !o.noise_bases), o.method + " does not take NMF bases");
  require(is_flow || !o.flow, o.method + " does not take a flow model");

  const Manifest m = read_manifest(o.manifest, true);
  std::unique_ptr<flow::Flow> model = is_flow ? flow::load_flow(*o.flow) : nullptr;
  nmf::PowerMatrix w_speech, w_noise;
  if (o.method == "nmf") {
    w_speech = nmf::load_bases(*o.speech_bases);
    w_noise = nmf::load_bases(*o.noise_bases);
  }
  map::FlowGaussConfig fg;
  fg.learning_rate = o.learning_rate;
  fg.max_iters = o.iters;
  fg.stop_threshold = o.stop_threshold;
  fg.stop_normalization = parse_normalization(o.stop_normalization);
  fg.optimizer = parse_optimizer(o.optimizer);
  fg.trace_every = o.trace_every;
  fg.sigma_mode = o.method == "flow-gauss-opt" ? map::SigmaMode::kOracle : map::SigmaMode::kPreset;

  struct Row {
    bool ok = false;
    double segsnr = 0, fwsnrseg = 0, noisy_segsnr = 0, noisy_fwsnrseg = 0;
    std::size_t iterations = 0;
    std::string status;
  };
  std::vector<Row> rows(m.entries.size());
  parallel_for(m.entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = m.entries[i];
    Row& row = rows[i];
    try {
      const dsp::Signal clean = dsp::read_wav(e.clean);
      const dsp::Signal noisy = dsp::read_wav(*e.noisy);
      dsp::Signal enhanced;
      if (o.method == "noisy") {
        enhanced = noisy;
      } else if (o.method == "nmf") {
        const dsp::Spectrogram spec = dsp::stft(noisy);
        enhanced = dsp::istft(nmf::enhance_nmf(spec, w_speech, w_noise, o.nmf_iters).enhanced);
      } else {
        map::FlowGaussConfig c = fg;
        if (c.sigma_mode == map::SigmaMode::kOracle) {
          if (!e.sigma_true) throw DataError("no sigma_true in manifest");
          c.sigma = *e.sigma_true;
        } else {
          if (!e.snr_db) throw DataError("no snr_db in manifest");
          const auto preset = dsp::preset_sigma(*e.snr_db);
          if (!preset) throw DataError("no preset noise variance for " + io::format_double(*e.snr_db) + " dB");
          c.sigma = *preset;
        }
        const map::EnhanceResult r = map::enhance_flow_gauss(*model, noisy, c, clean);
        map::write_trace_csv(o.out / "traces" / (e.id + ".csv"), r.trace);
        row.iterations = r.iterations;
        row.status = r.diverged ? "diverged" : r.stopped_early ? "threshold" : "max-iters";
        enhanced = r.enhanced;
      }
      dsp::write_wav(o.out / "enhanced" / (e.id + ".wav"), enhanced);
      row.segsnr = dsp::segmental_snr(clean, enhanced);
      row.fwsnrseg = dsp::fwsnrseg(clean, enhanced);
      row.noisy_segsnr = dsp::segmental_snr(clean, noisy);
      row.noisy_fwsnrseg = dsp::fwsnrseg(clean, noisy);
      if (row.status.empty()) row.status = "ok";
      row.ok = true;
    } catch (const std::exception& ex) {
      note("enhance: " + e.id + ": " + ex.what());
      row.status = "error";
    }
  });

  int status = 0;
  io::CsvWriter metrics(o.out / "metrics.csv", {"id", "snr_db", "segsnr", "fwsnrseg", "noisy_segsnr", "noisy_fwsnrseg",
                                                "iterations", "status"});
  struct Sum {
    std::size_t n = 0;
    double segsnr = 0, fwsnrseg = 0, noisy_segsnr = 0, noisy_fwsnrseg = 0;
  };
  std::map<double, Sum> by_snr;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = m.entries[i];
    const Row& r = rows[i];
    const double snr = e.snr_db.value_or(NAN);
    metrics.cell(e.id).cell(snr);
    if (r.ok) {
      metrics.cell(r.segsnr).cell(r.fwsnrseg).cell(r.noisy_segsnr).cell(r.noisy_fwsnrseg);
      Sum& s = by_snr[e.snr_db.value_or(0.0)];
      ++s.n;
      s.segsnr += r.segsnr;
      s.fwsnrseg += r.fwsnrseg;
      s.noisy_segsnr += r.noisy_segsnr;
      s.noisy_fwsnrseg += r.noisy_fwsnrseg;
    } else {
      metrics.cell("").cell("").cell("").cell("");
      status = 1;
    }
    metrics.cell(r.iterations).cell(r.status);
    metrics.end_row();
  }
  metrics.close();
  io::CsvWriter summary(o.out / "summary.csv", {"method", "snr_db", "count", "segsnr", "fwsnrseg", "noisy_segsnr",
                                                "noisy_fwsnrseg"});
  for (const auto& [snr, s] : by_snr) {
    const double n = static_cast<double>(s.n);
    summary.cell(o.method).cell(snr).cell(s.n).cell(s.segsnr / n).cell(s.fwsnrseg / n).cell(s.noisy_segsnr / n).cell(
        s.noisy_fwsnrseg / n);
    summary.end_row();
  }
  summary.close();
  return status;
}

namespace {

int diagnose_histogram(const DiagnoseOptions& o) {
  require(o.flow && o.manifest, "histogram needs --flow and --manifest");
  static const std::set<std::string> known{"clean", "noisy", "white-noise", "babble"};
  require(!o.classes.empty(), "histogram needs at least one class");
  for (const auto& c : o.classes) require(known.count(c) == 1, "unknown class '" + c + "'");
  const auto model = flow::load_flow(*o.flow);
  const Manifest m = read_manifest(*o.manifest);
  const std::vector<dsp::Signal> clean = load_clean(m);
  std::vector<pitfall::LabeledCorpus> corpora;
  for (const auto& label : o.classes) {
    pitfall::LabeledCorpus c{label, {}};
    if (label == "clean") {
      c.signals = clean;
    } else if (label == "noisy") {
      for (const auto& e : m.entries) {
        if (e.noisy) c.signals.push_back(dsp::read_wav(*e.noisy));
      }
    } else if (label == "white-noise") {
      for (std::size_t i = 0; i < clean.size(); ++i) {
        c.signals.push_back(pitfall::white_noise(clean[i].size(), dsp::mean_power(clean[i]), mix_seeds(o.seed, i)));
      }
    } else {
      for (std::size_t i = 0; i < clean.size(); ++i) c.signals.push_back(pitfall::make_babble(clean, i));
    }
    corpora.push_back(std::move(c));
  }
  const pitfall::HistogramReport report = pitfall::likelihood_histogram(*model, corpora, o.bins);
  pitfall::write_histogram_csv(o.out / "histogram.csv", report);
  io::CsvWriter csv(o.out / "histogram_summary.csv", {"label", "windows", "mean", "median"});
  for (const auto& h : report.classes) {
    csv.cell(h.label).cell(h.windows).cell(h.mean).cell(h.median);
    csv.end_row();
  }
  csv.close();
  return 0;
}

int diagnose_sweep(const DiagnoseOptions& o) {
  require(o.flow && o.manifest, "sweep needs --flow and --manifest");
  const auto model = flow::load_flow(*o.flow);
  const Manifest m = read_manifest(*o.manifest, true);
  const auto entries = first_entries(m, o.count);
  std::vector<map::SweepItem> items;
  for (const auto& e : entries) {
    if (!e.sigma_true || !e.snr_db) throw DataError("sweep: " + e.id + " lacks snr_db or sigma_true");
    items.push_back(map::SweepItem{dsp::read_wav(e.clean), dsp::read_wav(*e.noisy), *e.snr_db, *e.sigma_true});
  }
  map::FlowGaussConfig c;
  c.learning_rate = o.learning_rate;
  c.max_iters = o.iters;
  c.trace_every = o.trace_every;
  const map::SweepReport report = map::likelihood_quality_sweep(*model, items, c, o.jobs);

  io::CsvWriter curves(o.out / "sweep_curves.csv",
                       {"snr_db", "utterances", "iter", "total", "prior", "noise", "segsnr", "fwsnrseg", "dist_ref"});
  for (const auto& curve : report.curves) {
    for (const auto& r : curve.mean_trace) {
      curves.cell(curve.snr_db).cell(curve.utterances).cell(r.iter).cell(r.total).cell(r.prior).cell(r.noise);
      curves.cell(r.segsnr).cell(r.fwsnrseg).cell(r.dist_ref);
      curves.end_row();
    }
  }
  curves.close();
  io::CsvWriter peaks(o.out / "sweep_peaks.csv",
                      {"id", "snr_db", "final_iter", "segsnr_initial", "segsnr_peak", "segsnr_peak_iter", "segsnr_final",
                       "fwsnrseg_initial", "fwsnrseg_peak", "fwsnrseg_peak_iter", "fwsnrseg_final", "total_at_segsnr_peak",
                       "total_at_final"});
  for (std::size_t i = 0; i < report.utterances.size(); ++i) {
    const auto& u = report.utterances[i];
    peaks.cell(entries[i].id).cell(u.snr_db).cell(u.final_iter);
    peaks.cell(u.segsnr.initial_value).cell(u.segsnr.peak_value).cell(u.segsnr.peak_iter).cell(u.segsnr.final_value);
    peaks.cell(u.fwsnrseg.initial_value).cell(u.fwsnrseg.peak_value).cell(u.fwsnrseg.peak_iter).cell(u.fwsnrseg.final_value);
    peaks.cell(u.segsnr.total_at_peak).cell(u.segsnr.total_at_final);
    peaks.end_row();
  }
  peaks.close();
  return 0;
}

int diagnose_prior_only(const DiagnoseOptions& o) {
  require(o.flow && o.manifest, "prior-only needs --flow and --manifest");
  const auto model = flow::load_flow(*o.flow);
  const Manifest m = read_manifest(*o.manifest, true);
  const auto entries = first_entries(m, o.count);
  map::PriorOnlyConfig c;
  c.learning_rate = o.learning_rate;
  c.iters = o.iters;
  c.trace_every = o.trace_every;
  c.snapshot_iters = o.snapshots;
  std::vector<map::PriorOnlyResult> results(entries.size());
  parallel_for(entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    results[i] = map::maximize_prior_only(*model, dsp::read_wav(*e.noisy), c, dsp::read_wav(e.clean));
    map::write_trace_csv(o.out / "prior_only" / (e.id + ".csv"), results[i].trace);
    for (const auto& [iter, signal] : results[i].snapshots) {
      dsp::write_wav(o.out / "prior_only" / (e.id + "_iter" + std::to_string(iter) + ".wav"), signal);
    }
  });
  io::CsvWriter csv(o.out / "prior_only_summary.csv", {"id", "initial_power", "final_power", "ratio", "diverged"});
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& r = results[i];
    csv.cell(entries[i].id).cell(r.initial_power).cell(r.final_power).cell(r.final_power / r.initial_power);
    csv.cell(r.diverged ? "1" : "0");
    csv.end_row();
  }
  csv.close();
  return 0;
}

int diagnose_simulate_2d(const DiagnoseOptions& o) {
  pitfall::PitfallConfig c;
  c.points = o.points;
  c.blocks = o.maf_blocks;
  c.hidden = o.maf_hidden;
  c.iters = o.maf_iters;
  c.learning_rate = o.maf_learning_rate;
  c.resolution = o.resolution;
  const pitfall::PitfallResult r = pitfall::run_pitfall_sim(o.seed, c);
  io::CsvWriter loss(o.out / "loss.csv", {"step", "loss"});
  for (std::size_t k = 0; k < r.losses.size(); ++k) {
    loss.cell(k + 1).cell(r.losses[k]);
    loss.end_row();
  }
  loss.close();
  io::CsvWriter data(o.out / "data.csv", {"x", "y"});
  for (Eigen::Index k = 0; k < r.data.rows(); ++k) {
    data.cell(r.data(k, 0)).cell(r.data(k, 1));
    data.end_row();
  }
  data.close();
  if (r.diverged) {
    note("simulate-2d: training diverged; partial artifacts written");
    return 1;
  }
  pitfall::write_grid_csv(o.out / "grid.csv", r.grid);
  pitfall::write_transform_csv(o.out / "transform.csv", r.grid);
  pitfall::write_density_svg(o.out / "density.svg", r.grid, r.data);
  io::CsvWriter summary(o.out / "summary.csv", {"seed", "spurious_mass", "integral", "median_train_density",
                                                "roundtrip_error", "final_loss"});
  summary.cell(std::to_string(o.seed)).cell(r.spurious_mass).cell(r.integral).cell(r.median_train_density);
  summary.cell(r.roundtrip_error).cell(r.losses.empty() ? NAN : r.losses.back());
  summary.end_row();
  summary.close();
  return 0;
}

}  // namespace

int cmd_diagnose(const DiagnoseOptions& o) {
  if (o.kind == "histogram") return diagnose_histogram(o);
  if (o.kind == "sweep") return diagnose_sweep(o);
  if (o.kind == "prior-only") return diagnose_prior_only(o);
  if (o.kind == "simulate-2d") return diagnose_simulate_2d(o);
  throw UsageError("unknown diagnose kind '" + o.kind + "'");
}

}  // namespace se::cli
