#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "se/dsp/signal.hpp"
#include "se/flow/flow.hpp"

namespace se::map {

enum class SigmaMode {
  kOracle,  // the mixer's true noise variance
  kPreset,  // SNR-indexed preset variance
};

/// How the stop threshold is compared with the prior term.
enum class StopNormalization {
  kPerWindow,  // mean log p(x_t) over windows
  kPerSample,  // the same divided by the window dimension
};

enum class Optimizer { kAdam, kGradientDescent };

struct FlowGaussConfig {
  /// Noise variance of the Gaussian likelihood, in squared waveform units.
  double sigma = 1.0;
  SigmaMode sigma_mode = SigmaMode::kOracle;
  double learning_rate = 5e-4;
  std::size_t max_iters = 500;
  /// Stop once the normalised prior term reaches this value; disabled when empty.
  std::optional<double> stop_threshold = -7.0;
  StopNormalization stop_normalization = StopNormalization::kPerWindow;
  /// Trace every n-th iterate; the initial and final iterates are always traced.
  std::size_t trace_every = 1;
  Optimizer optimizer = Optimizer::kAdam;
};

struct ObjectiveTerms {
  double total = 0.0;
  double prior = 0.0;  // sum over windows of log p(x_t)
  double noise = 0.0;  // sum over windows of log N(y_t - x_t; 0, sigma I)
};

struct ObjectiveGradient {
  ObjectiveTerms terms;
  Matrix gradient;  // d total / d x, same shape as x
};

/// Posterior objective over non-overlapping windows, one per row of x and y.
ObjectiveTerms objective(const flow::Flow& model, const Matrix& x, const Matrix& y, double sigma);
ObjectiveGradient objective_gradient(const flow::Flow& model, const Matrix& x, const Matrix& y, double sigma);

/// Prior term alone with its gradient.
ObjectiveGradient prior_gradient(const flow::Flow& model, const Matrix& x);

struct TraceRecord {
  std::size_t iter = 0;
  double total = 0.0;
  double prior = 0.0;
  double noise = 0.0;
  // Quality against the clean reference; NaN when none was supplied.
  double segsnr = 0.0;
  double fwsnrseg = 0.0;
  double dist_ref = 0.0;
};

struct InferenceTrace {
  std::vector<TraceRecord> records;
};

struct EnhanceResult {
  dsp::Signal enhanced;
  InferenceTrace trace;
  std::size_t iterations = 0;
  bool stopped_early = false;
  /// A non-finite iterate appeared; `enhanced` is the last finite one.
  bool diverged = false;
};

/// Gradient ascent on the posterior objective starting from x = noisy.
EnhanceResult enhance_flow_gauss(const flow::Flow& model, const dsp::Signal& noisy, const FlowGaussConfig& config,
                                 const std::optional<dsp::Signal>& reference = std::nullopt);

struct PriorOnlyConfig {
  double learning_rate = 5e-4;
  std::size_t iters = 5000;
  std::size_t trace_every = 50;
  /// Iterations at which the iterate is kept; 0 is the starting signal.
  std::vector<std::size_t> snapshot_iters;
  Optimizer optimizer = Optimizer::kAdam;
};

struct PriorOnlyResult {
  InferenceTrace trace;  // noise fields are zero, total equals prior
  std::vector<std::pair<std::size_t, dsp::Signal>> snapshots;
  dsp::Signal final_signal;
  double initial_power = 0.0;
  double final_power = 0.0;
  bool diverged = false;
};

/// Ascent on log p(x) alone, starting from `noisy`.
PriorOnlyResult maximize_prior_only(const flow::Flow& model, const dsp::Signal& noisy, const PriorOnlyConfig& config,
                                    const std::optional<dsp::Signal>& reference = std::nullopt);

struct SweepItem {
  dsp::Signal clean;
  dsp::Signal noisy;
  double snr_db = 0.0;
  double sigma = 1.0;
};

/// Where a quality metric peaked along one utterance's trace.
struct PeakSummary {
  std::size_t peak_iter = 0;
  double peak_value = 0.0;
  double final_value = 0.0;
  double initial_value = 0.0;
  double total_at_peak = 0.0;
  double total_at_final = 0.0;
};

struct UtteranceSweep {
  double snr_db = 0.0;
  std::size_t final_iter = 0;
  PeakSummary segsnr;
  PeakSummary fwsnrseg;
};

struct SnrCurve {
  double snr_db = 0.0;
  std::size_t utterances = 0;
  /// Field-wise means over the utterances of this SNR.
  std::vector<TraceRecord> mean_trace;
};

struct SweepReport {
  std::vector<UtteranceSweep> utterances;
  std::vector<SnrCurve> curves;
};

/// Runs enhance_flow_gauss on every item with its own sigma and summarises
/// how likelihood and quality evolve. The stop threshold is ignored so every
/// trace has the same iterations.
SweepReport likelihood_quality_sweep(const flow::Flow& model, const std::vector<SweepItem>& corpus,
                                     const FlowGaussConfig& config, std::size_t jobs = 1);

PeakSummary summarise_peak(const InferenceTrace& trace, double TraceRecord::*metric);

/// Columns iter,total,prior,noise,segsnr,fwsnrseg,dist_ref.
void write_trace_csv(const std::filesystem::path& path, const InferenceTrace& trace);

}  // namespace se::map
