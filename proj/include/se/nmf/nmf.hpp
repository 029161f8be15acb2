#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "se/dsp/signal.hpp"
#include "se/dsp/stft.hpp"

namespace se::nmf {

/// Entries of W, H and of floored power spectra never drop below this.
inline constexpr double kFloor = 1e-10;

/// Nonnegative matrix, bins x frames for spectra.
using PowerMatrix = Eigen::MatrixXd;

struct NmfModel {
  PowerMatrix w;  // F x L bases
  PowerMatrix h;  // L x T activations
  PowerMatrix reconstruction() const { return w * h; }
};

struct NmfFit {
  NmfModel model;
  double initial_divergence = 0.0;
  double final_divergence = 0.0;
  /// Divergence after each iteration.
  std::vector<double> history;
};

/// Itakura-Saito divergence sum(v / vhat - log(v / vhat) - 1).
double is_divergence(const PowerMatrix& v, const PowerMatrix& vhat);

/// Elementwise max(v, kFloor).
PowerMatrix floored(const PowerMatrix& v);

/// IS-NMF by multiplicative updates, alternating H and W. The random
/// initialisation depends only on `seed`.
NmfFit fit_is_nmf(const PowerMatrix& v, std::size_t rank, std::size_t iters, std::uint64_t seed);

/// H for fixed bases W by H-only multiplicative updates from a flat start.
PowerMatrix infer_activations(const PowerMatrix& v, const PowerMatrix& w, std::size_t iters = 200);

/// Variance maps are frames x bins, matching Spectrogram::values.
struct SeparationResult {
  Eigen::MatrixXd sigma_x;
  Eigen::MatrixXd sigma_n;
  dsp::Spectrogram enhanced;
};

/// Applies the gain sigma_x / (sigma_x + sigma_n) to every bin of `noisy`.
dsp::Spectrogram wiener_filter(const dsp::Spectrogram& noisy, const Eigen::MatrixXd& sigma_x,
                               const Eigen::MatrixXd& sigma_n);

/// Joint activations over [W_speech | W_noise] on |Y|^2, then Wiener gain.
SeparationResult enhance_nmf(const dsp::Spectrogram& noisy, const PowerMatrix& w_speech, const PowerMatrix& w_noise,
                             std::size_t iters = 200);

/// Speech bases from the concatenated power spectrograms of `signals`.
NmfFit train_speech_bases(const std::vector<dsp::Signal>& signals, std::size_t rank, std::size_t iters,
                               std::uint64_t seed, const dsp::StftConfig& stft = {});

struct NoiseBasisConfig {
  std::size_t rank = 40;
  std::size_t iters = 200;
  /// Seconds of white noise generated per variance level.
  double seconds_per_level = 4.0;
  /// Variances are log-spaced between these bounds.
  double min_variance = 1e-5;
  double max_variance = 1e-1;
  std::size_t levels = 5;
  std::uint64_t seed = 0;
  int sample_rate = dsp::kDefaultSampleRate;
};

/// Bases fitted to white Gaussian noise at several power levels.
NmfFit train_noise_bases(const NoiseBasisConfig& config, const dsp::StftConfig& stft = {});

/// Basis files share the container format with flow checkpoints.
void save_bases(const std::filesystem::path& path, const PowerMatrix& w, const std::string& role);
PowerMatrix load_bases(const std::filesystem::path& path, std::string* role = nullptr);

}  // namespace se::nmf
