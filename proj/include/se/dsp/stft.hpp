#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstddef>

#include "se/dsp/signal.hpp"

namespace se::dsp {

enum class WindowKind { kHann };

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 128;
  WindowKind window = WindowKind::kHann;
};

using ComplexMatrix = Eigen::MatrixXcd;

/// Complex STFT, frames x bins with bins = fft_size / 2 + 1. The signal is
/// zero-padded by fft_size / 2 on both sides so every sample is covered by
/// full-weight frames.
struct Spectrogram {
  ComplexMatrix values;
  std::size_t fft_size = 512;
  std::size_t hop = 128;
  WindowKind window = WindowKind::kHann;
  std::size_t signal_length = 0;
  int sample_rate = kDefaultSampleRate;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bins() const { return values.cols(); }
};

/// Periodic Hann window of length n.
Eigen::VectorXd hann_window(std::size_t n);

Spectrogram stft(const Signal& signal, const StftConfig& config = {});
/// Weighted overlap-add inverse; exact for any spectrogram produced by stft.
Signal istft(const Spectrogram& spec);

/// |values|^2 transposed to bins x frames, the layout NMF works on.
Eigen::MatrixXd power_bins_by_frames(const Spectrogram& spec);

/// Real FFT of `frame` (length n, zero-padded to fft_size) into fft_size/2+1 bins.
void real_fft(const double* frame, std::size_t n, std::size_t fft_size, std::complex<double>* out);

}  // namespace se::dsp
