#pragma once

#include <cstddef>

#include "se/dsp/signal.hpp"

namespace se::dsp {

struct MetricConfig {
  std::size_t frame_length = 480;  // 30 ms at 16 kHz
  std::size_t hop = 120;
  double floor_db = -10.0;
  double ceiling_db = 35.0;
  std::size_t bands = 25;
  std::size_t fft_size = 512;
  double weight_exponent = 0.2;
};

/// Mean over frames of 10 log10(sum ref^2 / sum (ref - est)^2), each frame
/// clamped to [floor_db, ceiling_db]. A frame with zero error scores the
/// ceiling.
double segmental_snr(const Signal& reference, const Signal& estimate, const MetricConfig& config = {});

/// Frequency-weighted segmental SNR over mel-spaced bands of the Hann
/// windowed magnitude spectrum. Per band: 10 log10(R^2 / (R - E)^2) clamped,
/// weighted by R^weight_exponent where R and E are the reference and
/// estimate band magnitudes. Frames whose reference is silent are skipped.
double fwsnrseg(const Signal& reference, const Signal& estimate, const MetricConfig& config = {});

}  // namespace se::dsp
