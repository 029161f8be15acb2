#pragma once

#include <cstdint>
#include <optional>

#include "se/dsp/signal.hpp"

namespace se::dsp {

enum class NoiseKind { kWhiteGaussian };

struct MixResult {
  Signal noisy;
  Signal noise;
  /// Per-sample variance of the added noise; the oracle noise variance.
  double sigma = 0.0;
};

/// Adds noise scaled so that 10 log10(P_clean / P_noise) equals `snr_db`
/// for this realisation. Same seed, same noise.
MixResult mix_at_snr(const Signal& clean, NoiseKind kind, double snr_db, std::uint64_t seed);

/// Broadband SNR in dB of `reference` against `reference - estimate`.
double broadband_snr(const Signal& reference, const Signal& estimate);

/// Preset noise variances for the -6/0/6/9 dB conditions
/// ({-6: 100, 0: 200, 6: 2000, 9: 4000}); empty for any other SNR.
std::optional<double> preset_sigma(double snr_db);

}  // namespace se::dsp
