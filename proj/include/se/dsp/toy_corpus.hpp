#pragma once

#include <cstdint>

#include "se/dsp/signal.hpp"

namespace se::dsp {

/// Synthetic speech-like material: voiced "syllables" built from harmonic
/// complexes with gliding pitch, a formant-like spectral bump and smooth
/// amplitude envelopes, separated by near-silent gaps.
struct ToyCorpusConfig {
  double duration_s = 0.5;
  int sample_rate = kDefaultSampleRate;
  /// RMS of the voiced portions.
  double voiced_rms = 0.0125;
  /// Standard deviation of the dither filling the gaps.
  double dither = 7.5e-4;
  /// Breath noise under the voiced envelope, relative to voiced_rms.
  double aspiration = 0.1;
  double min_f0 = 100.0;
  double max_f0 = 240.0;
  double max_harmonic_hz = 4000.0;
};

/// One utterance; identical (seed, index) pairs give identical samples.
Signal toy_utterance(std::uint64_t seed, std::uint64_t index, const ToyCorpusConfig& config = {});

}  // namespace se::dsp
