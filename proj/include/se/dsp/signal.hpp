#pragma once

#include <cstddef>
#include <vector>

#include "se/matrix.hpp"

namespace se::dsp {

inline constexpr int kDefaultSampleRate = 16000;

/// Mono time-domain signal.
struct Signal {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
};

/// Throws ContractError if the signal is empty or holds non-finite samples.
void validate(const Signal& signal);

/// Mean of squared samples.
double mean_power(const Signal& signal);

/// Contiguous windows of `length` samples every `hop` samples, one per row.
/// The last window is zero-padded; the count is ceil((N - length) / hop) + 1.
Matrix frame(const Signal& signal, std::size_t length, std::size_t hop);

/// Concatenates non-overlapping windows (hop == window length) and
/// truncates to `length` samples.
Signal unframe(const Matrix& windows, std::size_t length, int sample_rate = kDefaultSampleRate);

}  // namespace se::dsp
