#pragma once

#include <filesystem>
#include <optional>

#include "se/dsp/signal.hpp"
#include "se/errors.hpp"

namespace se::dsp {

/// The file's sample rate differs from the one the caller requires. No
/// resampling is ever done implicitly.
class SampleRateMismatch : public DataError {
 public:
  SampleRateMismatch(int expected, int actual);
  int expected;
  int actual;
};

/// Reads a 16-bit PCM mono little-endian RIFF/WAVE file, samples scaled to
/// [-1, 1). Throws DataError for anything else.
Signal read_wav(const std::filesystem::path& path, std::optional<int> expected_rate = kDefaultSampleRate);

/// Writes 16-bit PCM mono. Samples are scaled by 32768, rounded and clipped.
void write_wav(const std::filesystem::path& path, const Signal& signal);

}  // namespace se::dsp
