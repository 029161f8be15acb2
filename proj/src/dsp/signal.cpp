#include "se/dsp/signal.hpp"

#include <cmath>
#include <string>

#include "se/errors.hpp"

namespace se::dsp {

void validate(const Signal& signal) {
  if (signal.samples.empty()) throw ContractError("empty signal");
  if (signal.sample_rate <= 0) throw ContractError("sample rate must be positive");
  for (double s : signal.samples) {
    if (!std::isfinite(s)) throw ContractError("signal holds non-finite samples");
  }
}

double mean_power(const Signal& signal) {
  if (signal.samples.empty()) throw ContractError("mean_power of empty signal");
  double acc = 0.0;
  for (double s : signal.samples) acc += s * s;
  return acc / static_cast<double>(signal.samples.size());
}

Matrix frame(const Signal& signal, std::size_t length, std::size_t hop) {
  if (length == 0 || hop == 0) throw ContractError("frame: window length and hop must be positive");
  const std::size_t n = signal.samples.size();
  if (length > n) {
    throw ContractError("frame: window of " + std::to_string(length) + " exceeds signal of " + std::to_string(n));
  }
  const std::size_t count = (n - length + hop - 1) / hop + 1;
  Matrix windows = Matrix::Zero(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(length));
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * hop;
    for (std::size_t i = 0; i < length && start + i < n; ++i) {
      windows(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(i)) = signal.samples[start + i];
    }
  }
  return windows;
}

Signal unframe(const Matrix& windows, std::size_t length, int sample_rate) {
  const auto total = static_cast<std::size_t>(windows.size());
  if (length > total) throw ContractError("unframe: requested length exceeds window content");
  Signal out;
  out.sample_rate = sample_rate;
  out.samples.assign(windows.data(), windows.data() + length);
  return out;
}

}  // namespace se::dsp
