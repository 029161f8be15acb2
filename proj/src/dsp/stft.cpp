#include "se/dsp/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "se/errors.hpp"

namespace se::dsp {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
struct RealPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

const RealPlans& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, RealPlans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> real(n);
  std::vector<fftw_complex> spec(n / 2 + 1);
  RealPlans plans;
  const int size = static_cast<int>(n);
  plans.forward = fftw_plan_dft_r2c_1d(size, real.data(), spec.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.backward = fftw_plan_dft_c2r_1d(size, spec.data(), real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (plans.forward == nullptr || plans.backward == nullptr) throw NumericError("FFTW planning failed");
  return cache.emplace(n, plans).first->second;
}

}  // namespace

Eigen::VectorXd hann_window(std::size_t n) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    w(static_cast<Eigen::Index>(i)) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

void real_fft(const double* frame, std::size_t n, std::size_t fft_size, std::complex<double>* out) {
  if (n > fft_size) throw ContractError("real_fft: frame longer than FFT size");
  std::vector<double> buffer(fft_size, 0.0);
  std::copy(frame, frame + n, buffer.begin());
  fftw_execute_dft_r2c(plans_for(fft_size).forward, buffer.data(), reinterpret_cast<fftw_complex*>(out));
}

Spectrogram stft(const Signal& signal, const StftConfig& config) {
  validate(signal);
  const std::size_t n = signal.samples.size();
  const std::size_t fft = config.fft_size;
  const std::size_t hop = config.hop;
  if (fft == 0 || hop == 0 || hop > fft) throw ContractError("stft: invalid fft size / hop");
  if (n < fft) {
    throw ContractError("stft: signal of " + std::to_string(n) + " samples is shorter than one frame (" +
                        std::to_string(fft) + ")");
  }
  const std::size_t pad = fft / 2;
  const std::size_t padded = n + 2 * pad;
  const std::size_t frames = (padded - fft + hop - 1) / hop + 1;
  std::vector<double> buffer((frames - 1) * hop + fft, 0.0);
  std::copy(signal.samples.begin(), signal.samples.end(), buffer.begin() + static_cast<std::ptrdiff_t>(pad));

  const Eigen::VectorXd window = hann_window(fft);
  const std::size_t bins = fft / 2 + 1;
  Spectrogram spec;
  spec.values.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  spec.fft_size = fft;
  spec.hop = hop;
  spec.window = config.window;
  spec.signal_length = n;
  spec.sample_rate = signal.sample_rate;

  std::vector<double> windowed(fft);
  std::vector<std::complex<double>> out(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < fft; ++i) windowed[i] = buffer[t * hop + i] * window(static_cast<Eigen::Index>(i));
    real_fft(windowed.data(), fft, fft, out.data());
    for (std::size_t f = 0; f < bins; ++f) spec.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f)) = out[f];
  }
  return spec;
}

Signal istft(const Spectrogram& spec) {
  const std::size_t fft = spec.fft_size;
  const std::size_t hop = spec.hop;
  const auto frames = static_cast<std::size_t>(spec.frames());
  if (static_cast<std::size_t>(spec.bins()) != fft / 2 + 1) throw DimensionError("istft: bin count does not match fft size");
  if (frames == 0) throw ContractError("istft: empty spectrogram");
  const std::size_t pad = fft / 2;
  const std::size_t total = (frames - 1) * hop + fft;
  if (spec.signal_length + 2 * pad > total) throw ContractError("istft: signal length exceeds frame coverage");

  const Eigen::VectorXd window = hann_window(fft);
  std::vector<double> accum(total, 0.0);
  std::vector<double> weight(total, 0.0);
  std::vector<std::complex<double>> bins(fft / 2 + 1);
  std::vector<double> frame(fft);
  const fftw_plan backward = plans_for(fft).backward;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins.size(); ++f) bins[f] = spec.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f));
    fftw_execute_dft_c2r(backward, reinterpret_cast<fftw_complex*>(bins.data()), frame.data());
    for (std::size_t i = 0; i < fft; ++i) {
      const double w = window(static_cast<Eigen::Index>(i));
      accum[t * hop + i] += frame[i] / static_cast<double>(fft) * w;
      weight[t * hop + i] += w * w;
    }
  }
  Signal out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(spec.signal_length);
  for (std::size_t i = 0; i < spec.signal_length; ++i) {
    const double w = weight[pad + i];
    out.samples[i] = w > 1e-12 ? accum[pad + i] / w : 0.0;
  }
  return out;
}

Eigen::MatrixXd power_bins_by_frames(const Spectrogram& spec) {
  return spec.values.cwiseAbs2().transpose();
}

}  // namespace se::dsp
