#include "se/dsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "se/dsp/stft.hpp"
#include "se/errors.hpp"

namespace se::dsp {

namespace {

void check_pair(const Signal& reference, const Signal& estimate, const char* who) {
  if (reference.size() != estimate.size()) {
    throw ContractError(std::string(who) + ": reference has " + std::to_string(reference.size()) +
                        " samples, estimate " + std::to_string(estimate.size()));
  }
  if (reference.samples.empty()) throw ContractError(std::string(who) + ": empty signals");
}

std::size_t frame_count(std::size_t n, const MetricConfig& config) {
  if (n <= config.frame_length) return 1;
  return (n - config.frame_length + config.hop - 1) / config.hop + 1;
}

// Copies frame `t` (zero-padded past the end) into `out`.
void copy_frame(const Signal& s, std::size_t t, const MetricConfig& config, std::vector<double>& out) {
  out.assign(config.frame_length, 0.0);
  const std::size_t start = t * config.hop;
  for (std::size_t i = 0; i < config.frame_length && start + i < s.size(); ++i) out[i] = s.samples[start + i];
}

double clamp_db(double ratio, const MetricConfig& config) {
  if (!(ratio > 0.0)) return config.floor_db;
  if (std::isinf(ratio)) return config.ceiling_db;
  return std::clamp(10.0 * std::log10(ratio), config.floor_db, config.ceiling_db);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// bands x bins triangular filters, centres equally spaced in mel.
std::vector<std::vector<double>> mel_filters(std::size_t bands, std::size_t fft_size, int sample_rate) {
  const std::size_t bins = fft_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double top = hz_to_mel(nyquist);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  std::vector<std::vector<double>> filters(bands, std::vector<double>(bins, 0.0));
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = edges[b];
    const double mid = edges[b + 1];
    const double hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      if (f > lo && f <= mid) {
        filters[b][k] = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        filters[b][k] = (hi - f) / (hi - mid);
      }
    }
  }
  return filters;
}

}  // namespace

double segmental_snr(const Signal& reference, const Signal& estimate, const MetricConfig& config) {
  check_pair(reference, estimate, "segmental_snr");
  const std::size_t frames = frame_count(reference.size(), config);
  std::vector<double> ref;
  std::vector<double> est;
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    copy_frame(reference, t, config, ref);
    copy_frame(estimate, t, config, est);
    double signal = 0.0;
    double error = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      signal += ref[i] * ref[i];
      error += (ref[i] - est[i]) * (ref[i] - est[i]);
    }
    total += error == 0.0 ? config.ceiling_db : clamp_db(signal / error, config);
  }
  return total / static_cast<double>(frames);
}

double fwsnrseg(const Signal& reference, const Signal& estimate, const MetricConfig& config) {
  check_pair(reference, estimate, "fwsnrseg");
  if (config.frame_length > config.fft_size) throw ContractError("fwsnrseg: frame longer than FFT");
  const auto filters = mel_filters(config.bands, config.fft_size, reference.sample_rate);
  const Eigen::VectorXd window = hann_window(config.frame_length);
  const std::size_t bins = config.fft_size / 2 + 1;
  const std::size_t frames = frame_count(reference.size(), config);

  std::vector<double> ref;
  std::vector<double> est;
  std::vector<std::complex<double>> ref_spec(bins);
  std::vector<std::complex<double>> est_spec(bins);
  std::vector<double> ref_mag(bins);
  std::vector<double> est_mag(bins);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    copy_frame(reference, t, config, ref);
    copy_frame(estimate, t, config, est);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] *= window(static_cast<Eigen::Index>(i));
      est[i] *= window(static_cast<Eigen::Index>(i));
    }
    real_fft(ref.data(), ref.size(), config.fft_size, ref_spec.data());
    real_fft(est.data(), est.size(), config.fft_size, est_spec.data());
    for (std::size_t k = 0; k < bins; ++k) {
      ref_mag[k] = std::abs(ref_spec[k]);
      est_mag[k] = std::abs(est_spec[k]);
    }
    double weighted = 0.0;
    double weight_sum = 0.0;
    for (const auto& filter : filters) {
      double r = 0.0;
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        r += filter[k] * ref_mag[k];
        e += filter[k] * est_mag[k];
      }
      const double w = std::pow(r, config.weight_exponent);
      const double diff = (r - e) * (r - e);
      const double snr = diff == 0.0 ? config.ceiling_db : clamp_db(r * r / diff, config);
      weighted += w * snr;
      weight_sum += w;
    }
    if (weight_sum > 0.0) {
      total += weighted / weight_sum;
      ++counted;
    }
  }
  return counted == 0 ? config.floor_db : total / static_cast<double>(counted);
}

}  // namespace se::dsp
