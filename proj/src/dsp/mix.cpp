#include "se/dsp/mix.hpp"

#include <array>
#include <cmath>
#include <random>
#include <utility>

#include "se/errors.hpp"

namespace se::dsp {

MixResult mix_at_snr(const Signal& clean, NoiseKind kind, double snr_db, std::uint64_t seed) {
  validate(clean);
  if (kind != NoiseKind::kWhiteGaussian) throw ContractError("mix_at_snr: unsupported noise kind");
  if (!std::isfinite(snr_db)) throw ContractError("mix_at_snr: SNR must be finite");
  const double clean_power = mean_power(clean);
  if (clean_power <= 0.0) throw ContractError("mix_at_snr: clean signal is silent");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Signal noise;
  noise.sample_rate = clean.sample_rate;
  noise.samples.resize(clean.size());
  for (double& s : noise.samples) s = normal(rng);

  const double target = clean_power / std::pow(10.0, snr_db / 10.0);
  const double gain = std::sqrt(target / mean_power(noise));
  for (double& s : noise.samples) s *= gain;

  MixResult out;
  out.sigma = mean_power(noise);
  out.noisy.sample_rate = clean.sample_rate;
  out.noisy.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) out.noisy.samples[i] = clean.samples[i] + noise.samples[i];
  out.noise = std::move(noise);
  return out;
}

double broadband_snr(const Signal& reference, const Signal& estimate) {
  if (reference.size() != estimate.size()) throw ContractError("broadband_snr: length mismatch");
  double signal = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    signal += reference.samples[i] * reference.samples[i];
    const double e = reference.samples[i] - estimate.samples[i];
    error += e * e;
  }
  return 10.0 * std::log10(signal / error);
}

std::optional<double> preset_sigma(double snr_db) {
  static constexpr std::array<std::pair<double, double>, 4> kPreset{{{-6.0, 100.0}, {0.0, 200.0}, {6.0, 2000.0}, {9.0, 4000.0}}};
  for (const auto& [snr, sigma] : kPreset) {
    if (std::abs(snr - snr_db) < 1e-9) return sigma;
  }
  return std::nullopt;
}

}  // namespace se::dsp
