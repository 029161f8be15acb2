#include "se/dsp/toy_corpus.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "se/errors.hpp"

namespace se::dsp {

Signal toy_utterance(std::uint64_t seed, std::uint64_t index, const ToyCorpusConfig& config) {
  if (!(config.duration_s > 0.0) || config.sample_rate <= 0) throw ContractError("toy corpus: bad duration or rate");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double fs = config.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(config.duration_s * fs));
  Signal out;
  out.sample_rate = config.sample_rate;
  out.samples.assign(n, 0.0);
  std::vector<double> envelope_at(n, 0.0);
  std::vector<bool> voiced(n, false);

  std::size_t pos = static_cast<std::size_t>(uniform(0.02, 0.08) * fs);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(0.08, 0.22) * fs);
    const std::size_t end = std::min(n, pos + len);
    const double f_start = uniform(config.min_f0, config.max_f0);
    const double f_end = f_start * uniform(0.85, 1.15);
    const double formant = uniform(500.0, 2500.0);
    const double bandwidth = uniform(300.0, 900.0);
    const double level = uniform(0.5, 1.0);
    const auto harmonics = static_cast<std::size_t>(config.max_harmonic_hz / std::max(f_start, f_end));
    std::vector<double> phase(harmonics);
    for (double& p : phase) p = uniform(0.0, 2.0 * std::numbers::pi);

    double theta = 0.0;
    for (std::size_t i = pos; i < end; ++i) {
      const double u = static_cast<double>(i - pos) / static_cast<double>(len);
      const double f0 = f_start + (f_end - f_start) * u;
      theta += 2.0 * std::numbers::pi * f0 / fs;
      const double envelope = level * std::pow(std::sin(std::numbers::pi * u), 2.0);
      double v = 0.0;
      for (std::size_t k = 1; k <= harmonics; ++k) {
        const double fk = f0 * static_cast<double>(k);
        const double bump = std::exp(-0.5 * std::pow((fk - formant) / bandwidth, 2.0));
        const double amp = (1.0 / static_cast<double>(k) + 2.0 * bump) / 3.0;
        v += amp * std::sin(static_cast<double>(k) * theta + phase[k - 1]);
      }
      out.samples[i] = envelope * v;
      envelope_at[i] = envelope;
      voiced[i] = true;
    }
    pos = end + static_cast<std::size_t>(uniform(0.04, 0.12) * fs);
  }

  double energy = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (voiced[i]) {
      energy += out.samples[i] * out.samples[i];
      ++count;
    }
  }
  const double gain = count > 0 && energy > 0.0 ? config.voiced_rms / std::sqrt(energy / static_cast<double>(count)) : 0.0;
  std::normal_distribution<double> dither(0.0, config.dither);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double breath = config.aspiration * config.voiced_rms * envelope_at[i] * normal(rng);
    out.samples[i] = out.samples[i] * gain + breath + dither(rng);
  }
  return out;
}

}  // namespace se::dsp
