#include "se/nmf/nmf.hpp"

#include <cmath>
#include <random>

#include "se/errors.hpp"
#include "se/io/container.hpp"
#include "se/matrix.hpp"

namespace se::nmf {

namespace {

void floor_in_place(PowerMatrix& m) { m = m.cwiseMax(kFloor); }

void check_positive(const PowerMatrix& m, const char* what) {
  if (m.size() == 0) throw ContractError(std::string(what) + " is empty");
  if (!m.allFinite() || !(m.minCoeff() > 0.0)) throw ContractError(std::string(what) + " must be strictly positive");
}

void update_h(const PowerMatrix& v, const PowerMatrix& w, PowerMatrix& h) {
  const PowerMatrix vhat = w * h;
  const PowerMatrix num = w.transpose() * (v.array() / vhat.array().square()).matrix();
  const PowerMatrix den = w.transpose() * vhat.cwiseInverse();
  h = h.cwiseProduct(num.cwiseQuotient(den));
  floor_in_place(h);
}

void update_w(const PowerMatrix& v, PowerMatrix& w, const PowerMatrix& h) {
  const PowerMatrix vhat = w * h;
  const PowerMatrix num = (v.array() / vhat.array().square()).matrix() * h.transpose();
  const PowerMatrix den = vhat.cwiseInverse() * h.transpose();
  w = w.cwiseProduct(num.cwiseQuotient(den));
  floor_in_place(w);
}

}  // namespace

PowerMatrix floored(const PowerMatrix& v) { return v.cwiseMax(kFloor); }

double is_divergence(const PowerMatrix& v, const PowerMatrix& vhat) {
  if (v.rows() != vhat.rows() || v.cols() != vhat.cols()) throw DimensionError("is_divergence: shape mismatch");
  check_positive(v, "V");
  check_positive(vhat, "Vhat");
  const Eigen::ArrayXXd ratio = v.array() / vhat.array();
  return (ratio - ratio.log() - 1.0).sum();
}

NmfFit fit_is_nmf(const PowerMatrix& v_raw, std::size_t rank, std::size_t iters, std::uint64_t seed) {
  if (rank == 0 || rank >= static_cast<std::size_t>(std::min(v_raw.rows(), v_raw.cols()))) {
    throw ContractError("NMF rank " + std::to_string(rank) + " must be in [1, min(F, T))");
  }
  if (!v_raw.allFinite() || v_raw.minCoeff() < 0.0) throw ContractError("NMF input must be finite and nonnegative");
  const PowerMatrix v = floored(v_raw);
  const auto l = static_cast<Eigen::Index>(rank);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  const double scale = std::sqrt(v.mean() / static_cast<double>(rank));
  NmfFit fit;
  fit.model.w = PowerMatrix::NullaryExpr(v.rows(), l, [&] { return scale * unit(rng); });
  fit.model.h = PowerMatrix::NullaryExpr(l, v.cols(), [&] { return scale * unit(rng); });
  fit.initial_divergence = is_divergence(v, fit.model.reconstruction());
  for (std::size_t it = 0; it < iters; ++it) {
    update_h(v, fit.model.w, fit.model.h);
    update_w(v, fit.model.w, fit.model.h);
    fit.history.push_back(is_divergence(v, fit.model.reconstruction()));
  }
  fit.final_divergence = fit.history.empty() ? fit.initial_divergence : fit.history.back();
  return fit;
}

PowerMatrix infer_activations(const PowerMatrix& v_raw, const PowerMatrix& w, std::size_t iters) {
  if (v_raw.rows() != w.rows()) throw DimensionError("infer_activations: V and W have different bin counts");
  // Zeros in W are fine as long as every bin and every basis keeps some weight.
  if (w.size() == 0 || !w.allFinite() || w.minCoeff() < 0.0 || !(w.rowwise().sum().minCoeff() > 0.0) ||
      !(w.colwise().sum().minCoeff() > 0.0)) {
    throw ContractError("W must be nonnegative with no all-zero row or column");
  }
  if (!v_raw.allFinite() || v_raw.minCoeff() < 0.0) throw ContractError("V must be finite and nonnegative");
  const PowerMatrix v = floored(v_raw);
  const double start = std::max(v.mean() / (static_cast<double>(w.cols()) * w.mean()), kFloor);
  PowerMatrix h = PowerMatrix::Constant(w.cols(), v.cols(), start);
  for (std::size_t it = 0; it < iters; ++it) update_h(v, w, h);
  return h;
}

dsp::Spectrogram wiener_filter(const dsp::Spectrogram& noisy, const Eigen::MatrixXd& sigma_x,
                               const Eigen::MatrixXd& sigma_n) {
  if (sigma_x.rows() != noisy.frames() || sigma_x.cols() != noisy.bins() || sigma_n.rows() != noisy.frames() ||
      sigma_n.cols() != noisy.bins()) {
    throw DimensionError("wiener_filter: variance maps must be frames x bins of the spectrogram");
  }
  check_positive(sigma_x, "sigma_x");
  check_positive(sigma_n, "sigma_n");
  dsp::Spectrogram out = noisy;
  const Eigen::ArrayXXd gain = sigma_x.array() / (sigma_x.array() + sigma_n.array());
  out.values = (noisy.values.array() * gain.cast<std::complex<double>>()).matrix();
  return out;
}

SeparationResult enhance_nmf(const dsp::Spectrogram& noisy, const PowerMatrix& w_speech, const PowerMatrix& w_noise,
                             std::size_t iters) {
  if (w_speech.rows() != noisy.bins() || w_noise.rows() != noisy.bins()) {
    throw DimensionError("enhance_nmf: bases have " + std::to_string(w_speech.rows()) + "/" +
                         std::to_string(w_noise.rows()) + " bins, spectrogram has " + std::to_string(noisy.bins()));
  }
  PowerMatrix w(w_speech.rows(), w_speech.cols() + w_noise.cols());
  w << w_speech, w_noise;
  const PowerMatrix h = infer_activations(dsp::power_bins_by_frames(noisy), w, iters);
  SeparationResult result;
  result.sigma_x = floored(w_speech * h.topRows(w_speech.cols())).transpose();
  result.sigma_n = floored(w_noise * h.bottomRows(w_noise.cols())).transpose();
  result.enhanced = wiener_filter(noisy, result.sigma_x, result.sigma_n);
  return result;
}

namespace {

PowerMatrix concatenated_power(const std::vector<dsp::Signal>& signals, const dsp::StftConfig& stft) {
  std::vector<PowerMatrix> parts;
  Eigen::Index frames = 0;
  for (const auto& s : signals) {
    parts.push_back(dsp::power_bins_by_frames(dsp::stft(s, stft)));
    frames += parts.back().cols();
  }
  PowerMatrix v(static_cast<Eigen::Index>(stft.fft_size / 2 + 1), frames);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return v;
}

}  // namespace

NmfFit train_speech_bases(const std::vector<dsp::Signal>& signals, std::size_t rank, std::size_t iters,
                               std::uint64_t seed, const dsp::StftConfig& stft) {
  if (signals.empty()) throw ContractError("train_speech_bases: empty corpus");
  return fit_is_nmf(concatenated_power(signals, stft), rank, iters, seed);
}

NmfFit train_noise_bases(const NoiseBasisConfig& config, const dsp::StftConfig& stft) {
  if (config.levels == 0 || !(config.seconds_per_level > 0.0)) throw ContractError("train_noise_bases: nothing to fit");
  if (!(config.min_variance > 0.0) || config.max_variance < config.min_variance) {
    throw ContractError("train_noise_bases: bad variance range");
  }
  std::vector<dsp::Signal> noise;
  const auto n = static_cast<std::size_t>(config.seconds_per_level * config.sample_rate);
  std::mt19937_64 rng(config.seed);
  for (std::size_t k = 0; k < config.levels; ++k) {
    const double t = config.levels > 1 ? static_cast<double>(k) / static_cast<double>(config.levels - 1) : 0.0;
    const double variance = std::exp(std::log(config.min_variance) * (1.0 - t) + std::log(config.max_variance) * t);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    dsp::Signal s;
    s.sample_rate = config.sample_rate;
    s.samples.resize(n);
    for (double& x : s.samples) x = normal(rng);
    noise.push_back(std::move(s));
  }
  return fit_is_nmf(concatenated_power(noise, stft), config.rank, config.iters, config.seed);
}

void save_bases(const std::filesystem::path& path, const PowerMatrix& w, const std::string& role) {
  io::Container c;
  c.kind = "nmf-bases";
  c.attrs = {{"role", role}, {"bins", std::to_string(w.rows())}, {"rank", std::to_string(w.cols())}};
  c.tensors.emplace_back("w", to_tensor(Matrix(w)));
  io::write_container(path, c);
}

PowerMatrix load_bases(const std::filesystem::path& path, std::string* role) {
  const io::Container c = io::read_container(path);
  if (c.kind != "nmf-bases") throw DataError(path.string() + ": container kind '" + c.kind + "' is not nmf-bases");
  if (role) *role = c.attr("role");
  const PowerMatrix w = to_matrix(c.tensor("w"));
  if (w.size() == 0 || !(w.minCoeff() > 0.0)) throw DataError(path.string() + ": bases must be strictly positive");
  return w;
}

}  // namespace se::nmf
