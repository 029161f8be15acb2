#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "se/dsp/metrics.hpp"
#include "se/dsp/mix.hpp"
#include "se/errors.hpp"
#include "se/nmf/nmf.hpp"

namespace se::nmf {
namespace {

PowerMatrix random_positive(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  PowerMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

TEST(IsDivergence, Identity) {
  const PowerMatrix v = random_positive(5, 7, 1);
  EXPECT_EQ(is_divergence(v, v), 0.0);
}

TEST(IsDivergence, Scalar) {
  PowerMatrix v(1, 1), vhat(1, 1);
  v << 2.0;
  vhat << 1.0;
  EXPECT_NEAR(is_divergence(v, vhat), 1.0 - std::log(2.0), 1e-15);
}

TEST(IsDivergence, ScaleInvariant) {
  const PowerMatrix v = random_positive(4, 6, 2), vhat = random_positive(4, 6, 3);
  EXPECT_NEAR(is_divergence(7.5 * v, 7.5 * vhat), is_divergence(v, vhat), 1e-12);
}

TEST(IsDivergence, RejectsNonPositive) {
  PowerMatrix v = random_positive(2, 2, 4);
  PowerMatrix bad = v;
  bad(0, 0) = 0.0;
  EXPECT_THROW(is_divergence(v, bad), ContractError);
  EXPECT_THROW(is_divergence(v, random_positive(2, 3, 5)), DimensionError);
}

TEST(FitIsNmf, PlantedRankTwo) {
  const PowerMatrix v = random_positive(30, 2, 6) * random_positive(2, 40, 7);
  const NmfFit fit = fit_is_nmf(v, 2, 500, 8);
  EXPECT_LT(fit.final_divergence / fit.initial_divergence, 1e-6);
}

TEST(FitIsNmf, ConstantRankOne) {
  const PowerMatrix v = PowerMatrix::Constant(10, 12, 0.37);
  const NmfFit fit = fit_is_nmf(v, 1, 50, 9);
  EXPECT_LT((fit.model.reconstruction() - v).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitIsNmf, DivergenceNonIncreasing) {
  const PowerMatrix v = random_positive(20, 30, 10);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NmfFit fit = fit_is_nmf(v, 4, 100, seed);
    ASSERT_EQ(fit.history.size(), 100u);
    double previous = fit.initial_divergence;
    for (double d : fit.history) {
      EXPECT_LE(d, previous * (1.0 + 1e-12));
      previous = d;
    }
    EXPECT_TRUE(fit.model.w.minCoeff() > 0.0 && fit.model.h.minCoeff() > 0.0);
  }
}

TEST(FitIsNmf, RejectsBadRank) {
  const PowerMatrix v = random_positive(4, 5, 11);
  EXPECT_THROW(fit_is_nmf(v, 0, 10, 0), ContractError);
  EXPECT_THROW(fit_is_nmf(v, 4, 10, 0), ContractError);
}

TEST(InferActivations, PlantedFrame) {
  const PowerMatrix w = random_positive(40, 3, 12);
  PowerMatrix h0(3, 1);
  h0 << 0.5, 1.5, 0.2;
  const PowerMatrix h = infer_activations(w * h0, w, 5000);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(h(i, 0) / h0(i, 0), 1.0, 1e-4);
}

TEST(InferActivations, IdentityBasis) {
  const PowerMatrix v = random_positive(6, 4, 13);
  const PowerMatrix h = infer_activations(v, PowerMatrix::Identity(6, 6), 5);
  EXPECT_LT((h - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InferActivations, SilentFrameAtFloorScale) {
  const PowerMatrix w = random_positive(10, 2, 14);
  const PowerMatrix h = infer_activations(PowerMatrix::Zero(10, 3), w, 200);
  EXPECT_TRUE(h.allFinite());
  EXPECT_LT(h.maxCoeff(), 100 * kFloor);
}

dsp::Spectrogram random_spectrogram(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  dsp::Signal s;
  s.samples.resize(4000);
  for (double& v : s.samples) v = normal(rng);
  return dsp::stft(s);
}

TEST(Wiener, NoNoiseGainIsOne) {
  const dsp::Spectrogram y = random_spectrogram(15);
  const Eigen::MatrixXd sx = random_positive(y.frames(), y.bins(), 16);
  const Eigen::MatrixXd sn = Eigen::MatrixXd::Constant(y.frames(), y.bins(), kFloor);
  const dsp::Spectrogram out = wiener_filter(y, 1e6 * sx, sn);
  EXPECT_LT((out.values - y.values).cwiseAbs().maxCoeff() / y.values.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Wiener, EqualVariancesHalve) {
  const dsp::Spectrogram y = random_spectrogram(17);
  const Eigen::MatrixXd s = random_positive(y.frames(), y.bins(), 18);
  const dsp::Spectrogram out = wiener_filter(y, s, s);
  EXPECT_LT((out.values - 0.5 * y.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Wiener, ShapeMismatchThrows) {
  const dsp::Spectrogram y = random_spectrogram(19);
  EXPECT_THROW(wiener_filter(y, Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(2, 2)), DimensionError);
}

TEST(EnhanceNmf, ToneInWhiteNoiseWithOracleBases) {
  dsp::Signal tone;
  tone.samples.resize(16000);
  for (std::size_t i = 0; i < tone.size(); ++i) {
    tone.samples[i] = 0.1 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0) *
                      (0.6 + 0.4 * std::sin(2 * std::numbers::pi * 3.0 * i / 16000.0));
  }
  const dsp::MixResult mix = dsp::mix_at_snr(tone, dsp::NoiseKind::kWhiteGaussian, 0.0, 20);
  const NmfFit speech = fit_is_nmf(dsp::power_bins_by_frames(dsp::stft(tone)), 2, 200, 21);
  const NmfFit noise = fit_is_nmf(dsp::power_bins_by_frames(dsp::stft(mix.noise)), 2, 200, 22);
  const SeparationResult r = enhance_nmf(dsp::stft(mix.noisy), speech.model.w, noise.model.w, 100);
  const dsp::Signal out = dsp::istft(r.enhanced);
  EXPECT_GT(dsp::segmental_snr(tone, out), dsp::segmental_snr(tone, mix.noisy) + 3.0);
}

TEST(Bases, SaveLoadRoundTrip) {
  const PowerMatrix w = random_positive(257, 5, 23);
  const auto path = std::filesystem::temp_directory_path() / "se_bases_test.bin";
  save_bases(path, w, "speech");
  std::string role;
  EXPECT_EQ(load_bases(path, &role), w);
  EXPECT_EQ(role, "speech");
}

TEST(Bases, NoiseBasesAreFlat) {
  NoiseBasisConfig c;
  c.rank = 3;
  c.iters = 50;
  c.seconds_per_level = 0.5;
  const NmfFit fit = train_noise_bases(c);
  EXPECT_EQ(fit.model.w.rows(), 257);
  EXPECT_LT(fit.final_divergence, fit.initial_divergence);
}

}  // namespace
}  // namespace se::nmf
