#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "se/dsp/metrics.hpp"
#include "se/dsp/mix.hpp"
#include "se/dsp/signal.hpp"
#include "se/dsp/stft.hpp"
#include "se/dsp/toy_corpus.hpp"
#include "se/dsp/wav.hpp"
#include "se/errors.hpp"

namespace se::dsp {
namespace {

Signal random_signal(std::size_t n, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Signal s;
  s.samples.resize(n);
  for (double& v : s.samples) v = normal(rng);
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "se_dsp_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Frame, TwoFullWindows) {
  const Signal s = random_signal(160, 1);
  EXPECT_EQ(frame(s, 80, 80).rows(), 2);
}

TEST(Frame, SingleWindowIsInput) {
  const Signal s = random_signal(80, 2);
  const Matrix w = frame(s, 80, 80);
  ASSERT_EQ(w.rows(), 1);
  for (std::size_t i = 0; i < 80; ++i) EXPECT_EQ(w(0, static_cast<Eigen::Index>(i)), s.samples[i]);
}

TEST(Frame, LastWindowZeroPadded) {
  const Signal s = random_signal(100, 3);
  const Matrix w = frame(s, 80, 80);
  ASSERT_EQ(w.rows(), 2);
  for (Eigen::Index i = 20; i < 80; ++i) EXPECT_EQ(w(1, i), 0.0);
  EXPECT_EQ(w(1, 19), s.samples[99]);
}

TEST(Frame, UnframeInverts) {
  const Signal s = random_signal(1000, 4);
  const Signal back = unframe(frame(s, 80, 80), s.size());
  EXPECT_EQ(back.samples, s.samples);
}

TEST(Frame, RejectsBadArguments) {
  EXPECT_THROW(frame(Signal{}, 80, 80), ContractError);
  EXPECT_THROW(frame(random_signal(100, 5), 80, 0), ContractError);
}

TEST(Stft, BinCount) {
  EXPECT_EQ(stft(random_signal(4000, 6)).bins(), 257);
}

TEST(Stft, DcEnergyInBinZero) {
  Signal s;
  s.samples.assign(4096, 0.5);
  const Spectrogram spec = stft(s);
  const Eigen::Index mid = spec.frames() / 2;
  const double dc = std::norm(spec.values(mid, 0));
  double rest = 0.0;
  for (Eigen::Index k = 1; k < spec.bins(); ++k) rest += std::norm(spec.values(mid, k));
  EXPECT_GT(dc, 0.0);
  // Periodic Hann leaks into bin 1 only; everything else is round-off.
  double beyond = 0.0;
  for (Eigen::Index k = 2; k < spec.bins(); ++k) beyond += std::norm(spec.values(mid, k));
  EXPECT_LT(beyond, 1e-20 * dc);
  EXPECT_LT(rest, dc);
}

TEST(Stft, RoundTrip) {
  const Signal s = random_signal(16000, 7);
  const Signal back = istft(stft(s));
  ASSERT_EQ(back.size(), s.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - s.samples[i]));
  EXPECT_LT(worst, 1e-8);
}

TEST(Stft, SinePeaksAtItsBin) {
  Signal s;
  s.samples.resize(8000);
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = std::sin(2 * std::numbers::pi * 1000.0 * i / 16000.0);
  const Eigen::MatrixXd p = power_bins_by_frames(stft(s));
  Eigen::Index best = 0;
  p.col(p.cols() / 2).maxCoeff(&best);
  EXPECT_EQ(best, 32);  // 1000 Hz * 512 / 16000
}

TEST(Mix, ZeroDbMatchesPower) {
  const Signal clean = random_signal(16000, 8);
  const MixResult m = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 0.0, 3);
  EXPECT_NEAR(mean_power(m.noise) / mean_power(clean), 1.0, 1e-12);
  EXPECT_NEAR(m.sigma, mean_power(m.noise), 1e-15);
}

TEST(Mix, MinusSixDb) {
  const Signal clean = random_signal(16000, 9);
  const MixResult m = mix_at_snr(clean, NoiseKind::kWhiteGaussian, -6.0, 4);
  EXPECT_NEAR(mean_power(m.noise) / mean_power(clean), std::pow(10.0, 0.6), 1e-9);
  EXPECT_NEAR(broadband_snr(clean, m.noisy), -6.0, 1e-9);
}

TEST(Mix, SameSeedSameNoise) {
  const Signal clean = random_signal(4000, 10);
  const MixResult a = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 6.0, 11);
  const MixResult b = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 6.0, 11);
  const MixResult c = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 6.0, 12);
  EXPECT_EQ(a.noisy.samples, b.noisy.samples);
  EXPECT_NE(a.noisy.samples, c.noisy.samples);
}

TEST(Mix, SilentCleanRejected) {
  Signal silent;
  silent.samples.assign(100, 0.0);
  EXPECT_THROW(mix_at_snr(silent, NoiseKind::kWhiteGaussian, 0.0, 1), ContractError);
}

TEST(Mix, Presets) {
  EXPECT_EQ(preset_sigma(-6.0), 100.0);
  EXPECT_EQ(preset_sigma(9.0), 4000.0);
  EXPECT_FALSE(preset_sigma(3.0).has_value());
}

TEST(Metrics, IdenticalScoresCeiling) {
  const Signal s = random_signal(8000, 13);
  EXPECT_DOUBLE_EQ(segmental_snr(s, s), 35.0);
  EXPECT_DOUBLE_EQ(fwsnrseg(s, s), 35.0);
}

TEST(Metrics, ZerosScoreFloor) {
  const Signal s = random_signal(8000, 14);
  Signal zeros;
  zeros.samples.assign(s.size(), 0.0);
  // Zero estimate: every frame has error equal to the reference, 0 dB.
  EXPECT_NEAR(segmental_snr(s, zeros), 0.0, 1e-12);
  Signal opposite = s;
  for (double& v : opposite.samples) v = -3.0 * v;
  // Error 4x the reference is -12 dB, clamped to the floor.
  EXPECT_DOUBLE_EQ(segmental_snr(s, opposite), -10.0);
}

TEST(Metrics, DecreaseWithNoise) {
  const Signal clean = toy_utterance(1, 0);
  const Signal mild = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 6.0, 1).noisy;
  const Signal harsh = mix_at_snr(clean, NoiseKind::kWhiteGaussian, 0.0, 1).noisy;
  const double a = segmental_snr(clean, mild), b = segmental_snr(clean, harsh);
  EXPECT_GT(a, b);
  EXPECT_GT(b, -10.0);
  EXPECT_LT(a, 35.0);
  EXPECT_GT(fwsnrseg(clean, mild), fwsnrseg(clean, harsh));
}

TEST(Metrics, LengthMismatchThrows) {
  EXPECT_THROW(segmental_snr(random_signal(1000, 1), random_signal(999, 1)), ContractError);
}

TEST(Wav, RoundTripWithinQuantisation) {
  const Signal s = random_signal(1234, 15, 0.2);
  const auto path = temp_path("rt.wav");
  write_wav(path, s);
  const Signal back = read_wav(path);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(back.samples[i], s.samples[i], 0.5 / 32768.0 + 1e-12);
  write_wav(path, back);
  EXPECT_EQ(read_wav(path).samples, back.samples);
}

TEST(Wav, ClipsOutOfRange) {
  Signal s;
  s.samples = {2.0, -2.0, 0.0};
  const auto path = temp_path("clip.wav");
  write_wav(path, s);
  const Signal back = read_wav(path);
  EXPECT_DOUBLE_EQ(back.samples[0], 32767.0 / 32768.0);
  EXPECT_DOUBLE_EQ(back.samples[1], -1.0);
}

TEST(Wav, SampleRateMismatch) {
  Signal s = random_signal(100, 16);
  s.sample_rate = 8000;
  const auto path = temp_path("sr.wav");
  write_wav(path, s);
  EXPECT_THROW(read_wav(path), SampleRateMismatch);
  EXPECT_EQ(read_wav(path, std::nullopt).sample_rate, 8000);
}

TEST(Wav, GarbageRejected) {
  const auto path = temp_path("bad.wav");
  std::ofstream(path, std::ios::binary) << "definitely not a wave file";
  EXPECT_THROW(read_wav(path), DataError);
  EXPECT_THROW(read_wav(temp_path("missing.wav")), DataError);
}

TEST(ToyCorpus, DeterministicAndLevelled) {
  const Signal a = toy_utterance(5, 2);
  const Signal b = toy_utterance(5, 2);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, toy_utterance(5, 3).samples);
  EXPECT_EQ(a.size(), 8000u);
  const double rms = std::sqrt(mean_power(a));
  EXPECT_GT(rms, 0.002);
  EXPECT_LT(rms, 0.0125);
}

}  // namespace
}  // namespace se::dsp
