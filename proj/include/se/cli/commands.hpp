#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace se::cli {

/// Bad combination of command-line settings; the tool exits with status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ToyCorpusOptions {
  std::filesystem::path out;
  std::size_t count = 40;
  double duration_s = 0.5;
  double voiced_rms = 0.0125;
  std::uint64_t seed = 1;
};

struct MixOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::vector<double> snrs{-6.0, 0.0, 6.0, 9.0};
  std::uint64_t seed = 1;
};

struct TrainFlowOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::size_t steps = 20000;
  std::size_t batch = 4;
  double learning_rate = 1e-4;
  /// Hop between training windows cut from each clean file.
  std::size_t hop = 20;
  std::size_t blocks = 12;
  std::size_t hidden = 64;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> resume;
};

struct TrainNmfOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::size_t rank = 40;
  std::size_t iters = 200;
  double noise_seconds = 4.0;
  std::uint64_t seed = 1;
};

struct EnhanceOptions {
  std::string method;  // nmf, flow-gauss-est, flow-gauss-opt, noisy
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::optional<std::filesystem::path> flow;
  std::optional<std::filesystem::path> speech_bases;
  std::optional<std::filesystem::path> noise_bases;
  std::size_t iters = 500;
  double learning_rate = 5e-4;
  /// Empty disables the likelihood stop.
  std::optional<double> stop_threshold = -7.0;
  std::string stop_normalization = "per-window";
  std::string optimizer = "adam";
  std::size_t trace_every = 10;
  std::size_t nmf_iters = 200;
  std::size_t jobs = 1;
};

struct DiagnoseOptions {
  std::string kind;  // histogram, sweep, prior-only, simulate-2d
  std::filesystem::path out;
  std::optional<std::filesystem::path> flow;
  std::optional<std::filesystem::path> manifest;
  /// Utterances used by sweep and prior-only, taken in manifest order.
  std::size_t count = 30;
  std::vector<std::string> classes{"clean", "noisy", "white-noise", "babble"};
  std::size_t bins = 50;
  std::size_t iters = 500;
  double learning_rate = 5e-4;
  std::size_t trace_every = 10;
  std::vector<std::size_t> snapshots{0, 1000, 2000, 5000};
  std::uint64_t seed = 0;
  std::size_t points = 500;
  std::size_t maf_blocks = 5;
  std::size_t maf_hidden = 64;
  std::size_t maf_iters = 2500;
  double maf_learning_rate = 1e-3;
  std::size_t resolution = 200;
  std::size_t jobs = 1;
};

/// Each command returns the process exit status: 0 on success, 1 when some
/// item failed (the rest are still processed).
int cmd_make_toy_corpus(const ToyCorpusOptions& options);
int cmd_mix(const MixOptions& options);
int cmd_train_flow(const TrainFlowOptions& options);
int cmd_train_nmf(const TrainNmfOptions& options);
int cmd_enhance(const EnhanceOptions& options);
int cmd_diagnose(const DiagnoseOptions& options);

}  // namespace se::cli
