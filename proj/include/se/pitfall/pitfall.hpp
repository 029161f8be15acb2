#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "se/dsp/signal.hpp"
#include "se/flow/flow.hpp"
#include "se/flow/maf.hpp"

namespace se::pitfall {

struct LabeledCorpus {
  std::string label;
  std::vector<dsp::Signal> signals;
};

struct ClassHistogram {
  std::string label;
  std::vector<std::size_t> counts;  // one per bin of the shared edges
  std::size_t windows = 0;
  double mean = 0.0;
  double median = 0.0;
};

struct HistogramReport {
  std::vector<double> edges;  // bins + 1 ascending values shared by all classes
  std::vector<ClassHistogram> classes;
};

/// Per-window flow log-likelihoods of every class, bucketed over common
/// edges spanning all classes. Windows are non-overlapping; a trailing
/// partial window is dropped. When every value is equal the report has a
/// single bin of unit width centred on it.
HistogramReport likelihood_histogram(const flow::Flow& model, const std::vector<LabeledCorpus>& corpora,
                                     std::size_t bins = 50);

/// Overlapped speech: `talkers` consecutive signals starting at `first`
/// (cyclically), each scaled by 1/sqrt(talkers) and truncated to the
/// shortest.
dsp::Signal make_babble(const std::vector<dsp::Signal>& sources, std::size_t first, std::size_t talkers = 4);

/// White Gaussian noise with the given per-sample power.
dsp::Signal white_noise(std::size_t length, double power, std::uint64_t seed, int sample_rate = dsp::kDefaultSampleRate);

void write_histogram_csv(const std::filesystem::path& path, const HistogramReport& report);

struct GaussianComponent {
  Eigen::Vector2d mean;
  Eigen::Matrix2d covariance;
};

/// The two components used when none are given: means (+-2, 0), covariance 0.3 I.
std::pair<GaussianComponent, GaussianComponent> default_components();

/// n points, the first ceil(n/2) from `a` and the rest from `b`.
Matrix sample_two_gaussians(std::size_t n, const GaussianComponent& a, const GaussianComponent& b, std::uint64_t seed);

struct PitfallConfig {
  std::size_t points = 500;
  std::size_t blocks = 5;
  std::size_t hidden = 64;
  std::size_t iters = 2500;
  double learning_rate = 1e-3;
  std::size_t resolution = 200;
  /// The grid spans the data's bounding box scaled by this factor about its centre.
  double expand = 3.0;
  double mahalanobis_cutoff = 4.0;
  /// Lines per axis of the colour grid and points per line.
  std::size_t grid_lines = 11;
  std::size_t points_per_line = 101;
  GaussianComponent first = default_components().first;
  GaussianComponent second = default_components().second;
};

struct DensityGrid {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  std::size_t resolution = 0;
  /// log p at cell centres; row i is y index, column j is x index.
  Matrix log_density;
  /// Colour grid: columns (line, x, y, z1, z2). Lines 0..L-1 are vertical
  /// (constant x), L..2L-1 horizontal.
  Matrix transformed;

  double cell_x(std::size_t j) const;
  double cell_y(std::size_t i) const;
};

struct PitfallResult {
  Matrix data;
  std::unique_ptr<flow::MafFlow> model;
  DensityGrid grid;
  std::vector<double> losses;
  double median_train_density = 0.0;
  double spurious_mass = 0.0;
  double integral = 0.0;
  double roundtrip_error = 0.0;
  bool diverged = false;
};

/// Density on the grid of `config`, over the bounding box of `data`.
DensityGrid evaluate_grid(const flow::Flow& model, const Matrix& data, const PitfallConfig& config);

/// Fraction of grid cells whose density exceeds the median density at the
/// data points while lying beyond the Mahalanobis cutoff from both components.
double spurious_mass(const flow::Flow& model, const DensityGrid& grid, const Matrix& data, const PitfallConfig& config);

/// Riemann sum of exp(log p) over the grid.
double grid_integral(const DensityGrid& grid);

/// Samples data, trains a MAF by maximum likelihood (full batch) and
/// evaluates the density grid, the colour-grid transform and the statistics.
/// A diverged training run returns the partial state with `diverged` set.
PitfallResult run_pitfall_sim(std::uint64_t seed, const PitfallConfig& config = {});

/// Columns x,y,log_density.
void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid);
/// Columns line,x,y,z1,z2.
void write_transform_csv(const std::filesystem::path& path, const DensityGrid& grid);
/// Self-contained heatmap of the density with the data points overlaid.
void write_density_svg(const std::filesystem::path& path, const DensityGrid& grid, const Matrix& data);

}  // namespace se::pitfall
