#include "se/pitfall/pitfall.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "se/errors.hpp"
#include "se/flow/train.hpp"
#include "se/io/csv.hpp"

namespace se::pitfall {

namespace {

std::vector<double> window_log_likelihoods(const flow::Flow& model, const dsp::Signal& s) {
  const std::size_t d = model.dim();
  const std::size_t windows = s.size() / d;
  if (windows == 0) return {};
  Matrix x(static_cast<Eigen::Index>(windows), static_cast<Eigen::Index>(d));
  std::copy(s.samples.begin(), s.samples.begin() + static_cast<std::ptrdiff_t>(windows * d), x.data());
  const Vector ll = flow::log_likelihood(model, x);
  return std::vector<double>(ll.data(), ll.data() + ll.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::Matrix2d covariance_root(const Eigen::Matrix2d& cov) {
  if (!cov.allFinite() || std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    throw ContractError("covariance must be finite and symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  if (eig.eigenvalues().minCoeff() < 0.0) throw ContractError("covariance is not positive semidefinite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal();
}

double mahalanobis(const Eigen::Vector2d& p, const GaussianComponent& c) {
  const Eigen::Vector2d d = p - c.mean;
  return std::sqrt(d.dot(c.covariance.ldlt().solve(d)));
}

}  // namespace

HistogramReport likelihood_histogram(const flow::Flow& model, const std::vector<LabeledCorpus>& corpora,
                                     std::size_t bins) {
  if (corpora.empty()) throw ContractError("likelihood_histogram: no classes");
  if (bins == 0) throw ContractError("likelihood_histogram: bins must be >= 1");
  std::vector<std::vector<double>> values(corpora.size());
  double lo = INFINITY;
  double hi = -INFINITY;
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    for (const auto& s : corpora[c].signals) {
      const auto ll = window_log_likelihoods(model, s);
      values[c].insert(values[c].end(), ll.begin(), ll.end());
    }
    if (values[c].empty()) throw ContractError("likelihood_histogram: class '" + corpora[c].label + "' has no windows");
    const auto [mn, mx] = std::minmax_element(values[c].begin(), values[c].end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }

  HistogramReport report;
  const std::size_t nbins = hi > lo ? bins : 1;
  if (hi > lo) {
    for (std::size_t k = 0; k <= nbins; ++k) report.edges.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(nbins));
    report.edges.back() = hi;
  } else {
    report.edges = {lo - 0.5, lo + 0.5};
  }
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    ClassHistogram h;
    h.label = corpora[c].label;
    h.counts.assign(nbins, 0);
    h.windows = values[c].size();
    double sum = 0.0;
    for (double v : values[c]) {
      // The last bin is closed on the right.
      auto it = std::upper_bound(report.edges.begin(), report.edges.end(), v);
      std::size_t k = static_cast<std::size_t>(it - report.edges.begin());
      k = std::clamp<std::size_t>(k, 1, nbins) - 1;
      ++h.counts[k];
      sum += v;
    }
    h.mean = sum / static_cast<double>(values[c].size());
    h.median = median_of(values[c]);
    report.classes.push_back(std::move(h));
  }
  return report;
}

dsp::Signal make_babble(const std::vector<dsp::Signal>& sources, std::size_t first, std::size_t talkers) {
  if (sources.empty() || talkers == 0) throw ContractError("make_babble: need sources and talkers");
  std::size_t length = SIZE_MAX;
  for (std::size_t k = 0; k < talkers; ++k) length = std::min(length, sources[(first + k) % sources.size()].size());
  dsp::Signal out;
  out.sample_rate = sources[first % sources.size()].sample_rate;
  out.samples.assign(length, 0.0);
  const double gain = 1.0 / std::sqrt(static_cast<double>(talkers));
  for (std::size_t k = 0; k < talkers; ++k) {
    const auto& s = sources[(first + k) % sources.size()];
    for (std::size_t i = 0; i < length; ++i) out.samples[i] += gain * s.samples[i];
  }
  return out;
}

dsp::Signal white_noise(std::size_t length, double power, std::uint64_t seed, int sample_rate) {
  if (!(power >= 0.0)) throw ContractError("white_noise: power must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(power));
  dsp::Signal s;
  s.sample_rate = sample_rate;
  s.samples.resize(length);
  for (double& v : s.samples) v = normal(rng);
  return s;
}

void write_histogram_csv(const std::filesystem::path& path, const HistogramReport& report) {
  io::CsvWriter csv(path, {"label", "bin_lo", "bin_hi", "count", "class_mean", "class_median"});
  for (const auto& h : report.classes) {
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
      csv.cell(h.label).cell(report.edges[k]).cell(report.edges[k + 1]).cell(h.counts[k]).cell(h.mean).cell(h.median);
      csv.end_row();
    }
  }
  csv.close();
}

std::pair<GaussianComponent, GaussianComponent> default_components() {
  const Eigen::Matrix2d cov = 0.3 * Eigen::Matrix2d::Identity();
  return {GaussianComponent{Eigen::Vector2d(-2.0, 0.0), cov}, GaussianComponent{Eigen::Vector2d(2.0, 0.0), cov}};
}

Matrix sample_two_gaussians(std::size_t n, const GaussianComponent& a, const GaussianComponent& b, std::uint64_t seed) {
  if (n < 2) throw ContractError("sample_two_gaussians: n must be >= 2");
  const Eigen::Matrix2d ra = covariance_root(a.covariance);
  const Eigen::Matrix2d rb = covariance_root(b.covariance);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t first = (n + 1) / 2;
  Matrix out(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d e(normal(rng), normal(rng));
    const Eigen::Vector2d p = i < first ? Eigen::Vector2d(a.mean + ra * e) : Eigen::Vector2d(b.mean + rb * e);
    out.row(static_cast<Eigen::Index>(i)) = p.transpose();
  }
  return out;
}

double DensityGrid::cell_x(std::size_t j) const {
  return x_min + (x_max - x_min) * (static_cast<double>(j) + 0.5) / static_cast<double>(resolution);
}

double DensityGrid::cell_y(std::size_t i) const {
  return y_min + (y_max - y_min) * (static_cast<double>(i) + 0.5) / static_cast<double>(resolution);
}

DensityGrid evaluate_grid(const flow::Flow& model, const Matrix& data, const PitfallConfig& config) {
  if (model.dim() != 2 || data.cols() != 2) throw DimensionError("evaluate_grid: 2-D model and data required");
  if (config.resolution < 2) throw ContractError("evaluate_grid: resolution must be >= 2");
  if (data.rows() == 0) throw ContractError("evaluate_grid: no data");
  const Eigen::RowVector2d lo = data.colwise().minCoeff();
  const Eigen::RowVector2d hi = data.colwise().maxCoeff();
  const Eigen::RowVector2d centre = 0.5 * (lo + hi);
  const Eigen::RowVector2d half = (0.5 * config.expand * (hi - lo)).cwiseMax(1e-6);
  DensityGrid g;
  g.x_min = centre(0) - half(0);
  g.x_max = centre(0) + half(0);
  g.y_min = centre(1) - half(1);
  g.y_max = centre(1) + half(1);
  g.resolution = config.resolution;
  const auto r = static_cast<Eigen::Index>(config.resolution);
  Matrix cells(r * r, 2);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      cells(i * r + j, 0) = g.cell_x(static_cast<std::size_t>(j));
      cells(i * r + j, 1) = g.cell_y(static_cast<std::size_t>(i));
    }
  }
  const Vector ll = flow::log_likelihood(model, cells);
  g.log_density = Eigen::Map<const Matrix>(ll.data(), r, r);

  const std::size_t lines = std::max<std::size_t>(config.grid_lines, 2);
  const std::size_t per = std::max<std::size_t>(config.points_per_line, 2);
  Matrix pts(static_cast<Eigen::Index>(2 * lines * per), 2);
  Vector line_id(pts.rows());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < 2 * lines; ++l) {
    const double u = static_cast<double>(l % lines) / static_cast<double>(lines - 1);
    for (std::size_t p = 0; p < per; ++p) {
      const double v = static_cast<double>(p) / static_cast<double>(per - 1);
      const bool vertical = l < lines;
      pts(k, 0) = g.x_min + (g.x_max - g.x_min) * (vertical ? u : v);
      pts(k, 1) = g.y_min + (g.y_max - g.y_min) * (vertical ? v : u);
      line_id(k) = static_cast<double>(l);
      ++k;
    }
  }
  const Matrix z = flow::forward(model, pts).z;
  g.transformed.resize(pts.rows(), 5);
  g.transformed << line_id, pts, z;
  return g;
}

double spurious_mass(const flow::Flow& model, const DensityGrid& grid, const Matrix& data, const PitfallConfig& config) {
  const Vector train_ll = flow::log_likelihood(model, data);
  const double threshold = median_of(std::vector<double>(train_ll.data(), train_ll.data() + train_ll.size()));
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      if (!(grid.log_density(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > threshold)) continue;
      const Eigen::Vector2d p(grid.cell_x(j), grid.cell_y(i));
      if (mahalanobis(p, config.first) > config.mahalanobis_cutoff && mahalanobis(p, config.second) > config.mahalanobis_cutoff) {
        ++count;
      }
    }
  }
  return static_cast<double>(count) / static_cast<double>(grid.resolution * grid.resolution);
}

double grid_integral(const DensityGrid& grid) {
  const double cell = (grid.x_max - grid.x_min) * (grid.y_max - grid.y_min) /
                      static_cast<double>(grid.resolution * grid.resolution);
  return grid.log_density.array().exp().sum() * cell;
}

PitfallResult run_pitfall_sim(std::uint64_t seed, const PitfallConfig& config) {
  PitfallResult result;
  result.data = sample_two_gaussians(config.points, config.first, config.second, seed);
  flow::MafConfig maf;
  maf.dim = 2;
  maf.blocks = config.blocks;
  maf.hidden = config.hidden;
  maf.seed = seed;
  flow::TrainConfig train;
  train.learning_rate = config.learning_rate;
  train.max_steps = static_cast<std::int64_t>(config.iters);
  train.full_batch = true;
  train.seed = seed;
  flow::MlTrainer trainer(std::make_unique<flow::MafFlow>(maf), train);
  try {
    result.losses = trainer.run(result.data).losses;
  } catch (const flow::TrainingDiverged&) {
    result.diverged = true;
  }
  auto released = trainer.release_model();
  result.model.reset(static_cast<flow::MafFlow*>(released.release()));
  if (result.diverged) return result;

  result.grid = evaluate_grid(*result.model, result.data, config);
  const Vector train_ll = flow::log_likelihood(*result.model, result.data);
  result.median_train_density =
      std::exp(median_of(std::vector<double>(train_ll.data(), train_ll.data() + train_ll.size())));
  result.spurious_mass = spurious_mass(*result.model, result.grid, result.data, config);
  result.integral = grid_integral(result.grid);
  const Matrix pts = result.grid.transformed.middleCols(1, 2);
  const Matrix back = flow::inverse(*result.model, Matrix(result.grid.transformed.rightCols(2)));
  result.roundtrip_error = (back - pts).cwiseAbs().maxCoeff();
  return result;
}

void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid) {
  io::CsvWriter csv(path, {"x", "y", "log_density"});
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      csv.cell(grid.cell_x(j)).cell(grid.cell_y(i)).cell(grid.log_density(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      csv.end_row();
    }
  }
  csv.close();
}

void write_transform_csv(const std::filesystem::path& path, const DensityGrid& grid) {
  io::CsvWriter csv(path, {"line", "x", "y", "z1", "z2"});
  for (Eigen::Index r = 0; r < grid.transformed.rows(); ++r) {
    csv.cell(static_cast<std::size_t>(grid.transformed(r, 0)));
    for (Eigen::Index c = 1; c < 5; ++c) csv.cell(grid.transformed(r, c));
    csv.end_row();
  }
  csv.close();
}

void write_density_svg(const std::filesystem::path& path, const DensityGrid& grid, const Matrix& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::size_t r = grid.resolution;
  const double cell = 600.0 / static_cast<double>(r);
  const Matrix density = grid.log_density.array().exp().matrix();
  const double peak = std::max(density.maxCoeff(), 1e-300);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  out << "<rect width=\"600\" height=\"600\" fill=\"#000\"/>\n";
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const double v = std::sqrt(density(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / peak);
      const int level = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      if (level == 0) continue;
      out << "<rect x=\"" << io::format_double(static_cast<double>(j) * cell) << "\" y=\""
          << io::format_double(static_cast<double>(r - 1 - i) * cell) << "\" width=\"" << io::format_double(cell)
          << "\" height=\"" << io::format_double(cell) << "\" fill=\"rgb(" << level << ',' << level / 2 << ','
          << 255 - level << ")\"/>\n";
    }
  }
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    const double px = (data(k, 0) - grid.x_min) / (grid.x_max - grid.x_min) * 600.0;
    const double py = 600.0 - (data(k, 1) - grid.y_min) / (grid.y_max - grid.y_min) * 600.0;
    out << "<circle cx=\"" << io::format_double(px) << "\" cy=\"" << io::format_double(py)
        << "\" r=\"1.5\" fill=\"#fff\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace se::pitfall
