#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "flow_oracles.hpp"
#include "se/dsp/toy_corpus.hpp"
#include "se/errors.hpp"
#include "se/flow/coupling_flow.hpp"
#include "se/flow/maf.hpp"
#include "se/pitfall/pitfall.hpp"

namespace se::pitfall {
namespace {

flow::CouplingFlow identity_flow() {
  flow::CouplingFlowConfig c;
  c.mixing_init = flow::MixingInit::kIdentity;
  return flow::CouplingFlow(c);
}

std::vector<dsp::Signal> toy(std::size_t n, std::uint64_t seed) {
  std::vector<dsp::Signal> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(dsp::toy_utterance(seed, i));
  return out;
}

TEST(Histogram, CountsAndSharedEdges) {
  const auto f = identity_flow();
  const auto clean = toy(3, 1);
  const std::vector<LabeledCorpus> corpora{{"clean", clean}, {"white-noise", {white_noise(8000, 1e-4, 2)}}};
  const HistogramReport r = likelihood_histogram(f, corpora, 20);
  ASSERT_EQ(r.edges.size(), 21u);
  EXPECT_TRUE(std::is_sorted(r.edges.begin(), r.edges.end()));
  ASSERT_EQ(r.classes.size(), 2u);
  for (const auto& c : r.classes) {
    std::size_t total = 0;
    for (auto n : c.counts) total += n;
    EXPECT_EQ(total, c.windows);
  }
  EXPECT_EQ(r.classes[0].windows, 300u);
  EXPECT_EQ(r.classes[1].windows, 100u);
}

TEST(Histogram, PermutationInvariant) {
  const auto f = identity_flow();
  auto signals = toy(4, 3);
  const HistogramReport a = likelihood_histogram(f, {{"clean", signals}}, 15);
  std::reverse(signals.begin(), signals.end());
  const HistogramReport b = likelihood_histogram(f, {{"clean", signals}}, 15);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.classes[0].counts, b.classes[0].counts);
  EXPECT_DOUBLE_EQ(a.classes[0].median, b.classes[0].median);
}

TEST(Histogram, ConstantWindowsGiveOneBin) {
  const auto f = identity_flow();
  dsp::Signal zeros;
  zeros.samples.assign(800, 0.0);
  const HistogramReport r = likelihood_histogram(f, {{"zeros", {zeros}}}, 10);
  ASSERT_EQ(r.edges.size(), 2u);
  EXPECT_EQ(r.classes[0].counts, std::vector<std::size_t>{10});
  EXPECT_NEAR(r.classes[0].mean, flow::standard_normal_log_norm(80), 1e-12);
}

TEST(Histogram, EmptyClassRejected) {
  const auto f = identity_flow();
  EXPECT_THROW(likelihood_histogram(f, {{"none", {}}}), ContractError);
}

TEST(Babble, MixesTalkers) {
  const auto sources = toy(6, 4);
  const dsp::Signal b = make_babble(sources, 1, 4);
  ASSERT_EQ(b.size(), sources[1].size());
  double expected = 0.0;
  for (std::size_t k = 1; k < 5; ++k) expected += sources[k].samples[100] / 2.0;
  EXPECT_NEAR(b.samples[100], expected, 1e-15);
}

TEST(TwoGaussians, DeterministicAndBalanced) {
  const auto [a, b] = default_components();
  const Matrix x = sample_two_gaussians(501, a, b, 5);
  EXPECT_EQ(x, sample_two_gaussians(501, a, b, 5));
  EXPECT_NE(x, sample_two_gaussians(501, a, b, 6));
  EXPECT_EQ(x.rows(), 501);
  EXPECT_NEAR(x.topRows(251).col(0).mean(), -2.0, 0.15);
  EXPECT_NEAR(x.bottomRows(250).col(0).mean(), 2.0, 0.15);
}

TEST(TwoGaussians, EmpiricalMean) {
  GaussianComponent c{Eigen::Vector2d(0.5, -1.0), Eigen::Matrix2d::Identity() * 0.3};
  const std::size_t n = 4000;
  const Matrix x = sample_two_gaussians(n, c, c, 7);
  const double bound = 3.0 * std::sqrt(0.3 / static_cast<double>(n));
  EXPECT_NEAR(x.col(0).mean(), 0.5, bound);
  EXPECT_NEAR(x.col(1).mean(), -1.0, bound);
}

TEST(TwoGaussians, RejectsNonPsd) {
  GaussianComponent bad{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
  bad.covariance(1, 1) = -0.1;
  EXPECT_THROW(sample_two_gaussians(10, bad, default_components().second, 1), ContractError);
  EXPECT_THROW(sample_two_gaussians(1, default_components().first, default_components().second, 1), ContractError);
}

TEST(Grid, IdentityModelAgainstStandardNormalReference) {
  const flow::MafFlow m = flow::build_maf(2, 5, 8);
  GaussianComponent ref{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
  PitfallConfig c;
  c.first = ref;
  c.second = ref;
  c.resolution = 120;
  const Matrix data = sample_two_gaussians(500, ref, ref, 8);
  const DensityGrid g = evaluate_grid(m, data, c);
  EXPECT_TRUE(g.log_density.allFinite());
  EXPECT_LT(spurious_mass(m, g, data, c), 1e-3);
  EXPECT_NEAR(grid_integral(g), 1.0, 0.02);
}

TEST(Simulation, ShortRunProducesArtifacts) {
  PitfallConfig c;
  c.iters = 40;
  c.hidden = 16;
  c.resolution = 40;
  const PitfallResult r = run_pitfall_sim(1, c);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.losses.size(), 40u);
  EXPECT_LT(r.losses.back(), r.losses.front());
  EXPECT_EQ(r.grid.log_density.rows(), 40);
  EXPECT_LT(r.roundtrip_error, 1e-6);
  EXPECT_GE(r.spurious_mass, 0.0);
  EXPECT_LE(r.integral, 1.05);
  EXPECT_GE(r.integral, 0.5);
}

}  // namespace
}  // namespace se::pitfall
