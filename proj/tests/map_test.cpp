#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fd.hpp"
#include "flow_oracles.hpp"
#include "se/dsp/metrics.hpp"
#include "se/dsp/signal.hpp"
#include "se/errors.hpp"
#include "se/flow/coupling_flow.hpp"
#include "se/map/flow_gauss.hpp"

namespace se::map {
namespace {

using se::testing::central_difference;
using se::testing::max_relative_error;
using se::testing::perturb;
using se::testing::random_batch;

flow::CouplingFlow identity_flow(std::size_t dim = 80) {
  flow::CouplingFlowConfig c;
  c.dim = dim;
  c.mixing_init = flow::MixingInit::kIdentity;
  return flow::CouplingFlow(c);
}

flow::CouplingFlow small_flow(std::uint64_t seed) {
  flow::CouplingFlowConfig c;
  c.dim = 8;
  c.blocks = 4;
  c.emit_every = 2;
  c.emit_dims = 2;
  c.hidden = 16;
  c.seed = seed;
  flow::CouplingFlow f(c);
  perturb(f, 0.3, seed + 50);
  return f;
}

dsp::Signal signal_of(const Matrix& m) { return dsp::Signal{{m.data(), m.data() + m.size()}}; }

TEST(Objective, ResidualZeroOnIdentity) {
  const auto f = identity_flow();
  const Matrix y = random_batch(3, 80, 1.0, 1);
  const double sigma = 0.7;
  const ObjectiveTerms t = objective(f, y, y, sigma);
  EXPECT_NEAR(t.noise, 3 * -40.0 * std::log(2 * std::numbers::pi * sigma), 1e-10);
  const double prior = -0.5 * y.squaredNorm() + 3 * -40.0 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(t.prior, prior, 1e-10);
  EXPECT_EQ(t.total, t.prior + t.noise);
}

TEST(Objective, DoublingSigma) {
  const auto f = identity_flow();
  const Matrix y = random_batch(2, 80, 1.0, 2);
  const Matrix x = random_batch(2, 80, 1.0, 3);
  const double sigma = 0.4;
  const double quad = (y - x).squaredNorm() / sigma;
  const double change = objective(f, x, y, 2 * sigma).noise - objective(f, x, y, sigma).noise;
  EXPECT_NEAR(change, 2 * -40.0 * std::log(2.0) + quad / 4.0, 1e-9);
}

TEST(Objective, LargeSigmaLeavesPriorGradient) {
  const auto f = small_flow(1);
  const Matrix y = random_batch(2, 8, 1.0, 4);
  const Matrix x = random_batch(2, 8, 1.0, 5);
  const ObjectiveGradient full = objective_gradient(f, x, y, 1e12);
  const ObjectiveGradient prior = prior_gradient(f, x);
  EXPECT_LT((full.gradient - prior.gradient).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = small_flow(seed);
    const Matrix y = random_batch(3, 8, 1.0, seed + 10);
    const Matrix x0 = random_batch(3, 8, 1.0, seed + 20);
    const double sigma = 0.3 + 0.2 * static_cast<double>(seed);
    const ObjectiveGradient g = objective_gradient(f, x0, y, sigma);
    const std::vector<double> p(x0.data(), x0.data() + x0.size());
    const auto numeric = central_difference(
        [&](const std::vector<double>& v) {
          const Matrix x = Eigen::Map<const Matrix>(v.data(), x0.rows(), x0.cols());
          return objective(f, x, y, sigma).total;
        },
        p);
    const std::vector<double> analytic(g.gradient.data(), g.gradient.data() + g.gradient.size());
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(Objective, RejectsBadSigma) {
  const auto f = identity_flow();
  const Matrix y = random_batch(1, 80, 1.0, 6);
  EXPECT_THROW(objective(f, y, y, 0.0), ContractError);
  EXPECT_THROW(objective(f, random_batch(1, 80, 1.0, 8), random_batch(1, 80, 1.0, 9), -1.0), ContractError);
  EXPECT_THROW(objective(f, y, random_batch(2, 80, 1.0, 7), 1.0), DimensionError);
  EXPECT_THROW(objective(f, random_batch(1, 8, 1.0, 7), random_batch(1, 8, 1.0, 7), 1.0), DimensionError);
}

TEST(Enhance, IdentityPriorReachesClosedFormMap) {
  const auto f = identity_flow();
  const Matrix y = random_batch(4, 80, 1.0, 8);
  const double sigma = 0.5;
  FlowGaussConfig c;
  c.sigma = sigma;
  c.learning_rate = 1e-2;
  c.max_iters = 2000;
  c.stop_threshold.reset();
  c.trace_every = 100;
  const EnhanceResult r = enhance_flow_gauss(f, signal_of(y), c);
  ASSERT_FALSE(r.diverged);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    worst = std::max(worst, std::abs(r.enhanced.samples[i] - y.data()[i] / (1.0 + sigma)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Enhance, GradientDescentAlsoConverges) {
  const auto f = identity_flow();
  const Matrix y = random_batch(2, 80, 1.0, 9);
  FlowGaussConfig c;
  c.sigma = 2.0;
  c.optimizer = Optimizer::kGradientDescent;
  c.learning_rate = 0.3;
  c.max_iters = 200;
  c.stop_threshold.reset();
  const EnhanceResult r = enhance_flow_gauss(f, signal_of(y), c);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(r.enhanced.samples[i], y.data()[i] / 3.0, 1e-10);
}

TEST(Enhance, ZeroStepReturnsInput) {
  const auto f = small_flow(2);
  const dsp::Signal noisy = signal_of(random_batch(1, 100, 0.3, 10));
  FlowGaussConfig c;
  c.learning_rate = 0.0;
  c.max_iters = 1;
  c.stop_threshold.reset();
  EXPECT_EQ(enhance_flow_gauss(f, noisy, c).enhanced.samples, noisy.samples);
}

TEST(Enhance, TraceDecomposesAndMatchesMetrics) {
  const auto f = identity_flow();
  const Matrix clean = random_batch(20, 80, 0.1, 11);
  Matrix noisy = clean + random_batch(20, 80, 0.1, 12);
  FlowGaussConfig c;
  c.sigma = 0.01;
  c.max_iters = 30;
  c.trace_every = 7;
  c.stop_threshold.reset();
  const dsp::Signal ref = signal_of(clean);
  const EnhanceResult r = enhance_flow_gauss(f, signal_of(noisy), c, ref);
  ASSERT_EQ(r.trace.records.front().iter, 0u);
  ASSERT_EQ(r.trace.records.back().iter, 30u);
  for (const TraceRecord& t : r.trace.records) {
    EXPECT_NEAR(t.total, t.prior + t.noise, 1e-12 * std::abs(t.total));
    EXPECT_EQ(t.iter % 7 == 0 || t.iter == 30, true);
  }
  const TraceRecord& last = r.trace.records.back();
  EXPECT_DOUBLE_EQ(last.segsnr, dsp::segmental_snr(ref, r.enhanced));
  EXPECT_DOUBLE_EQ(last.fwsnrseg, dsp::fwsnrseg(ref, r.enhanced));
  const TraceRecord& first = r.trace.records.front();
  EXPECT_DOUBLE_EQ(first.segsnr, dsp::segmental_snr(ref, signal_of(noisy)));
}

TEST(Enhance, NoReferenceGivesNanMetrics) {
  const auto f = identity_flow();
  FlowGaussConfig c;
  c.max_iters = 2;
  c.stop_threshold.reset();
  const EnhanceResult r = enhance_flow_gauss(f, signal_of(random_batch(1, 100, 0.3, 13)), c);
  EXPECT_TRUE(std::isnan(r.trace.records.front().segsnr));
}

TEST(Enhance, StopsWhenPriorClearsThreshold) {
  const auto f = identity_flow();
  const dsp::Signal noisy = signal_of(random_batch(2, 80, 0.01, 14));
  FlowGaussConfig c;
  c.stop_threshold = -1e6;
  const EnhanceResult stopped = enhance_flow_gauss(f, noisy, c);
  EXPECT_TRUE(stopped.stopped_early);
  EXPECT_EQ(stopped.iterations, 0u);
  EXPECT_EQ(stopped.enhanced.samples, noisy.samples);
  c.stop_threshold = 1e6;
  c.max_iters = 5;
  const EnhanceResult ran = enhance_flow_gauss(f, noisy, c);
  EXPECT_FALSE(ran.stopped_early);
  EXPECT_EQ(ran.iterations, 5u);
}

TEST(PriorOnly, IdentityPriorCollapsesToZero) {
  const auto f = identity_flow();
  const dsp::Signal noisy = signal_of(random_batch(3, 80, 1.0, 15));
  PriorOnlyConfig c;
  c.learning_rate = 1e-2;
  c.iters = 1000;
  c.snapshot_iters = {0, 500};
  const PriorOnlyResult r = maximize_prior_only(f, noisy, c);
  EXPECT_LT(r.final_power, 1e-3 * r.initial_power);
  ASSERT_EQ(r.snapshots.size(), 2u);
  EXPECT_EQ(r.snapshots[0].second.samples, noisy.samples);
  std::size_t decreases = 0;
  for (std::size_t k = 1; k < r.trace.records.size(); ++k) {
    if (r.trace.records[k].prior < r.trace.records[k - 1].prior) ++decreases;
  }
  EXPECT_LE(decreases, r.trace.records.size() / 20);
}

TEST(Sweep, PeakSummaryAndCurves) {
  const auto f = identity_flow();
  std::vector<SweepItem> items;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const Matrix clean = random_batch(5, 80, 0.1, 20 + k);
    items.push_back({signal_of(clean), signal_of(clean + random_batch(5, 80, 0.1, 30 + k)), 0.0, 0.01});
  }
  FlowGaussConfig c;
  c.max_iters = 20;
  c.trace_every = 5;
  const SweepReport r = likelihood_quality_sweep(f, items, c, 2);
  ASSERT_EQ(r.utterances.size(), 3u);
  ASSERT_EQ(r.curves.size(), 1u);
  EXPECT_EQ(r.curves[0].utterances, 3u);
  EXPECT_EQ(r.curves[0].mean_trace.size(), 5u);
  for (const auto& u : r.utterances) EXPECT_EQ(u.final_iter, 20u);

  InferenceTrace t;
  for (std::size_t i = 0; i < 5; ++i) {
    TraceRecord rec;
    rec.iter = i * 10;
    rec.segsnr = (i == 2 || i == 3) ? 5.0 : static_cast<double>(i);
    rec.total = static_cast<double>(i);
    t.records.push_back(rec);
  }
  const PeakSummary p = summarise_peak(t, &TraceRecord::segsnr);
  EXPECT_EQ(p.peak_iter, 20u);
  EXPECT_EQ(p.peak_value, 5.0);
  EXPECT_EQ(p.final_value, 4.0);
  EXPECT_EQ(p.total_at_peak, 2.0);
  EXPECT_EQ(p.total_at_final, 4.0);
}

}  // namespace
}  // namespace se::map
