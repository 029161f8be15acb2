#include "se/map/flow_gauss.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "se/dsp/metrics.hpp"
#include "se/errors.hpp"
#include "se/io/csv.hpp"
#include "se/optim/adam.hpp"
#include "se/parallel.hpp"

namespace se::map {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_windows(const flow::Flow& model, const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DimensionError("objective: x and y windowing differ");
  if (static_cast<std::size_t>(x.cols()) != model.dim()) {
    throw DimensionError("objective: windows of " + std::to_string(x.cols()) + " samples, model expects " +
                         std::to_string(model.dim()));
  }
}

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("noise variance must be positive and finite");
}

struct Recorded {
  grad::Var prior;
  grad::Var noise;
  grad::Var total;
};

Recorded record_objective(const flow::Flow& model, grad::Tape& tape, grad::Var x, const Matrix& y, double sigma) {
  const auto bound = model.bind(tape, false);
  const grad::Var prior = grad::sum(flow::record_log_likelihood(model, tape, x, bound));
  const grad::Var diff = grad::sub(tape.constant(to_tensor(y)), x);
  const double windows = static_cast<double>(y.rows());
  const double d = static_cast<double>(y.cols());
  const double log_norm = -0.5 * windows * d * std::log(2.0 * std::numbers::pi * sigma);
  const grad::Var noise =
      grad::add(grad::scale(grad::sum(grad::mul(diff, diff)), -0.5 / sigma), tape.constant(grad::Tensor::scalar(log_norm)));
  return Recorded{prior, noise, grad::add(prior, noise)};
}

/// One ascent step on x along `gradient`, by Adam or plain gradient ascent.
class Ascender {
 public:
  Ascender(Optimizer kind, double lr, const Matrix& x)
      : kind_(kind), lr_(lr), x_(to_tensor(x)), adam_(optim::AdamConfig{lr}, std::vector<const grad::Tensor*>{&x_}) {}

  const grad::Tensor& step(const Matrix& gradient) {
    if (kind_ == Optimizer::kGradientDescent) {
      const double* g = gradient.data();
      for (std::size_t i = 0; i < x_.size(); ++i) x_[i] += lr_ * g[i];
      return x_;
    }
    grad::Tensor descent = to_tensor(-gradient);
    grad::Tensor* params[] = {&x_};
    const grad::Tensor* grads[] = {&descent};
    adam_.step(params, grads);
    return x_;
  }

 private:
  Optimizer kind_;
  double lr_;
  grad::Tensor x_;
  optim::Adam adam_;
};

TraceRecord make_record(std::size_t iter, const ObjectiveTerms& terms, const Matrix& x, std::size_t length, int rate,
                        const std::optional<dsp::Signal>& reference) {
  TraceRecord r{iter, terms.total, terms.prior, terms.noise, kNan, kNan, kNan};
  if (reference) {
    const dsp::Signal estimate = dsp::unframe(x, length, rate);
    r.segsnr = dsp::segmental_snr(*reference, estimate);
    r.fwsnrseg = dsp::fwsnrseg(*reference, estimate);
    double sq = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
      const double e = estimate.samples[i] - reference->samples[i];
      sq += e * e;
    }
    r.dist_ref = std::sqrt(sq);
  }
  return r;
}

void check_inputs(const flow::Flow& model, const dsp::Signal& noisy, const std::optional<dsp::Signal>& reference) {
  dsp::validate(noisy);
  if (noisy.size() < model.dim()) {
    throw ContractError("signal of " + std::to_string(noisy.size()) + " samples is shorter than one window");
  }
  if (reference && reference->size() != noisy.size()) throw ContractError("reference and noisy lengths differ");
}

bool finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

ObjectiveTerms objective(const flow::Flow& model, const Matrix& x, const Matrix& y, double sigma) {
  check_sigma(sigma);
  check_windows(model, x, y);
  grad::Tape tape;
  const Recorded r = record_objective(model, tape, tape.constant(to_tensor(x)), y, sigma);
  return ObjectiveTerms{r.total.value().item(), r.prior.value().item(), r.noise.value().item()};
}

ObjectiveGradient objective_gradient(const flow::Flow& model, const Matrix& x, const Matrix& y, double sigma) {
  check_sigma(sigma);
  check_windows(model, x, y);
  grad::Tape tape;
  const grad::Var input = tape.variable(to_tensor(x));
  const Recorded r = record_objective(model, tape, input, y, sigma);
  const grad::Gradients g = tape.backward(r.total);
  return ObjectiveGradient{ObjectiveTerms{r.total.value().item(), r.prior.value().item(), r.noise.value().item()},
                           to_matrix(g.wrt(input))};
}

ObjectiveGradient prior_gradient(const flow::Flow& model, const Matrix& x) {
  check_windows(model, x, x);
  grad::Tape tape;
  const auto bound = model.bind(tape, false);
  const grad::Var input = tape.variable(to_tensor(x));
  const grad::Var prior = grad::sum(flow::record_log_likelihood(model, tape, input, bound));
  const grad::Gradients g = tape.backward(prior);
  const double p = prior.value().item();
  return ObjectiveGradient{ObjectiveTerms{p, p, 0.0}, to_matrix(g.wrt(input))};
}

EnhanceResult enhance_flow_gauss(const flow::Flow& model, const dsp::Signal& noisy, const FlowGaussConfig& config,
                                 const std::optional<dsp::Signal>& reference) {
  check_inputs(model, noisy, reference);
  check_sigma(config.sigma);
  if (!(config.learning_rate >= 0.0)) throw ContractError("learning rate must be >= 0");
  if (config.max_iters == 0) throw ContractError("max_iters must be >= 1");
  const std::size_t every = std::max<std::size_t>(config.trace_every, 1);
  const std::size_t d = model.dim();
  const Matrix y = dsp::frame(noisy, d, d);
  const double windows = static_cast<double>(y.rows());
  const double norm = config.stop_normalization == StopNormalization::kPerWindow ? windows : windows * static_cast<double>(d);

  Matrix x = y;
  Ascender ascender(config.optimizer, config.learning_rate, x);
  EnhanceResult result;
  std::size_t iter = 0;
  ObjectiveGradient current;
  for (;; ++iter) {
    try {
      current = objective_gradient(model, x, y, config.sigma);
    } catch (const NumericError&) {
      result.diverged = true;
      break;
    }
    if (iter % every == 0 || iter == config.max_iters) {
      result.trace.records.push_back(make_record(iter, current.terms, x, noisy.size(), noisy.sample_rate, reference));
    }
    if (iter == config.max_iters) break;
    if (config.stop_threshold && current.terms.prior / norm >= *config.stop_threshold) {
      if (iter % every != 0) {
        result.trace.records.push_back(make_record(iter, current.terms, x, noisy.size(), noisy.sample_rate, reference));
      }
      result.stopped_early = true;
      break;
    }
    if (!finite(current.gradient)) {
      result.diverged = true;
      break;
    }
    Matrix next = to_matrix(ascender.step(current.gradient));
    if (!finite(next)) {
      result.diverged = true;
      break;
    }
    x = std::move(next);
  }
  result.iterations = iter;
  result.enhanced = dsp::unframe(x, noisy.size(), noisy.sample_rate);
  return result;
}

PriorOnlyResult maximize_prior_only(const flow::Flow& model, const dsp::Signal& noisy, const PriorOnlyConfig& config,
                                    const std::optional<dsp::Signal>& reference) {
  check_inputs(model, noisy, reference);
  if (!(config.learning_rate >= 0.0)) throw ContractError("learning rate must be >= 0");
  const std::size_t every = std::max<std::size_t>(config.trace_every, 1);
  const std::size_t d = model.dim();
  Matrix x = dsp::frame(noisy, d, d);
  Ascender ascender(config.optimizer, config.learning_rate, x);
  PriorOnlyResult result;
  result.initial_power = dsp::mean_power(noisy);

  auto snapshot = [&](std::size_t iter) {
    for (std::size_t s : config.snapshot_iters) {
      if (s == iter) result.snapshots.emplace_back(iter, dsp::unframe(x, noisy.size(), noisy.sample_rate));
    }
  };
  for (std::size_t iter = 0;; ++iter) {
    snapshot(iter);
    ObjectiveGradient current;
    try {
      current = prior_gradient(model, x);
    } catch (const NumericError&) {
      result.diverged = true;
      break;
    }
    if (iter % every == 0 || iter == config.iters) {
      result.trace.records.push_back(make_record(iter, current.terms, x, noisy.size(), noisy.sample_rate, reference));
    }
    if (iter == config.iters) break;
    Matrix next = to_matrix(ascender.step(current.gradient));
    if (!finite(current.gradient) || !finite(next)) {
      result.diverged = true;
      break;
    }
    x = std::move(next);
  }
  result.final_signal = dsp::unframe(x, noisy.size(), noisy.sample_rate);
  result.final_power = dsp::mean_power(result.final_signal);
  return result;
}

PeakSummary summarise_peak(const InferenceTrace& trace, double TraceRecord::*metric) {
  if (trace.records.empty()) throw ContractError("summarise_peak: empty trace");
  PeakSummary s;
  const TraceRecord* best = &trace.records.front();
  for (const auto& r : trace.records) {
    if (r.*metric > best->*metric) best = &r;
  }
  s.peak_iter = best->iter;
  s.peak_value = best->*metric;
  s.total_at_peak = best->total;
  s.initial_value = trace.records.front().*metric;
  s.final_value = trace.records.back().*metric;
  s.total_at_final = trace.records.back().total;
  return s;
}

SweepReport likelihood_quality_sweep(const flow::Flow& model, const std::vector<SweepItem>& corpus,
                                     const FlowGaussConfig& config, std::size_t jobs) {
  if (corpus.empty()) throw ContractError("likelihood_quality_sweep: empty corpus");
  FlowGaussConfig run = config;
  run.stop_threshold.reset();

  std::vector<InferenceTrace> traces(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    FlowGaussConfig c = run;
    c.sigma = corpus[i].sigma;
    EnhanceResult r = enhance_flow_gauss(model, corpus[i].noisy, c, corpus[i].clean);
    if (r.diverged) throw NumericError("sweep: inference diverged on item " + std::to_string(i));
    traces[i] = std::move(r.trace);
  });

  SweepReport report;
  std::map<double, std::vector<std::size_t>> by_snr;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    UtteranceSweep u;
    u.snr_db = corpus[i].snr_db;
    u.final_iter = traces[i].records.back().iter;
    u.segsnr = summarise_peak(traces[i], &TraceRecord::segsnr);
    u.fwsnrseg = summarise_peak(traces[i], &TraceRecord::fwsnrseg);
    report.utterances.push_back(u);
    by_snr[corpus[i].snr_db].push_back(i);
  }
  for (const auto& [snr, items] : by_snr) {
    SnrCurve curve;
    curve.snr_db = snr;
    curve.utterances = items.size();
    curve.mean_trace = traces[items.front()].records;
    for (auto& r : curve.mean_trace) r = TraceRecord{r.iter, 0, 0, 0, 0, 0, 0};
    const double n = static_cast<double>(items.size());
    for (std::size_t i : items) {
      const auto& recs = traces[i].records;
      for (std::size_t k = 0; k < curve.mean_trace.size(); ++k) {
        auto& m = curve.mean_trace[k];
        m.total += recs[k].total / n;
        m.prior += recs[k].prior / n;
        m.noise += recs[k].noise / n;
        m.segsnr += recs[k].segsnr / n;
        m.fwsnrseg += recs[k].fwsnrseg / n;
        m.dist_ref += recs[k].dist_ref / n;
      }
    }
    report.curves.push_back(std::move(curve));
  }
  return report;
}

void write_trace_csv(const std::filesystem::path& path, const InferenceTrace& trace) {
  io::CsvWriter csv(path, {"iter", "total", "prior", "noise", "segsnr", "fwsnrseg", "dist_ref"});
  for (const auto& r : trace.records) {
    csv.cell(r.iter).cell(r.total).cell(r.prior).cell(r.noise).cell(r.segsnr).cell(r.fwsnrseg).cell(r.dist_ref);
    csv.end_row();
  }
  csv.close();
}

}  // namespace se::map
