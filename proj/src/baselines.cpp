#include "metaview/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "metaview/error.hpp"
#include "metaview/metrics.hpp"

namespace metaview {

namespace {

constexpr std::size_t kPredictionChunk = 64;

PrefetchDecision constant_decision(const Direction& predicted, const BaselineOptions& options) {
  PrefetchDecision d;
  d.predicted_direction = predicted;
  d.beta = std::clamp(options.beta, options.viewport.alpha, kMaxHalfAngle);
  d.predicted_gamma = d.beta - options.viewport.alpha;
  return d;
}

StepRecord record_for(const Trace& target, std::size_t t, const Direction& predicted,
                      const BaselineOptions& options) {
  const PrefetchDecision d = constant_decision(predicted, options);
  StepRecord rec = account_step(t, target.samples[t], d, options.viewport.alpha);
  if (options.tiles) {
    rec.tiles = tile_mode_step(target.samples[t], d, *options.tiles, options.viewport.alpha);
  }
  return rec;
}

void check_predictions(std::span<const std::vector<Direction>> predictions, std::size_t expected) {
  if (predictions.empty()) throw EmptyInput("no per-user predictions");
  for (const auto& p : predictions) {
    if (p.size() != expected) throw MismatchedCohorts("prediction stream length differs from trace");
  }
}

}  // namespace

SequenceModelParams train_user_model(const Trace& trace, const ArchSpec& arch,
                                     const MetaConfig& cfg, std::uint64_t seed) {
  const Trace single[] = {trace};
  const TaskPool pool = build_vd_tasks(single, std::nullopt, arch.sequence_length);
  const TaskSpec task = pool.tasks.at(0);
  Rng rng(seed ^ 0x5bd1e995u);
  const std::size_t batch = cfg.batch_size;
  SequenceModelParams model = sgd_k_steps(
      init_params(arch, seed), [&](Rng& r) { return task.sample_batch(r, batch); },
      cfg.iterations, cfg.local_lr, rng);
  require_finite(model.values, "per-user model");
  return model;
}

std::vector<Direction> model_predictions(const SequenceModelParams& model, const Trace& trace) {
  const std::size_t s = model.arch.sequence_length;
  if (trace.size() <= s) throw TraceTooShort(trace.size(), s);
  std::vector<Direction> out;
  out.reserve(trace.size() - s);
  for (std::size_t start = s; start < trace.size(); start += kPredictionChunk) {
    const std::size_t end = std::min(trace.size(), start + kPredictionChunk);
    std::vector<std::vector<double>> windows;
    for (std::size_t t = start; t < end; ++t) {
      windows.push_back(direction_window(trace.samples, t - s, s));
    }
    std::vector<std::span<const double>> views(windows.begin(), windows.end());
    const std::vector<double> raw = forward_batch(model, views);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const Vec3 v{raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
      const bool usable = std::isfinite(norm(v)) && norm(v) > kZeroVectorTolerance;
      out.push_back(usable ? Direction::from(v) : trace.samples[start + i - 1]);
    }
  }
  return out;
}

std::vector<StepRecord> run_ecls(const Trace& target,
                                 std::span<const std::vector<Direction>> predictions,
                                 std::size_t sequence_length, const BaselineOptions& options) {
  options.viewport.validate();
  if (target.size() <= sequence_length) throw TraceTooShort(target.size(), sequence_length);
  check_predictions(predictions, target.size() - sequence_length);
  std::vector<StepRecord> records;
  records.reserve(target.size() - sequence_length);
  for (std::size_t t = sequence_length; t < target.size(); ++t) {
    const std::size_t i = t - sequence_length;
    const Direction& truth = target.samples[t];
    const Direction* best = &predictions[0][i];
    double best_error = angular_distance(*best, truth);
    for (std::size_t m = 1; m < predictions.size(); ++m) {
      const double e = angular_distance(predictions[m][i], truth);
      if (e < best_error) {
        best = &predictions[m][i];
        best_error = e;
      }
    }
    records.push_back(record_for(target, t, *best, options));
  }
  return records;
}

std::vector<StepRecord> run_cub360(const Trace& target, std::span<const Trace> neighbors,
                                   std::span<const std::vector<Direction>> predictions,
                                   std::size_t sequence_length, const BaselineOptions& options) {
  options.viewport.validate();
  if (target.size() <= sequence_length) throw TraceTooShort(target.size(), sequence_length);
  if (neighbors.size() != predictions.size()) {
    throw MismatchedCohorts("one prediction stream per neighbor is required");
  }
  check_predictions(predictions, target.size() - sequence_length);
  const std::size_t w = std::max<std::size_t>(1, options.neighbor_window);

  std::vector<StepRecord> records;
  records.reserve(target.size() - sequence_length);
  std::vector<std::pair<Direction, double>> candidates;
  for (std::size_t t = sequence_length; t < target.size(); ++t) {
    const std::size_t i = t - sequence_length;
    const std::size_t first = t > w ? t - w : 0;
    candidates.clear();
    for (std::size_t m = 0; m < neighbors.size(); ++m) {
      const Trace& nb = neighbors[m];
      if (nb.size() < t) continue;
      double sum = 0.0;
      for (std::size_t j = first; j < t; ++j) {
        sum += angular_distance(target.samples[j], nb.samples[j]);
      }
      candidates.emplace_back(predictions[m][i], sum / static_cast<double>(t - first));
    }
    if (candidates.empty()) throw EmptyInput("no neighbor covers tick " + std::to_string(t));
    records.push_back(
        record_for(target, t, cub360_knn_predict(candidates, options.knn_k), options));
  }
  return records;
}

}  // namespace metaview
