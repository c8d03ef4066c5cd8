#include "metaview/meta_learn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metaview/error.hpp"
#include "metaview/io.hpp"

namespace metaview {

namespace {

constexpr std::size_t kReplayChunk = 64;

// Seed scramble so the init stream and the sampling stream never coincide.
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

bool excluded(const Trace& t, const std::optional<UserVideo>& exclusion) {
  return exclusion && exclusion->user_id == t.user_id && exclusion->video_id == t.video_id;
}

}  // namespace

void MetaConfig::validate() const {
  const auto valid = [](double r) { return std::isfinite(r) && r >= 0.0; };
  if (!valid(local_lr) || !valid(meta_lr) || !valid(adapt_lr)) {
    throw ConfigError("learning rates must be finite and non-negative");
  }
  if (local_steps == 0) throw ConfigError("meta.local_steps must be >= 1");
  if (task_batch == 0) throw ConfigError("meta.task_batch must be >= 1");
  if (batch_size == 0) throw ConfigError("meta.batch_size must be >= 1");
}

std::size_t TaskSpec::example_count() const {
  const std::size_t n = ticks();
  return n > sequence_length ? n - sequence_length : 0;
}

TrainingExample TaskSpec::example(std::size_t index) const {
  const auto begin = series->begin() + static_cast<std::ptrdiff_t>(index * dim);
  const auto split = begin + static_cast<std::ptrdiff_t>(sequence_length * dim);
  return {std::vector<double>(begin, split),
          std::vector<double>(split, split + static_cast<std::ptrdiff_t>(dim))};
}

std::vector<TrainingExample> TaskSpec::sample_batch(Rng& rng, std::size_t batch_size) const {
  const std::size_t n = example_count();
  if (n == 0) throw TraceTooShort(ticks(), sequence_length);
  std::vector<TrainingExample> batch;
  if (n <= batch_size) {
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(example(i));
    return batch;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) batch.push_back(example(pick(rng)));
  return batch;
}

std::vector<double> direction_window(std::span<const Direction> directions, std::size_t first,
                                     std::size_t count) {
  std::vector<double> out;
  out.reserve(count * 3);
  for (std::size_t i = first; i < first + count; ++i) {
    out.push_back(directions[i].x());
    out.push_back(directions[i].y());
    out.push_back(directions[i].z());
  }
  return out;
}

TaskPool build_vd_tasks(std::span<const Trace> traces, std::optional<UserVideo> exclusion,
                        std::size_t sequence_length) {
  TaskPool pool{{}, exclusion};
  for (const Trace& trace : traces) {
    if (excluded(trace, exclusion)) continue;
    if (trace.size() <= sequence_length) throw TraceTooShort(trace.size(), sequence_length);
    auto series = std::make_shared<std::vector<double>>(
        direction_window(trace.samples, 0, trace.size()));
    pool.tasks.push_back({TaskKind::viewing_direction, trace.user_id, trace.video_id, 3,
                          sequence_length, std::move(series)});
  }
  return pool;
}

Direction predict_direction(const SequenceModelParams& vd_model, std::span<const double> window,
                            const Direction& fallback) {
  const std::vector<double> y = forward(vd_model, window);
  const Vec3 raw{y.at(0), y.at(1), y.at(2)};
  if (!(norm(raw) > kZeroVectorTolerance)) return fallback;
  return Direction::from(raw);
}

std::vector<double> replay_gamma(const SequenceModelParams& vd_model, const Trace& trace) {
  const std::size_t s = vd_model.arch.sequence_length;
  if (trace.size() <= s) throw TraceTooShort(trace.size(), s);
  if (vd_model.arch.input_dim != 3 || vd_model.arch.output_dim != 3) {
    throw ShapeMismatch("viewing-direction model must map 3-vectors to 3-vectors");
  }
  const std::vector<double> flat = direction_window(trace.samples, 0, trace.size());
  const std::span<const double> all(flat);

  std::vector<double> gamma;
  gamma.reserve(trace.size() - s);
  Direction previous = trace.samples[s - 1];
  for (std::size_t start = s; start < trace.size(); start += kReplayChunk) {
    const std::size_t end = std::min(trace.size(), start + kReplayChunk);
    std::vector<std::span<const double>> windows;
    for (std::size_t t = start; t < end; ++t) windows.push_back(all.subspan((t - s) * 3, s * 3));
    const std::vector<double> y = forward_batch(vd_model, windows);
    for (std::size_t t = start; t < end; ++t) {
      const std::size_t j = (t - start) * 3;
      const Vec3 raw{y[j], y[j + 1], y[j + 2]};
      const Direction predicted =
          norm(raw) > kZeroVectorTolerance ? Direction::from(raw) : previous;
      gamma.push_back(angular_distance(trace.samples[t], predicted));
      previous = predicted;
    }
  }
  return gamma;
}

TaskPool build_pa_tasks(const SequenceModelParams& vd_model, std::span<const Trace> traces,
                        std::optional<UserVideo> exclusion, std::size_t sequence_length) {
  TaskPool pool{{}, exclusion};
  for (const Trace& trace : traces) {
    if (excluded(trace, exclusion)) continue;
    auto gamma = std::make_shared<std::vector<double>>(replay_gamma(vd_model, trace));
    if (gamma->size() <= sequence_length) {
      throw TraceTooShort(trace.size(), vd_model.arch.sequence_length + sequence_length);
    }
    pool.tasks.push_back({TaskKind::prefetch_angle, trace.user_id, trace.video_id, 1,
                          sequence_length, std::move(gamma)});
  }
  return pool;
}

std::vector<double> meta_displacement(std::span<const StochasticObjective> tasks,
                                      std::span<const double> theta, const MetaConfig& cfg,
                                      Rng& rng, double* mean_loss, std::size_t workers) {
  if (tasks.empty()) throw EmptyPool();
  const std::size_t n = cfg.task_batch;
  std::uniform_int_distribution<std::size_t> pick(0, tasks.size() - 1);
  std::vector<std::size_t> chosen(n);
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) {
    chosen[i] = pick(rng);
    seeds[i] = rng();
  }

  std::vector<InnerLoopResult> inner(n);
  parallel_for(n, workers, [&](std::size_t i) {
    Rng task_rng(seeds[i]);
    inner[i] = sgd_k_steps(std::vector<double>(theta.begin(), theta.end()), tasks[chosen[i]],
                           cfg.local_steps, cfg.local_lr, task_rng);
  });

  std::vector<double> grad_total(theta.size(), 0.0);
  double loss = 0.0;
  for (const InnerLoopResult& r : inner) {
    for (std::size_t j = 0; j < grad_total.size(); ++j) grad_total[j] += r.grad_sum[j];
    loss += r.first_loss;
  }
  if (mean_loss) *mean_loss = loss / static_cast<double>(n);

  const double coefficient = cfg.local_lr / static_cast<double>(n);
  for (double& g : grad_total) g *= coefficient;
  return grad_total;
}

std::vector<double> reptile_train(std::span<const StochasticObjective> tasks,
                                  std::vector<double> theta, const MetaConfig& cfg, Rng& rng,
                                  const MetaProgress& progress, std::size_t workers) {
  cfg.validate();
  if (tasks.empty()) throw EmptyPool();
  const std::size_t n = cfg.task_batch;
  // theta - meta_lr * (local_lr / N) * sum(g), folded into one coefficient.
  const double coefficient = (cfg.meta_lr * cfg.local_lr) / static_cast<double>(n);
  std::uniform_int_distribution<std::size_t> pick(0, tasks.size() - 1);
  std::vector<std::size_t> chosen(n);
  std::vector<std::uint64_t> seeds(n);
  std::vector<InnerLoopResult> inner(n);
  std::vector<double> grad_total(theta.size());

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      chosen[i] = pick(rng);
      seeds[i] = rng();
    }
    parallel_for(n, workers, [&](std::size_t i) {
      Rng task_rng(seeds[i]);
      inner[i] = sgd_k_steps(theta, tasks[chosen[i]], cfg.local_steps, cfg.local_lr, task_rng);
    });
    std::fill(grad_total.begin(), grad_total.end(), 0.0);
    double loss = 0.0;
    for (const InnerLoopResult& r : inner) {
      for (std::size_t j = 0; j < grad_total.size(); ++j) grad_total[j] += r.grad_sum[j];
      loss += r.first_loss;
    }
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= coefficient * grad_total[j];
    if (progress) progress(it, loss / static_cast<double>(n));
  }
  return theta;
}

SequenceModelParams reptile_train(const TaskPool& pool, const ArchSpec& arch,
                                  const MetaConfig& cfg, std::uint64_t seed,
                                  const MetaProgress& progress, std::size_t workers) {
  if (pool.tasks.empty()) throw EmptyPool();
  for (const TaskSpec& task : pool.tasks) {
    if (task.dim != arch.input_dim || task.dim != arch.output_dim) {
      throw ShapeMismatch("task dimension does not match the architecture");
    }
    if (task.sequence_length != arch.sequence_length) {
      throw ShapeMismatch("task sequence length does not match the architecture");
    }
  }
  std::vector<StochasticObjective> objectives;
  objectives.reserve(pool.tasks.size());
  const std::size_t batch_size = cfg.batch_size;
  for (const TaskSpec& task : pool.tasks) {
    objectives.push_back(make_objective(
        arch, [task, batch_size](Rng& rng) { return task.sample_batch(rng, batch_size); }));
  }
  SequenceModelParams init = init_params(arch, seed);
  Rng rng(splitmix(seed));
  std::vector<double> trained =
      reptile_train(objectives, std::move(init.values), cfg, rng, progress, workers);
  require_finite(trained, "meta-trained parameters");
  return {arch, std::move(trained)};
}

void adapt_online_in_place(SequenceModelParams& model, const TrainingExample& example,
                           double mu) {
  const LossGrad lg = loss_and_grad(model, std::span<const TrainingExample>(&example, 1));
  sgd_update(model.values, lg.grad, mu);
}

SequenceModelParams adapt_online(const SequenceModelParams& model, const TrainingExample& example,
                                 double mu) {
  SequenceModelParams next = model;
  adapt_online_in_place(next, example, mu);
  return next;
}

}  // namespace metaview
