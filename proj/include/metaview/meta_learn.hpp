#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "metaview/geometry.hpp"
#include "metaview/seqmodel.hpp"
#include "metaview/traces.hpp"

namespace metaview {

/// Learning rates and schedule for Reptile training and online adaptation.
struct MetaConfig {
  double local_lr = 0.1;    // inner SGD rate
  double meta_lr = 0.1;     // outer (meta) rate
  double adapt_lr = 0.001;  // online adaptation rate
  std::size_t local_steps = 1;
  std::size_t task_batch = 10;  // tasks sampled per meta-iteration
  std::size_t iterations = 200;
  std::size_t batch_size = 16;  // windows per inner SGD step

  /// Throws ConfigError on negative rates or zero counts.
  void validate() const;

  friend bool operator==(const MetaConfig&, const MetaConfig&) = default;
};

enum class TaskKind { viewing_direction, prefetch_angle };

/// One (user, video) series cut into sliding windows. The series is stored
/// flat, `dim` values per tick.
struct TaskSpec {
  TaskKind kind = TaskKind::viewing_direction;
  int user_id = 0;
  int video_id = 0;
  std::size_t dim = 3;
  std::size_t sequence_length = 100;
  std::shared_ptr<const std::vector<double>> series;

  std::size_t ticks() const { return series ? series->size() / dim : 0; }
  /// Windows of sequence_length ticks followed by a label tick.
  std::size_t example_count() const;
  TrainingExample example(std::size_t index) const;
  /// `batch_size` windows drawn uniformly with replacement; a task with no
  /// more windows than that is returned whole, in order.
  std::vector<TrainingExample> sample_batch(Rng& rng, std::size_t batch_size) const;
};

struct UserVideo {
  int user_id = 0;
  int video_id = 0;
  friend bool operator==(const UserVideo&, const UserVideo&) = default;
};

struct TaskPool {
  std::vector<TaskSpec> tasks;
  std::optional<UserVideo> exclusion;
};

/// Viewing-direction tasks: windows of directions, next direction as label.
/// Traces matching the exclusion are skipped. Throws TraceTooShort.
TaskPool build_vd_tasks(std::span<const Trace> traces, std::optional<UserVideo> exclusion,
                        std::size_t sequence_length);

/// Per-tick prediction errors gamma(t) obtained by replaying a frozen
/// viewing-direction model over a trace, for t = S .. T-1.
std::vector<double> replay_gamma(const SequenceModelParams& vd_model, const Trace& trace);

/// Prefetch-angle tasks built from replayed gamma series.
TaskPool build_pa_tasks(const SequenceModelParams& vd_model, std::span<const Trace> traces,
                        std::optional<UserVideo> exclusion, std::size_t sequence_length);

/// Optional per-iteration hook: (iteration, mean first-step loss of the tasks).
using MetaProgress = std::function<void(std::size_t, double)>;

/// Reptile displacement for one meta-iteration: samples task_batch tasks
/// uniformly with replacement, runs local_steps SGD steps on each from theta
/// and returns mean(theta - theta'_i), computed as local_lr / N times the sum
/// of the inner gradients.
std::vector<double> meta_displacement(std::span<const StochasticObjective> tasks,
                                      std::span<const double> theta, const MetaConfig& cfg,
                                      Rng& rng, double* mean_loss = nullptr,
                                      std::size_t workers = 1);

/// Generic Reptile loop: theta <- theta - meta_lr * displacement, per iteration.
std::vector<double> reptile_train(std::span<const StochasticObjective> tasks,
                                  std::vector<double> theta, const MetaConfig& cfg, Rng& rng,
                                  const MetaProgress& progress = {}, std::size_t workers = 1);

/// Reptile on a task pool, starting from init_params(arch, seed).
/// Throws EmptyPool. Deterministic given seed.
SequenceModelParams reptile_train(const TaskPool& pool, const ArchSpec& arch,
                                  const MetaConfig& cfg, std::uint64_t seed,
                                  const MetaProgress& progress = {}, std::size_t workers = 1);

/// One SGD step on the freshest example at rate mu.
SequenceModelParams adapt_online(const SequenceModelParams& model, const TrainingExample& example,
                                 double mu);
void adapt_online_in_place(SequenceModelParams& model, const TrainingExample& example, double mu);

/// Normalized model output, or `fallback` when the raw output is ~zero.
Direction predict_direction(const SequenceModelParams& vd_model, std::span<const double> window,
                            const Direction& fallback);

/// Flattens directions [first, first + count) into a model window.
std::vector<double> direction_window(std::span<const Direction> directions, std::size_t first,
                                     std::size_t count);

}  // namespace metaview
