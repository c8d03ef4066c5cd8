#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metaview/geometry.hpp"
#include "metaview/seqmodel.hpp"
#include "metaview/stream_sim.hpp"

namespace metaview {

/// Aggregates of one user's run. mae in radians, mspr as a fraction.
struct RunMetrics {
  int user_id = 0;
  double mae = 0.0;
  double mspr = 0.0;
  double total_prefetched_area = 0.0;
};

/// Mean of gamma over the records. Throws EmptyInput.
double mae(std::span<const StepRecord> records);

/// Mean overlap ratio over the records. Throws EmptyInput.
double mspr(std::span<const StepRecord> records);

RunMetrics run_metrics(int user_id, std::span<const StepRecord> records);

/// MSPR gain of ours over baseline for the user with the lowest baseline MSPR
/// (ties go to the lowest user id). Throws MismatchedCohorts, EmptyInput.
double iwp(std::span<const RunMetrics> baseline, std::span<const RunMetrics> ours);

/// Prediction of the model closest to the ground truth. Throws EmptyInput.
Direction ecls_oracle_predict(std::span<const SequenceModelParams> per_user_models,
                              std::span<const double> window, const Direction& truth);

/// Inverse-distance weighted mean of the k nearest predictions, with weights
/// 1 / (distance + 1e-6). Throws EmptyInput, ConfigError for k = 0.
Direction cub360_knn_predict(std::span<const std::pair<Direction, double>> neighbor_predictions,
                             std::size_t k);

/// Forward plus backward cost of one LSTM training step: 3 * 2 S (I + H) H 4.
std::uint64_t flops_per_training_cycle(const ArchSpec& arch);

/// Dense map applied to N inputs: forward 2 N n_in n_out, training total three times that.
std::uint64_t linear_forward_flops(std::uint64_t n, std::uint64_t n_in, std::uint64_t n_out);
std::uint64_t linear_training_flops(std::uint64_t n, std::uint64_t n_in, std::uint64_t n_out);

/// floor(battery / (joules_per_flop * flops_per_step)). Throws NonPositiveInput.
std::uint64_t battery_steps(double battery_joules, double joules_per_flop,
                            std::uint64_t flops_per_step);

/// Per-user comparison of a method against a baseline on one video.
struct MethodComparison {
  std::string method;
  std::string baseline;
  int video_id = 0;
  std::vector<RunMetrics> method_runs;
  std::vector<RunMetrics> baseline_runs;

  double mean_delta_mae() const;
  double mean_delta_mspr() const;
  double iwp() const;
};

/// Builds a comparison; both lists must cover the same user ids. Throws
/// MismatchedCohorts and EmptyInput.
MethodComparison compare(std::string method, std::string baseline, int video_id,
                         std::vector<RunMetrics> method_runs, std::vector<RunMetrics> baseline_runs);

struct CohortReport {
  std::vector<MethodComparison> comparisons;

  /// Degrees for MAE, percent for MSPR and IWP.
  std::string to_json() const;
  /// One row per comparison: min, max and mean of each delta, plus IWP.
  std::string to_csv() const;
};

double degrees(double radians);

}  // namespace metaview
