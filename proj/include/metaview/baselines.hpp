#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "metaview/meta_learn.hpp"
#include "metaview/stream_sim.hpp"

namespace metaview {

/// A viewing-direction model fitted to one user's own trace with plain SGD:
/// cfg.iterations steps at cfg.local_lr on batches of cfg.batch_size windows.
SequenceModelParams train_user_model(const Trace& trace, const ArchSpec& arch,
                                     const MetaConfig& cfg, std::uint64_t seed);

/// Predictions of a model at every recorded tick t = S .. T-1 of a trace,
/// from the S directions before t. A near-zero output falls back to u(t-1).
std::vector<Direction> model_predictions(const SequenceModelParams& model, const Trace& trace);

/// Baseline runs use a constant prefetch angle.
struct BaselineOptions {
  ViewportConfig viewport;
  double beta = std::numbers::pi / 8.0;
  std::size_t knn_k = 3;
  /// Ticks compared when ranking neighbors.
  std::size_t neighbor_window = 100;
  std::optional<TileGrid> tiles;
};

/// Per tick, the prediction among `predictions` closest to the truth.
/// predictions[m][i] is model m's prediction for tick S + i. Throws EmptyInput.
std::vector<StepRecord> run_ecls(const Trace& target,
                                 std::span<const std::vector<Direction>> predictions,
                                 std::size_t sequence_length, const BaselineOptions& options);

/// Per tick, the inverse-distance weighted mean of the k nearest neighbors'
/// predictions; neighbors are ranked by the mean angular distance between
/// their recent directions and the target's. predictions[m] is neighbor m's
/// model applied to the target trace. Throws EmptyInput, MismatchedCohorts.
std::vector<StepRecord> run_cub360(const Trace& target, std::span<const Trace> neighbors,
                                   std::span<const std::vector<Direction>> predictions,
                                   std::size_t sequence_length, const BaselineOptions& options);

}  // namespace metaview
