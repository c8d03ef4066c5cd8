#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "metaview/meta_learn.hpp"
#include "metaview/seqmodel.hpp"
#include "metaview/stream_sim.hpp"
#include "metaview/traces.hpp"

namespace metaview {

/// Synthetic cohort: one motion pattern per user, ids 1..n, on `videos`
/// videos. Each (user, video) draws its own speed and anchor from the seed.
struct CohortConfig {
  std::vector<MotionPattern> users{MotionPattern::fixate,           MotionPattern::smooth_scan,
                                   MotionPattern::fixate,           MotionPattern::smooth_scan,
                                   MotionPattern::regime_switching, MotionPattern::regime_switching,
                                   MotionPattern::regime_switching, MotionPattern::regime_switching};
  std::size_t videos = 1;
  double angular_velocity = 0.5;  // rad/s, scaled per user by [1 - spread, 1 + spread]
  double velocity_spread = 0.25;
  double noise = 0.005;
  double turn_concentration = 8.0;
  double phase_seconds = 6.0;

  friend bool operator==(const CohortConfig&, const CohortConfig&) = default;
};

struct RunConfig {
  std::string traces_dir = "traces";
  std::string checkpoints_dir = "checkpoints";
  std::string output_dir = "out";

  ViewportConfig viewport;
  MetaConfig meta;
  ArchSpec vd_arch{ModelKind::lstm, 3, 128, 3, 100};
  ArchSpec pa_arch{ModelKind::lstm, 1, 128, 1, 100};

  double tick_seconds = 0.1;
  double duration_seconds = 300.0;

  AdaptMode mode = AdaptMode::full;
  std::size_t partial_window = 1200;
  std::size_t adapt_interval = 1;
  bool tile_mode = false;
  std::size_t tile_rows = 16;
  std::size_t tile_cols = 16;

  std::uint64_t seed = 1;
  CohortConfig cohort;
  bool leave_one_out = true;

  std::size_t knn_k = 3;
  bool baselines = true;
  std::size_t workers = 1;

  /// Sequence length shared by both models.
  std::size_t sequence_length() const { return vd_arch.sequence_length; }
  void set_sequence_length(std::size_t s);

  /// Throws ConfigError on any inconsistent value.
  void validate() const;
  SimOptions sim_options() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Flat `section.key = value` text, one line per field, in a fixed order.
std::string emit_config(const RunConfig& config);

/// Reads text in the emitted format. Omitted keys keep their defaults; '#'
/// starts a comment. Throws ConfigError on unknown keys or bad values.
RunConfig parse_config(const std::string& text);
/// Applies the assignments in `text` on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base);

}  // namespace metaview
