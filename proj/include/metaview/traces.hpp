#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metaview/geometry.hpp"

namespace metaview {

struct TraceSample {
  double timestamp = 0.0;  // seconds
  Direction direction = Direction::from(kDefaultForward);
};

/// One row of an ingested head-tracking log.
struct LoggedSample {
  int user_id = 0;
  int video_id = 0;
  TraceSample sample;
};

/// Fixed-tick direction series of one user watching one video.
struct Trace {
  int user_id = 0;
  int video_id = 0;
  double tick_seconds = 0.1;
  std::vector<Direction> samples;

  std::size_t size() const { return samples.size(); }
};

struct CsvParseOptions {
  /// Ids applied when the file carries no `user`/`video` columns.
  int default_user = 0;
  int default_video = 0;
  Direction forward = Direction::from(kDefaultForward);
};

/// Parses `t,qw,qx,qy,qz[,px,py,pz]` or `t,x,y,z` logs. Columns may appear in
/// any order; optional `user` and `video` columns override the defaults.
/// Position columns are ignored. Row indices in errors count data rows from 0.
std::vector<LoggedSample> parse_trace_csv(std::istream& in, const CsvParseOptions& options = {});

/// Buckets samples into ticks of `tick_seconds` measured from the first
/// timestamp. A tick's direction is the normalized mean of its samples; empty
/// ticks repeat the previous tick.
Trace resample(const std::vector<TraceSample>& samples, double tick_seconds, int user_id = 0,
               int video_id = 0);

/// Inverse view of a resampled trace: one sample per tick at k * tick_seconds.
std::vector<TraceSample> to_samples(const Trace& trace);

/// Writes a trace in the `t,x,y,z` layout accepted by parse_trace_csv.
void write_trace_csv(std::ostream& out, const Trace& trace);

enum class MotionPattern { fixate, smooth_scan, random_walk, regime_switching };

std::string to_string(MotionPattern pattern);
MotionPattern parse_motion_pattern(const std::string& name);

struct SyntheticUserProfile {
  MotionPattern pattern = MotionPattern::fixate;
  double angular_velocity = 0.0;  // rad/s, >= 0
  double noise = 0.0;             // rad, >= 0; bounded per-sample jitter
  std::uint64_t seed = 0;
  /// Heading persistence of the random walk (von Mises concentration).
  double turn_concentration = 8.0;
  /// Mean phase length of the regime-switching pattern.
  double phase_seconds = 6.0;
  /// Where the user's attention rests; drawn from the seed when unset.
  std::optional<Direction> anchor;
};

/// Deterministic given the profile's seed.
Trace generate_synthetic(const SyntheticUserProfile& profile, double duration_seconds,
                         double tick_seconds, int user_id = 0, int video_id = 0);

}  // namespace metaview
