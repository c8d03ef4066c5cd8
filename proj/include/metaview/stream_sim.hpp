#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaview/geometry.hpp"
#include "metaview/seqmodel.hpp"
#include "metaview/traces.hpp"

namespace metaview {

/// Fixed viewport half-angle and the range prefetch angles are clamped to.
struct ViewportConfig {
  double alpha = std::numbers::pi / 8.0;
  double beta_min = std::numbers::pi / 8.0;
  double beta_max = std::numbers::pi / 2.0;

  /// Requires 0 < alpha <= beta_min <= beta_max <= pi/2.
  void validate() const;
  /// beta = clamp(clamp(gamma_hat, 0, pi) + alpha, beta_min, beta_max).
  double prefetch_angle(double predicted_gamma) const;

  friend bool operator==(const ViewportConfig&, const ViewportConfig&) = default;
};

struct PrefetchDecision {
  Direction predicted_direction = Direction::from(kDefaultForward);
  double beta = 0.0;
  double predicted_gamma = 0.0;
};

struct TileCounts {
  std::size_t prefetched = 0;
  std::size_t missing = 0;
};

struct StepRecord {
  std::size_t tick = 0;
  Direction actual = Direction::from(kDefaultForward);
  PrefetchDecision decision;  // made at tick - 1
  double gamma = 0.0;
  double overlap_ratio = 0.0;
  double prefetched_area = 0.0;
  double missing_area = 0.0;
  std::optional<TileCounts> tiles;
};

/// Equirectangular grid of rows x cols cells; row 0 touches the +y pole and
/// column 0 starts at longitude -pi.
class TileGrid {
 public:
  TileGrid(std::size_t rows = 16, std::size_t cols = 16);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }

  std::size_t cell_of(const Direction& d) const;
  Direction cell_center(std::size_t cell) const;
  /// Cells whose center lies within `alpha` of u.
  std::vector<std::size_t> viewport_tiles(const Direction& u, double alpha) const;
  /// The 3x3 block around the cell of d; longitude wraps, latitude clamps.
  std::vector<std::size_t> prefetch_block(const Direction& d) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
};

TileCounts tile_mode_step(const Direction& u, const PrefetchDecision& decision,
                          const TileGrid& grid, double alpha);

enum class AdaptMode { full, partial, frozen };

std::string to_string(AdaptMode mode);
AdaptMode parse_adapt_mode(const std::string& name);

struct SimOptions {
  ViewportConfig viewport;
  AdaptMode mode = AdaptMode::full;
  /// Partial mode adapts only while the tick index is below this.
  std::size_t partial_window = 1200;
  /// Adapt on every n-th recorded tick.
  std::size_t adapt_interval = 1;
  double vd_adapt_lr = 0.001;
  double pa_adapt_lr = 0.001;
  std::optional<TileGrid> tiles;
};

/// Called after each recorded tick with the models that will make the next
/// decision.
using SimObserver = std::function<void(std::size_t tick, const SequenceModelParams& vd,
                                       const SequenceModelParams& pa)>;

struct SimulationResult {
  std::vector<StepRecord> records;
  SequenceModelParams final_vd;
  SequenceModelParams final_pa;
  std::size_t adaptation_steps = 0;
};

/// Runs one user through the predict / prefetch / account / adapt loop.
/// The first sequence_length ticks are warm-up and produce no records.
/// Throws TraceTooShort.
SimulationResult simulate_user(const Trace& trace, const SequenceModelParams& vd,
                               const SequenceModelParams& pa, const SimOptions& options,
                               const SimObserver& observer = {});

/// Per-tick overlap accounting for a prefetched cap against the viewport.
StepRecord account_step(std::size_t tick, const Direction& actual, const PrefetchDecision& decision,
                        double alpha);

/// Constant prefetch angle whose cap area equals the mean prefetched area of
/// the run, clamped to [alpha, pi/2]. Throws EmptyInput.
double equal_bandwidth_beta(std::span<const StepRecord> records,
                            double alpha = std::numbers::pi / 8.0);

/// Re-accounts a run as if every prefetch had used the constant angle beta.
std::vector<StepRecord> with_constant_beta(std::span<const StepRecord> records, double beta,
                                           double alpha);

double total_prefetched_area(std::span<const StepRecord> records);

void write_records_csv(std::ostream& out, std::span<const StepRecord> records);
/// Reads what write_records_csv emits. Throws MalformedRow / MissingColumn.
std::vector<StepRecord> read_records_csv(std::istream& in);

}  // namespace metaview
