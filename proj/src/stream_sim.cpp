#include "metaview/stream_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "metaview/error.hpp"
#include "metaview/io.hpp"
#include "metaview/meta_learn.hpp"

namespace metaview {

namespace {

constexpr double kPi = std::numbers::pi;

const char* const kRecordColumns[] = {"t",     "ux",        "uy",   "uz",
                                      "vx",    "vy",        "vz",   "gamma",
                                      "gamma_hat", "beta",  "overlap_ratio",
                                      "prefetched_area", "missing_area"};

bool may_adapt(const SimOptions& o, std::size_t tick, std::size_t first_tick) {
  if ((tick - first_tick) % std::max<std::size_t>(1, o.adapt_interval) != 0) return false;
  switch (o.mode) {
    case AdaptMode::full: return true;
    case AdaptMode::partial: return tick < o.partial_window;
    case AdaptMode::frozen: return false;
  }
  return false;
}

}  // namespace

void ViewportConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= beta_min && beta_min <= beta_max && beta_max <= kMaxHalfAngle)) {
    throw ConfigError("viewport angles must satisfy 0 < alpha <= beta_min <= beta_max <= pi/2");
  }
}

double ViewportConfig::prefetch_angle(double predicted_gamma) const {
  return std::clamp(std::clamp(predicted_gamma, 0.0, kPi) + alpha, beta_min, beta_max);
}

TileGrid::TileGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw ConfigError("tile grid needs at least one row and column");
}

std::size_t TileGrid::cell_of(const Direction& d) const {
  const LonLat ll = to_lonlat(d);
  const auto r = static_cast<long>(std::floor((kPi / 2.0 - ll.lat) / kPi * static_cast<double>(rows_)));
  const auto c = static_cast<long>(std::floor((ll.lon + kPi) / (2.0 * kPi) * static_cast<double>(cols_)));
  const auto row = static_cast<std::size_t>(std::clamp(r, 0L, static_cast<long>(rows_) - 1));
  const auto col = static_cast<std::size_t>(((c % static_cast<long>(cols_)) + static_cast<long>(cols_)) %
                                            static_cast<long>(cols_));
  return row * cols_ + col;
}

Direction TileGrid::cell_center(std::size_t cell) const {
  const std::size_t row = cell / cols_;
  const std::size_t col = cell % cols_;
  const double lat = kPi / 2.0 - (static_cast<double>(row) + 0.5) * kPi / static_cast<double>(rows_);
  const double lon = -kPi + (static_cast<double>(col) + 0.5) * 2.0 * kPi / static_cast<double>(cols_);
  return from_lonlat({lon, lat});
}

std::vector<std::size_t> TileGrid::viewport_tiles(const Direction& u, double alpha) const {
  std::vector<std::size_t> out;
  for (std::size_t cell = 0; cell < size(); ++cell) {
    if (angular_distance(cell_center(cell), u) <= alpha) out.push_back(cell);
  }
  return out;
}

std::vector<std::size_t> TileGrid::prefetch_block(const Direction& d) const {
  const std::size_t center = cell_of(d);
  const long row = static_cast<long>(center / cols_);
  const long col = static_cast<long>(center % cols_);
  const long n_cols = static_cast<long>(cols_);
  std::vector<std::size_t> out;
  for (long dr = -1; dr <= 1; ++dr) {
    const long r = std::clamp(row + dr, 0L, static_cast<long>(rows_) - 1);
    for (long dc = -1; dc <= 1; ++dc) {
      const long c = ((col + dc) % n_cols + n_cols) % n_cols;
      out.push_back(static_cast<std::size_t>(r * n_cols + c));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TileCounts tile_mode_step(const Direction& u, const PrefetchDecision& decision,
                          const TileGrid& grid, double alpha) {
  const std::vector<std::size_t> viewport = grid.viewport_tiles(u, alpha);
  const std::vector<std::size_t> block = grid.prefetch_block(decision.predicted_direction);
  TileCounts counts{block.size(), 0};
  for (std::size_t cell : viewport) {
    if (!std::binary_search(block.begin(), block.end(), cell)) ++counts.missing;
  }
  return counts;
}

std::string to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::full: return "full";
    case AdaptMode::partial: return "partial";
    case AdaptMode::frozen: return "frozen";
  }
  return "unknown";
}

AdaptMode parse_adapt_mode(const std::string& name) {
  if (name == "full" || name == "adaptive-full") return AdaptMode::full;
  if (name == "partial" || name == "adaptive-partial") return AdaptMode::partial;
  if (name == "frozen" || name == "frozen-global") return AdaptMode::frozen;
  throw ConfigError("unknown adaptation mode '" + name + "'");
}

StepRecord account_step(std::size_t tick, const Direction& actual, const PrefetchDecision& decision,
                        double alpha) {
  StepRecord rec;
  rec.tick = tick;
  rec.actual = actual;
  rec.decision = decision;
  rec.gamma = angular_distance(actual, decision.predicted_direction);
  const double viewport = cap_area(alpha);
  const double covered = cap_intersection_area(alpha, decision.beta, rec.gamma);
  rec.overlap_ratio = std::clamp(covered / viewport, 0.0, 1.0);
  rec.prefetched_area = cap_area(decision.beta);
  rec.missing_area = viewport - covered;
  return rec;
}

SimulationResult simulate_user(const Trace& trace, const SequenceModelParams& vd,
                               const SequenceModelParams& pa, const SimOptions& options,
                               const SimObserver& observer) {
  options.viewport.validate();
  if (vd.arch.input_dim != 3 || vd.arch.output_dim != 3) {
    throw ShapeMismatch("viewing-direction model must map 3-vectors to 3-vectors");
  }
  if (pa.arch.input_dim != 1 || pa.arch.output_dim != 1) {
    throw ShapeMismatch("prefetch-angle model must map scalars to scalars");
  }
  const std::size_t s = vd.arch.sequence_length;
  const std::size_t s_pa = pa.arch.sequence_length;
  const std::size_t ticks = trace.size();
  if (ticks <= s) throw TraceTooShort(ticks, s);

  SimulationResult result{{}, vd, pa, 0};
  SequenceModelParams& vd_model = result.final_vd;
  SequenceModelParams& pa_model = result.final_pa;
  result.records.reserve(ticks - s);

  // Errors observed so far, newest last; zeros stand in before the first s_pa.
  std::vector<double> gamma_window(s_pa, 0.0);

  auto decide = [&](std::size_t last_tick, const Direction& fallback) {
    PrefetchDecision d;
    d.predicted_direction =
        predict_direction(vd_model, direction_window(trace.samples, last_tick + 1 - s, s), fallback);
    const double raw_gamma = forward(pa_model, gamma_window).at(0);
    if (!std::isfinite(raw_gamma)) throw NumericError("prefetch-angle model produced a non-finite output");
    d.predicted_gamma = std::clamp(raw_gamma, 0.0, kPi);
    d.beta = options.viewport.prefetch_angle(d.predicted_gamma);
    return d;
  };

  PrefetchDecision decision = decide(s - 1, trace.samples[s - 1]);
  for (std::size_t t = s; t < ticks; ++t) {
    StepRecord rec = account_step(t, trace.samples[t], decision, options.viewport.alpha);
    if (options.tiles) {
      rec.tiles = tile_mode_step(trace.samples[t], decision, *options.tiles, options.viewport.alpha);
    }
    const double observed_gamma = rec.gamma;
    result.records.push_back(rec);

    const std::vector<double> pa_inputs = gamma_window;
    std::rotate(gamma_window.begin(), gamma_window.begin() + 1, gamma_window.end());
    gamma_window.back() = observed_gamma;

    PrefetchDecision next = decision;
    if (t + 1 < ticks) next = decide(t, decision.predicted_direction);

    if (may_adapt(options, t, s)) {
      const TrainingExample vd_example{direction_window(trace.samples, t - s, s),
                                       {trace.samples[t].x(), trace.samples[t].y(),
                                        trace.samples[t].z()}};
      adapt_online_in_place(vd_model, vd_example, options.vd_adapt_lr);
      adapt_online_in_place(pa_model, TrainingExample{pa_inputs, {observed_gamma}},
                            options.pa_adapt_lr);
      ++result.adaptation_steps;
    }
    if (observer) observer(t, vd_model, pa_model);
    decision = next;
  }
  require_finite(vd_model.values, "adapted viewing-direction model");
  require_finite(pa_model.values, "adapted prefetch-angle model");
  return result;
}

double equal_bandwidth_beta(std::span<const StepRecord> records, double alpha) {
  if (records.empty()) throw EmptyInput("step records");
  double height = 0.0;  // mean of 1 - cos(beta), as 2 sin^2(beta / 2)
  for (const StepRecord& r : records) {
    const double s = std::sin(0.5 * r.decision.beta);
    height += 2.0 * s * s;
  }
  height /= static_cast<double>(records.size());
  const double beta = 2.0 * std::asin(std::sqrt(std::clamp(height / 2.0, 0.0, 1.0)));
  return std::clamp(beta, alpha, kMaxHalfAngle);
}

std::vector<StepRecord> with_constant_beta(std::span<const StepRecord> records, double beta,
                                           double alpha) {
  std::vector<StepRecord> out;
  out.reserve(records.size());
  for (const StepRecord& r : records) {
    PrefetchDecision d = r.decision;
    d.beta = beta;
    StepRecord rescored = account_step(r.tick, r.actual, d, alpha);
    rescored.tiles = r.tiles;
    out.push_back(rescored);
  }
  return out;
}

double total_prefetched_area(std::span<const StepRecord> records) {
  double total = 0.0;
  for (const StepRecord& r : records) total += r.prefetched_area;
  return total;
}

void write_records_csv(std::ostream& out, std::span<const StepRecord> records) {
  const bool tiles = !records.empty() && records.front().tiles.has_value();
  for (std::size_t i = 0; i < std::size(kRecordColumns); ++i) {
    out << (i ? "," : "") << kRecordColumns[i];
  }
  if (tiles) out << ",prefetched_tiles,missing_tiles";
  out << '\n';
  for (const StepRecord& r : records) {
    const Direction& u = r.actual;
    const Direction& v = r.decision.predicted_direction;
    out << r.tick;
    for (double x : {u.x(), u.y(), u.z(), v.x(), v.y(), v.z(), r.gamma, r.decision.predicted_gamma,
                     r.decision.beta, r.overlap_ratio, r.prefetched_area, r.missing_area}) {
      out << ',' << format_double(x);
    }
    if (tiles) {
      const TileCounts c = r.tiles.value_or(TileCounts{});
      out << ',' << c.prefetched << ',' << c.missing;
    }
    out << '\n';
  }
}

std::vector<StepRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw MissingColumn("t");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      header.push_back(field);
    }
  }
  for (std::size_t i = 0; i < std::size(kRecordColumns); ++i) {
    if (i >= header.size() || header[i] != kRecordColumns[i]) throw MissingColumn(kRecordColumns[i]);
  }
  const bool tiles = header.size() == std::size(kRecordColumns) + 2;
  if (!tiles && header.size() != std::size(kRecordColumns)) throw MalformedRow(0, "unexpected header");

  std::vector<StepRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      const std::optional<double> v = parse_double(field);
      if (!v) throw MalformedRow(row, "bad value '" + field + "'");
      values.push_back(*v);
    }
    if (values.size() != header.size()) throw MalformedRow(row, "wrong field count");
    StepRecord r;
    try {
      r.tick = static_cast<std::size_t>(values[0]);
      r.actual = Direction::from_unit({values[1], values[2], values[3]});
      r.decision.predicted_direction = Direction::from_unit({values[4], values[5], values[6]});
    } catch (const std::invalid_argument&) {
      throw MalformedRow(row, "direction is not unit length");
    }
    r.gamma = values[7];
    r.decision.predicted_gamma = values[8];
    r.decision.beta = values[9];
    r.overlap_ratio = values[10];
    r.prefetched_area = values[11];
    r.missing_area = values[12];
    if (tiles) {
      r.tiles = TileCounts{static_cast<std::size_t>(values[13]), static_cast<std::size_t>(values[14])};
    }
    records.push_back(r);
    ++row;
  }
  return records;
}

}  // namespace metaview
