#include "metaview/traces.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <utility>

#include "metaview/error.hpp"
#include "metaview/io.hpp"

namespace metaview {

namespace {

constexpr double kPi = std::numbers::pi;
// Slack for timestamps that land on a tick boundary after decimal parsing.
constexpr double kTickEpsilon = 1e-9;
constexpr double kUnitSlack = 1e-12;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  for (;;) {
    const auto comma = rest.find(',');
    out.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

long tick_index(double offset, double tick_seconds) {
  return static_cast<long>(std::floor(offset / tick_seconds + kTickEpsilon));
}

// Unit vector orthogonal to d.
Vec3 any_tangent(const Direction& d) {
  const Vec3 helper = std::abs(d.y()) < 0.9 ? Vec3{0.0, 1.0, 0.0} : Vec3{1.0, 0.0, 0.0};
  return Direction::from(cross(helper, d.vec())).vec();
}

// Best & Fisher rejection sampler for the von Mises distribution about 0.
double sample_von_mises(std::mt19937_64& rng, double kappa) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (kappa < 1e-8) return kPi * (2.0 * unit(rng) - 1.0);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    const double z = std::cos(kPi * unit(rng));
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = unit(rng);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double angle = std::acos(std::clamp(f, -1.0, 1.0));
      return unit(rng) < 0.5 ? -angle : angle;
    }
  }
}

// Moving point with a tangent heading, advanced along great circles.
struct Walker {
  Direction position;
  Vec3 heading;

  void turn(double angle) { heading = rotate(heading, position.vec(), angle); }

  void advance(double step) {
    const Vec3 p = position.vec();
    const Vec3 moved = std::cos(step) * p + std::sin(step) * heading;
    const Vec3 carried = std::cos(step) * heading - std::sin(step) * p;
    position = Direction::from(moved);
    // Re-orthogonalize against drift.
    const Vec3 h = carried - dot(carried, position.vec()) * position.vec();
    heading = norm(h) > 1e-12 ? Direction::from(h).vec() : any_tangent(position);
  }
};

Direction jitter(const Direction& d, double noise, std::mt19937_64& rng) {
  if (noise <= 0.0) return d;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double magnitude = noise * unit(rng);
  const double bearing = 2.0 * kPi * unit(rng);
  const Vec3 e1 = any_tangent(d);
  const Vec3 e2 = cross(d.vec(), e1);
  const Vec3 t = std::cos(bearing) * e1 + std::sin(bearing) * e2;
  return Direction::from(std::cos(magnitude) * d.vec() + std::sin(magnitude) * t);
}

}  // namespace

std::vector<LoggedSample> parse_trace_csv(std::istream& in, const CsvParseOptions& options) {
  std::string line;
  while (std::getline(in, line) && trim(line).empty()) {
  }
  if (trim(line).empty()) throw MissingColumn("t");

  std::vector<std::string> header = split_fields(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = header[i];
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    column.emplace(name, i);
  }
  auto has = [&](const char* name) { return column.count(name) > 0; };
  if (!has("t")) throw MissingColumn("t");

  const bool quaternion = has("qw") || has("qx") || has("qy") || has("qz");
  const std::vector<const char*> required =
      quaternion || !(has("x") || has("y") || has("z"))
          ? std::vector<const char*>{"qw", "qx", "qy", "qz"}
          : std::vector<const char*>{"x", "y", "z"};
  for (const char* name : required) {
    if (!has(name)) throw MissingColumn(name);
  }
  std::vector<std::size_t> value_columns;
  for (const char* name : required) value_columns.push_back(column.at(name));
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  const std::size_t user_col = has("user") ? column.at("user") : kAbsent;
  const std::size_t video_col = has("video") ? column.at("video") : kAbsent;

  std::vector<LoggedSample> out;
  std::map<std::pair<int, int>, double> last_time;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw MalformedRow(row, "expected " + std::to_string(header.size()) + " fields");
    }
    auto number = [&](std::size_t col) {
      const auto v = parse_double(fields[col]);
      if (!v) throw MalformedRow(row, "bad value '" + fields[col] + "'");
      return *v;
    };
    auto id = [&](std::size_t col, int fallback) {
      if (col == kAbsent) return fallback;
      const double v = number(col);
      if (v != std::floor(v)) throw MalformedRow(row, "non-integer id");
      return static_cast<int>(v);
    };

    LoggedSample entry;
    entry.user_id = id(user_col, options.default_user);
    entry.video_id = id(video_col, options.default_video);
    entry.sample.timestamp = number(column.at("t"));
    try {
      if (quaternion) {
        const Quaternion q{number(value_columns[0]), number(value_columns[1]),
                           number(value_columns[2]), number(value_columns[3])};
        entry.sample.direction = quat_to_direction(q, options.forward);
      } else {
        const Vec3 v{number(value_columns[0]), number(value_columns[1]),
                     number(value_columns[2])};
        // Rows that are already unit length are kept bit-for-bit.
        entry.sample.direction = std::abs(dot(v, v) - 1.0) <= kUnitSlack ? Direction::from_unit(v)
                                                                        : Direction::from(v);
      }
    } catch (const ZeroVector&) {
      throw MalformedRow(row, "degenerate orientation");
    }

    const auto key = std::make_pair(entry.user_id, entry.video_id);
    const auto prev = last_time.find(key);
    if (prev != last_time.end() && !(entry.sample.timestamp > prev->second)) {
      throw MalformedRow(row, "timestamps must be strictly increasing");
    }
    last_time[key] = entry.sample.timestamp;
    out.push_back(entry);
    ++row;
  }
  return out;
}

Trace resample(const std::vector<TraceSample>& samples, double tick_seconds, int user_id,
               int video_id) {
  if (samples.empty()) throw EmptyTrace();
  if (!(tick_seconds > 0.0)) throw NonPositiveInput("tick_seconds");

  const double start = samples.front().timestamp;
  const long ticks = tick_index(samples.back().timestamp - start, tick_seconds) + 1;

  std::vector<Vec3> sums(static_cast<std::size_t>(ticks));
  std::vector<std::optional<Direction>> last_raw(static_cast<std::size_t>(ticks));
  std::vector<std::size_t> counts(static_cast<std::size_t>(ticks), 0);
  for (const TraceSample& s : samples) {
    const long k = std::clamp(tick_index(s.timestamp - start, tick_seconds), 0L, ticks - 1);
    sums[static_cast<std::size_t>(k)] = sums[static_cast<std::size_t>(k)] + s.direction.vec();
    last_raw[static_cast<std::size_t>(k)] = s.direction;
    ++counts[static_cast<std::size_t>(k)];
  }
  if (!last_raw.front()) throw LeadingGap();

  Trace trace{user_id, video_id, tick_seconds, {}};
  trace.samples.reserve(sums.size());
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (!last_raw[k]) {
      trace.samples.push_back(trace.samples.back());
    } else if (counts[k] == 1) {
      trace.samples.push_back(*last_raw[k]);
    } else if (norm(sums[k]) > kZeroVectorTolerance) {
      trace.samples.push_back(Direction::from(sums[k]));
    } else {
      trace.samples.push_back(*last_raw[k]);
    }
  }
  return trace;
}

std::vector<TraceSample> to_samples(const Trace& trace) {
  std::vector<TraceSample> out;
  out.reserve(trace.samples.size());
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    out.push_back({static_cast<double>(k) * trace.tick_seconds, trace.samples[k]});
  }
  return out;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "t,x,y,z\n";
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const Direction& d = trace.samples[k];
    out << format_double(static_cast<double>(k) * trace.tick_seconds) << ','
        << format_double(d.x()) << ',' << format_double(d.y()) << ',' << format_double(d.z())
        << '\n';
  }
}

std::string to_string(MotionPattern pattern) {
  switch (pattern) {
    case MotionPattern::fixate: return "fixate";
    case MotionPattern::smooth_scan: return "smooth-scan";
    case MotionPattern::random_walk: return "random-walk";
    case MotionPattern::regime_switching: return "regime-switching";
  }
  return "unknown";
}

MotionPattern parse_motion_pattern(const std::string& name) {
  for (MotionPattern p : {MotionPattern::fixate, MotionPattern::smooth_scan,
                          MotionPattern::random_walk, MotionPattern::regime_switching}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown motion pattern '" + name + "'");
}

Trace generate_synthetic(const SyntheticUserProfile& profile, double duration_seconds,
                         double tick_seconds, int user_id, int video_id) {
  if (!(tick_seconds > 0.0)) throw NonPositiveInput("tick_seconds");
  if (duration_seconds < tick_seconds) throw NonPositiveInput("duration shorter than one tick");
  if (profile.angular_velocity < 0.0 || profile.noise < 0.0) {
    throw NonPositiveInput("negative velocity or noise scale");
  }

  std::mt19937_64 rng(profile.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Direction anchor =
      profile.anchor ? *profile.anchor
                     : from_lonlat({kPi * (2.0 * unit(rng) - 1.0), (kPi / 6.0) * (2.0 * unit(rng) - 1.0)});
  Walker walker{anchor, any_tangent(anchor)};
  walker.turn(2.0 * kPi * unit(rng));
  const double scan_sign = unit(rng) < 0.5 ? -1.0 : 1.0;

  const double step = profile.angular_velocity * tick_seconds;
  const std::size_t ticks =
      static_cast<std::size_t>(std::floor(duration_seconds / tick_seconds + kTickEpsilon));
  // Fixation phases pull back toward the anchor with this per-tick fraction.
  const double recall = 1.0 - std::exp(-tick_seconds / 0.5);

  bool wandering = false;
  double phase_left = profile.phase_seconds * (0.5 + unit(rng));

  Trace trace{user_id, video_id, tick_seconds, {}};
  trace.samples.reserve(ticks);
  for (std::size_t k = 0; k < ticks; ++k) {
    switch (profile.pattern) {
      case MotionPattern::fixate:
        break;
      case MotionPattern::smooth_scan:
        if (k > 0) {
          walker.position =
              Direction::from(rotate(walker.position.vec(), {0.0, 1.0, 0.0}, scan_sign * step));
        }
        break;
      case MotionPattern::random_walk:
        if (k > 0) {
          walker.turn(sample_von_mises(rng, profile.turn_concentration));
          walker.advance(step);
        }
        break;
      case MotionPattern::regime_switching:
        if (k > 0) {
          if (wandering) {
            walker.turn(sample_von_mises(rng, profile.turn_concentration));
            walker.advance(step);
          } else {
            const Direction back = slerp(walker.position, anchor, recall);
            walker.position = back;
            walker.heading = any_tangent(back);
            walker.turn(2.0 * kPi * unit(rng));
          }
          phase_left -= tick_seconds;
          if (phase_left <= 0.0) {
            wandering = !wandering;
            phase_left = profile.phase_seconds * (0.5 + unit(rng));
          }
        }
        break;
    }
    trace.samples.push_back(jitter(walker.position, profile.noise, rng));
  }
  return trace;
}

}  // namespace metaview
