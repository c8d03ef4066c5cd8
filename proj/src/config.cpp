#include "metaview/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "metaview/error.hpp"
#include "metaview/io.hpp"

namespace metaview {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) throw ConfigError("bad number for " + key + ": '" + v + "'");
  return *d;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("bad count for " + key + ": '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

std::string join_patterns(const std::vector<MotionPattern>& users) {
  std::string out;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (i) out += ',';
    out += to_string(users[i]);
  }
  return out;
}

std::vector<MotionPattern> split_patterns(const std::string& v) {
  std::vector<MotionPattern> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_motion_pattern(item));
  }
  return out;
}

#define REAL(KEY, MEMBER)                                                    \
  Field {                                                                    \
    KEY, [](const RunConfig& c) { return format_double(c.MEMBER); },         \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); } \
  }
#define COUNT(KEY, MEMBER)                                                   \
  Field {                                                                    \
    KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },        \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_count(KEY, v); } \
  }
#define FLAG(KEY, MEMBER)                                                    \
  Field {                                                                    \
    KEY, [](const RunConfig& c) { return from_bool(c.MEMBER); },             \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); } \
  }
#define TEXT(KEY, MEMBER)                                                    \
  Field {                                                                    \
    KEY, [](const RunConfig& c) { return c.MEMBER; },                        \
        [](RunConfig& c, const std::string& v) { c.MEMBER = v; }             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TEXT("paths.traces_dir", traces_dir),
      TEXT("paths.checkpoints_dir", checkpoints_dir),
      TEXT("paths.output_dir", output_dir),
      REAL("viewport.alpha", viewport.alpha),
      REAL("viewport.beta_min", viewport.beta_min),
      REAL("viewport.beta_max", viewport.beta_max),
      REAL("meta.local_lr", meta.local_lr),
      REAL("meta.meta_lr", meta.meta_lr),
      REAL("meta.adapt_lr", meta.adapt_lr),
      COUNT("meta.local_steps", meta.local_steps),
      COUNT("meta.task_batch", meta.task_batch),
      COUNT("meta.iterations", meta.iterations),
      COUNT("meta.batch_size", meta.batch_size),
      Field{"vd.kind", [](const RunConfig& c) { return to_string(c.vd_arch.kind); },
            [](RunConfig& c, const std::string& v) { c.vd_arch.kind = parse_model_kind(v); }},
      COUNT("vd.hidden_dim", vd_arch.hidden_dim),
      Field{"pa.kind", [](const RunConfig& c) { return to_string(c.pa_arch.kind); },
            [](RunConfig& c, const std::string& v) { c.pa_arch.kind = parse_model_kind(v); }},
      COUNT("pa.hidden_dim", pa_arch.hidden_dim),
      REAL("trace.tick_seconds", tick_seconds),
      Field{"trace.sequence_length",
            [](const RunConfig& c) { return std::to_string(c.sequence_length()); },
            [](RunConfig& c, const std::string& v) {
              c.set_sequence_length(to_count("trace.sequence_length", v));
            }},
      REAL("trace.duration_seconds", duration_seconds),
      Field{"sim.mode", [](const RunConfig& c) { return to_string(c.mode); },
            [](RunConfig& c, const std::string& v) { c.mode = parse_adapt_mode(v); }},
      COUNT("sim.partial_window", partial_window),
      COUNT("sim.adapt_interval", adapt_interval),
      FLAG("sim.tile_mode", tile_mode),
      COUNT("sim.tile_rows", tile_rows),
      COUNT("sim.tile_cols", tile_cols),
      Field{"seed.master", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed.master", v); }},
      Field{"cohort.users", [](const RunConfig& c) { return join_patterns(c.cohort.users); },
            [](RunConfig& c, const std::string& v) { c.cohort.users = split_patterns(v); }},
      COUNT("cohort.videos", cohort.videos),
      REAL("cohort.angular_velocity", cohort.angular_velocity),
      REAL("cohort.velocity_spread", cohort.velocity_spread),
      REAL("cohort.noise", cohort.noise),
      REAL("cohort.turn_concentration", cohort.turn_concentration),
      REAL("cohort.phase_seconds", cohort.phase_seconds),
      FLAG("train.leave_one_out", leave_one_out),
      COUNT("train.workers", workers),
      COUNT("eval.knn_k", knn_k),
      FLAG("eval.baselines", baselines),
  };
  return table;
}

#undef REAL
#undef COUNT
#undef FLAG
#undef TEXT

}  // namespace

void RunConfig::set_sequence_length(std::size_t s) {
  vd_arch.sequence_length = s;
  pa_arch.sequence_length = s;
}

void RunConfig::validate() const {
  viewport.validate();
  meta.validate();
  if (vd_arch.input_dim != 3 || vd_arch.output_dim != 3 || pa_arch.input_dim != 1 ||
      pa_arch.output_dim != 1) {
    throw ConfigError("model input and output sizes are fixed");
  }
  if (vd_arch.sequence_length == 0 || vd_arch.hidden_dim == 0 || pa_arch.hidden_dim == 0) {
    throw ConfigError("sequence length and hidden sizes must be positive");
  }
  if (!(tick_seconds > 0.0)) throw ConfigError("trace.tick_seconds must be positive");
  if (!(duration_seconds > 0.0)) throw ConfigError("trace.duration_seconds must be positive");
  if (adapt_interval == 0) throw ConfigError("sim.adapt_interval must be at least 1");
  if (tile_rows == 0 || tile_cols == 0) throw ConfigError("tile grid must be non-empty");
  if (cohort.users.empty()) throw ConfigError("cohort.users is empty");
  if (cohort.videos == 0) throw ConfigError("cohort.videos must be at least 1");
  if (!(cohort.angular_velocity >= 0.0) || !(cohort.velocity_spread >= 0.0) ||
      !(cohort.velocity_spread <= 1.0) || !(cohort.noise >= 0.0) ||
      !(cohort.turn_concentration >= 0.0) || !(cohort.phase_seconds > 0.0)) {
    throw ConfigError("cohort parameters out of range");
  }
  if (knn_k == 0) throw ConfigError("eval.knn_k must be at least 1");
  if (workers == 0) throw ConfigError("train.workers must be at least 1");
}

SimOptions RunConfig::sim_options() const {
  SimOptions o;
  o.viewport = viewport;
  o.mode = mode;
  o.partial_window = partial_window;
  o.adapt_interval = adapt_interval;
  o.vd_adapt_lr = meta.adapt_lr;
  o.pa_adapt_lr = meta.adapt_lr;
  if (tile_mode) o.tiles = TileGrid(tile_rows, tile_cols);
  return o;
}

std::string emit_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

RunConfig parse_config(const std::string& text) { return parse_config(text, RunConfig{}); }

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const Field& f : fields()) {
      if (key == f.key) {
        f.set(base, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  return base;
}

}  // namespace metaview
