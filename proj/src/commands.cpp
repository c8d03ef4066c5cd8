#include "metaview/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "metaview/baselines.hpp"
#include "metaview/checkpoint.hpp"
#include "metaview/error.hpp"
#include "metaview/io.hpp"
#include "metaview/meta_learn.hpp"

namespace fs = std::filesystem;

namespace metaview {

namespace {

constexpr double kBatteryJoules = 50400.0;
constexpr double kJoulesPerFlop = 1.18e-11;
constexpr double kBandwidthTolerance = 1e-6;

constexpr const char* kBaselineMethods[] = {"frozen", "ecls", "cub360"};
constexpr const char* kAdaptiveMethods[] = {"full", "partial"};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

fs::path under(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::map<int, std::vector<const Trace*>> by_video(std::span<const Trace> traces) {
  std::map<int, std::vector<const Trace*>> out;
  for (const Trace& t : traces) out[t.video_id].push_back(&t);
  return out;
}

std::vector<Trace> copies(const std::vector<const Trace*>& ptrs) {
  std::vector<Trace> out;
  out.reserve(ptrs.size());
  for (const Trace* t : ptrs) out.push_back(*t);
  return out;
}

std::string records_text(std::span<const StepRecord> records) {
  std::ostringstream out;
  write_records_csv(out, records);
  return out.str();
}

void check_arch(const SequenceModelParams& p, const ArchSpec& expected, const fs::path& stem) {
  if (!(p.arch == expected)) {
    throw ConfigError("checkpoint " + stem.string() + " does not match the configured architecture");
  }
}

}  // namespace

Layout Layout::of(const RunConfig& config) {
  Layout l;
  l.output = config.output_dir;
  l.traces = under(l.output, config.traces_dir);
  l.checkpoints = under(l.output, config.checkpoints_dir);
  l.records = l.output / "records";
  return l;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

SyntheticUserProfile cohort_profile(const RunConfig& config, int user, int video) {
  const CohortConfig& c = config.cohort;
  const auto index = static_cast<std::size_t>(user - 1);
  if (user < 1 || index >= c.users.size()) throw ConfigError("user id outside the cohort");
  SyntheticUserProfile p;
  p.pattern = c.users[index];
  p.seed = derive_seed(config.seed, static_cast<std::uint64_t>(user),
                       static_cast<std::uint64_t>(video), 1);
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(user),
                      static_cast<std::uint64_t>(video), 2));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  p.angular_velocity = c.angular_velocity * (1.0 + c.velocity_spread * (2.0 * unit(rng) - 1.0));
  p.noise = c.noise;
  p.turn_concentration = c.turn_concentration;
  p.phase_seconds = c.phase_seconds;
  // Users of one video share a region of interest, offset per user.
  Rng video_rng(derive_seed(config.seed, 0, static_cast<std::uint64_t>(video), 3));
  const double lon = std::numbers::pi * (2.0 * unit(video_rng) - 1.0);
  const double lat = (std::numbers::pi / 6.0) * (2.0 * unit(video_rng) - 1.0);
  const double offset_lon = 0.3 * (2.0 * unit(rng) - 1.0);
  const double offset_lat = 0.15 * (2.0 * unit(rng) - 1.0);
  p.anchor = from_lonlat({lon + offset_lon, lat + offset_lat});
  return p;
}

std::vector<Trace> generate_cohort(const RunConfig& config) {
  config.validate();
  std::vector<Trace> out;
  for (std::size_t v = 1; v <= config.cohort.videos; ++v) {
    for (std::size_t u = 1; u <= config.cohort.users.size(); ++u) {
      const int user = static_cast<int>(u);
      const int video = static_cast<int>(v);
      out.push_back(generate_synthetic(cohort_profile(config, user, video), config.duration_seconds,
                                       config.tick_seconds, user, video));
    }
  }
  return out;
}

std::string trace_file_name(int user, int video) {
  return "user_" + std::to_string(user) + "_video_" + std::to_string(video) + ".csv";
}

std::string checkpoint_stem(const std::string& kind, int user, int video) {
  return kind + "_user_" + std::to_string(user) + "_video_" + std::to_string(video);
}

std::vector<Trace> load_traces(const fs::path& dir, double tick_seconds) {
  if (!fs::is_directory(dir)) throw IoError("trace directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInput("no trace files in " + dir.string());

  static const std::regex name_pattern(R"(user_(\d+)_video_(\d+)\.csv)");
  std::map<std::pair<int, int>, std::vector<TraceSample>> grouped;
  for (const fs::path& file : files) {
    CsvParseOptions options;
    std::smatch m;
    const std::string name = file.filename().string();
    if (std::regex_match(name, m, name_pattern)) {
      options.default_user = std::stoi(m[1].str());
      options.default_video = std::stoi(m[2].str());
    }
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    for (const LoggedSample& s : parse_trace_csv(in, options)) {
      grouped[{s.video_id, s.user_id}].push_back(s.sample);
    }
  }
  std::vector<Trace> out;
  for (auto& [key, samples] : grouped) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const TraceSample& a, const TraceSample& b) { return a.timestamp < b.timestamp; });
    out.push_back(resample(samples, tick_seconds, key.second, key.first));
  }
  return out;
}

MetaPair train_meta_pair(const RunConfig& config, std::span<const Trace> traces,
                         std::optional<UserVideo> exclusion,
                         const std::function<void(const char*, std::size_t, double)>& log) {
  const std::uint64_t user = exclusion ? static_cast<std::uint64_t>(exclusion->user_id) : 0;
  const std::uint64_t video = exclusion ? static_cast<std::uint64_t>(exclusion->video_id) : 0;
  const std::size_t s = config.sequence_length();

  const TaskPool vd_pool = build_vd_tasks(traces, exclusion, s);
  MetaPair pair;
  pair.vd = reptile_train(
      vd_pool, config.vd_arch, config.meta, derive_seed(config.seed, user, video, 10),
      [&](std::size_t it, double loss) {
        if (log) log("vd", it, loss);
      },
      config.workers);
  const TaskPool pa_pool = build_pa_tasks(pair.vd, traces, exclusion, s);
  pair.pa = reptile_train(
      pa_pool, config.pa_arch, config.meta, derive_seed(config.seed, user, video, 11),
      [&](std::size_t it, double loss) {
        if (log) log("pa", it, loss);
      },
      config.workers);
  return pair;
}

std::vector<fs::path> cmd_gen_traces(const RunConfig& config, std::ostream& log) {
  const Layout layout = Layout::of(config);
  std::vector<fs::path> written;
  for (const Trace& trace : generate_cohort(config)) {
    std::ostringstream text;
    write_trace_csv(text, trace);
    const fs::path path = layout.traces / trace_file_name(trace.user_id, trace.video_id);
    atomic_write(path, text.str());
    written.push_back(path);
  }
  log << "wrote " << written.size() << " traces to " << layout.traces.string() << '\n';
  return written;
}

void cmd_train_meta(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Layout layout = Layout::of(config);
  const std::vector<Trace> traces = load_traces(layout.traces, config.tick_seconds);

  std::ostringstream train_log;
  train_log << "model,user,video,iteration,loss\n";
  auto save = [&](const std::string& kind, int user, int video, const MetaPair& pair,
                  std::optional<UserVideo> exclusion) {
    const std::uint64_t u = exclusion ? static_cast<std::uint64_t>(user) : 0;
    const std::uint64_t v = exclusion ? static_cast<std::uint64_t>(video) : 0;
    const std::string suffix =
        exclusion ? checkpoint_stem("", user, video).substr(1) : std::string("shared");
    save_checkpoint(layout.checkpoints / ("vd_" + suffix), {pair.vd, derive_seed(config.seed, u, v, 10)});
    save_checkpoint(layout.checkpoints / ("pa_" + suffix), {pair.pa, derive_seed(config.seed, u, v, 11)});
    log << "trained " << kind << ' ' << suffix << " vd=" << hex64(params_hash(pair.vd))
        << " pa=" << hex64(params_hash(pair.pa)) << '\n';
  };

  if (config.leave_one_out) {
    for (const auto& [video, members] : by_video(traces)) {
      const std::vector<Trace> pool = copies(members);
      for (const Trace* t : members) {
        const UserVideo exclusion{t->user_id, video};
        const MetaPair pair =
            train_meta_pair(config, pool, exclusion, [&](const char* model, std::size_t it, double loss) {
              train_log << model << ',' << t->user_id << ',' << video << ',' << it << ','
                        << format_double(loss) << '\n';
            });
        save("leave-one-out", t->user_id, video, pair, exclusion);
      }
    }
  } else {
    const MetaPair pair =
        train_meta_pair(config, traces, std::nullopt, [&](const char* model, std::size_t it, double loss) {
          train_log << model << ",all,all," << it << ',' << format_double(loss) << '\n';
        });
    save("shared", 0, 0, pair, std::nullopt);
  }
  atomic_write(layout.checkpoints / "train_log.csv", train_log.str());
}

void cmd_simulate(const RunConfig& config, const std::vector<AdaptMode>& modes, std::ostream& log) {
  config.validate();
  const Layout layout = Layout::of(config);
  const std::vector<Trace> traces = load_traces(layout.traces, config.tick_seconds);
  const SimOptions base_options = config.sim_options();

  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  // (video, user) -> equal-bandwidth angle of the first adaptive run.
  std::map<std::pair<int, int>, double> reference_beta;

  for (const Trace& trace : traces) {
    const std::string suffix = checkpoint_stem("", trace.user_id, trace.video_id).substr(1);
    const fs::path vd_stem = layout.checkpoints / ("vd_" + (config.leave_one_out ? suffix : "shared"));
    const fs::path pa_stem = layout.checkpoints / ("pa_" + (config.leave_one_out ? suffix : "shared"));
    const Checkpoint vd = load_checkpoint(vd_stem);
    const Checkpoint pa = load_checkpoint(pa_stem);
    check_arch(vd.params, config.vd_arch, vd_stem);
    check_arch(pa.params, config.pa_arch, pa_stem);

    for (const AdaptMode mode : modes) {
      SimOptions options = base_options;
      options.mode = mode;
      const SimulationResult result = simulate_user(trace, vd.params, pa.params, options);
      const std::string method = to_string(mode);
      atomic_write(layout.records / method / trace_file_name(trace.user_id, trace.video_id),
                   records_text(result.records));
      const RunMetrics m = run_metrics(trace.user_id, result.records);
      const double beta_star = equal_bandwidth_beta(result.records, config.viewport.alpha);
      if (mode != AdaptMode::frozen) reference_beta.emplace(std::make_pair(trace.video_id, trace.user_id), beta_star);
      summary.push_back({{"method", method},
                         {"user", trace.user_id},
                         {"video", trace.video_id},
                         {"ticks", result.records.size()},
                         {"adaptation_steps", result.adaptation_steps},
                         {"mae_deg", degrees(m.mae)},
                         {"mspr_pct", 100.0 * m.mspr},
                         {"prefetched_area", m.total_prefetched_area},
                         {"equal_bandwidth_beta", beta_star},
                         {"final_vd_hash", hex64(params_hash(result.final_vd))},
                         {"final_pa_hash", hex64(params_hash(result.final_pa))}});
      log << method << " user " << trace.user_id << " video " << trace.video_id
          << ": MAE " << std::fixed << std::setprecision(3) << degrees(m.mae) << " deg, MSPR "
          << 100.0 * m.mspr << " %\n"
          << std::defaultfloat;
    }
  }

  if (config.baselines) {
    for (const auto& [video, members] : by_video(traces)) {
      if (members.size() < 2) {
        log << "video " << video << ": baselines need at least two users, skipped\n";
        continue;
      }
      std::vector<SequenceModelParams> user_models;
      for (const Trace* t : members) {
        user_models.push_back(train_user_model(
            *t, config.vd_arch, config.meta,
            derive_seed(config.seed, static_cast<std::uint64_t>(t->user_id),
                        static_cast<std::uint64_t>(video), 20)));
      }
      for (std::size_t target = 0; target < members.size(); ++target) {
        const Trace& trace = *members[target];
        std::vector<std::vector<Direction>> predictions;
        std::vector<Trace> neighbors;
        for (std::size_t m = 0; m < members.size(); ++m) {
          if (m == target) continue;
          predictions.push_back(model_predictions(user_models[m], trace));
          neighbors.push_back(*members[m]);
        }
        BaselineOptions options;
        options.viewport = config.viewport;
        options.knn_k = config.knn_k;
        options.neighbor_window = config.sequence_length();
        if (config.tile_mode) options.tiles = TileGrid(config.tile_rows, config.tile_cols);
        const auto ref = reference_beta.find({video, trace.user_id});
        options.beta = ref != reference_beta.end() ? ref->second : config.viewport.beta_min;

        const std::size_t s = config.sequence_length();
        const std::pair<const char*, std::vector<StepRecord>> runs[] = {
            {"ecls", run_ecls(trace, predictions, s, options)},
            {"cub360", run_cub360(trace, neighbors, predictions, s, options)}};
        for (const auto& [method, records] : runs) {
          atomic_write(layout.records / method / trace_file_name(trace.user_id, video),
                       records_text(records));
          const RunMetrics m = run_metrics(trace.user_id, records);
          summary.push_back({{"method", method},
                             {"user", trace.user_id},
                             {"video", video},
                             {"ticks", records.size()},
                             {"mae_deg", degrees(m.mae)},
                             {"mspr_pct", 100.0 * m.mspr},
                             {"prefetched_area", m.total_prefetched_area},
                             {"beta", options.beta}});
          log << method << " user " << trace.user_id << " video " << video << ": MAE "
              << std::fixed << std::setprecision(3) << degrees(m.mae) << " deg, MSPR "
              << 100.0 * m.mspr << " %\n"
              << std::defaultfloat;
        }
      }
    }
  }
  atomic_write(layout.records / "summary.json", summary.dump(2) + "\n");
}

std::map<std::pair<int, int>, std::vector<StepRecord>> load_method_records(
    const fs::path& records_dir, const std::string& method) {
  std::map<std::pair<int, int>, std::vector<StepRecord>> out;
  const fs::path dir = records_dir / method;
  if (!fs::is_directory(dir)) return out;
  static const std::regex name_pattern(R"(user_(\d+)_video_(\d+)\.csv)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, name_pattern)) continue;
    std::ifstream in(entry.path());
    if (!in) throw IoError("cannot open " + entry.path().string());
    out[{std::stoi(m[2].str()), std::stoi(m[1].str())}] = read_records_csv(in);
  }
  return out;
}

CohortReport build_report(
    const std::map<std::string, std::map<std::pair<int, int>, std::vector<StepRecord>>>& methods,
    double alpha) {
  CohortReport report;
  auto videos_of = [](const std::map<std::pair<int, int>, std::vector<StepRecord>>& runs) {
    std::map<int, std::vector<int>> out;
    for (const auto& [key, records] : runs) out[key.first].push_back(key.second);
    return out;
  };
  for (const char* ours : kAdaptiveMethods) {
    const auto mine = methods.find(ours);
    if (mine == methods.end() || mine->second.empty()) continue;
    for (const char* theirs : kBaselineMethods) {
      const auto base = methods.find(theirs);
      if (base == methods.end() || base->second.empty()) continue;
      const auto mine_videos = videos_of(mine->second);
      const auto base_videos = videos_of(base->second);
      if (mine_videos.size() != base_videos.size()) {
        throw MismatchedCohorts(std::string(ours) + " and " + theirs + " cover different videos");
      }
      for (const auto& [video, users] : mine_videos) {
        if (!base_videos.count(video)) {
          throw MismatchedCohorts(std::string(theirs) + " lacks video " + std::to_string(video));
        }
        std::vector<RunMetrics> ours_runs, eq_runs;
        for (int user : users) {
          const auto& records = mine->second.at({video, user});
          const auto b = base->second.find({video, user});
          if (b == base->second.end()) {
            throw MismatchedCohorts(std::string(theirs) + " lacks user " + std::to_string(user));
          }
          if (b->second.size() != records.size()) {
            throw MismatchedCohorts("record streams of user " + std::to_string(user) +
                                    " differ in length");
          }
          const RunMetrics m = run_metrics(user, records);
          RunMetrics e = run_metrics(user, b->second);
          if (std::abs(m.total_prefetched_area - e.total_prefetched_area) >
              kBandwidthTolerance * m.total_prefetched_area) {
            const double beta = equal_bandwidth_beta(records, alpha);
            e = run_metrics(user, with_constant_beta(b->second, beta, alpha));
          }
          const double gap = std::abs(m.total_prefetched_area - e.total_prefetched_area);
          if (gap > kBandwidthTolerance * m.total_prefetched_area) {
            throw NumericError("equal-bandwidth re-scoring missed the target area");
          }
          ours_runs.push_back(m);
          eq_runs.push_back(e);
        }
        report.comparisons.push_back(compare(ours, theirs, video, ours_runs, eq_runs));
      }
    }
  }
  if (report.comparisons.empty()) throw EmptyInput("no comparable record streams");
  return report;
}

CohortReport cmd_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Layout layout = Layout::of(config);
  std::map<std::string, std::map<std::pair<int, int>, std::vector<StepRecord>>> methods;
  for (const char* m : kAdaptiveMethods) methods[m] = load_method_records(layout.records, m);
  for (const char* m : kBaselineMethods) methods[m] = load_method_records(layout.records, m);
  const CohortReport report = build_report(methods, config.viewport.alpha);
  atomic_write(layout.output / "report.json", report.to_json());
  atomic_write(layout.output / "report.csv", report.to_csv());
  for (const MethodComparison& c : report.comparisons) {
    log << c.method << " vs " << c.baseline << " video " << c.video_id << ": dMAE "
        << std::fixed << std::setprecision(3) << degrees(c.mean_delta_mae()) << " deg, dMSPR "
        << 100.0 * c.mean_delta_mspr() << " %, IWP " << 100.0 * c.iwp() << " %\n"
        << std::defaultfloat;
  }
  return report;
}

void cmd_flops(const RunConfig& config, std::ostream& out) {
  const std::uint64_t vd = flops_per_training_cycle(config.vd_arch);
  const std::uint64_t pa = flops_per_training_cycle(config.pa_arch);
  out << "model,input_dim,hidden_dim,sequence_length,flops,mflops\n";
  auto row = [&](const char* name, const ArchSpec& a, std::uint64_t f) {
    out << name << ',' << a.input_dim << ',' << a.hidden_dim << ',' << a.sequence_length << ','
        << f << ',' << std::fixed << std::setprecision(1) << static_cast<double>(f) / 1e6 << '\n'
        << std::defaultfloat;
  };
  row("vd", config.vd_arch, vd);
  row("pa", config.pa_arch, pa);
  out << "total,,,," << vd + pa << ',' << std::fixed << std::setprecision(1)
      << static_cast<double>(vd + pa) / 1e6 << '\n'
      << std::defaultfloat;
  if (vd + pa > 0) {
    out << "battery_steps(" << format_double(kBatteryJoules) << " J, "
        << format_double(kJoulesPerFlop) << " J/FLOP)," << battery_steps(kBatteryJoules, kJoulesPerFlop, vd + pa)
        << '\n';
  } else {
    out << "battery_steps,n/a\n";
  }
}

}  // namespace metaview
