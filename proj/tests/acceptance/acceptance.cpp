// Acceptance runner: one PASS / FAIL / SKIP line per criterion, non-zero exit
// when any required criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../test_support.hpp"
#include "metaview/commands.hpp"
#include "metaview/config.hpp"
#include "metaview/io.hpp"
#include "metaview/meta_learn.hpp"
#include "metaview/metrics.hpp"
#include "metaview/stream_sim.hpp"

namespace fs = std::filesystem;
using namespace metaview;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(double x, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

struct Runner {
  int failures = 0;

  void run(const std::string& name, double budget_seconds, const std::function<Outcome()>& body,
           double prior_seconds = 0.0) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = body();
    } catch (const std::exception& e) {
      out = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs =
        prior_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.status == Outcome::pass && secs > budget_seconds) {
      out.status = Outcome::fail;
      out.detail += "; over time budget " + fmt(budget_seconds) + " s";
    }
    const char* tag = out.status == Outcome::pass ? "PASS" : out.status == Outcome::skip ? "SKIP" : "FAIL";
    if (out.status == Outcome::fail) ++failures;
    std::cout << tag << "  " << name << "  [" << std::fixed << std::setprecision(2) << secs
              << " s]  " << std::defaultfloat << out.detail << std::endl;
  }

  void info(const std::string& name, const std::string& detail) {
    std::cout << "INFO  " << name << "  " << detail << std::endl;
  }
};

// ---------------------------------------------------------------------------

Outcome flops_exactness() {
  const std::uint64_t vd = flops_per_training_cycle({ModelKind::lstm, 3, 128, 3, 100});
  const std::uint64_t pa = flops_per_training_cycle({ModelKind::lstm, 1, 128, 1, 100});
  return verdict(vd == 40'243'200 && pa == 39'628'800,
                 "vd=" + std::to_string(vd) + " pa=" + std::to_string(pa));
}

Outcome battery_estimate() {
  const std::uint64_t steps = battery_steps(50'400.0, 1.18e-11, 79'872'000);
  const double rel = std::abs(static_cast<double>(steps) - 5.35e7) / 5.35e7;
  return verdict(rel <= 0.005, "steps=" + std::to_string(steps) + " rel_err=" + fmt(rel, 3));
}

Outcome gradient_correctness() {
  const ArchSpec arch{ModelKind::lstm, 2, 4, 2, 5};
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto batch = testing_support::random_batch(arch, 3, rng);
    worst = std::max(worst, testing_support::gradient_check(init_params(arch, seed), batch));
  }
  return verdict(worst < 1e-4, "max_rel_err=" + fmt(worst, 3) + " over 20 seeds");
}

Outcome geometry_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> half(0.0, kPi / 2);
  std::uniform_real_distribution<double> sep(0.0, kPi);
  int outside = 0;
  double worst_z = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double a = half(rng), b = half(rng), d = sep(rng);
    const auto est = testing_support::monte_carlo_intersection(a, b, d, 1'000'000, rng);
    const double z = std::abs(cap_intersection_area(a, b, d) - est.value) / est.std_error;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++outside;
  }
  return verdict(outside == 0, "pairs_outside_3sigma=" + std::to_string(outside) +
                                   " max_z=" + fmt(worst_z, 3));
}

Outcome reptile_expectation() {
  // Quadratic tasks 0.5 (theta - c)^T A (theta - c) with diagonal A and
  // additive gradient noise.
  constexpr std::size_t dim = 4, task_count = 6;
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> center(-2.0, 2.0), curvature(0.5, 3.0);
  std::vector<std::vector<double>> c(task_count, std::vector<double>(dim)), a = c;
  for (std::size_t j = 0; j < task_count; ++j) {
    for (std::size_t i = 0; i < dim; ++i) {
      c[j][i] = center(gen);
      a[j][i] = curvature(gen);
    }
  }
  std::vector<StochasticObjective> tasks;
  for (std::size_t j = 0; j < task_count; ++j) {
    tasks.push_back([cj = c[j], aj = a[j]](std::span<const double> theta, Rng& rng) {
      std::normal_distribution<double> noise(0.0, 0.5);
      LossGrad lg;
      lg.grad.resize(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double r = theta[i] - cj[i];
        lg.loss += 0.5 * aj[i] * r * r;
        lg.grad[i] = aj[i] * r + noise(rng);
      }
      return lg;
    });
  }
  MetaConfig cfg;
  cfg.local_lr = 0.05;
  cfg.task_batch = 3;
  cfg.local_steps = 1;
  const std::vector<double> theta{0.4, -1.1, 0.7, 1.5};
  std::vector<double> expected(dim, 0.0);
  for (std::size_t j = 0; j < task_count; ++j) {
    for (std::size_t i = 0; i < dim; ++i) {
      expected[i] += cfg.local_lr * a[j][i] * (theta[i] - c[j][i]) / task_count;
    }
  }
  Rng rng(5);
  constexpr std::size_t episodes = 10'000;
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto d = meta_displacement(tasks, theta, cfg, rng);
    for (std::size_t i = 0; i < dim; ++i) {
      sum[i] += d[i];
      sum_sq[i] += d[i] * d[i];
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double mean = sum[i] / episodes;
    const double se = std::sqrt((sum_sq[i] / episodes - mean * mean) / episodes);
    worst = std::max(worst, std::abs(mean - expected[i]) / se);
  }
  return verdict(worst <= 3.0, "max |mean - expected| / SE = " + fmt(worst, 3));
}

Outcome sgd_equivalence() {
  const ArchSpec arch{ModelKind::lstm, 3, 6, 3, 10};
  const Trace trace = generate_synthetic({MotionPattern::random_walk, 0.5, 0.01, 3}, 1.5, 0.1, 1, 1);
  const Trace traces[] = {trace};
  const TaskPool pool = build_vd_tasks(traces, std::nullopt, 10);
  std::vector<TrainingExample> batch;
  for (std::size_t i = 0; i < pool.tasks[0].example_count(); ++i) batch.push_back(pool.tasks[0].example(i));

  MetaConfig cfg;
  cfg.task_batch = 1;
  cfg.local_steps = 1;
  cfg.batch_size = batch.size();
  SequenceModelParams sgd = init_params(arch, 17);
  constexpr std::size_t steps = 20;
  for (std::size_t it = 1; it <= steps; ++it) {
    sgd = sgd_step(sgd, loss_and_grad(sgd, batch).grad, cfg.meta_lr * cfg.local_lr);
    cfg.iterations = it;
    if (reptile_train(pool, arch, cfg, 17).values != sgd.values) {
      return verdict(false, "trajectories diverge at step " + std::to_string(it));
    }
  }
  return verdict(true, std::to_string(steps) + " steps identical, batch of " + std::to_string(batch.size()));
}

// ---------------------------------------------------------------------------

const char* const kDeskConfig = R"(
trace.duration_seconds = 300
vd.hidden_dim = 32
pa.hidden_dim = 32
meta.iterations = 100
train.leave_one_out = true
eval.baselines = false
)";

struct EndToEnd {
  bool ran = false;
  std::string error;
  double mae_full = 0, mae_partial = 0, mae_frozen = 0;
  double delta_mspr_eq = 0, iwp = 0;
  std::map<MotionPattern, double> frozen_mae_by_pattern;
};

double cohort_mean(const std::vector<RunMetrics>& runs, double RunMetrics::*field) {
  double s = 0.0;
  for (const RunMetrics& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

EndToEnd run_end_to_end(const fs::path& out) {
  EndToEnd e;
  fs::remove_all(out);
  RunConfig cfg = parse_config(kDeskConfig);
  cfg.output_dir = out.string();
  std::ostringstream log;
  cmd_gen_traces(cfg, log);
  cmd_train_meta(cfg, log);
  cmd_simulate(cfg, {AdaptMode::full, AdaptMode::partial, AdaptMode::frozen}, log);
  const CohortReport report = cmd_evaluate(cfg, log);
  for (const MethodComparison& c : report.comparisons) {
    if (c.baseline != "frozen") continue;
    if (c.method == "full") {
      e.mae_full = cohort_mean(c.method_runs, &RunMetrics::mae);
      e.delta_mspr_eq = c.mean_delta_mspr();
      e.iwp = c.iwp();
    } else if (c.method == "partial") {
      e.mae_partial = cohort_mean(c.method_runs, &RunMetrics::mae);
    }
  }
  const auto frozen = load_method_records(Layout::of(cfg).records, "frozen");
  std::map<MotionPattern, int> counts;
  for (const auto& [key, records] : frozen) {
    const double m = mae(records);
    e.mae_frozen += m / static_cast<double>(frozen.size());
    const MotionPattern p = cfg.cohort.users.at(static_cast<std::size_t>(key.second - 1));
    e.frozen_mae_by_pattern[p] += m;
    ++counts[p];
  }
  for (auto& [p, total] : e.frozen_mae_by_pattern) total /= counts[p];
  e.ran = true;
  return e;
}

Outcome leave_one_out_isolation(const fs::path& out) {
  fs::remove_all(out);
  RunConfig cfg = parse_config(R"(
trace.duration_seconds = 30
trace.sequence_length = 20
vd.hidden_dim = 8
pa.hidden_dim = 8
meta.iterations = 20
cohort.users = fixate, smooth-scan, regime-switching, regime-switching
)");
  cfg.output_dir = out.string();
  std::ostringstream log;
  cmd_gen_traces(cfg, log);
  cmd_train_meta(cfg, log);
  const Layout layout = Layout::of(cfg);
  const int target = 3;
  std::map<std::string, std::string> before;
  for (const char* kind : {"vd", "pa"}) {
    const fs::path stem = layout.checkpoints / checkpoint_stem(kind, target, 1);
    before[kind] = read_file(stem.string() + ".bin") + read_file(stem.string() + ".json");
  }
  const std::string other_before = read_file((layout.checkpoints / checkpoint_stem("vd", 1, 1)).string() + ".bin");

  // Replace the excluded user's trace with a different, longer one.
  RunConfig other = cfg;
  other.seed = cfg.seed + 1000;
  std::ostringstream text;
  write_trace_csv(text, generate_synthetic(cohort_profile(other, 1, 1), 45.0, cfg.tick_seconds, target, 1));
  atomic_write(layout.traces / trace_file_name(target, 1), text.str());
  cmd_train_meta(cfg, log);

  bool same = true;
  for (const char* kind : {"vd", "pa"}) {
    const fs::path stem = layout.checkpoints / checkpoint_stem(kind, target, 1);
    same = same && before[kind] == read_file(stem.string() + ".bin") + read_file(stem.string() + ".json");
  }
  const bool others_moved =
      other_before != read_file((layout.checkpoints / checkpoint_stem("vd", 1, 1)).string() + ".bin");
  fs::remove_all(out);
  return verdict(same && others_moved,
                 std::string("excluded user's checkpoints ") + (same ? "unchanged" : "CHANGED") +
                     ", other users' " + (others_moved ? "retrained" : "unexpectedly identical"));
}

Outcome tile_oracle() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> alpha_dist(0.0, kPi / 2);
  const TileGrid grid(16, 16);
  int mismatches = 0;
  std::size_t total_tiles = 0;
  for (int i = 0; i < 500; ++i) {
    const Direction u = testing_support::random_direction(rng);
    const Direction v = testing_support::random_direction(rng);
    const double alpha = alpha_dist(rng);
    std::set<std::size_t> expected;
    for (std::size_t r = 0; r < 16; ++r) {
      const double lat = kPi / 2 - (static_cast<double>(r) + 0.5) * kPi / 16;
      for (std::size_t c = 0; c < 16; ++c) {
        const double lon = -kPi + (static_cast<double>(c) + 0.5) * 2 * kPi / 16;
        const double dot_uc = std::cos(lat) * std::sin(lon) * u.x() + std::sin(lat) * u.y() -
                              std::cos(lat) * std::cos(lon) * u.z();
        if (dot_uc >= std::cos(alpha)) expected.insert(r * 16 + c);
      }
    }
    const auto got = grid.viewport_tiles(u, alpha);
    total_tiles += got.size();
    const TileCounts counts = tile_mode_step(u, PrefetchDecision{v, alpha, 0.0}, grid, alpha);
    const auto ref = testing_support::reference_tiles(u, v, 16, 16, alpha);
    if (std::set<std::size_t>(got.begin(), got.end()) != expected || counts.missing != ref.missing ||
        counts.prefetched != ref.prefetched) {
      ++mismatches;
    }
  }
  return verdict(mismatches == 0, "mismatching cases=" + std::to_string(mismatches) + " of 500, " +
                                      std::to_string(total_tiles) + " viewport tiles compared");
}

Outcome dataset_path(const fs::path& out) {
  const char* dir = std::getenv("METAVIEW_DATASET_DIR");
  if (dir == nullptr || *dir == '\0') {
    return {Outcome::skip, "set METAVIEW_DATASET_DIR to a directory of converted trace CSVs"};
  }
  fs::remove_all(out);
  RunConfig cfg = parse_config(kDeskConfig);
  cfg.output_dir = out.string();
  cfg.traces_dir = fs::absolute(dir).string();
  std::ostringstream log;
  cmd_train_meta(cfg, log);
  cmd_simulate(cfg, {AdaptMode::full, AdaptMode::frozen}, log);
  const CohortReport report = cmd_evaluate(cfg, log);
  for (const MethodComparison& c : report.comparisons) {
    if (c.method == "full" && c.baseline == "frozen" && c.video_id == 1) {
      const double dmae = c.mean_delta_mae();
      const double iwp = c.iwp();
      return verdict(dmae <= 0.0 && iwp >= 0.0,
                     "video 1: mean dMAE=" + fmt(degrees(dmae), 4) + " deg, IWP=" + fmt(100 * iwp, 4) + " %");
    }
  }
  return verdict(false, "no full-vs-frozen comparison for video 1");
}

}  // namespace

int main() {
  Runner r;
  const fs::path work = fs::absolute("acceptance_out");

  r.run("flops-exactness", 1.0, flops_exactness);
  r.run("battery-estimate", 1.0, battery_estimate);
  r.run("gradient-correctness", 30.0, gradient_correctness);
  r.run("geometry-monte-carlo", 60.0, geometry_oracle);
  r.run("reptile-expectation", 60.0, reptile_expectation);
  r.run("reptile-sgd-equivalence", 30.0, sgd_equivalence);
  r.run("leave-one-out-isolation", 300.0, [&] { return leave_one_out_isolation(work / "loo"); });
  r.run("tile-mode-oracle", 10.0, tile_oracle);

  EndToEnd e2e;
  const auto start = std::chrono::steady_clock::now();
  try {
    e2e = run_end_to_end(work / "desk");
  } catch (const std::exception& ex) {
    e2e.error = ex.what();
  }
  const double e2e_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.run("end-to-end-adaptation", 900.0, [&] {
    if (!e2e.ran) return verdict(false, "pipeline failed: " + e2e.error);
    const bool ok = e2e.mae_full < e2e.mae_frozen && e2e.delta_mspr_eq > 0.0 && e2e.iwp > 0.0;
    return verdict(ok, "MAE full=" + fmt(degrees(e2e.mae_full), 4) + " deg vs frozen=" +
                           fmt(degrees(e2e.mae_frozen), 4) + " deg, equal-bandwidth dMSPR=" +
                           fmt(100 * e2e.delta_mspr_eq, 4) + " %, IWP=" + fmt(100 * e2e.iwp, 4) + " %");
  }, e2e_secs);
  r.run("partial-adaptation", 900.0, [&] {
    if (!e2e.ran) return verdict(false, "pipeline failed: " + e2e.error);
    const double full_gain = e2e.mae_frozen - e2e.mae_full;
    const double partial_gain = e2e.mae_frozen - e2e.mae_partial;
    const double ratio = full_gain > 0.0 ? partial_gain / full_gain : 0.0;
    return verdict(full_gain > 0.0 && ratio >= 0.8,
                   "partial/full MAE improvement=" + fmt(ratio, 4) + " (partial MAE " +
                       fmt(degrees(e2e.mae_partial), 4) + " deg)");
  }, e2e_secs);
  r.run("dataset-path (optional)", 3600.0, [&] { return dataset_path(work / "dataset"); });

  if (e2e.ran) {
    std::string detail;
    for (const auto& [p, m] : e2e.frozen_mae_by_pattern) {
      detail += to_string(p) + "=" + fmt(degrees(m), 4) + " deg ";
    }
    const auto& by = e2e.frozen_mae_by_pattern;
    const bool ordered = by.count(MotionPattern::fixate) && by.count(MotionPattern::regime_switching) &&
                         by.at(MotionPattern::fixate) < by.at(MotionPattern::regime_switching);
    r.info("frozen-mae-by-pattern", detail + (ordered ? "(fixate < regime-switching)" : "(fixate NOT below regime-switching)"));
  }
  std::cout << (r.failures == 0 ? "ALL REQUIRED CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return r.failures == 0 ? 0 : 1;
}
