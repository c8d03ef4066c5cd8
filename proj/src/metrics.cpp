#include "metaview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "metaview/error.hpp"
#include "metaview/io.hpp"
#include "metaview/meta_learn.hpp"

namespace metaview {

namespace {

constexpr double kKnnEpsilon = 1e-6;

std::map<int, const RunMetrics*> by_user(std::span<const RunMetrics> runs, const char* which) {
  std::map<int, const RunMetrics*> out;
  for (const RunMetrics& r : runs) {
    if (!out.emplace(r.user_id, &r).second) {
      throw MismatchedCohorts(std::string("duplicate user ") + std::to_string(r.user_id) + " in " +
                              which);
    }
  }
  return out;
}

struct Summary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

template <typename F>
Summary summarize(const MethodComparison& c, F delta) {
  Summary s{INFINITY, -INFINITY, 0.0};
  for (std::size_t i = 0; i < c.method_runs.size(); ++i) {
    const double d = delta(c.method_runs[i], c.baseline_runs[i]);
    s.min = std::min(s.min, d);
    s.max = std::max(s.max, d);
    s.mean += d;
  }
  s.mean /= static_cast<double>(c.method_runs.size());
  return s;
}

double delta_mae_deg(const RunMetrics& ours, const RunMetrics& base) {
  return degrees(ours.mae - base.mae);
}
double delta_mspr_pct(const RunMetrics& ours, const RunMetrics& base) {
  return 100.0 * (ours.mspr - base.mspr);
}

}  // namespace

double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }

double mae(std::span<const StepRecord> records) {
  if (records.empty()) throw EmptyInput("no records for MAE");
  double sum = 0.0;
  for (const StepRecord& r : records) sum += r.gamma;
  return sum / static_cast<double>(records.size());
}

double mspr(std::span<const StepRecord> records) {
  if (records.empty()) throw EmptyInput("no records for MSPR");
  double sum = 0.0;
  for (const StepRecord& r : records) sum += r.overlap_ratio;
  return sum / static_cast<double>(records.size());
}

RunMetrics run_metrics(int user_id, std::span<const StepRecord> records) {
  return {user_id, mae(records), mspr(records), total_prefetched_area(records)};
}

double iwp(std::span<const RunMetrics> baseline, std::span<const RunMetrics> ours) {
  if (baseline.empty()) throw EmptyInput("no users for IWP");
  const auto base = by_user(baseline, "baseline");
  const auto mine = by_user(ours, "method");
  if (base.size() != mine.size()) throw MismatchedCohorts("user counts differ");
  for (const auto& [id, run] : base) {
    if (!mine.count(id)) throw MismatchedCohorts("user " + std::to_string(id) + " missing");
  }
  // Ascending id order makes the first strict minimum the lowest id on ties.
  const RunMetrics* worst = nullptr;
  for (const auto& [id, run] : base) {
    if (worst == nullptr || run->mspr < worst->mspr) worst = run;
  }
  return mine.at(worst->user_id)->mspr - worst->mspr;
}

Direction ecls_oracle_predict(std::span<const SequenceModelParams> per_user_models,
                              std::span<const double> window, const Direction& truth) {
  if (per_user_models.empty()) throw EmptyInput("no per-user models");
  if (window.size() < 3) throw EmptyInput("window");
  const std::size_t last = window.size() - 3;
  const Direction fallback = Direction::from(window[last], window[last + 1], window[last + 2]);
  std::optional<Direction> best;
  double best_error = INFINITY;
  for (const SequenceModelParams& model : per_user_models) {
    const Direction p = predict_direction(model, window, fallback);
    const double e = angular_distance(p, truth);
    if (!best || e < best_error) {
      best = p;
      best_error = e;
    }
  }
  return *best;
}

Direction cub360_knn_predict(std::span<const std::pair<Direction, double>> neighbor_predictions,
                             std::size_t k) {
  if (neighbor_predictions.empty()) throw EmptyInput("no neighbor predictions");
  if (k == 0) throw ConfigError("k must be at least 1");
  std::vector<std::size_t> order(neighbor_predictions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return neighbor_predictions[a].second < neighbor_predictions[b].second;
  });
  const std::size_t take = std::min(k, order.size());
  double total = 0.0;
  for (std::size_t i = 0; i < take; ++i) {
    total += 1.0 / (neighbor_predictions[order[i]].second + kKnnEpsilon);
  }
  Vec3 sum;
  for (std::size_t i = 0; i < take; ++i) {
    const auto& [dir, dist] = neighbor_predictions[order[i]];
    sum = sum + ((1.0 / (dist + kKnnEpsilon)) / total) * dir.vec();
  }
  const double n = norm(sum);
  if (!(n > kZeroVectorTolerance)) return neighbor_predictions[order[0]].first;
  return Direction::from(sum);
}

std::uint64_t flops_per_training_cycle(const ArchSpec& arch) {
  const std::uint64_t s = arch.sequence_length;
  const std::uint64_t i = arch.input_dim;
  const std::uint64_t d = arch.hidden_dim;
  return 3 * 2 * s * (i + d) * d * 4;
}

std::uint64_t linear_forward_flops(std::uint64_t n, std::uint64_t n_in, std::uint64_t n_out) {
  return 2 * n * n_in * n_out;
}

std::uint64_t linear_training_flops(std::uint64_t n, std::uint64_t n_in, std::uint64_t n_out) {
  return 3 * linear_forward_flops(n, n_in, n_out);
}

std::uint64_t battery_steps(double battery_joules, double joules_per_flop,
                            std::uint64_t flops_per_step) {
  if (!(battery_joules >= 0.0) || !std::isfinite(battery_joules)) {
    throw NonPositiveInput("battery energy");
  }
  if (!(joules_per_flop > 0.0) || !std::isfinite(joules_per_flop)) {
    throw NonPositiveInput("energy per FLOP");
  }
  if (flops_per_step == 0) throw NonPositiveInput("FLOPs per step");
  return static_cast<std::uint64_t>(
      std::floor(battery_joules / (joules_per_flop * static_cast<double>(flops_per_step))));
}

double MethodComparison::mean_delta_mae() const {
  return summarize(*this, [](const RunMetrics& a, const RunMetrics& b) { return a.mae - b.mae; })
      .mean;
}

double MethodComparison::mean_delta_mspr() const {
  return summarize(*this, [](const RunMetrics& a, const RunMetrics& b) { return a.mspr - b.mspr; })
      .mean;
}

double MethodComparison::iwp() const { return metaview::iwp(baseline_runs, method_runs); }

MethodComparison compare(std::string method, std::string baseline, int video_id,
                         std::vector<RunMetrics> method_runs,
                         std::vector<RunMetrics> baseline_runs) {
  if (method_runs.empty() && baseline_runs.empty()) throw EmptyInput("empty cohort");
  auto by_id = [](const RunMetrics& a, const RunMetrics& b) { return a.user_id < b.user_id; };
  std::sort(method_runs.begin(), method_runs.end(), by_id);
  std::sort(baseline_runs.begin(), baseline_runs.end(), by_id);
  if (method_runs.size() != baseline_runs.size()) throw MismatchedCohorts("user counts differ");
  for (std::size_t i = 0; i < method_runs.size(); ++i) {
    if (method_runs[i].user_id != baseline_runs[i].user_id) {
      throw MismatchedCohorts("user sets differ");
    }
  }
  by_user(method_runs, "method");
  return {std::move(method), std::move(baseline), video_id, std::move(method_runs),
          std::move(baseline_runs)};
}

std::string CohortReport::to_json() const {
  nlohmann::ordered_json root;
  root["units"] = {{"mae", "degrees"}, {"mspr", "percent"}, {"iwp", "percent"}};
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const MethodComparison& c : comparisons) {
    nlohmann::ordered_json entry;
    entry["method"] = c.method;
    entry["baseline"] = c.baseline;
    entry["video"] = c.video_id;
    const Summary dm = summarize(c, delta_mae_deg);
    const Summary ds = summarize(c, delta_mspr_pct);
    entry["delta_mae"] = {{"min", dm.min}, {"max", dm.max}, {"mean", dm.mean}};
    entry["delta_mspr"] = {{"min", ds.min}, {"max", ds.max}, {"mean", ds.mean}};
    entry["iwp"] = 100.0 * c.iwp();
    nlohmann::ordered_json users = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < c.method_runs.size(); ++i) {
      const RunMetrics& m = c.method_runs[i];
      const RunMetrics& b = c.baseline_runs[i];
      users.push_back({{"user", m.user_id},
                       {"mae", degrees(m.mae)},
                       {"mspr", 100.0 * m.mspr},
                       {"prefetched_area", m.total_prefetched_area},
                       {"baseline_mae", degrees(b.mae)},
                       {"baseline_mspr", 100.0 * b.mspr},
                       {"baseline_prefetched_area", b.total_prefetched_area}});
    }
    entry["users"] = std::move(users);
    list.push_back(std::move(entry));
  }
  root["comparisons"] = std::move(list);
  return root.dump(2) + "\n";
}

std::string CohortReport::to_csv() const {
  std::ostringstream out;
  out << "method,baseline,video,users,delta_mae_min,delta_mae_max,delta_mae_mean,"
         "delta_mspr_min,delta_mspr_max,delta_mspr_mean,iwp\n";
  for (const MethodComparison& c : comparisons) {
    const Summary dm = summarize(c, delta_mae_deg);
    const Summary ds = summarize(c, delta_mspr_pct);
    out << c.method << ',' << c.baseline << ',' << c.video_id << ',' << c.method_runs.size() << ','
        << format_double(dm.min) << ',' << format_double(dm.max) << ',' << format_double(dm.mean)
        << ',' << format_double(ds.min) << ',' << format_double(ds.max) << ','
        << format_double(ds.mean) << ',' << format_double(100.0 * c.iwp()) << '\n';
  }
  return out.str();
}

}  // namespace metaview
