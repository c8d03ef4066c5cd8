#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaview/config.hpp"
#include "metaview/metrics.hpp"
#include "metaview/traces.hpp"

namespace metaview {

/// Resolved output locations. Relative trace and checkpoint directories live
/// under the output directory.
struct Layout {
  std::filesystem::path output;
  std::filesystem::path traces;
  std::filesystem::path checkpoints;
  std::filesystem::path records;

  static Layout of(const RunConfig& config);
};

/// splitmix64 over the combined inputs.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// The synthetic profile of user u (1-based) on video v (1-based).
SyntheticUserProfile cohort_profile(const RunConfig& config, int user, int video);

/// Every (user, video) trace of the configured cohort, ordered by video then user.
std::vector<Trace> generate_cohort(const RunConfig& config);

std::string trace_file_name(int user, int video);
std::string checkpoint_stem(const std::string& kind, int user, int video);

/// Loads every *.csv under dir. Files named user_U_video_V.csv supply ids
/// for rows without user/video columns. Throws EmptyInput when none exist.
std::vector<Trace> load_traces(const std::filesystem::path& dir, double tick_seconds);

/// Meta models for one (user, video): trained without that user when
/// leave-one-out is on.
struct MetaPair {
  SequenceModelParams vd;
  SequenceModelParams pa;
};

/// Trains the VD then the PA meta model on `traces` minus the exclusion.
/// `log` receives (model, iteration, loss).
MetaPair train_meta_pair(const RunConfig& config, std::span<const Trace> traces,
                         std::optional<UserVideo> exclusion,
                         const std::function<void(const char*, std::size_t, double)>& log = {});

std::vector<std::filesystem::path> cmd_gen_traces(const RunConfig& config, std::ostream& log);
void cmd_train_meta(const RunConfig& config, std::ostream& log);
/// Simulates each listed mode, plus the baselines when enabled.
void cmd_simulate(const RunConfig& config, const std::vector<AdaptMode>& modes, std::ostream& log);
CohortReport cmd_evaluate(const RunConfig& config, std::ostream& log);
void cmd_flops(const RunConfig& config, std::ostream& out);

/// Reads records/<method>/user_U_video_V.csv into (video, user) -> records.
std::map<std::pair<int, int>, std::vector<StepRecord>> load_method_records(
    const std::filesystem::path& records_dir, const std::string& method);

/// Comparisons of every adaptive method against every baseline present. A
/// baseline run whose total prefetched area differs from the method's is
/// re-scored at the constant prefetch angle that matches it. Throws EmptyInput,
/// MismatchedCohorts.
CohortReport build_report(
    const std::map<std::string, std::map<std::pair<int, int>, std::vector<StepRecord>>>& methods,
    double alpha);

}  // namespace metaview
