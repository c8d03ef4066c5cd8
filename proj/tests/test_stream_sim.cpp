#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "metaview/error.hpp"
#include "metaview/meta_learn.hpp"
#include "metaview/stream_sim.hpp"
#include "test_support.hpp"

using namespace metaview;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kAlpha = kPi / 8;

const ArchSpec kVd{ModelKind::lstm, 3, 6, 3, 10};
const ArchSpec kPa{ModelKind::lstm, 1, 5, 1, 10};

Trace walk(std::size_t seconds, std::uint64_t seed) {
  return generate_synthetic({MotionPattern::random_walk, 0.5, 0.01, seed},
                            static_cast<double>(seconds), 0.1, 1, 1);
}

std::string csv_of(const std::vector<StepRecord>& records) {
  std::ostringstream out;
  write_records_csv(out, records);
  return out.str();
}

PrefetchDecision decision_at(const Direction& v, double beta) {
  PrefetchDecision d;
  d.predicted_direction = v;
  d.beta = beta;
  return d;
}

}  // namespace

TEST(Viewport, PrefetchAngleClamps) {
  const ViewportConfig vp;
  EXPECT_EQ(vp.prefetch_angle(0.0), kAlpha);
  EXPECT_EQ(vp.prefetch_angle(-1.0), kAlpha);
  EXPECT_DOUBLE_EQ(vp.prefetch_angle(0.3), 0.3 + kAlpha);
  EXPECT_EQ(vp.prefetch_angle(10.0), kPi / 2);
  EXPECT_EQ(vp.prefetch_angle(kPi / 2 - kAlpha + 1e-3), kPi / 2);
}

TEST(Viewport, Validation) {
  EXPECT_NO_THROW(ViewportConfig{}.validate());
  EXPECT_THROW((ViewportConfig{0.0, 0.1, 0.2}.validate()), ConfigError);
  EXPECT_THROW((ViewportConfig{0.3, 0.2, 0.4}.validate()), ConfigError);
  EXPECT_THROW((ViewportConfig{0.1, 0.2, 2.0}.validate()), ConfigError);
}

TEST(AccountStep, PerfectAndAntipodalPredictions) {
  const Direction u = Direction::from(0, 0, -1);
  const StepRecord hit = account_step(5, u, decision_at(u, kAlpha), kAlpha);
  EXPECT_EQ(hit.tick, 5u);
  EXPECT_EQ(hit.gamma, 0.0);
  EXPECT_EQ(hit.overlap_ratio, 1.0);
  EXPECT_NEAR(hit.missing_area, 0.0, 1e-15);
  EXPECT_EQ(hit.prefetched_area, cap_area(kAlpha));

  const StepRecord miss = account_step(5, u, decision_at(Direction::from(0, 0, 1), kPi / 2), kAlpha);
  EXPECT_EQ(miss.overlap_ratio, 0.0);
  EXPECT_EQ(miss.missing_area, cap_area(kAlpha));
  EXPECT_NEAR(miss.prefetched_area, 2 * kPi, 1e-12);
}

TEST(AccountStep, ContainedViewportIsFullyCovered) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> beta_dist(kAlpha, kPi / 2);
  int contained = 0;
  for (int i = 0; i < 2000; ++i) {
    const Direction u = testing_support::random_direction(rng);
    const Direction v = testing_support::random_direction(rng);
    const double beta = beta_dist(rng);
    const StepRecord r = account_step(0, u, decision_at(v, beta), kAlpha);
    EXPECT_GE(r.overlap_ratio, 0.0);
    EXPECT_LE(r.overlap_ratio, 1.0);
    EXPECT_NEAR(r.missing_area, cap_area(kAlpha) * (1.0 - r.overlap_ratio), 1e-12);
    if (r.gamma <= beta - kAlpha) {
      ++contained;
      EXPECT_EQ(r.overlap_ratio, 1.0);
    }
  }
  EXPECT_GT(contained, 10);
}

TEST(TileGrid, CellCentersMapBackToTheirCells) {
  const TileGrid grid;
  EXPECT_EQ(grid.size(), 256u);
  for (std::size_t cell = 0; cell < grid.size(); ++cell) {
    EXPECT_EQ(grid.cell_of(grid.cell_center(cell)), cell);
  }
  EXPECT_THROW(TileGrid(0, 4), ConfigError);
}

TEST(TileGrid, BlockWrapsLongitudeAndClampsLatitude) {
  const TileGrid grid;
  // Equator, just west of the seam: column 15 with neighbours 14 and 0.
  const Direction seam = from_lonlat({kPi - 0.01, 0.01});
  const auto block = grid.prefetch_block(seam);
  ASSERT_EQ(block.size(), 9u);
  const std::size_t row = grid.cell_of(seam) / 16;
  EXPECT_EQ(grid.cell_of(seam) % 16, 15u);
  for (std::size_t r = row - 1; r <= row + 1; ++r) {
    for (std::size_t c : {14u, 15u, 0u}) {
      EXPECT_TRUE(std::binary_search(block.begin(), block.end(), r * 16 + c));
    }
  }
  // At the pole row the clamped block collapses to two rows.
  EXPECT_EQ(grid.prefetch_block(Direction::from(0, 1, 0)).size(), 6u);
}

TEST(TileMode, MatchesBruteForceOracle) {
  std::mt19937_64 rng(21);
  const TileGrid grid;
  for (int i = 0; i < 500; ++i) {
    const Direction u = testing_support::random_direction(rng);
    // Half the cases predict near u so that overlaps are non-trivial.
    const Direction v = i % 2 ? testing_support::random_direction(rng)
                              : slerp(u, testing_support::random_direction(rng), 0.1);
    const TileCounts got = tile_mode_step(u, decision_at(v, kAlpha), grid, kAlpha);
    const auto want = testing_support::reference_tiles(u, v, 16, 16, kAlpha);
    EXPECT_EQ(got.prefetched, want.prefetched) << i;
    EXPECT_EQ(got.missing, want.missing) << i;
  }
}

TEST(TileMode, SeamCasesMatchOracle) {
  const TileGrid grid;
  const Direction east = from_lonlat({kPi - 0.02, 0.05});
  const Direction west = from_lonlat({-kPi + 0.02, 0.05});
  for (const auto& [u, v] : {std::pair{east, west}, std::pair{west, east}, std::pair{west, west}}) {
    const TileCounts got = tile_mode_step(u, decision_at(v, kAlpha), grid, kAlpha);
    const auto want = testing_support::reference_tiles(u, v, 16, 16, kAlpha);
    EXPECT_EQ(got.missing, want.missing);
    EXPECT_EQ(got.prefetched, want.prefetched);
  }
}

TEST(TileMode, OppositePredictionMissesEveryViewportTile) {
  const TileGrid grid;
  const Direction u = Direction::from(0, 0, -1);
  const TileCounts c = tile_mode_step(u, decision_at(Direction::from(0, 0, 1), kAlpha), grid, kAlpha);
  const std::size_t viewport = grid.viewport_tiles(u, kAlpha).size();
  EXPECT_GT(viewport, 0u);
  EXPECT_EQ(c.missing, viewport);
  EXPECT_EQ(c.prefetched, 9u);
}

TEST(EqualBandwidth, ConstantAngleIsItsOwnEquivalent) {
  std::vector<StepRecord> records;
  for (int i = 0; i < 20; ++i) {
    records.push_back(account_step(i, Direction::from(1, 0, 0),
                                   decision_at(Direction::from(0, 1, 0), 0.7), kAlpha));
  }
  EXPECT_NEAR(equal_bandwidth_beta(records), 0.7, 1e-12);
  EXPECT_THROW(equal_bandwidth_beta(std::vector<StepRecord>{}), EmptyInput);
}

TEST(EqualBandwidth, AlternatingExtremes) {
  std::vector<StepRecord> records;
  for (int i = 0; i < 10; ++i) {
    const double beta = i % 2 ? kPi / 2 : kAlpha;
    records.push_back(account_step(i, Direction::from(1, 0, 0),
                                   decision_at(Direction::from(1, 0, 0), beta), kAlpha));
  }
  EXPECT_NEAR(equal_bandwidth_beta(records), std::acos(std::cos(kAlpha) / 2), 1e-12);
}

TEST(EqualBandwidth, PreservesTotalArea) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> beta_dist(kAlpha, kPi / 2);
  std::vector<StepRecord> records;
  for (int i = 0; i < 300; ++i) {
    const Direction u = testing_support::random_direction(rng);
    records.push_back(account_step(i, u, decision_at(u, beta_dist(rng)), kAlpha));
  }
  const double beta = equal_bandwidth_beta(records);
  EXPECT_GE(beta, kAlpha);
  EXPECT_LE(beta, kPi / 2);
  const auto rescored = with_constant_beta(records, beta, kAlpha);
  EXPECT_NEAR(total_prefetched_area(rescored), total_prefetched_area(records),
              1e-9 * total_prefetched_area(records));
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(rescored[i].gamma, records[i].gamma);
    EXPECT_EQ(rescored[i].decision.beta, beta);
  }
}

TEST(RecordsCsv, RoundTripsBitwise) {
  const Trace t = walk(4, 2);
  SimOptions opt;
  opt.tiles = TileGrid();
  const auto run = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), opt);
  for (bool tiles : {true, false}) {
    std::vector<StepRecord> records = run.records;
    if (!tiles) {
      for (auto& r : records) r.tiles.reset();
    }
    std::istringstream in(csv_of(records));
    const auto back = read_records_csv(in);
    ASSERT_EQ(back.size(), records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      EXPECT_EQ(back[i].tick, records[i].tick);
      EXPECT_EQ(back[i].actual, records[i].actual);
      EXPECT_EQ(back[i].decision.predicted_direction, records[i].decision.predicted_direction);
      EXPECT_EQ(back[i].decision.beta, records[i].decision.beta);
      EXPECT_EQ(back[i].decision.predicted_gamma, records[i].decision.predicted_gamma);
      EXPECT_EQ(back[i].gamma, records[i].gamma);
      EXPECT_EQ(back[i].overlap_ratio, records[i].overlap_ratio);
      EXPECT_EQ(back[i].prefetched_area, records[i].prefetched_area);
      EXPECT_EQ(back[i].missing_area, records[i].missing_area);
      EXPECT_EQ(back[i].tiles.has_value(), tiles);
      if (tiles) {
        EXPECT_EQ(back[i].tiles->missing, records[i].tiles->missing);
        EXPECT_EQ(back[i].tiles->prefetched, records[i].tiles->prefetched);
      }
    }
  }
}

TEST(RecordsCsv, RejectsBadInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_records_csv(empty), MissingColumn);
  std::istringstream header("t,ux\n");
  EXPECT_THROW(read_records_csv(header), MissingColumn);
  const std::string cols =
      "t,ux,uy,uz,vx,vy,vz,gamma,gamma_hat,beta,overlap_ratio,prefetched_area,missing_area\n";
  std::istringstream short_row(cols + "1,0,0,1\n");
  EXPECT_THROW(read_records_csv(short_row), MalformedRow);
  std::istringstream not_unit(cols + "1,0,0,2,0,0,1,0,0,0.4,1,0.1,0\n");
  EXPECT_THROW(read_records_csv(not_unit), MalformedRow);
}

TEST(Simulate, RecordsEveryTickAfterWarmUp) {
  const Trace t = walk(5, 3);
  const auto run = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), SimOptions{});
  ASSERT_EQ(run.records.size(), t.size() - 10);
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    EXPECT_EQ(run.records[i].tick, i + 10);
    EXPECT_EQ(run.records[i].actual, t.samples[i + 10]);
    EXPECT_GE(run.records[i].decision.beta, kAlpha);
    EXPECT_LE(run.records[i].decision.beta, kPi / 2);
    EXPECT_EQ(run.records[i].gamma,
              angular_distance(t.samples[i + 10], run.records[i].decision.predicted_direction));
  }
  EXPECT_EQ(run.adaptation_steps, run.records.size());
}

TEST(Simulate, FirstDecisionUsesWarmUpWindow) {
  const Trace t = walk(3, 4);
  const auto vd = init_params(kVd, 1);
  const auto pa = init_params(kPa, 2);
  const auto run = simulate_user(t, vd, pa, SimOptions{});
  const Direction expected = predict_direction(vd, direction_window(t.samples, 0, 10), t.samples[9]);
  EXPECT_EQ(run.records.front().decision.predicted_direction, expected);
  const double gamma_hat = std::clamp(forward(pa, std::vector<double>(10, 0.0))[0], 0.0, kPi);
  EXPECT_EQ(run.records.front().decision.predicted_gamma, gamma_hat);
}

TEST(Simulate, BetaStaysInRangeForExtremeModels) {
  const Trace t = walk(4, 6);
  for (double bias : {-50.0, 0.0, 50.0}) {
    auto pa = init_params(kPa, 2);
    pa.values.back() = bias;  // readout bias
    const auto run = simulate_user(t, init_params(kVd, 1), pa, SimOptions{});
    for (const StepRecord& r : run.records) {
      EXPECT_GE(r.decision.beta, kAlpha);
      EXPECT_LE(r.decision.beta, kPi / 2);
    }
  }
}

TEST(Simulate, Deterministic) {
  const Trace t = walk(6, 7);
  SimOptions opt;
  opt.vd_adapt_lr = opt.pa_adapt_lr = 0.05;
  const auto a = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), opt);
  const auto b = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), opt);
  EXPECT_EQ(csv_of(a.records), csv_of(b.records));
  EXPECT_EQ(a.final_vd, b.final_vd);
  EXPECT_EQ(a.final_pa, b.final_pa);
}

TEST(Simulate, FrozenModeIgnoresAdaptationRate) {
  const Trace t = walk(6, 8);
  const auto vd = init_params(kVd, 1);
  const auto pa = init_params(kPa, 2);
  SimOptions slow;
  slow.mode = AdaptMode::frozen;
  SimOptions fast = slow;
  fast.vd_adapt_lr = fast.pa_adapt_lr = 0.5;
  const auto a = simulate_user(t, vd, pa, slow);
  const auto b = simulate_user(t, vd, pa, fast);
  EXPECT_EQ(csv_of(a.records), csv_of(b.records));
  EXPECT_EQ(a.final_vd, vd);
  EXPECT_EQ(a.final_pa, pa);
  EXPECT_EQ(a.adaptation_steps, 0u);

  SimOptions zero;
  zero.vd_adapt_lr = zero.pa_adapt_lr = 0.0;
  EXPECT_EQ(csv_of(simulate_user(t, vd, pa, zero).records), csv_of(a.records));
}

TEST(Simulate, AdaptationChangesPredictions) {
  const Trace t = walk(6, 9);
  SimOptions full;
  full.vd_adapt_lr = full.pa_adapt_lr = 0.05;
  SimOptions frozen = full;
  frozen.mode = AdaptMode::frozen;
  const auto a = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), full);
  const auto b = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), frozen);
  // The first decision precedes any adaptation.
  EXPECT_EQ(a.records[0].decision.predicted_direction, b.records[0].decision.predicted_direction);
  EXPECT_NE(csv_of(a.records), csv_of(b.records));
}

TEST(Simulate, PartialModeFreezesAfterWindow) {
  const Trace t = walk(140, 10);
  SimOptions opt;
  opt.mode = AdaptMode::partial;
  opt.vd_adapt_lr = opt.pa_adapt_lr = 0.01;
  std::vector<double> frozen_vd, frozen_pa;
  std::size_t checked = 0, changes_before = 0;
  std::vector<double> previous_vd;
  const auto run = simulate_user(
      t, init_params(kVd, 1), init_params(kPa, 2), opt,
      [&](std::size_t tick, const SequenceModelParams& vd, const SequenceModelParams& pa) {
        if (tick < 1199) {
          if (!previous_vd.empty() && previous_vd != vd.values) ++changes_before;
          previous_vd = vd.values;
        } else if (tick == 1199) {
          frozen_vd = vd.values;
          frozen_pa = pa.values;
        } else {
          EXPECT_EQ(vd.values, frozen_vd) << tick;
          EXPECT_EQ(pa.values, frozen_pa) << tick;
          ++checked;
        }
      });
  EXPECT_EQ(run.adaptation_steps, 1200u - 10u);
  EXPECT_EQ(checked, t.size() - 1200);
  EXPECT_GT(changes_before, 1000u);
  EXPECT_EQ(run.final_vd.values, frozen_vd);
}

TEST(Simulate, AdaptIntervalThinsUpdates) {
  const Trace t = walk(5, 11);
  SimOptions opt;
  opt.adapt_interval = 3;
  const auto run = simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), opt);
  EXPECT_EQ(run.adaptation_steps, (run.records.size() + 2) / 3);
}

TEST(Simulate, Errors) {
  Trace t = walk(1, 12);
  t.samples.erase(t.samples.begin() + 10, t.samples.end());
  EXPECT_THROW(simulate_user(t, init_params(kVd, 1), init_params(kPa, 2), SimOptions{}),
               TraceTooShort);
  const Trace ok = walk(3, 12);
  EXPECT_THROW(simulate_user(ok, init_params(kPa, 1), init_params(kPa, 2), SimOptions{}),
               ShapeMismatch);
  SimOptions bad;
  bad.viewport.alpha = 0.0;
  EXPECT_THROW(simulate_user(ok, init_params(kVd, 1), init_params(kPa, 2), bad), ConfigError);
}

TEST(AdaptMode, Names) {
  for (AdaptMode m : {AdaptMode::full, AdaptMode::partial, AdaptMode::frozen}) {
    EXPECT_EQ(parse_adapt_mode(to_string(m)), m);
  }
  EXPECT_EQ(parse_adapt_mode("frozen-global"), AdaptMode::frozen);
  EXPECT_THROW(parse_adapt_mode("sometimes"), ConfigError);
}
