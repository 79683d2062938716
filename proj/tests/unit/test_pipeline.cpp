#include <doctest.h>

#include <set>
#include <sstream>

#include "vical/pipeline.hpp"
#include "vical/report.hpp"

using namespace vical;

namespace {

// 30 s of mixed motion cut into 15 segments of 20 keyframes.
PipelineConfig small_config() {
  PipelineConfig c;
  c.scenario.trajectory.duration = 30.0;
  c.segment_len_kf = 20;
  c.db_capacity_per_group = 2;
  c.ready_quota = 2;
  c.trace = false;
  c.solver.max_iterations = 10;
  return c;
}

const Dataset& small_dataset() {
  static const Dataset d = generate(small_config().scenario);
  return d;
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("config json round trip") {
  PipelineConfig c = small_config();
  c.mode = PipelineMode::kLeastInformative;
  c.trigger = CalibrationTrigger::kEndOfStream;
  c.grouping = single_grouping();
  c.sigma_ref.sigma(3) = 0.25;
  const auto j = to_json(c);
  const PipelineConfig back = config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  CHECK(back.mode == PipelineMode::kLeastInformative);
  CHECK(back.grouping.size() == 1);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json({{"segment_len", 40}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"mode", "greedy"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"trigger", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"segment_len_kf", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"initial_calibration", "guess"}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  PipelineConfig c;
  c.ready_quota = c.db_capacity_per_group + 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("initial calibration keywords") {
  const PipelineConfig truth = config_from_json({{"initial_calibration", "truth"}});
  CHECK(boxminus(truth.initial, truth.scenario.truth).norm() == 0.0);
  const PipelineConfig nominal = config_from_json(nlohmann::json::object());
  CHECK(boxminus(nominal.initial, nominal_calibration()).norm() == 0.0);
}

TEST_CASE("block deviation") {
  const CalibrationParams a = reference_calibration();
  const BlockDeviation zero = block_deviation(a, a);
  REQUIRE(zero.values.size() == kCalibBlocks.size());
  for (double v : zero.values) CHECK(v == 0.0);

  CalibVector d = CalibVector::Zero();
  d(calib_index::kFocal) = 3.0;
  d(calib_index::kFocal + 1) = 4.0;
  const BlockDeviation dev = block_deviation(boxplus(a, d), a);
  for (std::size_t b = 0; b < kCalibBlocks.size(); ++b) {
    CHECK(dev.values[b] == doctest::Approx(kCalibBlocks[b].name == "f" ? 5.0 : 0.0));
  }
}

TEST_CASE("recalibrate-on-update pipeline") {
  const PipelineConfig c = small_config();
  const PipelineResult r = run_pipeline(c, small_dataset());
  CHECK(r.segments_seen == 15);
  CHECK(r.scores.size() == 15);
  REQUIRE(r.calibrated);
  REQUIRE_FALSE(r.trace.empty());

  // one row per database update that accepted the segment into some table
  int previous = 0, solved = 0;
  for (const TraceRow& row : r.trace) {
    CHECK(row.update > previous);
    CHECK(row.update <= 15);
    CHECK_FALSE(row.accepted_groups.empty());
    CHECK(row.stored_segments <= c.grouping.size() * c.db_capacity_per_group);
    CHECK_FALSE(row.deviation.has_value());
    previous = row.update;
    solved += row.solved;
  }
  CHECK(solved == r.solves);
  CHECK(r.solves >= 1);

  const std::set<std::int64_t> used(r.used_segments.begin(), r.used_segments.end());
  CHECK(used.size() == r.used_segments.size());
  CHECK(used.size() <= c.grouping.size() * c.db_capacity_per_group);
  CHECK(r.partitions.contains("partitions"));

  // starting from nominal, the solve moves toward the truth
  const CalibVector before = boxminus(c.initial, c.scenario.truth);
  const CalibVector after = boxminus(r.calibration, c.scenario.truth);
  CHECK(std::abs(after(calib_index::kFocal)) < std::abs(before(calib_index::kFocal)));

  SUBCASE("deterministic") {
    const PipelineResult again = run_pipeline(c, small_dataset());
    CHECK(boxminus(again.calibration, r.calibration).norm() == 0.0);
    CHECK(again.used_segments == r.used_segments);
  }
}

TEST_CASE("one-shot and end-of-stream triggers solve once") {
  PipelineConfig c = small_config();
  c.trigger = CalibrationTrigger::kOneShot;
  const PipelineResult once = run_pipeline(c, small_dataset());
  CHECK(once.calibrated);
  CHECK(once.solves == 1);
  CHECK(once.segments_seen < 15);

  c.trigger = CalibrationTrigger::kEndOfStream;
  const PipelineResult end = run_pipeline(c, small_dataset());
  CHECK(end.calibrated);
  CHECK(end.solves == 1);
  CHECK(end.segments_seen == 15);
}

TEST_CASE("trace deviations against a given reference") {
  PipelineConfig c = small_config();
  c.trace = true;
  const CalibrationParams ref = c.scenario.truth;
  const PipelineResult r = run_pipeline(c, small_dataset(), &ref);
  for (const TraceRow& row : r.trace) CHECK(row.deviation.has_value() == row.solved);
}

TEST_CASE("quota never reached") {
  PipelineConfig c = small_config();
  c.db_capacity_per_group = 20;
  c.ready_quota = 20;
  const PipelineResult r = run_pipeline(c, small_dataset());
  CHECK_FALSE(r.calibrated);
  CHECK(r.solves == 0);
  CHECK(r.used_segments.empty());
}

TEST_CASE("mean and std formatting") {
  CHECK(format_mean_std(254.5, 0.13) == "254.50 ± 0.13");
  CHECK(format_mean_std(0.0012345, 0.00021) == "0.00123 ± 0.00021");
  CHECK(format_mean_std(12.0, 3.0) == "12.0 ± 3.0");
  CHECK(format_mean_std(1.5, 0.0) == "1.500000 ± 0.000000");
}

TEST_CASE("parameter statistics") {
  const CalibrationParams a = reference_calibration();
  CalibVector d = CalibVector::Zero();
  d(calib_index::kFocal) = 2.0;
  const auto stats = parameter_statistics({a, boxplus(a, d)});
  REQUIRE(stats.size() == 2 + 20);  // two rotation rows plus 20 scalar dof
  for (const ParameterStats& s : stats) {
    if (s.name == "f[0]") {
      CHECK(s.mean == doctest::Approx(a.camera.focal(0) + 1.0));
      CHECK(s.std == doctest::Approx(std::sqrt(2.0)));
    } else {
      CHECK(s.std == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
  CHECK(parameter_statistics({}).empty());
}

TEST_CASE("report writers keep their headers when empty") {
  std::ostringstream stats, runtime, trace, hist;
  write_statistics_table(stats, {}, {});
  write_runtime_table(runtime, {});
  write_trace_csv(trace, {}, default_grouping());
  write_entropy_histogram(hist, {}, default_grouping());
  CHECK(stats.str() == "parameter,informative,batch\n");
  CHECK(count_lines(runtime.str()) == 1);
  CHECK(count_lines(trace.str()) == 1);
  CHECK(hist.str() == "group,bin_lower,bin_upper,count\n");
}

TEST_CASE("report writers") {
  SegmentScore s1, s2, s3;
  s1.entropies = {1.0, 2.0, 3.0};
  s2.entropies = {2.0, kInfiniteEntropy, 4.0};
  s3.entropies = {3.0, 1.0, 5.0};
  std::ostringstream hist;
  write_entropy_histogram(hist, {s1, s2, s3}, default_grouping(), 4);
  // 3 groups x 4 bins plus one infinite row
  CHECK(count_lines(hist.str()) == 1 + 12 + 1);
  CHECK(hist.str().find("camera,inf,inf,1") != std::string::npos);
  CHECK_THROWS_AS(write_entropy_histogram(hist, {s1}, default_grouping(), 0), std::invalid_argument);

  TraceRow row;
  row.update = 3;
  row.segment_id = 7;
  row.accepted_groups = {0, 2};
  row.solved = true;
  row.deviation = BlockDeviation{std::vector<double>(kCalibBlocks.size(), 0.5)};
  std::ostringstream trace;
  write_trace_csv(trace, {row}, default_grouping());
  const std::string body = trace.str().substr(trace.str().find('\n') + 1);
  CHECK(body.rfind("3,7,0,imu;extrinsics,0,1,0", 0) == 0);
  CHECK(std::count(body.begin(), body.end(), ',') == 6 + static_cast<int>(kCalibBlocks.size()));

  RunSummary a, b;
  a.mode = b.mode = PipelineMode::kBatch;
  a.solve_seconds = 1.0;
  b.solve_seconds = 3.0;
  std::ostringstream runtime;
  write_runtime_table(runtime, {a, b});
  CHECK(runtime.str().find("batch,2,2.0000,1.4142") != std::string::npos);

  const RunSummary back = run_summary_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(back.mode == PipelineMode::kBatch);
  CHECK(back.solve_seconds == 1.0);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
