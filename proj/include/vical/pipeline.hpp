#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/information.hpp"
#include "vical/segment_db.hpp"
#include "vical/simulator.hpp"
#include "vical/solver.hpp"

namespace vical {

enum class PipelineMode { kInformative, kLeastInformative, kBatch };
const char* to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(const std::string& s);  // throws std::invalid_argument

// When the informative pipeline solves the sparsified problem.
enum class CalibrationTrigger {
  kOneShot,              // once, as soon as every table holds its quota; stop consuming
  kRecalibrateOnUpdate,  // after every database update once ready
  kEndOfStream,          // once, after the last segment
};
const char* to_string(CalibrationTrigger trigger);
CalibrationTrigger calibration_trigger_from_string(const std::string& s);

// Invalid configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
  Scenario scenario;         // data source unless `dataset` names an NDJSON file
  std::string dataset;
  PipelineMode mode = PipelineMode::kInformative;
  CalibrationTrigger trigger = CalibrationTrigger::kRecalibrateOnUpdate;
  int segment_len_kf = 40;
  std::size_t db_capacity_per_group = 8;
  std::size_t ready_quota = 8;  // per table
  int covis_threshold = 15;
  int min_landmark_observations = 3;
  ParameterGrouping grouping = default_grouping();
  NormalizationRef sigma_ref;
  CalibrationParams initial = nominal_calibration();
  SolverOptions solver = default_pipeline_solver();
  bool trace = true;  // deviations of every re-solve to the batch solution

  static SolverOptions default_pipeline_solver();
  void validate() const;  // throws ConfigError
};

// Every key is optional and falls back to the defaults above; unknown keys and
// malformed values throw ConfigError. "initial_calibration" is "nominal",
// "truth" or a calibration object.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::string& path);

// Dataset named by the config, or generated from its scenario.
Dataset load_dataset(const PipelineConfig& config);

// Per calibration block: norm of the tangent difference (rad for rotations).
struct BlockDeviation {
  std::vector<double> values;  // kCalibBlocks order
};
BlockDeviation block_deviation(const CalibrationParams& a, const CalibrationParams& b);

struct TraceRow {
  int update = 0;  // 1-based count of database updates
  std::int64_t segment_id = 0;
  double start_time = 0.0;
  std::vector<int> accepted_groups;
  std::size_t stored_segments = 0;
  bool solved = false;
  double solve_seconds = 0.0;
  std::optional<BlockDeviation> deviation;  // to the batch solution, when known
};

struct BatchResult {
  CalibrationParams calibration;
  SolveReport solve;
  int keyframes = 0;
  int landmarks = 0;
};

struct PipelineResult {
  PipelineMode mode = PipelineMode::kInformative;
  CalibrationTrigger trigger = CalibrationTrigger::kRecalibrateOnUpdate;
  bool calibrated = false;
  CalibrationParams calibration;
  std::vector<SegmentScore> scores;  // every segment seen, stream order
  std::vector<TraceRow> trace;
  std::size_t segments_seen = 0;
  std::vector<std::int64_t> used_segments;  // ids in the final solve
  SolveReport final_solve;
  int solves = 0;
  double total_solve_seconds = 0.0;
  nlohmann::ordered_json partitions;  // report of the final sparsified problem
  nlohmann::ordered_json database;    // snapshot after the last update
};

// Full problem over every keyframe of the dataset with one gauge fix, started
// at config.initial. Throws SolverError on rank deficiency.
BatchResult run_batch(const PipelineConfig& config, const Dataset& dataset);

// Streams the dataset in segments, scores and stores them, and solves the
// sparsified problem per the trigger. In batch mode the batch solve is the
// result. `batch` (when given) is the reference for trace deviations;
// otherwise, with config.trace set, it is computed first. Throws SolverError
// when a sparsified problem cannot be solved.
PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset,
                            const CalibrationParams* batch = nullptr);

// Per-dof sigma_ref from the first `count` segments of `dataset`.
NormalizationRef compute_reference(const PipelineConfig& config, const Dataset& dataset,
                                   int count);

}  // namespace vical
