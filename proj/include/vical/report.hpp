#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/calibration.hpp"
#include "vical/information.hpp"
#include "vical/pipeline.hpp"

namespace vical {

// Outcome of one calibration run, as stored in a run directory.
struct RunSummary {
  PipelineMode mode = PipelineMode::kInformative;
  std::uint64_t seed = 0;
  CalibrationParams calibration;
  double solve_seconds = 0.0;  // final solve only
  int segments_used = 0;
  int segments_total = 0;
};

nlohmann::ordered_json to_json(const RunSummary& run);
RunSummary run_summary_from_json(const nlohmann::json& j);
RunSummary summarize(const PipelineResult& result, std::uint64_t seed);

struct ParameterStats {
  std::string name;  // "f[0]", or a rotation block name
  double mean = 0.0;
  double std = 0.0;  // sample std (n - 1); 0 for a single run
};

// Per scalar dof mean and std over runs. Rotation blocks give one row each:
// the rotation angle of the average quaternion (deg) and the RMS rodrigues
// angle of the runs about that average (deg).
std::vector<ParameterStats> parameter_statistics(const std::vector<CalibrationParams>& runs);

// "254.50 ± 0.13": decimals follow the leading digit of the std.
std::string format_mean_std(double mean, double std);

// CSV: parameter,informative,batch. A column without runs stays empty.
void write_statistics_table(std::ostream& out, const std::vector<CalibrationParams>& informative,
                            const std::vector<CalibrationParams>& batch);

// CSV: mode,runs,solve_seconds_mean,solve_seconds_std,segments_mean,segments_std;
// one row per mode present, in mode order.
void write_runtime_table(std::ostream& out, const std::vector<RunSummary>& runs);

// CSV: update,segment_id,start_time,accepted_groups,stored_segments,solved,
// solve_seconds,e_<block>... (blank deviations when not solved).
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace,
                     const ParameterGrouping& grouping);

// CSV: group,bin_lower,bin_upper,count over the finite entropies of each group
// (equal-width bins between its min and max); non-finite scores are counted in
// a final row per group with bin bounds "inf".
void write_entropy_histogram(std::ostream& out, const std::vector<SegmentScore>& scores,
                             const ParameterGrouping& grouping, int bins = 20);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& data);

}  // namespace vical
