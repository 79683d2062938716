#include "vical/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace vical {

nlohmann::ordered_json to_json(const RunSummary& run) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(run.mode);
  j["seed"] = run.seed;
  j["calibration"] = to_json(run.calibration);
  j["solve_seconds"] = run.solve_seconds;
  j["segments_used"] = run.segments_used;
  j["segments_total"] = run.segments_total;
  return j;
}

RunSummary run_summary_from_json(const nlohmann::json& j) {
  RunSummary r;
  r.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.calibration = calibration_from_json(j.at("calibration"));
  r.solve_seconds = j.at("solve_seconds").get<double>();
  r.segments_used = j.at("segments_used").get<int>();
  r.segments_total = j.at("segments_total").get<int>();
  return r;
}

RunSummary summarize(const PipelineResult& result, std::uint64_t seed) {
  RunSummary r;
  r.mode = result.mode;
  r.seed = seed;
  r.calibration = result.calibration;
  r.solve_seconds = result.final_solve.seconds;
  r.segments_used = static_cast<int>(result.used_segments.size());
  r.segments_total = static_cast<int>(result.segments_seen);
  return r;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& std) {
  mean = 0.0;
  std = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Quat block_rotation(const CalibrationParams& c, std::string_view name) {
  return name == "q_CI" ? c.extrinsics.q_CI : c.accel.q_AI;
}

double scalar_dof(const CalibrationParams& c, int index) {
  using namespace calib_index;
  if (index >= kTranslationCI && index < kTranslationCI + 3) return c.extrinsics.p_CI(index - kTranslationCI);
  if (index >= kFocal && index < kFocal + 2) return c.camera.focal(index - kFocal);
  if (index >= kPrincipal && index < kPrincipal + 2) return c.camera.principal(index - kPrincipal);
  if (index == kDistortion) return c.camera.distortion;
  if (index >= kGyroScale && index < kGyroScale + 3) return c.gyro.scale(index - kGyroScale);
  if (index >= kGyroMisalign && index < kGyroMisalign + 3) return c.gyro.misalignment(index - kGyroMisalign);
  if (index >= kAccelScale && index < kAccelScale + 3) return c.accel.scale(index - kAccelScale);
  if (index >= kAccelMisalign && index < kAccelMisalign + 3) return c.accel.misalignment(index - kAccelMisalign);
  throw std::invalid_argument("not a scalar calibration dof: " + std::to_string(index));
}

constexpr double kRadToDeg = 180.0 / M_PI;

}  // namespace

std::vector<ParameterStats> parameter_statistics(const std::vector<CalibrationParams>& runs) {
  std::vector<ParameterStats> out;
  if (runs.empty()) return out;
  for (const CalibBlock& blk : kCalibBlocks) {
    if (blk.rotation) {
      std::vector<Quat> qs;
      for (const CalibrationParams& c : runs) qs.push_back(block_rotation(c, blk.name));
      const Quat avg = geometry::average_quaternion(qs);
      ParameterStats s;
      s.name = std::string(blk.name);
      s.mean = geometry::rodrigues_angle(avg) * kRadToDeg;
      if (qs.size() > 1) {
        double ss = 0.0;
        for (const Quat& q : qs) {
          const double a = geometry::rodrigues_angle(avg.conjugate() * q);
          ss += a * a;
        }
        s.std = std::sqrt(ss / static_cast<double>(qs.size() - 1)) * kRadToDeg;
      }
      out.push_back(s);
      continue;
    }
    for (int i = 0; i < blk.size; ++i) {
      std::vector<double> v;
      for (const CalibrationParams& c : runs) v.push_back(scalar_dof(c, blk.offset + i));
      ParameterStats s;
      s.name = calibration_dof_name(blk.offset + i);
      mean_std(v, s.mean, s.std);
      out.push_back(s);
    }
  }
  return out;
}

std::string format_mean_std(double mean, double std) {
  int decimals = 6;
  if (std > 0.0 && std::isfinite(std)) {
    decimals = std::clamp(1 - static_cast<int>(std::floor(std::log10(std))), 0, 12);
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", decimals, mean, decimals, std);
  return buf;
}

void write_statistics_table(std::ostream& out, const std::vector<CalibrationParams>& informative,
                            const std::vector<CalibrationParams>& batch) {
  out << "parameter,informative,batch\n";
  const auto a = parameter_statistics(informative);
  const auto b = parameter_statistics(batch);
  const std::size_t rows = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << (i < a.size() ? a[i].name : b[i].name) << ',';
    if (i < a.size()) out << format_mean_std(a[i].mean, a[i].std);
    out << ',';
    if (i < b.size()) out << format_mean_std(b[i].mean, b[i].std);
    out << '\n';
  }
}

void write_runtime_table(std::ostream& out, const std::vector<RunSummary>& runs) {
  out << "mode,runs,solve_seconds_mean,solve_seconds_std,segments_mean,segments_std\n";
  std::map<PipelineMode, std::pair<std::vector<double>, std::vector<double>>> by_mode;
  for (const RunSummary& r : runs) {
    by_mode[r.mode].first.push_back(r.solve_seconds);
    by_mode[r.mode].second.push_back(r.segments_used);
  }
  for (const auto& [mode, v] : by_mode) {
    double tm, ts, sm, ss;
    mean_std(v.first, tm, ts);
    mean_std(v.second, sm, ss);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.4f,%.4f,%.2f,%.2f\n", to_string(mode), v.first.size(),
                  tm, ts, sm, ss);
    out << buf;
  }
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace,
                     const ParameterGrouping& grouping) {
  out << "update,segment_id,start_time,accepted_groups,stored_segments,solved,solve_seconds";
  for (const CalibBlock& blk : kCalibBlocks) out << ",e_" << blk.name;
  out << '\n';
  for (const TraceRow& r : trace) {
    out << r.update << ',' << r.segment_id << ',' << r.start_time << ',';
    for (std::size_t i = 0; i < r.accepted_groups.size(); ++i) {
      if (i > 0) out << ';';
      const int g = r.accepted_groups[i];
      out << (g >= 0 && static_cast<std::size_t>(g) < grouping.size() ? grouping.groups[g].name
                                                                      : std::to_string(g));
    }
    out << ',' << r.stored_segments << ',' << (r.solved ? 1 : 0) << ',' << r.solve_seconds;
    for (std::size_t b = 0; b < kCalibBlocks.size(); ++b) {
      out << ',';
      if (r.deviation) out << r.deviation->values.at(b);
    }
    out << '\n';
  }
}

void write_entropy_histogram(std::ostream& out, const std::vector<SegmentScore>& scores,
                             const ParameterGrouping& grouping, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  out << "group,bin_lower,bin_upper,count\n";
  if (scores.empty()) return;
  for (std::size_t q = 0; q < grouping.size(); ++q) {
    std::vector<double> finite;
    int infinite = 0;
    for (const SegmentScore& s : scores) {
      const double h = s.entropies.at(q);
      if (std::isfinite(h)) finite.push_back(h); else ++infinite;
    }
    const std::string& name = grouping.groups[q].name;
    if (!finite.empty()) {
      const auto [lo_it, hi_it] = std::minmax_element(finite.begin(), finite.end());
      const double lo = *lo_it;
      const double width = *hi_it > lo ? (*hi_it - lo) / bins : 1.0;
      std::vector<int> counts(bins, 0);
      for (double h : finite) counts[std::min(bins - 1, static_cast<int>((h - lo) / width))]++;
      for (int b = 0; b < bins; ++b) {
        out << name << ',' << lo + b * width << ',' << lo + (b + 1) * width << ',' << counts[b] << '\n';
      }
    }
    if (infinite > 0) out << name << ",inf,inf," << infinite << '\n';
  }
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace vical
