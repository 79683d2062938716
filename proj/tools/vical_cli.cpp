// vical: simulate datasets, score segments, calibrate and summarize runs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vical/pipeline.hpp"
#include "vical/report.hpp"
#include "vical/simulator.hpp"
#include "vical/solver.hpp"

namespace fs = std::filesystem;
using namespace vical;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string dataset;
};

PipelineConfig effective_config(const CommonFlags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.seed) c.scenario.trajectory.seed = *f.seed;
  if (!f.dataset.empty()) c.dataset = f.dataset;
  return c;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Output file stream; creates missing parent directories.
std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const fs::path& dir, const std::string& verb, const PipelineConfig& config,
                    const std::vector<std::string>& artifacts) {
  nlohmann::ordered_json m;
  m["tool"] = "vical";
  m["verb"] = verb;
  m["config_hash"] = hex64(fnv1a(to_json(config).dump()));
  m["seed"] = config.scenario.trajectory.seed;
  m["dataset"] = config.dataset.empty() ? "generated" : config.dataset;
  m["artifacts"] = artifacts;
  write_json(dir / "manifest.json", m);
}

nlohmann::ordered_json solve_json(const SolveReport& r) {
  nlohmann::ordered_json j;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  j["iterations"] = r.iterations;
  j["accepted"] = r.accepted;
  j["termination"] = to_string(r.termination);
  j["converged"] = r.converged();
  j["seconds"] = r.seconds;
  return j;
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const CommonFlags& flags, const std::string& out_path,
                 std::optional<double> duration, const std::string& profile, bool noise_free) {
  PipelineConfig c = effective_config(flags);
  try {
    if (duration) c.scenario.trajectory.duration = *duration;
    if (!profile.empty()) c.scenario.trajectory.profile = motion_profile_from_string(profile);
    if (noise_free) c.scenario.noisy = false;
    c.scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Dataset d = generate(c.scenario);
  std::ofstream out = open_output(out_path);
  write_dataset(out, d);
  std::cerr << "wrote " << d.keyframes.size() << " keyframes, " << d.landmarks.size()
            << " landmarks, " << d.observations.size() << " observations to " << out_path << "\n";
  return kExitOk;
}

// --- calibrate --------------------------------------------------------------

int cmd_calibrate(const CommonFlags& flags, const std::string& mode, const std::string& trigger,
                  const std::string& run_dir, bool no_trace) {
  PipelineConfig c = effective_config(flags);
  try {
    if (!mode.empty()) c.mode = pipeline_mode_from_string(mode);
    if (!trigger.empty()) c.trigger = calibration_trigger_from_string(trigger);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (no_trace) c.trace = false;
  c.validate();
  const Dataset d = load_dataset(c);

  const fs::path dir(run_dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(c));

  const PipelineResult r = run_pipeline(c, d);
  std::vector<std::string> artifacts = {"config.json"};
  auto artifact = [&](const std::string& name) { artifacts.push_back(name); return dir / name; };

  {
    std::ofstream out(artifact("scores.csv"));
    write_score_csv(out, r.scores, c.grouping);
  }
  {
    std::ofstream out(artifact("trace.csv"));
    write_trace_csv(out, r.trace, c.grouping);
  }
  if (!r.database.is_null()) write_json(artifact("database.json"), r.database);
  if (!r.partitions.is_null()) write_json(artifact("partitions.json"), r.partitions);
  if (!r.calibrated) {
    write_manifest(dir, "calibrate", c, artifacts);
    std::cerr << "calibration not triggered: the database never held " << c.ready_quota
              << " segments per group (" << r.segments_seen << " segments seen)\n";
    return kExitSolver;
  }
  write_json(artifact("calibration.json"), to_json(r.calibration));
  write_json(artifact("solve.json"), solve_json(r.final_solve));
  write_json(artifact("summary.json"), to_json(summarize(r, c.scenario.trajectory.seed)));
  write_manifest(dir, "calibrate", c, artifacts);

  std::cout << to_string(c.mode) << ": " << r.used_segments.size() << " of " << r.segments_seen
            << " segments, " << r.solves << " solve(s), final solve " << r.final_solve.seconds
            << " s (" << to_string(r.final_solve.termination) << ")\n";
  return kExitOk;
}

// --- score ------------------------------------------------------------------

int cmd_score(const CommonFlags& flags, const std::string& out_path, int reference,
              const std::string& reference_out) {
  PipelineConfig c = effective_config(flags);
  const Dataset d = load_dataset(c);
  if (reference > 0) {
    const NormalizationRef ref = compute_reference(c, d, reference);
    const std::string text = to_json(ref).dump(2) + "\n";
    if (reference_out.empty()) std::cout << text; else write_text(reference_out, text);
    return kExitOk;
  }
  std::vector<SegmentScore> scores;
  SegmentStream stream(d, c.segment_len_kf);
  while (std::optional<Segment> s = stream.next()) {
    scores.push_back(score_segment(*s, c.initial, d.scenario.noise, d.scenario.world, c.grouping,
                                   c.sigma_ref));
  }
  if (out_path.empty() || out_path == "-") {
    write_score_csv(std::cout, scores, c.grouping);
  } else {
    std::ofstream out = open_output(out_path);
    write_score_csv(out, scores, c.grouping);
  }
  return kExitOk;
}

// --- report -----------------------------------------------------------------

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<SegmentScore> read_score_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<SegmentScore> scores;
  std::string line;
  if (!std::getline(in, line)) return scores;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    SegmentScore s;
    s.segment_id = std::stoll(cells.at(0));
    s.start_time = std::stod(cells.at(1));
    for (std::size_t i = 2; i < cells.size(); ++i) {
      s.entropies.push_back(cells[i] == "inf" ? kInfiniteEntropy : std::stod(cells[i]));
    }
    scores.push_back(s);
  }
  return scores;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir, int bins) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<RunSummary> summaries;
  std::vector<CalibrationParams> informative, batch;
  std::vector<SegmentScore> scores;
  std::optional<ParameterGrouping> grouping;
  std::ofstream trace(dir / "trace.csv");
  bool trace_header = false;

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path run(runs[i]);
    std::ifstream in(run / "summary.json");
    if (!in) throw ConfigError("no summary.json in " + run.string());
    const RunSummary s = run_summary_from_json(nlohmann::json::parse(in));
    summaries.push_back(s);
    if (s.mode == PipelineMode::kBatch) batch.push_back(s.calibration);
    else if (s.mode == PipelineMode::kInformative) informative.push_back(s.calibration);

    std::ifstream cfg(run / "config.json");
    if (cfg && !grouping) grouping = config_from_json(nlohmann::json::parse(cfg)).grouping;
    if (fs::exists(run / "scores.csv")) {
      const auto more = read_score_csv(run / "scores.csv");
      scores.insert(scores.end(), more.begin(), more.end());
    }
    std::ifstream tr(run / "trace.csv");
    std::string line;
    if (std::getline(tr, line)) {
      if (!trace_header) trace << "run," << line << "\n";
      trace_header = true;
      while (std::getline(tr, line)) trace << i << ',' << line << "\n";
    }
  }
  if (!trace_header) {
    write_trace_csv(trace, {}, grouping.value_or(default_grouping()));
  }
  {
    std::ofstream out(dir / "statistics.csv");
    write_statistics_table(out, informative, batch);
  }
  {
    std::ofstream out(dir / "runtime.csv");
    write_runtime_table(out, summaries);
  }
  {
    std::ofstream out(dir / "entropy_histogram.csv");
    write_entropy_histogram(out, scores, grouping.value_or(default_grouping()), bins);
  }
  std::cout << "report over " << runs.size() << " run(s) written to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment-based visual-inertial self-calibration"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* sub, bool with_dataset) {
    sub->add_option("-c,--config", flags.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "trajectory and noise seed (overrides config)");
    if (with_dataset) {
      sub->add_option("--dataset", flags.dataset, "NDJSON dataset instead of a generated one")
          ->check(CLI::ExistingFile);
    }
  };

  auto* sim = app.add_subcommand("simulate", "generate a dataset");
  add_common(sim, false);
  std::string sim_out, sim_profile;
  std::optional<double> sim_duration;
  bool noise_free = false;
  sim->add_option("-o,--out", sim_out, "output NDJSON file")->required();
  sim->add_option("--duration", sim_duration, "seconds");
  sim->add_option("--profile", sim_profile,
                  "excited, constant-velocity, static, pure-rotation, calm or mixed");
  sim->add_flag("--noise-free", noise_free, "no sensor noise");

  auto* cal = app.add_subcommand("calibrate", "run the calibration pipeline");
  add_common(cal, true);
  std::string mode, trigger, run_dir;
  bool no_trace = false;
  cal->add_option("--mode", mode, "informative, least-informative or batch");
  cal->add_option("--trigger", trigger, "one-shot, recalibrate-on-update or end-of-stream");
  cal->add_option("-r,--run-dir", run_dir, "directory for the run artifacts")->required();
  cal->add_flag("--no-trace", no_trace, "skip the batch reference for the convergence trace");

  auto* score = app.add_subcommand("score", "score every segment of a dataset");
  add_common(score, true);
  std::string score_out, reference_out;
  int reference = 0;
  score->add_option("-o,--out", score_out, "CSV output (default stdout)");
  score->add_option("--reference", reference,
                    "compute sigma_ref from this many segments instead of scoring");
  score->add_option("--reference-out", reference_out, "JSON output for --reference");

  auto* rep = app.add_subcommand("report", "aggregate run directories");
  std::vector<std::string> runs;
  std::string report_out;
  int bins = 20;
  rep->add_option("runs", runs, "run directories")->check(CLI::ExistingDirectory);
  rep->add_option("-o,--out", report_out, "output directory")->required();
  rep->add_option("--bins", bins, "entropy histogram bins")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(flags, sim_out, sim_duration, sim_profile, noise_free);
    if (*cal) return cmd_calibrate(flags, mode, trigger, run_dir, no_trace);
    if (*score) return cmd_score(flags, score_out, reference, reference_out);
    if (*rep) return cmd_report(runs, report_out, bins);
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << " (block " << e.block() << ", deficiency "
              << e.deficiency() << ")\n";
    return kExitSolver;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
