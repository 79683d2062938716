#include "vical/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include "vical/partitioner.hpp"
#include "vical/segment.hpp"

namespace vical {

const char* to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kInformative: return "informative";
    case PipelineMode::kLeastInformative: return "least-informative";
    case PipelineMode::kBatch: return "batch";
  }
  return "?";
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "informative") return PipelineMode::kInformative;
  if (s == "least-informative") return PipelineMode::kLeastInformative;
  if (s == "batch") return PipelineMode::kBatch;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

const char* to_string(CalibrationTrigger trigger) {
  switch (trigger) {
    case CalibrationTrigger::kOneShot: return "one-shot";
    case CalibrationTrigger::kRecalibrateOnUpdate: return "recalibrate-on-update";
    case CalibrationTrigger::kEndOfStream: return "end-of-stream";
  }
  return "?";
}

CalibrationTrigger calibration_trigger_from_string(const std::string& s) {
  if (s == "one-shot") return CalibrationTrigger::kOneShot;
  if (s == "recalibrate-on-update") return CalibrationTrigger::kRecalibrateOnUpdate;
  if (s == "end-of-stream") return CalibrationTrigger::kEndOfStream;
  throw std::invalid_argument("unknown trigger '" + s + "'");
}

SolverOptions PipelineConfig::default_pipeline_solver() {
  SolverOptions o;
  o.max_iterations = 50;
  o.relative_cost_tolerance = 1e-5;
  return o;
}

void PipelineConfig::validate() const {
  try {
    scenario.validate();
    grouping.validate();
    sigma_ref.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (segment_len_kf < 2) throw ConfigError("segment_len_kf must be >= 2");
  if (db_capacity_per_group < 1) throw ConfigError("db_capacity_per_group must be >= 1");
  if (ready_quota > db_capacity_per_group) {
    throw ConfigError("ready_quota cannot exceed db_capacity_per_group");
  }
  if (covis_threshold < 0) throw ConfigError("covis_threshold must be >= 0");
  if (min_landmark_observations < 2) throw ConfigError("min_landmark_observations must be >= 2");
  if (solver.max_iterations < 1) throw ConfigError("solver.max_iterations must be >= 1");
  if (!(solver.initial_lambda >= 0.0) || !(solver.relative_cost_tolerance >= 0.0) ||
      !(solver.gradient_tolerance >= 0.0) || !(solver.step_tolerance >= 0.0) ||
      !(solver.rank_tolerance > 0.0)) {
    throw ConfigError("solver tolerances must be non-negative");
  }
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

nlohmann::ordered_json solver_json(const SolverOptions& o) {
  nlohmann::ordered_json j;
  j["max_iterations"] = o.max_iterations;
  j["initial_lambda"] = o.initial_lambda;
  j["relative_cost_tolerance"] = o.relative_cost_tolerance;
  j["gradient_tolerance"] = o.gradient_tolerance;
  j["step_tolerance"] = o.step_tolerance;
  j["rank_tolerance"] = o.rank_tolerance;
  return j;
}

SolverOptions solver_from_json(const nlohmann::json& j, SolverOptions o) {
  check_keys(j, {"max_iterations", "initial_lambda", "relative_cost_tolerance",
                 "gradient_tolerance", "step_tolerance", "rank_tolerance"},
             "solver");
  o.max_iterations = j.value("max_iterations", o.max_iterations);
  o.initial_lambda = j.value("initial_lambda", o.initial_lambda);
  o.relative_cost_tolerance = j.value("relative_cost_tolerance", o.relative_cost_tolerance);
  o.gradient_tolerance = j.value("gradient_tolerance", o.gradient_tolerance);
  o.step_tolerance = j.value("step_tolerance", o.step_tolerance);
  o.rank_tolerance = j.value("rank_tolerance", o.rank_tolerance);
  return o;
}

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    check_keys(j,
               {"scenario", "dataset", "mode", "trigger", "segment_len_kf",
                "db_capacity_per_group", "ready_quota", "covis_threshold",
                "min_landmark_observations", "grouping", "sigma_ref", "initial_calibration",
                "solver", "trace"},
               "config");
    if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("mode")) c.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("trigger")) {
      c.trigger = calibration_trigger_from_string(j.at("trigger").get<std::string>());
    }
    c.segment_len_kf = j.value("segment_len_kf", c.segment_len_kf);
    c.db_capacity_per_group = j.value("db_capacity_per_group", c.db_capacity_per_group);
    c.ready_quota = j.value("ready_quota", c.ready_quota);
    c.covis_threshold = j.value("covis_threshold", c.covis_threshold);
    c.min_landmark_observations = j.value("min_landmark_observations", c.min_landmark_observations);
    if (j.contains("grouping")) c.grouping = grouping_from_json(j.at("grouping"));
    if (j.contains("sigma_ref")) c.sigma_ref = normalization_from_json(j.at("sigma_ref"));
    if (j.contains("initial_calibration")) {
      const auto& init = j.at("initial_calibration");
      if (init.is_string()) {
        const std::string name = init.get<std::string>();
        if (name == "nominal") {
          c.initial = nominal_calibration();
        } else if (name == "truth") {
          c.initial = c.scenario.truth;
        } else {
          throw ConfigError("initial_calibration must be \"nominal\", \"truth\" or an object");
        }
      } else {
        c.initial = calibration_from_json(init);
      }
    }
    if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"), c.solver);
    c.trace = j.value("trace", c.trace);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["scenario"] = to_json(c.scenario);
  if (!c.dataset.empty()) j["dataset"] = c.dataset;
  j["mode"] = to_string(c.mode);
  j["trigger"] = to_string(c.trigger);
  j["segment_len_kf"] = c.segment_len_kf;
  j["db_capacity_per_group"] = c.db_capacity_per_group;
  j["ready_quota"] = c.ready_quota;
  j["covis_threshold"] = c.covis_threshold;
  j["min_landmark_observations"] = c.min_landmark_observations;
  j["grouping"] = to_json(c.grouping);
  j["sigma_ref"] = to_json(c.sigma_ref);
  j["initial_calibration"] = to_json(c.initial);
  j["solver"] = solver_json(c.solver);
  j["trace"] = c.trace;
  return j;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

Dataset load_dataset(const PipelineConfig& config) {
  if (config.dataset.empty()) return generate(config.scenario);
  std::ifstream in(config.dataset);
  if (!in) throw ConfigError("cannot open dataset '" + config.dataset + "'");
  return read_dataset(in);
}

BlockDeviation block_deviation(const CalibrationParams& a, const CalibrationParams& b) {
  const CalibVector d = boxminus(a, b);
  BlockDeviation out;
  for (const CalibBlock& blk : kCalibBlocks) out.values.push_back(d.segment(blk.offset, blk.size).norm());
  return out;
}

// ---------------------------------------------------------------------------

BatchResult run_batch(const PipelineConfig& config, const Dataset& dataset) {
  const Scenario& sc = dataset.scenario;
  Problem problem(config.initial, sc.noise, sc.world);
  for (const KeyframeState& k : dataset.keyframes) problem.add_keyframe(k);

  std::unordered_map<std::int64_t, int> seen;
  for (const Observation& o : dataset.observations) {
    if (problem.has_keyframe(o.keyframe_id)) ++seen[o.landmark_id];
  }
  for (const Landmark& l : dataset.landmarks) {
    const auto it = seen.find(l.id);
    if (it != seen.end() && it->second >= config.min_landmark_observations) problem.add_landmark(l);
  }
  // IMU samples are time-ordered; walk them once.
  auto first = dataset.imu.begin();
  for (std::size_t k = 0; k + 1 < dataset.keyframes.size(); ++k) {
    const KeyframeState& a = dataset.keyframes[k];
    const KeyframeState& b = dataset.keyframes[k + 1];
    first = std::lower_bound(first, dataset.imu.end(), a.t - 1e-9,
                             [](const ImuSample& s, double t) { return s.t < t; });
    auto last = std::upper_bound(first, dataset.imu.end(), b.t + 1e-9,
                                 [](double t, const ImuSample& s) { return t < s.t; });
    problem.add_inertial_factor(a.id, b.id, std::vector<ImuSample>(first, last));
  }
  for (const Observation& o : dataset.observations) {
    if (problem.has_keyframe(o.keyframe_id) && problem.has_landmark(o.landmark_id)) {
      problem.add_reprojection_factor(o);
    }
  }
  if (dataset.keyframes.empty()) throw std::invalid_argument("dataset has no keyframes");
  problem.fix_gauge(dataset.keyframes.front().id);

  BatchResult out;
  out.keyframes = static_cast<int>(problem.keyframes().size());
  out.landmarks = static_cast<int>(problem.landmarks().size());
  out.solve = solve(problem, config.solver);
  out.calibration = problem.calibration();
  return out;
}

namespace {

struct DatabaseSolve {
  CalibrationParams calibration;
  SolveReport report;
  std::vector<std::int64_t> ids;
  nlohmann::ordered_json partitions;
};

DatabaseSolve solve_database(const SegmentDatabase& db, const PipelineConfig& config,
                             const CalibrationParams& start, const Scenario& sc) {
  const auto records = db.drain();
  std::vector<const Segment*> segments;
  DatabaseSolve out;
  for (const auto& r : records) {
    segments.push_back(&r->segment);
    out.ids.push_back(r->segment.id);
  }
  SparsifyOptions options;
  options.covis_threshold = config.covis_threshold;
  options.min_landmark_observations = config.min_landmark_observations;
  SparsifiedProblem sp = build_sparsified_problem(segments, start, sc.noise, sc.world, options);
  out.report = solve(sp.problem, config.solver);
  out.calibration = sp.problem.calibration();
  out.partitions = std::move(sp.report);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset,
                            const CalibrationParams* batch) {
  config.validate();
  const Scenario& sc = dataset.scenario;
  PipelineResult result;
  result.mode = config.mode;
  result.trigger = config.trigger;
  result.calibration = config.initial;

  if (config.mode == PipelineMode::kBatch) {
    const BatchResult b = run_batch(config, dataset);
    result.calibrated = true;
    result.calibration = b.calibration;
    result.final_solve = b.solve;
    result.solves = 1;
    result.total_solve_seconds = b.solve.seconds;
    result.segments_seen = SegmentStream(dataset, config.segment_len_kf).size();
    for (std::size_t i = 0; i < result.segments_seen; ++i) {
      result.used_segments.push_back(static_cast<std::int64_t>(i));
    }
    return result;
  }

  std::optional<CalibrationParams> reference;
  if (batch != nullptr) {
    reference = *batch;
  } else if (config.trace && config.trigger != CalibrationTrigger::kEndOfStream) {
    reference = run_batch(config, dataset).calibration;
  }

  std::vector<std::string> names;
  for (const ParameterGroup& g : config.grouping.groups) names.push_back(g.name);
  SegmentDatabase db(names, config.db_capacity_per_group,
                     config.mode == PipelineMode::kLeastInformative
                         ? SelectionMode::kLeastInformative
                         : SelectionMode::kInformative);

  auto run_solve = [&](TraceRow* row) {
    DatabaseSolve s = solve_database(db, config, result.calibration, sc);
    result.calibration = s.calibration;
    result.calibrated = true;
    result.final_solve = s.report;
    result.used_segments = std::move(s.ids);
    result.partitions = std::move(s.partitions);
    ++result.solves;
    result.total_solve_seconds += s.report.seconds;
    if (row != nullptr) {
      row->solved = true;
      row->solve_seconds = s.report.seconds;
      if (reference) row->deviation = block_deviation(result.calibration, *reference);
    }
  };

  SegmentStream stream(dataset, config.segment_len_kf);
  int updates = 0;
  while (std::optional<Segment> segment = stream.next()) {
    ++result.segments_seen;
    // Scored at the latest calibration estimate.
    SegmentScore score;
    try {
      score = score_segment(*segment, result.calibration, sc.noise, sc.world, config.grouping,
                            config.sigma_ref);
    } catch (const std::invalid_argument&) {
      // no usable factors: never selected
      score.segment_id = segment->id;
      score.start_time = segment->start_time();
      score.first_keyframe = segment->first_keyframe();
      score.last_keyframe = segment->last_keyframe();
      score.entropies.assign(config.grouping.size(), kInfiniteEntropy);
      score.singular = true;
    }
    result.scores.push_back(score);
    const std::vector<int> accepted = db.update({std::move(*segment), score});
    if (accepted.empty()) continue;

    TraceRow row;
    row.update = ++updates;
    row.segment_id = score.segment_id;
    row.start_time = score.start_time;
    row.accepted_groups = accepted;
    row.stored_segments = db.stored();
    const bool ready = db.is_ready(config.ready_quota);
    if (ready && config.trigger != CalibrationTrigger::kEndOfStream) run_solve(&row);
    result.trace.push_back(std::move(row));
    if (ready && config.trigger == CalibrationTrigger::kOneShot) break;
  }
  if (config.trigger == CalibrationTrigger::kEndOfStream && db.is_ready(config.ready_quota)) {
    run_solve(nullptr);
  }
  result.database = db.snapshot();
  return result;
}

NormalizationRef compute_reference(const PipelineConfig& config, const Dataset& dataset,
                                   int count) {
  if (count < 1) throw std::invalid_argument("reference needs at least one segment");
  const Scenario& sc = dataset.scenario;
  SegmentStream stream(dataset, config.segment_len_kf);
  std::vector<MarginalCovariance> marginals;
  while (static_cast<int>(marginals.size()) < count) {
    std::optional<Segment> segment = stream.next();
    if (!segment) break;
    const Problem problem = make_segment_problem(*segment, config.initial, sc.noise, sc.world);
    marginals.push_back(marginal_covariance(problem));
  }
  return reference_from_marginals(marginals);
}

}  // namespace vical
