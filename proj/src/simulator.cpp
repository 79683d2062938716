#include "vical/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include "vical/geometry.hpp"
#include "vical/sensor_models.hpp"

namespace vical {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

using Json = nlohmann::ordered_json;

Json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json quat_json(const Quat& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

template <int N>
Eigen::Matrix<double, N, 1> json_vec(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw std::runtime_error(std::string("expected ") + std::to_string(N) + " numbers for " + what);
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = j.at(i).get<double>();
  return v;
}

Quat json_quat(const nlohmann::json& j, const char* what) {
  const Vec4 v = json_vec<4>(j, what);
  return Quat(v(0), v(1), v(2), v(3));
}

// (amplitude, angular frequency, phase) with the frequency drawn in [f0, f1] Hz
Eigen::Vector3d term(std::mt19937_64& rng, double amplitude, double f0, double f1) {
  std::uniform_real_distribution<double> f(f0, f1), phase(0.0, kTwoPi);
  return {amplitude, kTwoPi * f(rng), phase(rng)};
}

Json state_json(const KeyframeState& k) {
  return Json{{"q_GI", quat_json(k.q_GI)}, {"p_GI", vec_json(k.p_GI)}, {"v_GI", vec_json(k.v_GI)},
              {"b_a", vec_json(k.b_a)}, {"b_g", vec_json(k.b_g)}};
}

void read_state(const nlohmann::json& j, KeyframeState& k) {
  k.q_GI = json_quat(j.at("q_GI"), "q_GI");
  k.p_GI = json_vec<3>(j.at("p_GI"), "p_GI");
  k.v_GI = json_vec<3>(j.at("v_GI"), "v_GI");
  k.b_a = json_vec<3>(j.at("b_a"), "b_a");
  k.b_g = json_vec<3>(j.at("b_g"), "b_g");
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw std::invalid_argument(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

}  // namespace

const char* to_string(MotionProfile profile) {
  switch (profile) {
    case MotionProfile::kExcited: return "excited";
    case MotionProfile::kConstantVelocity: return "constant-velocity";
    case MotionProfile::kStatic: return "static";
    case MotionProfile::kPureRotation: return "pure-rotation";
    case MotionProfile::kCalm: return "calm";
    case MotionProfile::kMixed: return "mixed";
  }
  return "?";
}

MotionProfile motion_profile_from_string(const std::string& s) {
  for (auto p : {MotionProfile::kExcited, MotionProfile::kConstantVelocity, MotionProfile::kStatic,
                 MotionProfile::kPureRotation, MotionProfile::kCalm, MotionProfile::kMixed}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown motion profile '" + s + "'");
}

void TrajectorySpec::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("trajectory duration must be positive");
  if (!(keyframe_rate > 0.0) || !(imu_rate > 0.0)) throw std::invalid_argument("rates must be positive");
  const double ratio = imu_rate / keyframe_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    throw std::invalid_argument("IMU rate must be an integer multiple of the keyframe rate");
  }
  if (!(room.minCoeff() > 2.0)) throw std::invalid_argument("room extents must exceed 2 m");
  if (!(mixed_period > 0.0)) throw std::invalid_argument("mixed period must be positive");
}

// ---------------------------------------------------------------------------
// Trajectory

Trajectory::Trajectory(const TrajectorySpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double z_center = std::min(1.5, 0.4 * spec.room.z());
  position_[0].offset = 0.2 * u(rng);
  position_[1].offset = 0.2 * u(rng);
  position_[2].offset = z_center;
  yaw_.offset = M_PI * u(rng);

  // excited: walking sweeps plus shaking, fast turns and tilts
  const auto excited = [&](std::vector<Eigen::Vector3d>* pos, std::vector<Eigen::Vector3d>* yaw,
                           std::vector<Eigen::Vector3d>* tilt, bool translate) {
    if (translate) {
      pos[0] = {term(rng, 1.2, 0.15, 0.3), term(rng, 0.15, 0.6, 1.0)};
      pos[1] = {term(rng, 1.0, 0.15, 0.3), term(rng, 0.15, 0.6, 1.0)};
      pos[2] = {term(rng, 0.3, 0.2, 0.4), term(rng, 0.1, 0.6, 1.0)};
    }
    *yaw = {term(rng, 1.2, 0.1, 0.2), term(rng, 0.4, 0.4, 0.7)};
    tilt[0] = {term(rng, 0.3, 0.4, 0.9)};
    tilt[1] = {term(rng, 0.3, 0.4, 0.9)};
    tilt[2] = {term(rng, 0.15, 0.4, 0.9)};
  };
  const auto calm = [&](std::vector<Eigen::Vector3d>* pos, std::vector<Eigen::Vector3d>* yaw,
                        std::vector<Eigen::Vector3d>* tilt) {
    pos[0] = {term(rng, 0.8, 0.02, 0.05)};
    pos[1] = {term(rng, 0.6, 0.02, 0.05)};
    pos[2] = {term(rng, 0.05, 0.05, 0.1)};
    *yaw = {term(rng, 1.5, 0.01, 0.03)};
    for (int i = 0; i < 3; ++i) tilt[i] = {term(rng, 0.03, 0.05, 0.1)};
  };

  std::vector<Eigen::Vector3d> pos_base[3], pos_exc[3], tilt_base[3], tilt_exc[3];
  std::vector<Eigen::Vector3d> yaw_base, yaw_exc;
  switch (spec.profile) {
    case MotionProfile::kStatic:
      break;
    case MotionProfile::kConstantVelocity: {
      const double heading = kTwoPi * 0.5 * (u(rng) + 1.0);
      const double span = 0.6 * std::min(spec.room.x(), spec.room.y());
      const double speed = std::min(0.3, span / spec.duration);
      velocity_ = speed * Vec3(std::cos(heading), std::sin(heading), 0.0);
      break;
    }
    case MotionProfile::kPureRotation:
      excited(pos_base, &yaw_base, tilt_base, false);
      break;
    case MotionProfile::kExcited:
      excited(pos_base, &yaw_base, tilt_base, true);
      break;
    case MotionProfile::kCalm:
      calm(pos_base, &yaw_base, tilt_base);
      break;
    case MotionProfile::kMixed:
      calm(pos_base, &yaw_base, tilt_base);
      excited(pos_exc, &yaw_exc, tilt_exc, true);
      break;
  }
  for (int i = 0; i < 3; ++i) {
    position_[i].base = pos_base[i];
    position_[i].excited = pos_exc[i];
    tilt_[i].base = tilt_base[i];
    tilt_[i].excited = tilt_exc[i];
  }
  yaw_.base = yaw_base;
  yaw_.excited = yaw_exc;
}

Eigen::Vector3d Trajectory::envelope(double t) const {
  if (spec_.profile != MotionProfile::kMixed) return {1.0, 0.0, 0.0};
  // sin^4 keeps long calm stretches between excited bursts
  const double k = M_PI / spec_.mixed_period;
  const double s = std::sin(k * t), c = std::cos(k * t);
  return {std::pow(s, 4), 4.0 * k * s * s * s * c, k * k * (12.0 * s * s * c * c - 4.0 * s * s * s * s)};
}

Eigen::Vector3d Trajectory::evaluate(const Channel& ch, double t) const {
  Eigen::Vector3d base(ch.offset, 0.0, 0.0), exc(0.0, 0.0, 0.0);
  for (const auto& term : ch.base) {
    const double a = term(0), w = term(1), arg = w * t + term(2);
    base += Eigen::Vector3d(a * std::sin(arg), a * w * std::cos(arg), -a * w * w * std::sin(arg));
  }
  for (const auto& term : ch.excited) {
    const double a = term(0), w = term(1), arg = w * t + term(2);
    exc += Eigen::Vector3d(a * std::sin(arg), a * w * std::cos(arg), -a * w * w * std::sin(arg));
  }
  if (ch.excited.empty()) return base;
  const Eigen::Vector3d e = envelope(t);
  return base + Eigen::Vector3d(e(0) * exc(0), e(1) * exc(0) + e(0) * exc(1),
                                e(2) * exc(0) + 2.0 * e(1) * exc(1) + e(0) * exc(2));
}

MotionSample Trajectory::sample(double t) const {
  MotionSample m;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d p = evaluate(position_[i], t);
    m.p_GI(i) = p(0);
    m.v_GI(i) = p(1);
    m.a_GI(i) = p(2);
  }
  if (velocity_.squaredNorm() > 0.0) {
    m.p_GI += velocity_ * (t - 0.5 * spec_.duration);
    m.v_GI += velocity_;
  }
  const Eigen::Vector3d yaw = evaluate(yaw_, t);
  Vec3 tilt, tilt_dot;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = evaluate(tilt_[i], t);
    tilt(i) = v(0);
    tilt_dot(i) = v(1);
  }
  const Mat3 r_tilt = geometry::exp_so3(tilt);
  const Mat3 r = Eigen::AngleAxisd(yaw(0), Vec3::UnitZ()).toRotationMatrix() * r_tilt;
  m.q_GI = Quat(r).normalized();
  m.omega_I = r_tilt.transpose() * Vec3(0.0, 0.0, yaw(1)) + geometry::right_jacobian(tilt) * tilt_dot;
  return m;
}

// ---------------------------------------------------------------------------
// Scenario

void Scenario::validate() const {
  trajectory.validate();
  if (noisy) noise.validate();
  if (landmarks < 0) throw std::invalid_argument("landmark count must be >= 0");
  if (max_track_length < 2) throw std::invalid_argument("max_track_length must be >= 2");
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("image size must be positive");
  if (estimate.position < 0 || estimate.rotation_deg < 0 || estimate.velocity < 0 ||
      estimate.landmark < 0 || estimate.accel_bias < 0 || estimate.gyro_bias < 0) {
    throw std::invalid_argument("estimate perturbations must be >= 0");
  }
}

Json to_json(const Scenario& s) {
  const TrajectorySpec& t = s.trajectory;
  return Json{
      {"trajectory",
       {{"duration", t.duration},
        {"keyframe_rate", t.keyframe_rate},
        {"imu_rate", t.imu_rate},
        {"profile", to_string(t.profile)},
        {"room", vec_json(t.room)},
        {"mixed_period", t.mixed_period},
        {"seed", t.seed}}},
      {"truth", to_json(s.truth)},
      {"noise", to_json(s.noise)},
      {"gravity", vec_json(s.world.gravity)},
      {"image", Json::array({s.image.width, s.image.height})},
      {"landmarks", s.landmarks},
      {"landmark_seed", s.landmark_seed},
      {"max_track_length", s.max_track_length},
      {"noisy", s.noisy},
      {"estimate",
       {{"position", s.estimate.position},
        {"rotation_deg", s.estimate.rotation_deg},
        {"velocity", s.estimate.velocity},
        {"landmark", s.estimate.landmark},
        {"accel_bias", s.estimate.accel_bias},
        {"gyro_bias", s.estimate.gyro_bias}}}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  check_keys(j, {"trajectory", "truth", "noise", "gravity", "image", "landmarks", "landmark_seed",
                 "max_track_length", "noisy", "estimate"},
             "scenario");
  Scenario s;
  s.truth = reference_calibration();
  s.noise = reference_noise();
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    check_keys(t, {"duration", "keyframe_rate", "imu_rate", "profile", "room", "mixed_period", "seed"},
               "trajectory");
    TrajectorySpec& ts = s.trajectory;
    ts.duration = t.value("duration", ts.duration);
    ts.keyframe_rate = t.value("keyframe_rate", ts.keyframe_rate);
    ts.imu_rate = t.value("imu_rate", ts.imu_rate);
    if (t.contains("profile")) ts.profile = motion_profile_from_string(t.at("profile").get<std::string>());
    if (t.contains("room")) ts.room = json_vec<3>(t.at("room"), "room");
    ts.mixed_period = t.value("mixed_period", ts.mixed_period);
    ts.seed = t.value("seed", ts.seed);
  }
  if (j.contains("truth")) s.truth = calibration_from_json(j.at("truth"));
  if (j.contains("noise")) s.noise = noise_from_json(j.at("noise"));
  if (j.contains("gravity")) s.world.gravity = json_vec<3>(j.at("gravity"), "gravity");
  if (j.contains("image")) {
    const Vec2 im = json_vec<2>(j.at("image"), "image");
    s.image.width = static_cast<int>(im(0));
    s.image.height = static_cast<int>(im(1));
  }
  s.landmarks = j.value("landmarks", s.landmarks);
  s.landmark_seed = j.value("landmark_seed", s.landmark_seed);
  s.max_track_length = j.value("max_track_length", s.max_track_length);
  s.noisy = j.value("noisy", s.noisy);
  if (j.contains("estimate")) {
    const auto& e = j.at("estimate");
    check_keys(e, {"position", "rotation_deg", "velocity", "landmark", "accel_bias", "gyro_bias"}, "estimate");
    s.estimate.position = e.value("position", s.estimate.position);
    s.estimate.rotation_deg = e.value("rotation_deg", s.estimate.rotation_deg);
    s.estimate.velocity = e.value("velocity", s.estimate.velocity);
    s.estimate.landmark = e.value("landmark", s.estimate.landmark);
    s.estimate.accel_bias = e.value("accel_bias", s.estimate.accel_bias);
    s.estimate.gyro_bias = e.value("gyro_bias", s.estimate.gyro_bias);
  }
  s.validate();
  return s;
}

CalibrationParams reference_calibration() {
  CalibrationParams c = nominal_calibration();
  // 0.306 deg camera mounting error, 1.498 deg gyro-to-accelerometer rotation
  const Vec3 mount_axis = Vec3(0.8, -0.5, 0.33).normalized();
  c.extrinsics.q_CI = geometry::boxplus(c.extrinsics.q_CI, mount_axis * (0.306 * M_PI / 180.0));
  c.extrinsics.p_CI = Vec3(4.12e-3, 1.34e-2, -5.68e-3);
  c.camera.focal = Vec2(254.50, 254.47);
  c.camera.principal = Vec2(317.51, 244.56);
  c.camera.distortion = 0.9222;
  c.gyro.scale = Vec3(1.0 + 4.45e-5, 1.0 + 5.56e-3, 1.0 + 8.44e-4);
  c.gyro.misalignment = Vec3(7.42e-5, 1.23e-3, 4.31e-4);
  c.accel.scale = Vec3(1.0 - 2.07e-2, 1.0 - 1.77e-2, 1.0 - 1.49e-2);
  c.accel.misalignment = Vec3(1.79e-2, -2.95e-2, 1.13e-4);
  const Vec3 ai_axis = Vec3(0.45, -0.75, 0.4).normalized();
  c.accel.q_AI = geometry::exp_quat<double>(ai_axis * (1.498 * M_PI / 180.0));
  return c;
}

NoiseSpec reference_noise() { return NoiseSpec{2e-4, 2e-5, 2e-3, 2e-4, 0.5}; }

// ---------------------------------------------------------------------------
// Generation

Dataset generate(const Scenario& scenario) {
  scenario.validate();
  const TrajectorySpec& spec = scenario.trajectory;
  const Trajectory trajectory(spec);
  Dataset d;
  d.scenario = scenario;

  const int stride = static_cast<int>(std::lround(spec.imu_rate / spec.keyframe_rate));
  const int n_imu = static_cast<int>(std::floor(spec.duration * spec.imu_rate + 1e-9));
  const int n_kf = n_imu / stride + (n_imu % stride == 0 ? 0 : 1);
  const double h = 1.0 / spec.imu_rate;

  std::mt19937_64 sensor_rng(spec.seed ^ 0x5eed5e11505ULL);
  std::mt19937_64 estimate_rng(spec.seed ^ 0xe571a7e5ULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto gauss3 = [&](std::mt19937_64& rng) { return Vec3(n01(rng), n01(rng), n01(rng)); };

  // IMU stream with bias random walk
  Vec3 b_a = 0.03 * gauss3(sensor_rng);
  Vec3 b_g = 0.002 * gauss3(sensor_rng);
  const NoiseSpec& noise = scenario.noise;
  std::vector<Vec3> bias_a, bias_g;
  d.imu.reserve(n_imu + 1);
  for (int k = 0; k <= n_imu; ++k) {
    const double t = k * h;
    if (scenario.noisy && k > 0) {
      b_a += noise.accel_bias_walk * std::sqrt(h) * gauss3(sensor_rng);
      b_g += noise.gyro_bias_walk * std::sqrt(h) * gauss3(sensor_rng);
    }
    const MotionSample m = trajectory.sample(t);
    ImuSample s;
    s.t = t;
    s.gyro = gyro_measure(m.omega_I, scenario.truth.gyro, b_g);
    s.accel = accel_measure(m.a_GI, m.q_GI.conjugate(), scenario.truth.accel, b_a, scenario.world);
    if (scenario.noisy) {
      s.gyro += noise.gyro_noise / std::sqrt(h) * gauss3(sensor_rng);
      s.accel += noise.accel_noise / std::sqrt(h) * gauss3(sensor_rng);
    }
    d.imu.push_back(s);
    if (k % stride == 0) {
      bias_a.push_back(b_a);
      bias_g.push_back(b_g);
    }
  }

  for (int j = 0; j < n_kf; ++j) {
    const double t = d.imu[j * stride].t;
    const MotionSample m = trajectory.sample(t);
    KeyframeState k;
    k.id = j;
    k.t = t;
    k.q_GI = m.q_GI;
    k.p_GI = m.p_GI;
    k.v_GI = m.v_GI;
    k.b_a = bias_a[j];
    k.b_g = bias_g[j];
    d.true_keyframes.push_back(k);
  }

  // points on the room surfaces, by area
  std::mt19937_64 landmark_rng(scenario.landmark_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Vec3 lo(-0.5 * spec.room.x(), -0.5 * spec.room.y(), 0.0);
  const Vec3 hi(0.5 * spec.room.x(), 0.5 * spec.room.y(), spec.room.z());
  const double ax = spec.room.y() * spec.room.z(), ay = spec.room.x() * spec.room.z(),
               az = spec.room.x() * spec.room.y();
  const double total = 2.0 * (ax + ay + az);
  std::vector<Vec3> points;
  for (int i = 0; i < scenario.landmarks; ++i) {
    const double pick = u01(landmark_rng) * total;
    Vec3 p;
    for (int c = 0; c < 3; ++c) p(c) = lo(c) + (hi(c) - lo(c)) * (0.02 + 0.96 * u01(landmark_rng));
    const double side = u01(landmark_rng);
    const int axis = pick < 2 * ax ? 0 : pick < 2 * (ax + ay) ? 1 : 2;
    p(axis) = side < 0.5 ? lo(axis) : hi(axis);
    points.push_back(p);
  }

  // tracks: a point keeps its id while seen in consecutive keyframes, up to
  // max_track_length keyframes
  struct Track {
    int point;
    std::vector<Observation> obs;
  };
  std::vector<Track> tracks;
  std::vector<int> active(points.size(), -1), last_seen(points.size(), -2);
  for (int j = 0; j < n_kf; ++j) {
    const KeyframeState& k = d.true_keyframes[j];
    int visible = 0;
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto px = project(points[p], k.q_GI, k.p_GI, scenario.truth.extrinsics, scenario.truth.camera);
      if (!px || !scenario.image.contains(*px)) continue;
      ++visible;
      int& a = active[p];
      if (a < 0 || last_seen[p] != j - 1 ||
          static_cast<int>(tracks[a].obs.size()) >= scenario.max_track_length) {
        a = static_cast<int>(tracks.size());
        tracks.push_back({static_cast<int>(p), {}});
      }
      last_seen[p] = j;
      tracks[a].obs.push_back({k.id, 0, *px});
    }
    if (visible == 0) {
      throw std::runtime_error("no landmark visible from keyframe " + std::to_string(k.id) +
                               " at t = " + std::to_string(k.t) + " s");
    }
  }

  // keep tracks seen at least twice; ids follow the order of first sighting
  std::vector<std::vector<Observation>> per_keyframe(n_kf);
  for (const Track& tr : tracks) {
    if (tr.obs.size() < 2) continue;
    const std::int64_t id = static_cast<std::int64_t>(d.true_landmarks.size());
    d.true_landmarks.push_back({id, points[tr.point]});
    for (Observation o : tr.obs) {
      o.landmark_id = id;
      if (scenario.noisy) o.pixel += noise.pixel_noise * Vec2(n01(sensor_rng), n01(sensor_rng));
      per_keyframe[o.keyframe_id].push_back(o);
    }
  }
  for (const auto& v : per_keyframe) d.observations.insert(d.observations.end(), v.begin(), v.end());

  // frontend estimates
  const EstimateNoise& e = scenario.estimate;
  const double rot = e.rotation_deg * M_PI / 180.0;
  for (const KeyframeState& t : d.true_keyframes) {
    KeyframeState k = t;
    k.q_GI = geometry::boxplus(t.q_GI, rot * gauss3(estimate_rng));
    k.p_GI += e.position * gauss3(estimate_rng);
    k.v_GI += e.velocity * gauss3(estimate_rng);
    k.b_a += e.accel_bias * gauss3(estimate_rng);
    k.b_g += e.gyro_bias * gauss3(estimate_rng);
    d.keyframes.push_back(k);
  }
  for (const Landmark& l : d.true_landmarks) {
    d.landmarks.push_back({l.id, l.p_G + e.landmark * gauss3(estimate_rng)});
  }
  return d;
}

// ---------------------------------------------------------------------------
// NDJSON

void write_dataset(std::ostream& out, const Dataset& d) {
  out << Json{{"format", "vical-dataset"}, {"version", kDatasetVersion}, {"scenario", to_json(d.scenario)}}.dump()
      << '\n';
  out << Json{{"type", "groundtruth"}, {"calibration", to_json(d.scenario.truth)}}.dump() << '\n';
  for (std::size_t i = 0; i < d.keyframes.size(); ++i) {
    Json j{{"type", "keyframe"}, {"id", d.keyframes[i].id}, {"t", d.keyframes[i].t}};
    j.update(state_json(d.keyframes[i]));
    j["truth"] = state_json(d.true_keyframes[i]);
    out << j.dump() << '\n';
  }
  for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
    out << Json{{"type", "landmark"}, {"id", d.landmarks[i].id}, {"p_G", vec_json(d.landmarks[i].p_G)},
                {"truth", vec_json(d.true_landmarks[i].p_G)}}.dump()
        << '\n';
  }
  for (const ImuSample& s : d.imu) {
    out << Json{{"type", "imu"}, {"t", s.t}, {"gyro", vec_json(s.gyro)}, {"accel", vec_json(s.accel)}}.dump()
        << '\n';
  }
  for (const Observation& o : d.observations) {
    out << Json{{"type", "observation"}, {"keyframe", o.keyframe_id}, {"landmark", o.landmark_id},
                {"pixel", vec_json(o.pixel)}}.dump()
        << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset");
  int line_no = 1;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "vical-dataset") throw std::runtime_error("not a dataset file");
    const int version = header.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw std::runtime_error("unsupported dataset version " + std::to_string(version));
    }
    d.scenario = scenario_from_json(header.at("scenario"));
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "keyframe") {
        KeyframeState k, t;
        k.id = t.id = j.at("id").get<std::int64_t>();
        k.t = t.t = j.at("t").get<double>();
        read_state(j, k);
        read_state(j.at("truth"), t);
        d.keyframes.push_back(k);
        d.true_keyframes.push_back(t);
      } else if (type == "landmark") {
        const std::int64_t id = j.at("id").get<std::int64_t>();
        d.landmarks.push_back({id, json_vec<3>(j.at("p_G"), "p_G")});
        d.true_landmarks.push_back({id, json_vec<3>(j.at("truth"), "truth")});
      } else if (type == "imu") {
        d.imu.push_back({j.at("t").get<double>(), json_vec<3>(j.at("gyro"), "gyro"),
                         json_vec<3>(j.at("accel"), "accel")});
      } else if (type == "observation") {
        d.observations.push_back({j.at("keyframe").get<std::int64_t>(), j.at("landmark").get<std::int64_t>(),
                                  json_vec<2>(j.at("pixel"), "pixel")});
      } else if (type == "groundtruth") {
        d.scenario.truth = calibration_from_json(j.at("calibration"));
      } else {
        throw std::runtime_error("unknown record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
  }
  for (std::size_t i = 0; i < d.keyframes.size(); ++i) {
    if (d.keyframes[i].id != static_cast<std::int64_t>(i)) throw std::runtime_error("keyframe ids must be 0..N-1");
  }
  for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
    if (d.landmarks[i].id != static_cast<std::int64_t>(i)) throw std::runtime_error("landmark ids must be 0..M-1");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Segments

SegmentStream::SegmentStream(const Dataset& dataset, int length)
    : data_(dataset), length_(length), count_(length >= 2 ? dataset.keyframes.size() / length : 0) {
  if (length < 2) throw std::invalid_argument("segment length must be >= 2");
}

std::optional<Segment> SegmentStream::next() {
  if (index_ >= count_) return std::nullopt;
  const std::size_t first = index_ * length_;
  const std::size_t end = first + length_;
  Segment s;
  s.id = static_cast<std::int64_t>(index_);
  s.keyframes.assign(data_.keyframes.begin() + first, data_.keyframes.begin() + end);
  const double t0 = s.keyframes.front().t;
  const double t1 = end < data_.keyframes.size() ? data_.keyframes[end].t : s.keyframes.back().t;

  const auto& obs = data_.observations;
  while (obs_cursor_ < obs.size() && obs[obs_cursor_].keyframe_id < static_cast<std::int64_t>(first)) ++obs_cursor_;
  std::set<std::int64_t> seen;
  while (obs_cursor_ < obs.size() && obs[obs_cursor_].keyframe_id < static_cast<std::int64_t>(end)) {
    s.observations.push_back(obs[obs_cursor_]);
    seen.insert(obs[obs_cursor_].landmark_id);
    ++obs_cursor_;
  }
  for (std::int64_t id : seen) s.landmarks.push_back(data_.landmarks.at(id));

  constexpr double kSlack = 1e-9;
  const auto& imu = data_.imu;
  while (imu_cursor_ < imu.size() && imu[imu_cursor_].t < t0 - kSlack) ++imu_cursor_;
  for (std::size_t i = imu_cursor_; i < imu.size() && imu[i].t <= t1 + kSlack; ++i) s.imu.push_back(imu[i]);
  ++index_;
  return s;
}

std::vector<Segment> all_segments(const Dataset& dataset, int length) {
  SegmentStream stream(dataset, length);
  std::vector<Segment> out;
  while (auto s = stream.next()) out.push_back(std::move(*s));
  return out;
}

double median_observations_per_keyframe(const Dataset& dataset) {
  std::vector<int> counts(dataset.keyframes.size(), 0);
  for (const Observation& o : dataset.observations) ++counts.at(o.keyframe_id);
  if (counts.empty()) return 0.0;
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  return n % 2 ? counts[n / 2] : 0.5 * (counts[n / 2 - 1] + counts[n / 2]);
}

}  // namespace vical
