#include "vical/problem.hpp"

#include <set>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace vical {

Problem::Problem(const CalibrationParams& calibration, const NoiseSpec& noise,
                 const WorldModel& world)
    : calibration_(calibration), noise_(noise), world_(world) {
  noise_.validate();
}

void Problem::add_keyframe(const KeyframeState& keyframe, int partition) {
  if (keyframe_lookup_.count(keyframe.id)) {
    throw std::invalid_argument("duplicate keyframe id " + std::to_string(keyframe.id));
  }
  if (std::abs(keyframe.q_GI.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("keyframe orientation is not a unit quaternion");
  }
  keyframe_lookup_[keyframe.id] = static_cast<int>(keyframes_.size());
  keyframes_.push_back(keyframe);
  keyframe_partition_.push_back(partition);
}

void Problem::add_landmark(const Landmark& landmark) {
  if (landmark_lookup_.count(landmark.id)) {
    throw std::invalid_argument("duplicate landmark id " + std::to_string(landmark.id));
  }
  landmark_lookup_[landmark.id] = static_cast<int>(landmarks_.size());
  landmarks_.push_back(landmark);
}

int Problem::keyframe_index(std::int64_t id) const {
  const auto it = keyframe_lookup_.find(id);
  if (it == keyframe_lookup_.end()) throw std::out_of_range("unknown keyframe id " + std::to_string(id));
  return it->second;
}

int Problem::landmark_index(std::int64_t id) const {
  const auto it = landmark_lookup_.find(id);
  if (it == landmark_lookup_.end()) throw std::out_of_range("unknown landmark id " + std::to_string(id));
  return it->second;
}

int Problem::partition_count() const {
  return static_cast<int>(std::set<int>(keyframe_partition_.begin(), keyframe_partition_.end()).size());
}

void Problem::add_inertial_factor(std::int64_t from, std::int64_t to, std::vector<ImuSample> samples) {
  const KeyframeState& a = keyframes_.at(keyframe_index(from));
  const KeyframeState& b = keyframes_.at(keyframe_index(to));
  if (!(b.t > a.t)) throw std::invalid_argument("inertial factor must run forward in time");
  if (samples.size() < 2 || std::abs(samples.front().t - a.t) > 1e-9 ||
      std::abs(samples.back().t - b.t) > 1e-9) {
    throw std::invalid_argument("inertial factor samples must span the keyframe interval");
  }
  const PreintegratedImu pre = preintegrate(samples, calibration_.gyro, calibration_.accel, a.b_a,
                                            a.b_g, noise_, false, true);
  const Eigen::LLT<Mat15> llt(pre.covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("inertial factor covariance is not positive definite");
  }
  InertialFactor f;
  f.from = from;
  f.to = to;
  f.samples = std::move(samples);
  f.sqrt_information = llt.matrixL().solve(Mat15::Identity());
  inertial_.push_back(std::move(f));
}

void Problem::add_reprojection_factor(const Observation& observation) {
  keyframe_index(observation.keyframe_id);
  landmark_index(observation.landmark_id);
  reprojection_.push_back({observation.keyframe_id, observation.landmark_id, observation.pixel});
}

void Problem::add_bias_bridge(std::int64_t from, std::int64_t to, double dt) {
  keyframe_index(from);
  keyframe_index(to);
  if (!(dt > 0.0)) throw std::invalid_argument("bias bridge needs a positive duration");
  bridges_.push_back({from, to, dt});
}

void Problem::fix_gauge(std::int64_t keyframe) {
  const int index = keyframe_index(keyframe);
  const int partition = keyframe_partition_[index];
  for (const GaugePriorFactor& g : gauges_) {
    if (keyframe_partition_[keyframe_index(g.keyframe)] == partition) {
      throw std::invalid_argument("partition " + std::to_string(partition) +
                                  " already has a gauge fix (keyframe " +
                                  std::to_string(g.keyframe) + ")");
    }
  }
  gauges_.push_back({keyframe, keyframes_[index].q_GI, keyframes_[index].p_GI});
}

void Problem::set_calibration_fixed(int dof, bool fixed) {
  if (dof < 0 || dof >= kCalibrationDim) throw std::out_of_range("calibration dof out of range");
  calib_fixed_[dof] = fixed;
}

void Problem::set_calibration_fixed_all(bool fixed) { calib_fixed_.fill(fixed); }

LinearizedProblem Problem::linearize(bool with_jacobians) const {
  LinearizedProblem lin;
  double sq = 0.0;

  lin.reprojection.reserve(reprojection_.size());
  for (const ReprojectionFactor& f : reprojection_) {
    LinearizedProblem::Reprojection block;
    block.keyframe = keyframe_index(f.keyframe);
    block.landmark = landmark_index(f.landmark);
    ReprojectionJacobians j;
    const ReprojectionResult res =
        reprojection_residual(f.pixel, keyframes_[block.keyframe], landmarks_[block.landmark].p_G,
                              calibration_, noise_.pixel_noise, with_jacobians ? &j : nullptr);
    if (!res.valid) {
      ++lin.inactive_reprojection;
      continue;
    }
    block.residual = res.residual;
    if (with_jacobians) {
      block.d_pose = j.d_pose;
      block.d_landmark = j.d_landmark;
      block.d_camera = j.d_camera;
      for (int c = 0; c < calib_index::kCameraDim; ++c) {
        if (calib_fixed_[calib_index::kCameraBegin + c]) block.d_camera.col(c).setZero();
      }
    }
    sq += block.residual.squaredNorm();
    lin.reprojection.push_back(block);
  }

  lin.inertial.reserve(inertial_.size());
  for (const InertialFactor& f : inertial_) {
    LinearizedProblem::Inertial block;
    block.from = keyframe_index(f.from);
    block.to = keyframe_index(f.to);
    const KeyframeState& a = keyframes_[block.from];
    const KeyframeState& b = keyframes_[block.to];
    const PreintegratedImu pre = preintegrate(f.samples, calibration_.gyro, calibration_.accel,
                                              a.b_a, a.b_g, noise_, with_jacobians, false);
    InertialJacobians j;
    const Vec15 r = inertial_residual(pre, a, b, world_, with_jacobians ? &j : nullptr);
    block.residual = f.sqrt_information * r;
    if (with_jacobians) {
      block.d_from = f.sqrt_information * j.d_from;
      block.d_to = f.sqrt_information * j.d_to;
      block.d_calib = f.sqrt_information * j.d_calib;
      for (int c = 0; c < calib_index::kInertialDim; ++c) {
        if (calib_fixed_[calib_index::kInertialBegin + c]) block.d_calib.col(c).setZero();
      }
    }
    sq += block.residual.squaredNorm();
    lin.inertial.push_back(block);
  }

  for (const BiasBridgeFactor& f : bridges_) {
    LinearizedProblem::Bridge block;
    block.from = keyframe_index(f.from);
    block.to = keyframe_index(f.to);
    const KeyframeState& a = keyframes_[block.from];
    const KeyframeState& b = keyframes_[block.to];
    const BiasBridge bridge = bias_bridge(a.b_a, a.b_g, b.b_a, b.b_g, f.dt, noise_);
    block.weight = bridge.sqrt_information;
    block.residual = bridge.residual.cwiseProduct(bridge.sqrt_information);
    sq += block.residual.squaredNorm();
    lin.bridges.push_back(block);
  }

  for (const GaugePriorFactor& f : gauges_) {
    LinearizedProblem::Gauge block;
    block.keyframe = keyframe_index(f.keyframe);
    block.residual = kGaugeSqrtWeight *
                     gauge_residual(keyframes_[block.keyframe], f.q_ref, f.p_ref,
                                    with_jacobians ? &block.d_pose : nullptr);
    if (with_jacobians) block.d_pose *= kGaugeSqrtWeight;
    sq += block.residual.squaredNorm();
    lin.gauges.push_back(block);
  }

  lin.cost = 0.5 * sq;
  return lin;
}

namespace {

template <typename Derived>
nlohmann::ordered_json array_of(const Eigen::MatrixBase<Derived>& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

nlohmann::ordered_json quat_array(const Quat& q) {
  const Quat c = geometry::canonical(q);
  return nlohmann::ordered_json::array({c.w(), c.x(), c.y(), c.z()});
}

}  // namespace

nlohmann::ordered_json Problem::snapshot() const {
  nlohmann::ordered_json j;
  j["calibration"] = to_json(calibration_);
  nlohmann::ordered_json fixed = nlohmann::ordered_json::array();
  for (int i = 0; i < kCalibrationDim; ++i) {
    if (calib_fixed_[i]) fixed.push_back(calibration_dof_name(i));
  }
  j["fixed_calibration"] = fixed;
  j["noise"] = to_json(noise_);
  j["gravity"] = array_of(world_.gravity);

  nlohmann::ordered_json kfs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < keyframes_.size(); ++i) {
    const KeyframeState& k = keyframes_[i];
    nlohmann::ordered_json e;
    e["id"] = k.id;
    e["t"] = k.t;
    e["partition"] = keyframe_partition_[i];
    e["q_GI"] = quat_array(k.q_GI);
    e["p_GI"] = array_of(k.p_GI);
    e["v_GI"] = array_of(k.v_GI);
    e["b_a"] = array_of(k.b_a);
    e["b_g"] = array_of(k.b_g);
    kfs.push_back(e);
  }
  j["keyframes"] = kfs;

  nlohmann::ordered_json lms = nlohmann::ordered_json::array();
  for (const Landmark& l : landmarks_) lms.push_back({{"id", l.id}, {"p_G", array_of(l.p_G)}});
  j["landmarks"] = lms;

  nlohmann::ordered_json factors;
  nlohmann::ordered_json inertial = nlohmann::ordered_json::array();
  for (const InertialFactor& f : inertial_) {
    inertial.push_back({{"from", f.from}, {"to", f.to}, {"imu_samples", f.samples.size()}});
  }
  factors["inertial"] = inertial;
  nlohmann::ordered_json reproj = nlohmann::ordered_json::array();
  for (const ReprojectionFactor& f : reprojection_) {
    reproj.push_back({{"keyframe", f.keyframe}, {"landmark", f.landmark}, {"pixel", array_of(f.pixel)}});
  }
  factors["reprojection"] = reproj;
  nlohmann::ordered_json bridges = nlohmann::ordered_json::array();
  for (const BiasBridgeFactor& f : bridges_) {
    bridges.push_back({{"from", f.from}, {"to", f.to}, {"dt", f.dt}});
  }
  factors["bias_bridge"] = bridges;
  nlohmann::ordered_json gauges = nlohmann::ordered_json::array();
  for (const GaugePriorFactor& f : gauges_) {
    gauges.push_back({{"keyframe", f.keyframe}, {"q_ref", quat_array(f.q_ref)}, {"p_ref", array_of(f.p_ref)}});
  }
  factors["gauge_prior"] = gauges;
  j["factors"] = factors;

  const LinearizedProblem lin = linearize(false);
  j["cost"] = lin.cost;
  j["inactive_reprojection"] = lin.inactive_reprojection;
  return j;
}

}  // namespace vical
