#include "vical/calibration.hpp"

#include <stdexcept>

namespace vical {

Mat3 assemble_intrinsic_matrix(const Vec3& scale, const Vec3& misalignment) {
  Mat3 m;
  m << scale.x(), misalignment.x(), misalignment.y(),  //
      0.0, scale.y(), misalignment.z(),                 //
      0.0, 0.0, scale.z();
  return m;
}

void disassemble_intrinsic_matrix(const Mat3& matrix, Vec3& scale, Vec3& misalignment) {
  if (matrix(1, 0) != 0.0 || matrix(2, 0) != 0.0 || matrix(2, 1) != 0.0) {
    throw std::invalid_argument("intrinsic matrix is not upper-triangular");
  }
  if (!(matrix.diagonal().array() > 0.0).all()) {
    throw std::invalid_argument("intrinsic matrix has a non-positive diagonal");
  }
  scale = matrix.diagonal();
  misalignment = Vec3(matrix(0, 1), matrix(0, 2), matrix(1, 2));
}

std::string calibration_dof_name(int index) {
  for (const CalibBlock& block : kCalibBlocks) {
    if (index >= block.offset && index < block.offset + block.size) {
      if (block.size == 1) return std::string(block.name);
      return std::string(block.name) + "[" + std::to_string(index - block.offset) + "]";
    }
  }
  throw std::out_of_range("calibration index out of range");
}

const CalibBlock& calibration_block(std::string_view name) {
  for (const CalibBlock& block : kCalibBlocks) {
    if (block.name == name) return block;
  }
  throw std::invalid_argument("unknown calibration block: " + std::string(name));
}

int calibration_dof_index(std::string_view name) {
  const auto bracket = name.find('[');
  if (bracket == std::string_view::npos) {
    const CalibBlock& block = calibration_block(name);
    if (block.size != 1) {
      throw std::invalid_argument("calibration block needs an element index: " +
                                  std::string(name));
    }
    return block.offset;
  }
  const CalibBlock& block = calibration_block(name.substr(0, bracket));
  const auto close = name.find(']', bracket);
  if (close == std::string_view::npos) {
    throw std::invalid_argument("malformed calibration name: " + std::string(name));
  }
  const int element = std::stoi(std::string(name.substr(bracket + 1, close - bracket - 1)));
  if (element < 0 || element >= block.size) {
    throw std::invalid_argument("calibration element out of range: " + std::string(name));
  }
  return block.offset + element;
}

Quat nominal_camera_rotation() {
  Mat3 r;
  r << 0.0, -1.0, 0.0,
       0.0, 0.0, -1.0,
       1.0, 0.0, 0.0;
  return Quat(r).normalized();
}

CalibrationParams nominal_calibration() {
  CalibrationParams c;
  c.extrinsics.q_CI = nominal_camera_rotation();
  return c;
}

CalibrationParams boxplus(const CalibrationParams& params, const CalibVector& delta) {
  using namespace calib_index;
  CalibrationParams out = params;
  // a zero rotation increment leaves the quaternion bit-identical (fixed dof)
  const auto rotate = [](const Quat& q, const Vec3& d) {
    return (d.array() != 0.0).any() ? geometry::boxplus(q, d) : q;
  };
  out.extrinsics.q_CI = rotate(params.extrinsics.q_CI, delta.segment<3>(kRotationCI));
  out.extrinsics.p_CI += delta.segment<3>(kTranslationCI);
  out.camera.focal += delta.segment<2>(kFocal);
  out.camera.principal += delta.segment<2>(kPrincipal);
  out.camera.distortion += delta(kDistortion);
  out.gyro.scale += delta.segment<3>(kGyroScale);
  out.gyro.misalignment += delta.segment<3>(kGyroMisalign);
  out.accel.scale += delta.segment<3>(kAccelScale);
  out.accel.misalignment += delta.segment<3>(kAccelMisalign);
  out.accel.q_AI = rotate(params.accel.q_AI, delta.segment<3>(kRotationAI));
  return out;
}

CalibVector boxminus(const CalibrationParams& a, const CalibrationParams& b) {
  using namespace calib_index;
  CalibVector d;
  d.segment<3>(kRotationCI) = geometry::boxminus(a.extrinsics.q_CI, b.extrinsics.q_CI);
  d.segment<3>(kTranslationCI) = a.extrinsics.p_CI - b.extrinsics.p_CI;
  d.segment<2>(kFocal) = a.camera.focal - b.camera.focal;
  d.segment<2>(kPrincipal) = a.camera.principal - b.camera.principal;
  d(kDistortion) = a.camera.distortion - b.camera.distortion;
  d.segment<3>(kGyroScale) = a.gyro.scale - b.gyro.scale;
  d.segment<3>(kGyroMisalign) = a.gyro.misalignment - b.gyro.misalignment;
  d.segment<3>(kAccelScale) = a.accel.scale - b.accel.scale;
  d.segment<3>(kAccelMisalign) = a.accel.misalignment - b.accel.misalignment;
  d.segment<3>(kRotationAI) = geometry::boxminus(a.accel.q_AI, b.accel.q_AI);
  return d;
}

void NoiseSpec::validate() const {
  if (!(gyro_noise > 0.0 && gyro_bias_walk > 0.0 && accel_noise > 0.0 &&
        accel_bias_walk > 0.0 && pixel_noise > 0.0)) {
    throw std::invalid_argument("noise densities must be strictly positive");
  }
}

namespace {

template <typename Derived>
nlohmann::ordered_json vec_json(const Eigen::MatrixBase<Derived>& v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

nlohmann::ordered_json quat_json(const Quat& q) {
  const Quat c = geometry::canonical(q);
  return nlohmann::ordered_json::array({c.w(), c.x(), c.y(), c.z()});
}

template <int N>
Eigen::Matrix<double, N, 1> read_vec(const nlohmann::json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(N)) {
    throw std::invalid_argument(std::string("expected array of size ") + std::to_string(N) +
                                " for '" + key + "'");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = arr[i].get<double>();
  return v;
}

Quat read_quat(const nlohmann::json& j, const char* key) {
  const Vec4 v = read_vec<4>(j, key);
  const Quat q(v(0), v(1), v(2), v(3));
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string("quaternion '") + key + "' is not unit");
  }
  // Values already unit to round-off are kept bit-exact so files round-trip.
  return std::abs(q.norm() - 1.0) > 1e-12 ? q.normalized() : q;
}

}  // namespace

nlohmann::ordered_json to_json(const CalibrationParams& p) {
  nlohmann::ordered_json j;
  j["q_CI"] = quat_json(p.extrinsics.q_CI);
  j["p_CI"] = vec_json(p.extrinsics.p_CI);
  j["f"] = vec_json(p.camera.focal);
  j["c"] = vec_json(p.camera.principal);
  j["w"] = p.camera.distortion;
  j["s_g"] = vec_json(p.gyro.scale);
  j["m_g"] = vec_json(p.gyro.misalignment);
  j["s_a"] = vec_json(p.accel.scale);
  j["m_a"] = vec_json(p.accel.misalignment);
  j["q_AI"] = quat_json(p.accel.q_AI);
  return j;
}

CalibrationParams calibration_from_json(const nlohmann::json& j) {
  CalibrationParams p;
  p.extrinsics.q_CI = read_quat(j, "q_CI");
  p.extrinsics.p_CI = read_vec<3>(j, "p_CI");
  p.camera.focal = read_vec<2>(j, "f");
  p.camera.principal = read_vec<2>(j, "c");
  p.camera.distortion = j.at("w").get<double>();
  p.gyro.scale = read_vec<3>(j, "s_g");
  p.gyro.misalignment = read_vec<3>(j, "m_g");
  p.accel.scale = read_vec<3>(j, "s_a");
  p.accel.misalignment = read_vec<3>(j, "m_a");
  p.accel.q_AI = read_quat(j, "q_AI");
  if (!(p.camera.focal.array() > 0.0).all()) {
    throw std::invalid_argument("focal lengths must be positive");
  }
  if (!(p.camera.distortion > 0.0 && p.camera.distortion < M_PI)) {
    throw std::invalid_argument("distortion parameter must lie in (0, pi)");
  }
  return p;
}

nlohmann::ordered_json to_json(const NoiseSpec& n) {
  nlohmann::ordered_json j;
  j["gyro_noise"] = n.gyro_noise;
  j["gyro_bias_walk"] = n.gyro_bias_walk;
  j["accel_noise"] = n.accel_noise;
  j["accel_bias_walk"] = n.accel_bias_walk;
  j["pixel_noise"] = n.pixel_noise;
  return j;
}

NoiseSpec noise_from_json(const nlohmann::json& j) {
  NoiseSpec n;
  n.gyro_noise = j.at("gyro_noise").get<double>();
  n.gyro_bias_walk = j.at("gyro_bias_walk").get<double>();
  n.accel_noise = j.at("accel_noise").get<double>();
  n.accel_bias_walk = j.at("accel_bias_walk").get<double>();
  n.pixel_noise = j.at("pixel_noise").get<double>();
  n.validate();
  return n;
}

}  // namespace vical
