#include "vical/factors.hpp"

#include <stdexcept>

namespace vical {

using geometry::skew;

Vec15 inertial_residual(const PreintegratedImu& pre, const KeyframeState& from,
                        const KeyframeState& to, const WorldModel& world,
                        InertialJacobians* jacobians) {
  using namespace kf_index;
  const double dt = pre.dt;
  const Vec3& g = world.gravity;
  const Mat3 r_i = from.q_GI.toRotationMatrix();
  const Mat3 r_j = to.q_GI.toRotationMatrix();
  const Mat3 dr = pre.delta_q.toRotationMatrix();
  const Mat3 e = dr.transpose() * r_i.transpose() * r_j;
  const Vec3 u_p = to.p_GI - from.p_GI - from.v_GI * dt - 0.5 * g * dt * dt;
  const Vec3 u_v = to.v_GI - from.v_GI - g * dt;

  Vec15 r;
  r.segment<3>(0) = geometry::log_so3(e);
  r.segment<3>(3) = r_i.transpose() * u_p - pre.delta_p;
  r.segment<3>(6) = r_i.transpose() * u_v - pre.delta_v;
  r.segment<3>(9) = to.b_a - from.b_a;
  r.segment<3>(12) = to.b_g - from.b_g;
  if (jacobians == nullptr) return r;
  if (!pre.has_jacobian) {
    throw std::logic_error("inertial_residual: preintegration carries no Jacobian");
  }

  const Mat3 jr_inv = geometry::right_jacobian_inverse(r.segment<3>(0));
  InertialJacobians& j = *jacobians;
  j.d_from.setZero();
  j.d_to.setZero();
  j.d_calib.setZero();

  j.d_from.block<3, 3>(0, kRotation) = -jr_inv * r_j.transpose() * r_i;
  j.d_from.block<3, 3>(3, kRotation) = skew(r_i.transpose() * u_p);
  j.d_from.block<3, 3>(3, kPosition) = -r_i.transpose();
  j.d_from.block<3, 3>(3, kVelocity) = -r_i.transpose() * dt;
  j.d_from.block<3, 3>(6, kRotation) = skew(r_i.transpose() * u_v);
  j.d_from.block<3, 3>(6, kVelocity) = -r_i.transpose();
  j.d_from.block<3, 3>(9, kAccelBias) = -Mat3::Identity();
  j.d_from.block<3, 3>(12, kGyroBias) = -Mat3::Identity();

  j.d_to.block<3, 3>(0, kRotation) = jr_inv;
  j.d_to.block<3, 3>(3, kPosition) = r_i.transpose();
  j.d_to.block<3, 3>(6, kVelocity) = r_i.transpose();
  j.d_to.block<3, 3>(9, kAccelBias) = Mat3::Identity();
  j.d_to.block<3, 3>(12, kGyroBias) = Mat3::Identity();

  // Dependence through the preintegrated deltas.
  Eigen::Matrix<double, 9, kPreintInputDim> d_pre;
  d_pre.topRows<3>() = -jr_inv * e.transpose() * pre.jacobian.topRows<3>();
  d_pre.bottomRows<6>() = -pre.jacobian.bottomRows<6>();
  j.d_from.block<9, 3>(0, kAccelBias) += d_pre.middleCols<3>(preint_input::kAccelBias);
  j.d_from.block<9, 3>(0, kGyroBias) += d_pre.middleCols<3>(preint_input::kGyroBias);
  j.d_calib.topRows<9>() = d_pre.middleCols<15>(preint_input::kInertialCalib);
  return r;
}

ReprojectionResult reprojection_residual(const Vec2& pixel, const KeyframeState& keyframe,
                                         const Vec3& landmark, const CalibrationParams& calib,
                                         double pixel_sigma, ReprojectionJacobians* jacobians) {
  using namespace calib_index;
  ReprojectionResult out;
  ProjectionJacobians pj;
  const Projection proj = project_with_jacobians(landmark, keyframe.q_GI, keyframe.p_GI,
                                                 calib.extrinsics, calib.camera,
                                                 jacobians ? &pj : nullptr);
  if (!proj.valid) return out;
  out.valid = true;
  const double w = 1.0 / pixel_sigma;
  out.residual = w * (proj.pixel - pixel);
  if (jacobians == nullptr) return out;
  ReprojectionJacobians& j = *jacobians;
  j.d_pose.leftCols<3>() = w * pj.d_rotation;
  j.d_pose.rightCols<3>() = w * pj.d_position;
  j.d_landmark = w * pj.d_landmark;
  j.d_camera.middleCols<3>(kRotationCI) = w * pj.d_q_CI;
  j.d_camera.middleCols<3>(kTranslationCI) = w * pj.d_p_CI;
  j.d_camera.middleCols<2>(kFocal) = w * pj.d_focal;
  j.d_camera.middleCols<2>(kPrincipal) = w * pj.d_principal;
  j.d_camera.col(kDistortion) = w * pj.d_distortion;
  return out;
}

BiasBridge bias_bridge(const Vec3& b_a_from, const Vec3& b_g_from, const Vec3& b_a_to,
                       const Vec3& b_g_to, double dt, const NoiseSpec& noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("bias bridge needs a positive duration");
  BiasBridge out;
  out.residual.head<3>() = b_a_to - b_a_from;
  out.residual.tail<3>() = b_g_to - b_g_from;
  out.covariance_diag.head<3>().setConstant(noise.accel_bias_walk * noise.accel_bias_walk * dt);
  out.covariance_diag.tail<3>().setConstant(noise.gyro_bias_walk * noise.gyro_bias_walk * dt);
  out.sqrt_information = out.covariance_diag.cwiseSqrt().cwiseInverse();
  return out;
}

Vec4d gauge_residual(const KeyframeState& keyframe, const Quat& q_ref, const Vec3& p_ref,
                     Mat46* d_pose) {
  const Mat3 r_ref = q_ref.toRotationMatrix();
  const Vec3 phi = geometry::log_so3(keyframe.q_GI.toRotationMatrix() * r_ref.transpose());
  Vec4d r;
  r.head<3>() = keyframe.p_GI - p_ref;
  r(3) = phi.z();
  if (d_pose != nullptr) {
    d_pose->setZero();
    d_pose->block<3, 3>(0, 3).setIdentity();
    // R Exp(d) R_ref^T = E Exp(R_ref d)
    d_pose->block<1, 3>(3, 0) =
        (geometry::right_jacobian_inverse(phi) * r_ref).row(2);
  }
  return r;
}

}  // namespace vical
