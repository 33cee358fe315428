#pragma once

// Per-category object state and the box measurement model.
//
// State layout: [px, py, pz, yaw, log w, log h, log l]. Dimensions are
// carried in log space so they stay positive without constraints.

#include "vis3d/geometry.hpp"

#include <Eigen/Cholesky>

#include <stdexcept>

namespace vis3d {

inline constexpr int kStateDim = 7;
inline constexpr int kYaw = 3;
inline constexpr int kLogDims = 4;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using StateCov = Eigen::Matrix<double, kStateDim, kStateDim>;
using BoxJacobian = Eigen::Matrix<double, 4, kStateDim>;

struct EkfState {
  StateVec mean = StateVec::Zero();
  StateCov cov = StateCov::Identity();

  Cuboid cuboid() const { return {mean.head<3>(), mean[kYaw], mean.tail<3>().array().exp().matrix()}; }

  static EkfState from_cuboid(const Cuboid& c, const StateCov& cov) {
    EkfState s;
    s.mean << c.center, wrap_angle(c.yaw), c.dims.array().log().matrix();
    s.cov = cov;
    return s;
  }
};

inline bool is_positive_definite(const StateCov& P) {
  if (!P.isApprox(P.transpose(), 1e-9)) return false;
  Eigen::LLT<StateCov> llt(P);
  return llt.info() == Eigen::Success;
}

/// Predicted box with its active-corner Jacobian: each box coordinate is
/// differentiated through the corner attaining it, holding that choice fixed.
struct BoxPrediction {
  PixelBox box;
  BoxJacobian jacobian = BoxJacobian::Zero();
  std::array<int, 4> active_corners{};  // corners attaining xmin, ymin, xmax, ymax
};

inline std::optional<BoxPrediction> predict_box(const Intrinsics& K, const RigidPose& g, const StateVec& x) {
  const Mat3 Rz = yaw_rotation(x[kYaw]);
  const double cs = std::cos(x[kYaw]), sn = std::sin(x[kYaw]);
  Mat3 dRz;
  dRz << -sn, -cs, 0, cs, -sn, 0, 0, 0, 0;
  const Vec3 dims = x.tail<3>().array().exp();
  const Mat3 Rcw_t = g.rotation.conjugate().toRotationMatrix();

  std::array<Vec2, 8> uv;
  std::array<Eigen::Matrix<double, 2, kStateDim>, 8> duv;
  for (int i = 0; i < 8; ++i) {
    const Vec3 offset = 0.5 * corner_signs(i).cwiseProduct(dims);
    const Vec3 X = x.head<3>() + Rz * offset;
    const Vec3 Xc = Rcw_t * (X - g.translation);
    if (Xc.z() <= kDepthEpsilon) return std::nullopt;
    const double iz = 1.0 / Xc.z();
    uv[i] = {K.fx * Xc.x() * iz + K.cx, K.fy * Xc.y() * iz + K.cy};

    Eigen::Matrix<double, 2, 3> dproj;
    dproj << K.fx * iz, 0, -K.fx * Xc.x() * iz * iz, 0, K.fy * iz, -K.fy * Xc.y() * iz * iz;
    Eigen::Matrix<double, 3, kStateDim> dX;
    dX.leftCols<3>().setIdentity();
    dX.col(kYaw) = dRz * offset;
    for (int j = 0; j < 3; ++j) dX.col(kLogDims + j) = Rz.col(j) * offset[j];
    duv[i] = dproj * Rcw_t * dX;
  }

  BoxPrediction out;
  std::array<int, 4>& a = out.active_corners;
  a.fill(0);
  for (int i = 1; i < 8; ++i) {
    if (uv[i].x() < uv[a[0]].x()) a[0] = i;
    if (uv[i].y() < uv[a[1]].y()) a[1] = i;
    if (uv[i].x() > uv[a[2]].x()) a[2] = i;
    if (uv[i].y() > uv[a[3]].y()) a[3] = i;
  }
  out.box = {uv[a[0]].x(), uv[a[1]].y(), uv[a[2]].x(), uv[a[3]].y()};
  out.jacobian.row(0) = duv[a[0]].row(0);
  out.jacobian.row(1) = duv[a[1]].row(1);
  out.jacobian.row(2) = duv[a[2]].row(0);
  out.jacobian.row(3) = duv[a[3]].row(1);
  return out;
}

struct KalmanResult {
  bool accepted = false;
  double mahalanobis2 = 0.0;
};

/// Joseph-form EKF update given an innovation y = z - h(x) and its
/// Jacobian H. Rejects (state untouched) if y' S^-1 y exceeds `gate`.
template <int M>
KalmanResult kalman_update(EkfState& s, const Eigen::Matrix<double, M, 1>& innovation,
                           const Eigen::Matrix<double, M, kStateDim>& H, const Eigen::Matrix<double, M, M>& R,
                           double gate = std::numeric_limits<double>::infinity()) {
  using MatM = Eigen::Matrix<double, M, M>;
  const MatM S = H * s.cov * H.transpose() + R;
  const Eigen::LDLT<MatM> ldlt(S);
  KalmanResult result;
  result.mahalanobis2 = innovation.dot(ldlt.solve(innovation));
  if (!(result.mahalanobis2 <= gate)) return result;

  const Eigen::Matrix<double, kStateDim, M> gain = ldlt.solve(H * s.cov).transpose();
  s.mean += gain * innovation;
  s.mean[kYaw] = wrap_angle(s.mean[kYaw]);
  const StateCov IKH = StateCov::Identity() - gain * H;
  StateCov P = IKH * s.cov * IKH.transpose() + gain * R * gain.transpose();
  s.cov = 0.5 * (P + P.transpose());
  if (!is_positive_definite(s.cov)) throw std::logic_error("kalman_update: covariance lost positive definiteness");
  result.accepted = true;
  return result;
}

/// Product of two Gaussian estimates of the same object (information-form
/// fusion). The second yaw is unwrapped next to the first.
inline EkfState fuse_states(const EkfState& a, const EkfState& b) {
  StateVec mb = b.mean;
  mb[kYaw] = a.mean[kYaw] + wrap_angle(b.mean[kYaw] - a.mean[kYaw]);
  const StateCov Ia = a.cov.inverse();
  const StateCov Ib = b.cov.inverse();
  StateCov P = (Ia + Ib).inverse();
  P = 0.5 * (P + P.transpose());
  EkfState out;
  out.mean = P * (Ia * a.mean + Ib * mb);
  out.mean[kYaw] = wrap_angle(out.mean[kYaw]);
  out.cov = P;
  return out;
}

}  // namespace vis3d
