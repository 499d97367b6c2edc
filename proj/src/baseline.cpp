#include "mf/baseline.hpp"

#include "mf/error.hpp"

namespace mf {

VelocityEstimate estimate_velocity(const FrameWindow& past, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "velocity needs k >= 1");
  if (past.delta_t() < k + 1)
    throw Error(ErrorCode::WindowTooShort, "window of " + std::to_string(past.delta_t()) + " frames, need " +
                                               std::to_string(k + 1));
  const auto& last = past.frames.back();
  const auto& first = past.frames[past.frames.size() - 1 - static_cast<std::size_t>(k)];
  VelocityEstimate v;
  v.velocity.resize(last.joints.size());
  // The mean of consecutive differences telescopes to (last - first) / k.
  for (std::size_t j = 0; j < last.joints.size(); ++j) v.velocity[j] = (last.joints[j] - first.joints[j]) / k;
  return v;
}

JointFrame extrapolate(const JointFrame& last, const VelocityEstimate& v, int tau) {
  if (tau < 1) throw Error(ErrorCode::InvalidArgument, "extrapolation horizon must be >= 1");
  if (v.velocity.size() != last.joints.size()) throw Error(ErrorCode::ShapeMismatch, "velocity/frame joint count");
  JointFrame out;
  out.t = last.t + tau;
  out.joints.resize(last.joints.size());
  for (std::size_t j = 0; j < last.joints.size(); ++j) out.joints[j] = last.joints[j] + tau * v.velocity[j];
  return out;
}

FrameWindow linear_forecast(const FrameWindow& past, int horizon, int k) {
  const VelocityEstimate v = estimate_velocity(past, k);
  FrameWindow out;
  out.frames.reserve(static_cast<std::size_t>(horizon));
  for (int tau = 1; tau <= horizon; ++tau) out.frames.push_back(extrapolate(past.frames.back(), v, tau));
  return out;
}

Eigen::VectorXd linear_forecast_vector(const Eigen::Ref<const Eigen::VectorXd>& past, int delta_t, int n_joints,
                                       int horizon, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "velocity needs k >= 1");
  if (delta_t < k + 1) throw Error(ErrorCode::WindowTooShort, "window too short for the velocity estimate");
  const Eigen::Index width = 3 * n_joints;
  if (past.size() != delta_t * width) throw Error(ErrorCode::LengthMismatch, "past vector length");
  const Eigen::VectorXd last = past.segment((delta_t - 1) * width, width);
  const Eigen::VectorXd first = past.segment((delta_t - 1 - k) * width, width);
  const Eigen::VectorXd v = (last - first) / k;
  Eigen::VectorXd out(horizon * width);
  for (int tau = 1; tau <= horizon; ++tau) out.segment((tau - 1) * width, width) = last + tau * v;
  return out;
}

}  // namespace mf
