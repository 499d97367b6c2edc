#pragma once

#include <vector>

#include <Eigen/Core>

#include "mf/skeleton.hpp"

namespace mf {

inline constexpr int kVelocityFrames = 20;

struct VelocityEstimate {
  std::vector<Vec3> velocity;  // per joint, units per frame
};

// Mean of the last k frame-to-frame differences. Needs k + 1 frames.
VelocityEstimate estimate_velocity(const FrameWindow& past, int k = kVelocityFrames);

// last + tau * v, tau >= 1.
JointFrame extrapolate(const JointFrame& last, const VelocityEstimate& v, int tau);

// Constant-velocity forecast of `horizon` frames after the window.
FrameWindow linear_forecast(const FrameWindow& past, int horizon, int k = kVelocityFrames);

// Same on a vectorized window (layout of vectorize()); returns the
// vectorized forecast of `horizon` frames.
Eigen::VectorXd linear_forecast_vector(const Eigen::Ref<const Eigen::VectorXd>& past, int delta_t, int n_joints,
                                       int horizon, int k = kVelocityFrames);

}  // namespace mf
