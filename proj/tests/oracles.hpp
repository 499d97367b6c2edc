// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls the library routine it is meant to check.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mf/cvae.hpp"
#include "mf/nn.hpp"
#include "mf/predictor.hpp"
#include "mf/rng.hpp"
#include "mf/skeleton.hpp"

namespace oracle {

using mf::Vec3;

// Random skeleton frame with no degenerate segment: each child sits at a
// random offset of length [0.05, 0.6] from its parent.
inline mf::JointFrame random_frame(mf::Rng& rng, std::int64_t t = 0) {
  mf::JointFrame f;
  f.t = t;
  f.joints.assign(mf::kNumJoints, Vec3::Zero());
  f.joints[0] = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  for (const auto& s : mf::kKinematicChain) {
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    while (d.norm() < 1e-3) d = Vec3(rng.normal(), rng.normal(), rng.normal());
    f.joints[s.child] = f.joints[s.parent] + d.normalized() * rng.uniform(0.05, 0.6);
  }
  return f;
}

inline mf::Recording random_recording(mf::Rng& rng, int n_frames) {
  mf::Recording r;
  r.id = "random";
  for (int t = 0; t < n_frames; ++t) r.frames.push_back(random_frame(rng, t));
  return r;
}

// Smooth recording: a random skeleton whose joints drift on independent
// sinusoids (segment lengths not preserved; fine for window bookkeeping).
inline mf::Recording sinusoid_recording(mf::Rng& rng, int n_frames, double amp = 0.05) {
  const mf::JointFrame base = random_frame(rng);
  std::vector<Vec3> freq(mf::kNumJoints), phase(mf::kNumJoints);
  for (int j = 0; j < mf::kNumJoints; ++j) {
    freq[j] = Vec3(rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05));
    phase[j] = Vec3(rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28));
  }
  mf::Recording r;
  r.id = "sinusoid";
  for (int t = 0; t < n_frames; ++t) {
    mf::JointFrame f = base;
    f.t = t;
    for (int j = 0; j < mf::kNumJoints; ++j)
      for (int c = 0; c < 3; ++c) f.joints[j][c] += amp * std::sin(2 * std::numbers::pi * freq[j][c] * t + phase[j][c]);
    r.frames.push_back(std::move(f));
  }
  return r;
}

// Every joint moves with its own constant velocity.
inline mf::Recording constant_velocity_recording(mf::Rng& rng, int n_frames) {
  const mf::JointFrame base = random_frame(rng);
  std::vector<Vec3> v(mf::kNumJoints);
  for (auto& x : v) x = Vec3(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01));
  mf::Recording r;
  for (int t = 0; t < n_frames; ++t) {
    mf::JointFrame f = base;
    f.t = t;
    for (int j = 0; j < mf::kNumJoints; ++j) f.joints[j] += static_cast<double>(t) * v[j];
    r.frames.push_back(std::move(f));
  }
  return r;
}

// Direct per-window, per-joint, per-coordinate evaluation of the per-step
// prediction error: the forecaster is queried one window at a time, the past
// and future are rebuilt frame by frame from the recording, and the squared
// errors are accumulated in plain loops.
inline std::vector<double> naive_mpe(const mf::LimbForecaster& f, std::span<const mf::Recording> world, mf::Limb limb,
                                     int dt) {
  const auto idx = mf::limb_indices(limb);
  std::vector<double> sum(static_cast<std::size_t>(dt), 0.0);
  long n = 0;
  for (const auto& rec_world : world) {
    const mf::Recording rec = limb == mf::Limb::Root ? rec_world : mf::normalize(rec_world).first;
    for (int t = dt; t < rec.length() - dt; ++t) {
      const Vec3 anchor = rec.frames[t].joints[0];
      Eigen::VectorXd past(3 * idx.size() * dt);
      std::vector<std::vector<Vec3>> truth(static_cast<std::size_t>(dt));
      for (int k = 0; k < dt; ++k) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          Vec3 p = rec.frames[t - dt + 1 + k].joints[idx[j]];
          Vec3 q = rec.frames[t + 1 + k].joints[idx[j]];
          if (limb == mf::Limb::Root) {
            p -= anchor;
            q -= anchor;
          }
          for (int c = 0; c < 3; ++c) past[(k * static_cast<int>(idx.size()) + static_cast<int>(j)) * 3 + c] = p[c];
          truth[k].push_back(q);
        }
      }
      const mf::GaussianBatch pred = f.forecast(limb, past);
      for (int k = 0; k < dt; ++k)
        for (std::size_t j = 0; j < idx.size(); ++j)
          for (int c = 0; c < 3; ++c) {
            const double e = pred.mean((k * static_cast<int>(idx.size()) + static_cast<int>(j)) * 3 + c, 0) - truth[k][j][c];
            sum[k] += e * e;
          }
      ++n;
    }
  }
  for (auto& s : sum) s /= static_cast<double>(n);
  return sum;
}

// Composite Simpson rule on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline double normal_pdf(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Integral over R^3 of N(f | mu_g, sigma^2 I) N(f | mu_d, diag var_d) by
// numerical quadrature. Both densities are axis-aligned so the 3-d integral
// is the product of three 1-d integrals, each on a +-12 std window.
inline double target_density_integral(const Vec3& mu_g, double sigma, const mf::GaussianVector& pred) {
  double out = 1.0;
  for (int c = 0; c < 3; ++c) {
    const double sd = std::sqrt(pred.var[c]);
    const double lo = std::min(mu_g[c] - 12 * sigma, pred.mean[c] - 12 * sd);
    const double hi = std::max(mu_g[c] + 12 * sigma, pred.mean[c] + 12 * sd);
    out *= simpson([&](double x) { return normal_pdf(x, mu_g[c], sigma * sigma) * normal_pdf(x, pred.mean[c], pred.var[c]); },
                   lo, hi, 20000);
  }
  return out;
}

inline Eigen::VectorXd quadrature_posterior(const std::vector<Vec3>& targets, double sigma, const mf::GaussianVector& pred) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t g = 0; g < targets.size(); ++g) p[static_cast<Eigen::Index>(g)] = target_density_integral(targets[g], sigma, pred);
  return p / p.sum();
}

// Relative error with an absolute floor for near-zero gradient entries.
inline double grad_rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  Eigen::Index worst = -1;
};

// Analytic ELBO gradient (fixed noise, so the objective is deterministic)
// against central differences over every parameter.
inline GradCheck check_elbo_gradient(const mf::Cvae& net, const Eigen::MatrixXd& x_past, const Eigen::MatrixXd& x_future,
                                     const mf::BatchNoise& noise, double h, double floor,
                                     const mf::ElboOptions& opts = {}) {
  mf::Cvae grad;
  mf::elbo_batch(net, x_past, x_future, noise, opts, &grad);
  const Eigen::VectorXd analytic = mf::flatten(grad);
  const Eigen::VectorXd p0 = mf::flatten(net);
  mf::Cvae probe = net;
  Eigen::VectorXd p = p0;
  GradCheck out;
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    p[i] = p0[i] + h;
    mf::unflatten(p, probe);
    const double up = mf::elbo_batch(probe, x_past, x_future, noise, opts, nullptr).mean();
    p[i] = p0[i] - h;
    mf::unflatten(p, probe);
    const double down = mf::elbo_batch(probe, x_past, x_future, noise, opts, nullptr).mean();
    p[i] = p0[i];
    const double err = grad_rel_error(analytic[i], (up - down) / (2 * h), floor);
    if (err > out.max_rel) {
      out.max_rel = err;
      out.worst = i;
    }
  }
  return out;
}

}  // namespace oracle
