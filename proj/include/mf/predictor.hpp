#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mf/cvae.hpp"
#include "mf/nn.hpp"
#include "mf/rng.hpp"
#include "mf/skeleton.hpp"
#include "mf/trainer.hpp"

namespace mf {

using SegmentLengths = std::array<double, kKinematicChain.size()>;

// Which limb model supplies each joint of an assembled window: joint 0 comes
// from the root model, 1-4 (including both shoulders) from the torso model,
// 5/7 and 6/8 from the right and left arm models.
Limb owner_limb(int joint);
// Position of `joint` within limb_indices(limb); throws if absent.
int limb_slot(Limb limb, int joint);

// 3-d marginal of one joint at one step of a limb-space Gaussian.
GaussianVector joint_marginal(const GaussianVector& limb_future, Limb limb, int joint, int step);

struct PredictionResult {
  int delta_t = 0;
  std::array<GaussianVector, 4> limb_futures;  // limb space, indexed by Limb
  FrameWindow normalized;                      // assembled 9-joint means
  std::vector<Vec3> root_displacement;         // root-model mean, relative to the last past root
  std::optional<FrameWindow> world;

  const GaussianVector& future(Limb l) const { return limb_futures[static_cast<int>(l)]; }
};

// Mean-mode prediction from a normalized 9-joint past window plus the root
// model input (root_relative_vector of the world-frame window).
PredictionResult predict(const ModelSet& models, const FrameWindow& normalized_past,
                         const Eigen::Ref<const Eigen::VectorXd>& root_past);

// Future sampling: for torso, right and left (in that order) draw the encoder
// and transitioner noise and keep the decoder mean. `rng == nullptr` forces
// all noise to zero. The root model stays in mean mode.
PredictionResult sample_future(const ModelSet& models, const FrameWindow& normalized_past,
                               const Eigen::Ref<const Eigen::VectorXd>& root_past, Rng* rng,
                               const ForwardMode& mode = ForwardMode::latent_sampling());

// Inverts the normalization of a predicted window: every chain segment is
// rescaled with `lengths` and joint 0 placed at root_future[k].
FrameWindow to_world(const FrameWindow& normalized_future, std::span<const Vec3> root_future,
                     const SegmentLengths& lengths);

// World-frame prediction from a world-frame past window; fills `world`.
PredictionResult predict_world(const ModelSet& models, const FrameWindow& world_past);
PredictionResult sample_future_world(const ModelSet& models, const FrameWindow& world_past, Rng* rng);

// Per-step world-frame Gaussian of one joint: the mean matches to_world and
// the variance propagates each owning model's diagonal variance through the
// (linear) denormalization, treating joints as independent.
std::vector<GaussianVector> world_joint_track(const PredictionResult& prediction, int joint, const Vec3& root_anchor,
                                              const SegmentLengths& lengths);

// Forecasters evaluated by evaluate_mpe. `past` holds limb-space past windows
// (one per column, as PairDataset::gather produces); the result holds the
// future mean and variance per column.
class LimbForecaster {
 public:
  virtual ~LimbForecaster() = default;
  virtual std::string name() const = 0;
  virtual GaussianBatch forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const = 0;
};

class CvaeForecaster final : public LimbForecaster {
 public:
  explicit CvaeForecaster(const ModelSet& models) : models_(models) {}
  std::string name() const override { return "cvae"; }
  GaussianBatch forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const override;

 private:
  const ModelSet& models_;
};

// Constant velocity over the last k frames, identity covariance.
class LinearForecaster final : public LimbForecaster {
 public:
  explicit LinearForecaster(int delta_t, int k = 20) : delta_t_(delta_t), k_(k) {}
  std::string name() const override { return "linear"; }
  GaussianBatch forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const override;

 private:
  int delta_t_;
  int k_;
};

// Predicts the per-limb mean future window of a training set regardless of
// the input, with the training set's per-dimension variance.
class ConstantForecaster final : public LimbForecaster {
 public:
  static ConstantForecaster fit(std::span<const Recording> world_recordings, int delta_t);
  std::string name() const override { return "constant"; }
  GaussianBatch forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const override;

 private:
  std::array<GaussianVector, 4> futures_;
};

struct MpeCurve {
  std::vector<double> mpe;       // per step: mean over windows of the squared error summed over joints and x,y,z
  std::vector<double> mean_var;  // per step: mean over windows of the summed predicted variance
  Eigen::Index windows = 0;
};

// Per-limb MPE over all window pairs of the (world-frame) test recordings;
// non-root limbs are evaluated on normalized data.
std::array<MpeCurve, 4> evaluate_mpe(const LimbForecaster& forecaster, std::span<const Recording> test_recordings,
                                     int delta_t);

// CSV with columns step_ms,mpe,mean_var (one row per step).
std::string mpe_csv(const MpeCurve& curve, double fps = kFps);

}  // namespace mf
