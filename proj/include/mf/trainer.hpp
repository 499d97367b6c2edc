#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mf/cvae.hpp"
#include "mf/error.hpp"
#include "mf/skeleton.hpp"

namespace mf {

// Window pairs of one limb over a set of recordings, stored as time-major
// per-recording series so every past/future window is a contiguous slice.
//
// Limb::Root is fed world-frame recordings and is expressed as displacement
// from the root position at the anchor frame t (the last past frame), for
// both the past and the future window. All other limbs expect normalized
// recordings.
class PairDataset {
 public:
  static PairDataset build(std::span<const Recording> recordings, Limb limb, int delta_t);

  Limb limb() const { return limb_; }
  int delta_t() const { return delta_t_; }
  int io_dim() const { return limb_io_dim(limb_, delta_t_); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(pairs_.size()); }

  // Fills one column per id; matrices are resized as needed.
  void gather(std::span<const Eigen::Index> ids, Eigen::MatrixXd& past, Eigen::MatrixXd& future) const;
  void gather_all(Eigen::MatrixXd& past, Eigen::MatrixXd& future) const;

 private:
  Limb limb_ = Limb::Root;
  int delta_t_ = 0;
  std::vector<Eigen::VectorXd> series_;
  struct PairRef {
    int series;
    int anchor;
  };
  std::vector<PairRef> pairs_;
};

// Root-limb input for a world-frame window: joint-0 positions minus the
// root at the window's last frame, vectorized.
Eigen::VectorXd root_relative_vector(const FrameWindow& world_window);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 1000;  // clamped to the dataset size
  int max_epochs = 100;
  double rel_tol = 1e-4;
  int patience = 5;
  int eval_every = 0;  // batches between loss evaluations; 0 = once per epoch
  std::uint64_t seed = 0;
  double kl_warmup = 0.0;  // fraction of the step budget with a linear KL ramp
  double var_floor = kDefaultVarFloor;
};

struct LossRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;  // full-dataset mean negative ELBO
};

struct TrainResult {
  LimbCvae model;
  std::vector<LossRecord> history;
  std::int64_t steps = 0;
  int epochs = 0;
  bool converged = false;
  double final_loss = 0.0;
};

// Raised when a batch loss or gradient stops being finite; carries the
// parameters from before the offending update.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, LimbCvae last_good, std::int64_t step)
      : Error(ErrorCode::NonFiniteLoss, what), last_good_(std::move(last_good)), step_(step) {}
  const LimbCvae& last_good() const { return last_good_; }
  std::int64_t step() const { return step_; }

 private:
  LimbCvae last_good_;
  std::int64_t step_;
};

// Seed of the fixed noise used for loss evaluations of a run.
std::uint64_t evaluation_seed(const TrainConfig& config);

// Full-dataset mean negative ELBO in data units, noise drawn from
// Rng(eval_seed) chunk by chunk in dataset order.
double evaluate_loss(const LimbCvae& model, const PairDataset& data, std::uint64_t eval_seed);

// Per-coordinate mean and spread over every past and future window.
Scaling fit_scaling(const PairDataset& data);

using ProgressFn = std::function<void(Limb, const LossRecord&)>;

TrainResult train_limb(const PairDataset& data, const TrainConfig& config, const LimbCvae* init = nullptr,
                       const ProgressFn& progress = {});

struct ModelSet {
  int delta_t = 0;
  std::array<LimbCvae, 4> limbs;

  const LimbCvae& operator[](Limb l) const { return limbs[static_cast<int>(l)]; }
  LimbCvae& operator[](Limb l) { return limbs[static_cast<int>(l)]; }
};

struct TrainAllResult {
  ModelSet models;
  std::array<TrainResult, 4> per_limb;
};

// Normalizes `recordings` (world frame), builds the four limb datasets and
// trains them; limb k uses seed config.seed + k. Up to `threads` limbs run
// concurrently; results do not depend on the thread count.
TrainAllResult train_all(std::span<const Recording> recordings, int delta_t, const TrainConfig& config,
                         int threads = 1, const ModelSet* init = nullptr, const ProgressFn& progress = {});

}  // namespace mf
