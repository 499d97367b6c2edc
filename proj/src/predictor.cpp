#include "mf/predictor.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mf/baseline.hpp"
#include "mf/error.hpp"

namespace mf {
namespace {

constexpr Eigen::Index kForecastChunk = 2000;

void check_past(const ModelSet& models, const FrameWindow& normalized_past,
                const Eigen::Ref<const Eigen::VectorXd>& root_past) {
  if (normalized_past.delta_t() != models.delta_t)
    throw Error(ErrorCode::ShapeMismatch, "past window has " + std::to_string(normalized_past.delta_t()) +
                                              " frames, models expect " + std::to_string(models.delta_t));
  if (normalized_past.num_joints() != kNumJoints)
    throw Error(ErrorCode::ShapeMismatch, "predict expects full 9-joint frames");
  if (root_past.size() != 3 * models.delta_t) throw Error(ErrorCode::ShapeMismatch, "root input length");
}

void assemble(PredictionResult& r) {
  r.normalized.frames.assign(static_cast<std::size_t>(r.delta_t), JointFrame{});
  for (int k = 0; k < r.delta_t; ++k) {
    auto& f = r.normalized.frames[k];
    f.t = k;
    f.joints.assign(kNumJoints, Vec3::Zero());
    for (int j = 1; j < kNumJoints; ++j) {
      const Limb owner = owner_limb(j);
      f.joints[j] = r.future(owner).mean.segment<3>(flat_index(k, limb_slot(owner, j), 0, limb_size(owner)));
    }
  }
  r.root_displacement.resize(static_cast<std::size_t>(r.delta_t));
  for (int k = 0; k < r.delta_t; ++k) r.root_displacement[k] = r.future(Limb::Root).mean.segment<3>(3 * k);
}

PredictionResult run(const ModelSet& models, const FrameWindow& normalized_past,
                     const Eigen::Ref<const Eigen::VectorXd>& root_past, bool sampling, Rng* rng,
                     const ForwardMode& mode) {
  check_past(models, normalized_past, root_past);
  PredictionResult r;
  r.delta_t = models.delta_t;
  Rng zero_rng(0);
  for (Limb limb : {Limb::Torso, Limb::Right, Limb::Left}) {
    const LimbCvae& model = models[limb];
    const Cvae& net = model.net;
    const Eigen::VectorXd x = model.scaling.to_net(vectorize(select_limb(normalized_past, limb)));
    GaussianVector out;
    if (!sampling) {
      out = forward(net, x, ForwardMode::all_mean(), zero_rng).output;
    } else if (rng) {
      out = forward(net, x, mode, *rng).output;
    } else {
      const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(net.latent_dim());
      const StageOutput e = mode.encoder == Stage::Sample ? encode(net, x, zeros) : encode(net, x);
      const StageOutput t = mode.transition == Stage::Sample ? transition(net, e.value, zeros) : transition(net, e.value);
      out = decode(net, t.value);
    }
    r.limb_futures[static_cast<int>(limb)] = model.scaling.from_net(std::move(out));
  }
  const LimbCvae& root = models[Limb::Root];
  const Eigen::VectorXd root_x = root.scaling.to_net(root_past);
  r.limb_futures[static_cast<int>(Limb::Root)] =
      root.scaling.from_net(forward(root.net, root_x, ForwardMode::all_mean(), zero_rng).output);
  assemble(r);
  return r;
}

void attach_world(PredictionResult& r, const FrameWindow& world_past) {
  SegmentLengths lengths;
  Vec3 root;
  normalize_frame(world_past.frames.back(), &root, &lengths);
  std::vector<Vec3> root_future(r.root_displacement.size());
  for (std::size_t k = 0; k < root_future.size(); ++k) root_future[k] = root + r.root_displacement[k];
  r.world = to_world(r.normalized, root_future, lengths);
  const std::int64_t t0 = world_past.frames.back().t;
  for (int k = 0; k < r.delta_t; ++k) {
    r.world->frames[k].t = t0 + k + 1;
    r.normalized.frames[k].t = t0 + k + 1;
  }
}

FrameWindow normalize_window(const FrameWindow& world) {
  FrameWindow out;
  out.frames.reserve(world.frames.size());
  for (const auto& f : world.frames) out.frames.push_back(normalize_frame(f));
  return out;
}

}  // namespace

Limb owner_limb(int joint) {
  switch (joint) {
    case 0: return Limb::Root;
    case 1: case 2: case 3: case 4: return Limb::Torso;
    case 5: case 7: return Limb::Right;
    case 6: case 8: return Limb::Left;
    default: throw Error(ErrorCode::InvalidArgument, "joint index out of range: " + std::to_string(joint));
  }
}

int limb_slot(Limb limb, int joint) {
  const auto idx = limb_indices(limb);
  const auto it = std::find(idx.begin(), idx.end(), joint);
  if (it == idx.end())
    throw Error(ErrorCode::InvalidArgument,
                "joint " + std::to_string(joint) + " is not part of limb " + std::string(limb_name(limb)));
  return static_cast<int>(it - idx.begin());
}

GaussianVector joint_marginal(const GaussianVector& limb_future, Limb limb, int joint, int step) {
  const Eigen::Index off = flat_index(step, limb_slot(limb, joint), 0, limb_size(limb));
  if (off + 3 > limb_future.size()) throw Error(ErrorCode::ShapeMismatch, "step out of range");
  return GaussianVector{limb_future.mean.segment<3>(off), limb_future.var.segment<3>(off)};
}

PredictionResult predict(const ModelSet& models, const FrameWindow& normalized_past,
                         const Eigen::Ref<const Eigen::VectorXd>& root_past) {
  return run(models, normalized_past, root_past, false, nullptr, ForwardMode::all_mean());
}

PredictionResult sample_future(const ModelSet& models, const FrameWindow& normalized_past,
                               const Eigen::Ref<const Eigen::VectorXd>& root_past, Rng* rng,
                               const ForwardMode& mode) {
  return run(models, normalized_past, root_past, true, rng, mode);
}

FrameWindow to_world(const FrameWindow& normalized_future, std::span<const Vec3> root_future,
                     const SegmentLengths& lengths) {
  if (root_future.size() != normalized_future.frames.size())
    throw Error(ErrorCode::ContextMismatch, "root trajectory has " + std::to_string(root_future.size()) +
                                                " frames, prediction has " +
                                                std::to_string(normalized_future.frames.size()));
  FrameWindow out;
  out.frames.reserve(normalized_future.frames.size());
  for (std::size_t k = 0; k < root_future.size(); ++k) {
    // Joint 0 of a normalized frame is the origin, so the root offset is the
    // whole translation.
    out.frames.push_back(denormalize_frame(normalized_future.frames[k], root_future[k], lengths));
  }
  return out;
}

PredictionResult predict_world(const ModelSet& models, const FrameWindow& world_past) {
  PredictionResult r = predict(models, normalize_window(world_past), root_relative_vector(world_past));
  attach_world(r, world_past);
  return r;
}

PredictionResult sample_future_world(const ModelSet& models, const FrameWindow& world_past, Rng* rng) {
  PredictionResult r = sample_future(models, normalize_window(world_past), root_relative_vector(world_past), rng);
  attach_world(r, world_past);
  return r;
}

std::vector<GaussianVector> world_joint_track(const PredictionResult& prediction, int joint, const Vec3& root_anchor,
                                              const SegmentLengths& lengths) {
  // world_j = root + sum over path segments p->c of L_pc * (n_c - n_p).
  std::array<double, kNumJoints> coeff{};
  for (int c = joint; c != 0;) {
    const auto it = std::find_if(kKinematicChain.begin(), kKinematicChain.end(),
                                 [&](const Segment& s) { return s.child == c; });
    if (it == kKinematicChain.end()) throw Error(ErrorCode::InvalidArgument, "joint not on the kinematic chain");
    const double len = lengths[static_cast<std::size_t>(it - kKinematicChain.begin())];
    coeff[c] += len;
    coeff[it->parent] -= len;
    c = it->parent;
  }
  std::vector<GaussianVector> track(static_cast<std::size_t>(prediction.delta_t));
  for (int k = 0; k < prediction.delta_t; ++k) {
    const GaussianVector root = joint_marginal(prediction.future(Limb::Root), Limb::Root, 0, k);
    GaussianVector g{root_anchor + root.mean, root.var};
    for (int j = 1; j < kNumJoints; ++j) {
      if (coeff[j] == 0.0) continue;
      const Limb owner = owner_limb(j);
      const GaussianVector m = joint_marginal(prediction.future(owner), owner, j, k);
      g.mean += coeff[j] * m.mean;
      g.var += coeff[j] * coeff[j] * m.var;
    }
    track[k] = std::move(g);
  }
  return track;
}

GaussianBatch CvaeForecaster::forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const {
  return predict_batch(models_[limb], past);
}

GaussianBatch LinearForecaster::forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const {
  GaussianBatch out;
  out.mean.resize(past.rows(), past.cols());
  for (Eigen::Index c = 0; c < past.cols(); ++c)
    out.mean.col(c) = linear_forecast_vector(past.col(c), delta_t_, limb_size(limb), delta_t_, k_);
  out.var = Eigen::MatrixXd::Ones(past.rows(), past.cols());
  return out;
}

ConstantForecaster ConstantForecaster::fit(std::span<const Recording> world_recordings, int delta_t) {
  std::vector<Recording> normalized;
  for (const auto& r : world_recordings) normalized.push_back(normalize(r).first);
  ConstantForecaster f;
  for (Limb limb : kAllLimbs) {
    const PairDataset ds =
        PairDataset::build(limb == Limb::Root ? world_recordings : std::span<const Recording>(normalized), limb, delta_t);
    if (ds.size() < 1) throw Error(ErrorCode::RecordingTooShort, "constant baseline needs at least one pair");
    Eigen::MatrixXd past, future;
    ds.gather_all(past, future);
    GaussianVector g;
    g.mean = future.rowwise().mean();
    const Eigen::MatrixXd centred = future.colwise() - g.mean;
    g.var = (centred.array().square().rowwise().sum() / std::max<double>(1.0, static_cast<double>(future.cols()) - 1.0))
                .max(kDefaultVarFloor)
                .matrix();
    f.futures_[static_cast<int>(limb)] = std::move(g);
  }
  return f;
}

GaussianBatch ConstantForecaster::forecast(Limb limb, const Eigen::Ref<const Eigen::MatrixXd>& past) const {
  const GaussianVector& g = futures_[static_cast<int>(limb)];
  if (past.rows() != g.size()) throw Error(ErrorCode::ShapeMismatch, "constant forecaster input length");
  return GaussianBatch{g.mean.replicate(1, past.cols()), g.var.replicate(1, past.cols()), {}};
}

std::array<MpeCurve, 4> evaluate_mpe(const LimbForecaster& forecaster, std::span<const Recording> test_recordings,
                                     int delta_t) {
  std::vector<Recording> normalized;
  normalized.reserve(test_recordings.size());
  for (const auto& r : test_recordings) normalized.push_back(normalize(r).first);

  std::array<MpeCurve, 4> curves;
  for (Limb limb : kAllLimbs) {
    const PairDataset ds =
        PairDataset::build(limb == Limb::Root ? test_recordings : std::span<const Recording>(normalized), limb, delta_t);
    if (ds.size() < 1) throw Error(ErrorCode::RecordingTooShort, "test recordings yield no window pairs");
    const int width = 3 * limb_size(limb);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(delta_t);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(delta_t);
    std::vector<Eigen::Index> ids;
    Eigen::MatrixXd past, future;
    for (Eigen::Index start = 0; start < ds.size(); start += kForecastChunk) {
      const Eigen::Index n = std::min(kForecastChunk, ds.size() - start);
      ids.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = start + i;
      ds.gather(ids, past, future);
      const GaussianBatch pred = forecaster.forecast(limb, past);
      const Eigen::MatrixXd err2 = (pred.mean - future).array().square();
      for (int k = 0; k < delta_t; ++k) {
        sq[k] += err2.middleRows(static_cast<Eigen::Index>(k) * width, width).sum();
        var[k] += pred.var.middleRows(static_cast<Eigen::Index>(k) * width, width).sum();
      }
    }
    const double inv_n = 1.0 / static_cast<double>(ds.size());
    MpeCurve& c = curves[static_cast<int>(limb)];
    c.windows = ds.size();
    c.mpe.resize(static_cast<std::size_t>(delta_t));
    c.mean_var.resize(static_cast<std::size_t>(delta_t));
    for (int k = 0; k < delta_t; ++k) {
      c.mpe[k] = sq[k] * inv_n;
      c.mean_var[k] = var[k] * inv_n;
    }
  }
  return curves;
}

std::string mpe_csv(const MpeCurve& curve, double fps) {
  std::string out = "step_ms,mpe,mean_var\n";
  for (std::size_t k = 0; k < curve.mpe.size(); ++k)
    out += fmt::format("{},{},{}\n", static_cast<double>(k + 1) * 1000.0 / fps, curve.mpe[k], curve.mean_var[k]);
  return out;
}

}  // namespace mf
