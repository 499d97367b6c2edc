#include "mf/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "mf/rng.hpp"

namespace mf {
namespace {

constexpr Eigen::Index kEvalChunk = 1000;

}  // namespace

PairDataset PairDataset::build(std::span<const Recording> recordings, Limb limb, int delta_t) {
  PairDataset ds;
  ds.limb_ = limb;
  ds.delta_t_ = delta_t;
  const auto idx = limb_indices(limb);
  const int width = static_cast<int>(idx.size()) * 3;
  for (const auto& rec : recordings) {
    const auto anchors = pair_anchors(rec.length(), delta_t);
    Eigen::VectorXd series(static_cast<Eigen::Index>(rec.length()) * width);
    for (int k = 0; k < rec.length(); ++k) {
      const auto& f = rec.frames[k];
      if (f.joints.size() != static_cast<std::size_t>(kNumJoints))
        throw Error(ErrorCode::ShapeMismatch, "dataset recordings must hold 9-joint frames");
      for (std::size_t j = 0; j < idx.size(); ++j)
        series.segment<3>(static_cast<Eigen::Index>(k) * width + 3 * static_cast<Eigen::Index>(j)) =
            f.joints[idx[j]];
    }
    const int s = static_cast<int>(ds.series_.size());
    ds.series_.push_back(std::move(series));
    for (int t : anchors) ds.pairs_.push_back({s, t});
  }
  return ds;
}

void PairDataset::gather(std::span<const Eigen::Index> ids, Eigen::MatrixXd& past, Eigen::MatrixXd& future) const {
  const Eigen::Index dim = io_dim();
  const Eigen::Index width = dim / delta_t_;
  past.resize(dim, static_cast<Eigen::Index>(ids.size()));
  future.resize(dim, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const PairRef& p = pairs_.at(static_cast<std::size_t>(ids[c]));
    const Eigen::VectorXd& s = series_[p.series];
    const Eigen::Index col = static_cast<Eigen::Index>(c);
    past.col(col) = s.segment((p.anchor - delta_t_ + 1) * width, dim);
    future.col(col) = s.segment((p.anchor + 1) * width, dim);
    if (limb_ == Limb::Root) {
      const Eigen::Vector3d anchor = s.segment<3>(p.anchor * width);
      past.col(col).reshaped(3, delta_t_).colwise() -= anchor;
      future.col(col).reshaped(3, delta_t_).colwise() -= anchor;
    }
  }
}

void PairDataset::gather_all(Eigen::MatrixXd& past, Eigen::MatrixXd& future) const {
  std::vector<Eigen::Index> ids(pairs_.size());
  std::iota(ids.begin(), ids.end(), Eigen::Index{0});
  gather(ids, past, future);
}

Eigen::VectorXd root_relative_vector(const FrameWindow& world_window) {
  if (world_window.frames.empty()) throw Error(ErrorCode::WindowTooShort, "empty window");
  const Vec3 anchor = world_window.frames.back().joints.at(0);
  Eigen::VectorXd v(3 * world_window.delta_t());
  for (int k = 0; k < world_window.delta_t(); ++k) v.segment<3>(3 * k) = world_window.frames[k].joints.at(0) - anchor;
  return v;
}

std::uint64_t evaluation_seed(const TrainConfig& config) { return derive_seed(config.seed, "evaluation-noise"); }

Scaling fit_scaling(const PairDataset& data) {
  ScalingAccumulator acc;
  std::vector<Eigen::Index> ids;
  Eigen::MatrixXd past, future;
  for (Eigen::Index start = 0; start < data.size(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, data.size() - start);
    ids.resize(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), start);
    data.gather(ids, past, future);
    acc.add(past);
    acc.add(future);
  }
  return acc.finish();
}

double evaluate_loss(const LimbCvae& model, const PairDataset& data, std::uint64_t eval_seed) {
  const Cvae& net = model.net;
  Rng rng(eval_seed);
  std::vector<Eigen::Index> ids;
  Eigen::MatrixXd past, future;
  double total = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, data.size() - start);
    ids.resize(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), start);
    data.gather(ids, past, future);
    const BatchNoise noise = BatchNoise::draw(net.latent_dim(), n, rng);
    total -= elbo_batch(net, model.scaling.to_net(past), model.scaling.to_net(future), noise, {}, nullptr).sum();
  }
  return total / static_cast<double>(data.size()) + model.scaling.log_det();
}

TrainResult train_limb(const PairDataset& data, const TrainConfig& config, const LimbCvae* init,
                       const ProgressFn& progress) {
  if (!(config.lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (config.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (config.patience < 1) throw Error(ErrorCode::InvalidArgument, "patience must be >= 1");
  if (config.max_epochs < 0) throw Error(ErrorCode::InvalidArgument, "max_epochs must be >= 0");
  if (data.size() < 1) throw Error(ErrorCode::RecordingTooShort, "training needs at least one window pair");

  TrainResult result;
  if (init) {
    if (init->limb != data.limb() || init->delta_t != data.delta_t() || init->net.io_dim() != data.io_dim())
      throw Error(ErrorCode::ShapeMismatch, "initial model does not match the dataset");
    result.model = *init;
  } else {
    result.model = make_limb_cvae(data.limb(), data.delta_t(), derive_seed(config.seed, "init"), config.var_floor);
    result.model.scaling = fit_scaling(data);
  }
  const Scaling& scaling = result.model.scaling;
  Cvae& net = result.model.net;

  const std::uint64_t eval_seed = evaluation_seed(config);
  Rng rng(derive_seed(config.seed, "minibatch"));
  const Eigen::Index n = data.size();
  const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, n);
  const Eigen::Index batches_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(batches_per_epoch) * config.max_epochs;

  Eigen::VectorXd params = flatten(net);
  AdamState adam = AdamState::zeros(params.size(), AdamConfig{.lr = config.lr});

  // Parameters before the latest update, for the divergence report.
  Eigen::VectorXd prev_params = params;
  auto last_good = [&] {
    LimbCvae m = result.model;
    unflatten(prev_params, m.net);
    return m;
  };

  int stall = 0;
  bool stop = false;
  auto record = [&](int epoch) {
    const double loss = evaluate_loss(result.model, data, eval_seed);
    if (!std::isfinite(loss)) throw TrainingDiverged("evaluation loss is not finite", last_good(), result.steps);
    if (!result.history.empty()) {
      const double prev = result.history.back().loss;
      const double rel = (prev - loss) / std::max(std::abs(prev), 1e-12);
      stall = rel < config.rel_tol ? stall + 1 : 0;
      if (stall >= config.patience) {
        result.converged = true;
        stop = true;
      }
    }
    result.history.push_back({result.steps, epoch, loss});
    if (progress) progress(data.limb(), result.history.back());
  };

  record(0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd past, future;
  Cvae grad;
  bool evaluated_last = true;
  for (int epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n && !stop; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      data.gather(std::span<const Eigen::Index>(order.data() + start, static_cast<std::size_t>(m)), past, future);
      const BatchNoise noise = BatchNoise::draw(net.latent_dim(), m, rng);
      ElboOptions opts;
      if (config.kl_warmup > 0.0 && total_steps > 0.0)
        opts.kl_weight = std::min(1.0, (static_cast<double>(result.steps) + 1.0) / (config.kl_warmup * total_steps));
      const double batch_elbo =
          elbo_batch(net, scaling.to_net(past), scaling.to_net(future), noise, opts, &grad).mean();
      const Eigen::VectorXd ascent = flatten(grad);
      if (!std::isfinite(batch_elbo) || !ascent.allFinite())
        throw TrainingDiverged("non-finite batch loss at step " + std::to_string(result.steps), result.model,
                               result.steps);
      prev_params = params;
      adam_step(params, -ascent, adam);
      unflatten(params, net);
      ++result.steps;
      evaluated_last = false;
      if (config.eval_every > 0 && result.steps % config.eval_every == 0) {
        record(epoch);
        evaluated_last = true;
      }
    }
    result.epochs = epoch;
    if (config.eval_every == 0 && !stop) {
      record(epoch);
      evaluated_last = true;
    }
  }
  if (!evaluated_last) record(result.epochs);
  result.final_loss = result.history.back().loss;
  return result;
}

TrainAllResult train_all(std::span<const Recording> recordings, int delta_t, const TrainConfig& config, int threads,
                         const ModelSet* init, const ProgressFn& progress) {
  std::vector<Recording> normalized;
  normalized.reserve(recordings.size());
  for (const auto& r : recordings) normalized.push_back(normalize(r).first);

  TrainAllResult out;
  out.models.delta_t = delta_t;
  std::mutex progress_mutex;
  ProgressFn locked_progress;
  if (progress)
    locked_progress = [&](Limb l, const LossRecord& r) {
      std::lock_guard lock(progress_mutex);
      progress(l, r);
    };

  std::array<std::exception_ptr, 4> errors{};
  auto run = [&](int k) {
    try {
      const Limb limb = kAllLimbs[k];
      const PairDataset ds =
          PairDataset::build(limb == Limb::Root ? recordings : std::span<const Recording>(normalized), limb, delta_t);
      TrainConfig cfg = config;
      cfg.seed = config.seed + static_cast<std::uint64_t>(k);
      out.per_limb[k] = train_limb(ds, cfg, init ? &(*init)[limb] : nullptr, locked_progress);
      out.models.limbs[k] = out.per_limb[k].model;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  const int workers = std::clamp(threads, 1, 4);
  if (workers == 1) {
    for (int k = 0; k < 4; ++k) run(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int k = next++; k < 4; k = next++) run(k);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mf
