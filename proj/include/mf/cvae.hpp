#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "mf/nn.hpp"
#include "mf/rng.hpp"
#include "mf/skeleton.hpp"

namespace mf {

inline constexpr int kEncoderWidth = 200;
inline constexpr int kLatentDim = 20;
inline constexpr int kTransitionWidth = 30;
inline constexpr int kDecoderWidth = 200;

struct CvaeTopology {
  int io_dim = 0;
  int encoder_width = kEncoderWidth;
  int latent_dim = kLatentDim;
  int transition_width = kTransitionWidth;
  int decoder_width = kDecoderWidth;

  bool operator==(const CvaeTopology&) const = default;
};

// A tanh hidden layer followed by a Gaussian head.
struct GaussianMlp {
  DenseLayer hidden;
  GaussianHead head;
};

// Encoder h_e: past window -> latent stage 1.
// Transitioner h_t: latent stage 1 -> latent stage 2.
// Decoder h_d: latent stage 2 -> Gaussian over the future window.
struct Cvae {
  GaussianMlp encoder;
  GaussianMlp transitioner;
  GaussianMlp decoder;

  int io_dim() const { return encoder.hidden.in_dim(); }
  int latent_dim() const { return encoder.head.mean_layer.out_dim(); }
  CvaeTopology topology() const;
};

Cvae make_cvae(const CvaeTopology& topology, std::uint64_t seed, double var_floor = kDefaultVarFloor);
Cvae zeros_like(const Cvae& net);

// Visits the nine dense layers in a fixed order with stable names
// ("encoder.hidden", "encoder.mean", "encoder.raw_var", "transitioner.*",
// "decoder.*"). Flattening and checkpoints both follow this order.
template <class Net, class F>
void for_each_layer(Net& net, F&& f) {
  for (auto [prefix, mlp] : {std::pair<std::string_view, decltype(&net.encoder)>{"encoder", &net.encoder},
                             {"transitioner", &net.transitioner},
                             {"decoder", &net.decoder}}) {
    f(std::string(prefix) + ".hidden", mlp->hidden);
    f(std::string(prefix) + ".mean", mlp->head.mean_layer);
    f(std::string(prefix) + ".raw_var", mlp->head.raw_var_layer);
  }
}

Eigen::Index parameter_count(const Cvae& net);
Eigen::VectorXd flatten(const Cvae& net);
void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat, Cvae& net);

// Fixed per-coordinate affine map between data and network space:
// z = (x - shift) / scale. Past and future windows share one layout, so one
// map serves both. Empty vectors mean the identity.
struct Scaling {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  bool identity() const { return shift.size() == 0; }
  Eigen::MatrixXd to_net(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  GaussianBatch from_net(GaussianBatch g) const;
  GaussianVector from_net(GaussianVector g) const;
  // log |dx/dz|, what a density in network space loses in data space.
  double log_det() const;
};

// Per-row mean and standard deviation over the columns of both matrices.
// Rows with spread below 1e-8 keep scale 1.
class ScalingAccumulator {
 public:
  void add(const Eigen::Ref<const Eigen::MatrixXd>& cols);
  Scaling finish() const;

 private:
  Eigen::VectorXd sum_, sum_sq_;
  Eigen::VectorXd ref_;  // first column, subtracted to keep the sums well conditioned
  double count_ = 0.0;
};

// One limb model: input and output are both delta_t * |limb| * 3 long.
struct LimbCvae {
  Limb limb = Limb::Root;
  int delta_t = 0;
  Cvae net;
  Scaling scaling;
};

int limb_io_dim(Limb limb, int delta_t);
LimbCvae make_limb_cvae(Limb limb, int delta_t, std::uint64_t seed, double var_floor = kDefaultVarFloor);

enum class Stage { Mean, Sample };

struct ForwardMode {
  Stage encoder = Stage::Mean;
  Stage transition = Stage::Mean;
  Stage decoder = Stage::Mean;

  static constexpr ForwardMode all_mean() { return {}; }
  // Latent stages sampled, decoder mean returned.
  static constexpr ForwardMode latent_sampling() { return {Stage::Sample, Stage::Sample, Stage::Mean}; }
};

struct StageOutput {
  Eigen::VectorXd value;  // latent mean in mean mode, reparameterized sample otherwise
  GaussianVector latent;
};

StageOutput encode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past);
StageOutput encode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past,
                   const Eigen::Ref<const Eigen::VectorXd>& eps);
StageOutput transition(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& e);
StageOutput transition(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& e,
                       const Eigen::Ref<const Eigen::VectorXd>& eps);
GaussianVector decode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& t);

struct ForwardResult {
  GaussianVector encoder_latent;
  GaussianVector transition_latent;
  GaussianVector output;
  Eigen::VectorXd prediction;  // decoder mean, or a draw from it in decoder-sample mode
};

// Noise is drawn in stage order (encoder, transitioner, decoder) and only
// for stages in sample mode.
ForwardResult forward(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past, const ForwardMode& mode,
                      Rng& rng);

// All-mean decoder output for a batch of past windows (one per column).
GaussianBatch predict_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past);
// Same, for a limb model taking data-space windows.
GaussianBatch predict_batch(const LimbCvae& model, const Eigen::Ref<const Eigen::MatrixXd>& x_past);
// Encoder latent means (latent_dim x n) or post-tanh encoder hidden units.
Eigen::MatrixXd encoder_means_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past);
Eigen::MatrixXd encoder_hidden_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past);

struct ElboOptions {
  double kl_weight = 1.0;
  // Test hook: drop both KL terms, leaving the reconstruction log-likelihood.
  bool include_kl = true;
};

struct BatchNoise {
  Eigen::MatrixXd encoder;     // latent_dim x batch
  Eigen::MatrixXd transition;  // latent_dim x batch

  static BatchNoise draw(int latent_dim, Eigen::Index batch, Rng& rng);
  static BatchNoise zeros(int latent_dim, Eigen::Index batch);
};

// Per-column single-sample ELBO estimates. When `grad_of_mean` is non-null it
// receives (overwritten) the gradient of the column mean w.r.t. every
// parameter.
Eigen::VectorXd elbo_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past,
                           const Eigen::Ref<const Eigen::MatrixXd>& x_future, const BatchNoise& noise,
                           const ElboOptions& options, Cvae* grad_of_mean);

struct ElboResult {
  double value = 0.0;
  Cvae grad;  // d value / d params (ascent direction)
};

// S-sample estimate: mean over s of log p(x_future | t^s) minus the two KL
// terms, with e^s and t^s reparameterized.
ElboResult elbo(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past,
                const Eigen::Ref<const Eigen::VectorXd>& x_future, int samples, Rng& rng,
                const ElboOptions& options = {});

}  // namespace mf
