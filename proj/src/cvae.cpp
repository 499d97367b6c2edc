#include "mf/cvae.hpp"

#include <cmath>
#include <numbers>

#include "mf/error.hpp"

namespace mf {
namespace {

GaussianMlp make_mlp(int in, int width, int out, Rng& rng, double var_floor) {
  GaussianMlp mlp;
  mlp.hidden = make_dense(in, width, Activation::Tanh, rng);
  mlp.head = make_gaussian_head(width, out, rng, var_floor);
  return mlp;
}

GaussianMlp zeros_like(const GaussianMlp& m) {
  GaussianMlp z;
  z.hidden = zeros_like(m.hidden);
  z.head.mean_layer = zeros_like(m.head.mean_layer);
  z.head.raw_var_layer = zeros_like(m.head.raw_var_layer);
  z.head.var_floor = m.head.var_floor;
  return z;
}

void check_rows(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": got " + std::to_string(got) + ", expected " + std::to_string(want));
}

StageOutput run_stage(const GaussianMlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& in,
                      const Eigen::VectorXd* eps) {
  const Eigen::VectorXd hidden = dense_forward(mlp.hidden, in);
  StageOutput out;
  out.latent = gaussian_head_forward(mlp.head, hidden);
  out.value = eps ? reparameterize(out.latent, *eps) : out.latent.mean;
  return out;
}

Eigen::MatrixXd reparameterize_batch(const GaussianBatch& g, const Eigen::MatrixXd& eps) {
  return g.mean.array() + g.var.array().sqrt() * eps.array();
}

}  // namespace

CvaeTopology Cvae::topology() const {
  return CvaeTopology{io_dim(), encoder.hidden.out_dim(), latent_dim(), transitioner.hidden.out_dim(),
                      decoder.hidden.out_dim()};
}

Cvae make_cvae(const CvaeTopology& t, std::uint64_t seed, double var_floor) {
  if (t.io_dim <= 0) throw Error(ErrorCode::InvalidArgument, "io_dim must be positive");
  Rng rng(seed, /*stream=*/0x1417);
  Cvae net;
  net.encoder = make_mlp(t.io_dim, t.encoder_width, t.latent_dim, rng, var_floor);
  net.transitioner = make_mlp(t.latent_dim, t.transition_width, t.latent_dim, rng, var_floor);
  net.decoder = make_mlp(t.latent_dim, t.decoder_width, t.io_dim, rng, var_floor);
  return net;
}

Cvae zeros_like(const Cvae& net) {
  return Cvae{zeros_like(net.encoder), zeros_like(net.transitioner), zeros_like(net.decoder)};
}

Eigen::Index parameter_count(const Cvae& net) {
  Eigen::Index n = 0;
  for_each_layer(net, [&](const std::string&, const DenseLayer& l) { n += l.weights.size() + l.biases.size(); });
  return n;
}

Eigen::VectorXd flatten(const Cvae& net) {
  Eigen::VectorXd flat(parameter_count(net));
  Eigen::Index off = 0;
  for_each_layer(net, [&](const std::string&, const DenseLayer& l) {
    flat.segment(off, l.weights.size()) = l.weights.reshaped();
    off += l.weights.size();
    flat.segment(off, l.biases.size()) = l.biases;
    off += l.biases.size();
  });
  return flat;
}

void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat, Cvae& net) {
  check_rows(flat.size(), parameter_count(net), "flat parameter vector");
  Eigen::Index off = 0;
  for_each_layer(net, [&](const std::string&, DenseLayer& l) {
    l.weights.reshaped() = flat.segment(off, l.weights.size());
    off += l.weights.size();
    l.biases = flat.segment(off, l.biases.size());
    off += l.biases.size();
  });
}

Eigen::MatrixXd Scaling::to_net(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (identity()) return x;
  check_rows(x.rows(), shift.size(), "scaled input");
  return (x.colwise() - shift).array().colwise() / scale.array();
}

GaussianBatch Scaling::from_net(GaussianBatch g) const {
  if (identity()) return g;
  check_rows(g.mean.rows(), shift.size(), "scaled output");
  g.mean = (g.mean.array().colwise() * scale.array()).colwise() + shift.array();
  g.var = g.var.array().colwise() * scale.array().square();
  return g;
}

GaussianVector Scaling::from_net(GaussianVector g) const {
  if (identity()) return g;
  check_rows(g.mean.size(), shift.size(), "scaled output");
  g.mean = g.mean.cwiseProduct(scale) + shift;
  g.var = g.var.cwiseProduct(scale.cwiseAbs2());
  return g;
}

double Scaling::log_det() const { return identity() ? 0.0 : scale.array().log().sum(); }

void ScalingAccumulator::add(const Eigen::Ref<const Eigen::MatrixXd>& cols) {
  if (cols.cols() == 0) return;
  if (count_ == 0.0) {
    ref_ = cols.col(0);
    sum_ = Eigen::VectorXd::Zero(cols.rows());
    sum_sq_ = Eigen::VectorXd::Zero(cols.rows());
  }
  check_rows(cols.rows(), ref_.size(), "scaling statistics");
  const Eigen::MatrixXd d = cols.colwise() - ref_;
  sum_ += d.rowwise().sum();
  sum_sq_ += d.array().square().matrix().rowwise().sum();
  count_ += static_cast<double>(cols.cols());
}

Scaling ScalingAccumulator::finish() const {
  if (count_ == 0.0) return {};
  Scaling s;
  const Eigen::VectorXd m = sum_ / count_;
  s.shift = ref_ + m;
  s.scale = (sum_sq_ / count_ - m.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i)
    if (!(s.scale[i] > 1e-8)) s.scale[i] = 1.0;
  return s;
}

int limb_io_dim(Limb limb, int delta_t) { return delta_t * limb_size(limb) * 3; }

LimbCvae make_limb_cvae(Limb limb, int delta_t, std::uint64_t seed, double var_floor) {
  if (delta_t < 1) throw Error(ErrorCode::InvalidArgument, "delta_t must be >= 1");
  return LimbCvae{limb, delta_t, make_cvae(CvaeTopology{limb_io_dim(limb, delta_t)}, seed, var_floor), {}};
}

StageOutput encode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past) {
  check_rows(x_past.size(), net.io_dim(), "encoder input");
  return run_stage(net.encoder, x_past, nullptr);
}

StageOutput encode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past,
                   const Eigen::Ref<const Eigen::VectorXd>& eps) {
  check_rows(x_past.size(), net.io_dim(), "encoder input");
  check_rows(eps.size(), net.latent_dim(), "encoder noise");
  const Eigen::VectorXd e = eps;
  return run_stage(net.encoder, x_past, &e);
}

StageOutput transition(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& e) {
  check_rows(e.size(), net.latent_dim(), "transitioner input");
  return run_stage(net.transitioner, e, nullptr);
}

StageOutput transition(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& e,
                       const Eigen::Ref<const Eigen::VectorXd>& eps) {
  check_rows(e.size(), net.latent_dim(), "transitioner input");
  check_rows(eps.size(), net.latent_dim(), "transitioner noise");
  const Eigen::VectorXd n = eps;
  return run_stage(net.transitioner, e, &n);
}

GaussianVector decode(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& t) {
  check_rows(t.size(), net.latent_dim(), "decoder input");
  return run_stage(net.decoder, t, nullptr).latent;
}

ForwardResult forward(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past, const ForwardMode& mode,
                      Rng& rng) {
  const int latent = net.latent_dim();
  auto draw = [&](Eigen::Index n) {
    Eigen::VectorXd eps(n);
    for (auto& v : eps) v = rng.normal();
    return eps;
  };
  const StageOutput e = mode.encoder == Stage::Sample ? encode(net, x_past, draw(latent)) : encode(net, x_past);
  const StageOutput t = mode.transition == Stage::Sample ? transition(net, e.value, draw(latent))
                                                         : transition(net, e.value);
  ForwardResult r;
  r.encoder_latent = e.latent;
  r.transition_latent = t.latent;
  r.output = decode(net, t.value);
  r.prediction = mode.decoder == Stage::Sample ? reparameterize(r.output, draw(r.output.size())) : r.output.mean;
  return r;
}

GaussianBatch predict_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past) {
  check_rows(x_past.rows(), net.io_dim(), "encoder input");
  const Eigen::MatrixXd h1 = dense_forward_batch(net.encoder.hidden, x_past);
  const Eigen::MatrixXd e = dense_forward_batch(net.encoder.head.mean_layer, h1);
  const Eigen::MatrixXd h2 = dense_forward_batch(net.transitioner.hidden, e);
  const Eigen::MatrixXd t = dense_forward_batch(net.transitioner.head.mean_layer, h2);
  const Eigen::MatrixXd h3 = dense_forward_batch(net.decoder.hidden, t);
  return gaussian_head_forward_batch(net.decoder.head, h3);
}

GaussianBatch predict_batch(const LimbCvae& model, const Eigen::Ref<const Eigen::MatrixXd>& x_past) {
  return model.scaling.from_net(predict_batch(model.net, model.scaling.to_net(x_past)));
}

Eigen::MatrixXd encoder_hidden_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past) {
  check_rows(x_past.rows(), net.io_dim(), "encoder input");
  return dense_forward_batch(net.encoder.hidden, x_past);
}

Eigen::MatrixXd encoder_means_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past) {
  return dense_forward_batch(net.encoder.head.mean_layer, encoder_hidden_batch(net, x_past));
}

BatchNoise BatchNoise::draw(int latent_dim, Eigen::Index batch, Rng& rng) {
  BatchNoise n;
  n.encoder.resize(latent_dim, batch);
  n.transition.resize(latent_dim, batch);
  rng.fill_normal(n.encoder);
  rng.fill_normal(n.transition);
  return n;
}

BatchNoise BatchNoise::zeros(int latent_dim, Eigen::Index batch) {
  return BatchNoise{Eigen::MatrixXd::Zero(latent_dim, batch), Eigen::MatrixXd::Zero(latent_dim, batch)};
}

Eigen::VectorXd elbo_batch(const Cvae& net, const Eigen::Ref<const Eigen::MatrixXd>& x_past,
                           const Eigen::Ref<const Eigen::MatrixXd>& x_future, const BatchNoise& noise,
                           const ElboOptions& options, Cvae* grad_of_mean) {
  const Eigen::Index batch = x_past.cols();
  check_rows(x_past.rows(), net.io_dim(), "elbo past");
  check_rows(x_future.rows(), net.decoder.head.mean_layer.out_dim(), "elbo future");
  check_rows(x_future.cols(), batch, "elbo batch size");
  check_rows(noise.encoder.rows(), net.latent_dim(), "encoder noise");
  check_rows(noise.encoder.cols(), batch, "encoder noise batch");
  check_rows(noise.transition.rows(), net.latent_dim(), "transition noise");
  check_rows(noise.transition.cols(), batch, "transition noise batch");

  // Forward.
  const Eigen::MatrixXd h1 = dense_forward_batch(net.encoder.hidden, x_past);
  const GaussianBatch enc = gaussian_head_forward_batch(net.encoder.head, h1);
  const Eigen::MatrixXd ze = reparameterize_batch(enc, noise.encoder);
  const Eigen::MatrixXd h2 = dense_forward_batch(net.transitioner.hidden, ze);
  const GaussianBatch tr = gaussian_head_forward_batch(net.transitioner.head, h2);
  const Eigen::MatrixXd zt = reparameterize_batch(tr, noise.transition);
  const Eigen::MatrixXd h3 = dense_forward_batch(net.decoder.hidden, zt);
  const GaussianBatch dec = gaussian_head_forward_batch(net.decoder.head, h3);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  const Eigen::ArrayXXd resid = x_future.array() - dec.mean.array();
  const Eigen::VectorXd log_lik =
      (-0.5 * (log2pi + dec.var.array().log()) - resid.square() / (2.0 * dec.var.array())).colwise().sum().transpose();
  const double w = options.include_kl ? options.kl_weight : 0.0;
  auto kl_cols = [](const GaussianBatch& g) -> Eigen::VectorXd {
    return (0.5 * (g.var.array() + g.mean.array().square() - 1.0 - g.var.array().log())).colwise().sum().transpose();
  };
  Eigen::VectorXd values = log_lik;
  if (w != 0.0) values -= w * (kl_cols(enc) + kl_cols(tr));

  if (!grad_of_mean) return values;

  // Backward of mean(values).
  Cvae& g = *grad_of_mean;
  g = zeros_like(net);
  const double inv_b = 1.0 / static_cast<double>(batch);

  const Eigen::MatrixXd d_mu_d = (resid / dec.var.array()).matrix() * inv_b;
  const Eigen::MatrixXd d_var_d =
      ((-0.5 / dec.var.array()) + resid.square() / (2.0 * dec.var.array().square())).matrix() * inv_b;
  const Eigen::MatrixXd d_h3 = gaussian_head_backward(net.decoder.head, h3, dec, d_mu_d, d_var_d, g.decoder.head);
  const Eigen::MatrixXd d_zt = dense_backward(net.decoder.hidden, zt, h3, d_h3, g.decoder.hidden);

  auto latent_grads = [&](const GaussianBatch& stage, const Eigen::MatrixXd& eps, const Eigen::MatrixXd& d_z,
                          Eigen::MatrixXd& d_mu, Eigen::MatrixXd& d_var) {
    d_mu = d_z - (w * inv_b) * stage.mean;
    d_var = (d_z.array() * eps.array() / (2.0 * stage.var.array().sqrt())).matrix() -
            (w * inv_b * 0.5) * (1.0 - 1.0 / stage.var.array()).matrix();
  };

  Eigen::MatrixXd d_mu_t, d_var_t;
  latent_grads(tr, noise.transition, d_zt, d_mu_t, d_var_t);
  const Eigen::MatrixXd d_h2 = gaussian_head_backward(net.transitioner.head, h2, tr, d_mu_t, d_var_t, g.transitioner.head);
  const Eigen::MatrixXd d_ze = dense_backward(net.transitioner.hidden, ze, h2, d_h2, g.transitioner.hidden);

  Eigen::MatrixXd d_mu_e, d_var_e;
  latent_grads(enc, noise.encoder, d_ze, d_mu_e, d_var_e);
  const Eigen::MatrixXd d_h1 = gaussian_head_backward(net.encoder.head, h1, enc, d_mu_e, d_var_e, g.encoder.head);
  dense_backward(net.encoder.hidden, x_past, h1, d_h1, g.encoder.hidden, /*want_input_grad=*/false);
  return values;
}

ElboResult elbo(const Cvae& net, const Eigen::Ref<const Eigen::VectorXd>& x_past,
                const Eigen::Ref<const Eigen::VectorXd>& x_future, int samples, Rng& rng,
                const ElboOptions& options) {
  if (samples < 1) throw Error(ErrorCode::InvalidArgument, "elbo needs at least one sample");
  check_rows(x_past.size(), net.io_dim(), "elbo past");
  const Eigen::MatrixXd past = x_past.replicate(1, samples);
  const Eigen::MatrixXd future = x_future.replicate(1, samples);
  const BatchNoise noise = BatchNoise::draw(net.latent_dim(), samples, rng);
  ElboResult r;
  const Eigen::VectorXd values = elbo_batch(net, past, future, noise, options, &r.grad);
  r.value = values.mean();
  if (!std::isfinite(r.value)) throw Error(ErrorCode::NonFiniteLoss, "ELBO evaluated to a non-finite value");
  return r;
}

}  // namespace mf
