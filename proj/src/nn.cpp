#include "mf/nn.hpp"

#include <cmath>
#include <numbers>

#include "mf/error.hpp"

namespace mf {
namespace {

void check_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": got " + std::to_string(got) + ", expected " + std::to_string(want));
}

}  // namespace

DenseLayer make_dense(int in_dim, int out_dim, Activation activation, Rng& rng) {
  if (in_dim <= 0 || out_dim <= 0) throw Error(ErrorCode::InvalidArgument, "layer dims must be positive");
  DenseLayer layer;
  layer.activation = activation;
  layer.weights.resize(out_dim, in_dim);
  const double limit = std::sqrt(6.0 / (in_dim + out_dim));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
  layer.biases = Eigen::VectorXd::Zero(out_dim);
  return layer;
}

DenseLayer zeros_like(const DenseLayer& layer) {
  return DenseLayer{Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                    Eigen::VectorXd::Zero(layer.biases.size()), layer.activation};
}

namespace {

// Eigen's double tanh and log1p are scalar loops; these exp/log forms
// vectorize and agree to a few ulp.
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& x) { return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0); }

Eigen::ArrayXXd fast_softplus(const Eigen::ArrayXXd& x) {
  const Eigen::ArrayXXd e = (-x.abs()).exp();
  return x.max(0.0) + (e < 1e-5).select(e * (1.0 - 0.5 * e), (1.0 + e).log());
}

}  // namespace

Eigen::MatrixXd dense_forward_batch(const DenseLayer& layer, const Eigen::Ref<const Eigen::MatrixXd>& input) {
  check_size(input.rows(), layer.in_dim(), "dense input");
  Eigen::MatrixXd out(layer.out_dim(), input.cols());
  out.noalias() = layer.weights * input;
  out.colwise() += layer.biases;
  if (layer.activation == Activation::Tanh) out = fast_tanh(out.array());
  return out;
}

Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::Ref<const Eigen::VectorXd>& input) {
  return dense_forward_batch(layer, input);
}

Eigen::MatrixXd dense_backward(const DenseLayer& layer, const Eigen::Ref<const Eigen::MatrixXd>& input,
                               const Eigen::Ref<const Eigen::MatrixXd>& output, Eigen::MatrixXd grad_output,
                               DenseLayer& grad, bool want_input_grad) {
  if (layer.activation == Activation::Tanh)
    grad_output.array() *= (1.0 - output.array().square());
  grad.weights.noalias() += grad_output * input.transpose();
  grad.biases.noalias() += grad_output.rowwise().sum();
  if (!want_input_grad) return {};
  Eigen::MatrixXd grad_input(layer.in_dim(), grad_output.cols());
  grad_input.noalias() = layer.weights.transpose() * grad_output;
  return grad_input;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

GaussianHead make_gaussian_head(int in_dim, int out_dim, Rng& rng, double var_floor) {
  if (!(var_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "var_floor must be positive");
  GaussianHead head;
  head.mean_layer = make_dense(in_dim, out_dim, Activation::Identity, rng);
  head.raw_var_layer = make_dense(in_dim, out_dim, Activation::Identity, rng);
  head.var_floor = var_floor;
  return head;
}

GaussianBatch gaussian_head_forward_batch(const GaussianHead& head, const Eigen::Ref<const Eigen::MatrixXd>& hidden) {
  GaussianBatch out;
  out.mean = dense_forward_batch(head.mean_layer, hidden);
  out.raw = dense_forward_batch(head.raw_var_layer, hidden);
  out.var = fast_softplus(out.raw.array()) + head.var_floor;
  return out;
}

GaussianVector gaussian_head_forward(const GaussianHead& head, const Eigen::Ref<const Eigen::VectorXd>& hidden) {
  auto b = gaussian_head_forward_batch(head, hidden);
  return GaussianVector{b.mean.col(0), b.var.col(0)};
}

Eigen::MatrixXd gaussian_head_backward(const GaussianHead& head, const Eigen::Ref<const Eigen::MatrixXd>& hidden,
                                       const GaussianBatch& fwd, const Eigen::Ref<const Eigen::MatrixXd>& d_mean,
                                       const Eigen::Ref<const Eigen::MatrixXd>& d_var, GaussianHead& grad) {
  const Eigen::MatrixXd d_raw = d_var.array() / (1.0 + (-fwd.raw.array()).exp());
  Eigen::MatrixXd d_hidden = dense_backward(head.mean_layer, hidden, fwd.mean, d_mean, grad.mean_layer);
  d_hidden += dense_backward(head.raw_var_layer, hidden, fwd.raw, d_raw, grad.raw_var_layer);
  return d_hidden;
}

Eigen::VectorXd reparameterize(const GaussianVector& g, const Eigen::Ref<const Eigen::VectorXd>& eps) {
  check_size(eps.size(), g.size(), "reparameterize noise");
  return g.mean.array() + g.var.array().sqrt() * eps.array();
}

double kl_std_normal(const GaussianVector& g) {
  check_size(g.var.size(), g.mean.size(), "kl variance");
  return 0.5 * (g.var.array() + g.mean.array().square() - 1.0 - g.var.array().log()).sum();
}

double gaussian_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, const GaussianVector& g) {
  check_size(x.size(), g.size(), "log-pdf input");
  check_size(g.var.size(), g.size(), "log-pdf variance");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return (-0.5 * (log2pi + g.var.array().log()) - (x - g.mean).array().square() / (2.0 * g.var.array())).sum();
}

AdamState AdamState::zeros(Eigen::Index n, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state) {
  check_size(grads.size(), params.size(), "adam gradient");
  check_size(state.m.size(), params.size(), "adam first moment");
  check_size(state.v.size(), params.size(), "adam second moment");
  if (!grads.allFinite()) throw Error(ErrorCode::NonFiniteGradient, "adam_step received a non-finite gradient");
  const auto& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.eps);
}

Eigen::VectorXd finite_diff_grad(const ScalarFn& loss, const Eigen::VectorXd& params, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite difference step must be positive");
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = loss(p);
    p[i] = orig - h;
    const double down = loss(p);
    p[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace mf
