#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "mf/rng.hpp"

namespace mf {

inline constexpr double kDefaultVarFloor = 1e-6;

enum class Activation { Tanh, Identity };

// Batched code paths treat matrix columns as samples.
struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::Identity;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

// Glorot-uniform weights, zero biases.
DenseLayer make_dense(int in_dim, int out_dim, Activation activation, Rng& rng);
DenseLayer zeros_like(const DenseLayer& layer);

Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::Ref<const Eigen::VectorXd>& input);
Eigen::MatrixXd dense_forward_batch(const DenseLayer& layer, const Eigen::Ref<const Eigen::MatrixXd>& input);

// Accumulates dL/dW and dL/db into `grad` and returns dL/dinput.
// `output` is the post-activation value from the forward pass; the tanh
// derivative is recovered from it as 1 - y^2.
Eigen::MatrixXd dense_backward(const DenseLayer& layer, const Eigen::Ref<const Eigen::MatrixXd>& input,
                               const Eigen::Ref<const Eigen::MatrixXd>& output, Eigen::MatrixXd grad_output,
                               DenseLayer& grad, bool want_input_grad = true);

struct GaussianVector {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // diagonal covariance

  Eigen::Index size() const { return mean.size(); }
};

double softplus(double x);
double sigmoid(double x);

// Mean and variance heads on a shared hidden representation. Variance is
// softplus(raw) + var_floor so it never drops below the floor.
struct GaussianHead {
  DenseLayer mean_layer;
  DenseLayer raw_var_layer;
  double var_floor = kDefaultVarFloor;
};

GaussianHead make_gaussian_head(int in_dim, int out_dim, Rng& rng, double var_floor = kDefaultVarFloor);

struct GaussianBatch {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
  Eigen::MatrixXd raw;  // pre-softplus, kept for backprop
};

GaussianBatch gaussian_head_forward_batch(const GaussianHead& head, const Eigen::Ref<const Eigen::MatrixXd>& hidden);
GaussianVector gaussian_head_forward(const GaussianHead& head, const Eigen::Ref<const Eigen::VectorXd>& hidden);

// Backprop given dL/dmean and dL/dvar; accumulates into `grad` and returns
// dL/dhidden.
Eigen::MatrixXd gaussian_head_backward(const GaussianHead& head, const Eigen::Ref<const Eigen::MatrixXd>& hidden,
                                       const GaussianBatch& fwd, const Eigen::Ref<const Eigen::MatrixXd>& d_mean,
                                       const Eigen::Ref<const Eigen::MatrixXd>& d_var, GaussianHead& grad);

// mean + sqrt(var) * eps.
Eigen::VectorXd reparameterize(const GaussianVector& g, const Eigen::Ref<const Eigen::VectorXd>& eps);

// KL(N(mean, diag var) || N(0, I)).
double kl_std_normal(const GaussianVector& g);

// Log density of x under N(mean, diag var).
double gaussian_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, const GaussianVector& g);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  static AdamState zeros(Eigen::Index n, const AdamConfig& config = {});
};

// One bias-corrected Adam step that *descends* along `grads`.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state);

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h.
Eigen::VectorXd finite_diff_grad(const ScalarFn& loss, const Eigen::VectorXd& params, double h);

}  // namespace mf
