#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mf/error.hpp"
#include "mf/nn.hpp"
#include "oracles.hpp"

using namespace mf;

namespace {

GaussianVector gv(std::initializer_list<double> mean, std::initializer_list<double> var) {
  GaussianVector g;
  g.mean = Eigen::Map<const Eigen::VectorXd>(mean.begin(), static_cast<Eigen::Index>(mean.size()));
  g.var = Eigen::Map<const Eigen::VectorXd>(var.begin(), static_cast<Eigen::Index>(var.size()));
  return g;
}

}  // namespace

TEST(Dense, IdentityWeights) {
  DenseLayer l{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::Identity};
  const Eigen::Vector3d x(0.3, -1, 2);
  EXPECT_EQ(dense_forward(l, x), Eigen::VectorXd(x));
}

TEST(Dense, TanhOfZeroIsZero) {
  Rng rng(1);
  DenseLayer l = make_dense(4, 5, Activation::Tanh, rng);
  EXPECT_EQ(dense_forward(l, Eigen::VectorXd::Zero(4)), Eigen::VectorXd::Zero(5));
}

TEST(Dense, TwoByTwo) {
  DenseLayer l{(Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished(), Eigen::VectorXd::Zero(2), Activation::Identity};
  EXPECT_EQ(dense_forward(l, Eigen::Vector2d(1, 1)), Eigen::VectorXd(Eigen::Vector2d(3, 7)));
}

TEST(Dense, TanhMatchesStd) {
  Rng rng(2);
  DenseLayer l = make_dense(6, 40, Activation::Tanh, rng);
  l.weights *= 8.0;
  Eigen::VectorXd x(6);
  rng.fill_normal(x);
  const Eigen::VectorXd y = dense_forward(l, x);
  const Eigen::VectorXd pre = l.weights * x + l.biases;
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], std::tanh(pre[i]), 1e-15);
}

TEST(Dense, ShapeMismatch) {
  Rng rng(3);
  DenseLayer l = make_dense(4, 2, Activation::Identity, rng);
  EXPECT_THROW(dense_forward(l, Eigen::VectorXd::Zero(3)), Error);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  for (Activation act : {Activation::Identity, Activation::Tanh}) {
    DenseLayer l = make_dense(5, 4, act, rng);
    Eigen::MatrixXd x(5, 3), w(4, 3);
    rng.fill_normal(x);
    rng.fill_normal(w);
    // loss = sum(w .* forward(x))
    auto pack = [](const DenseLayer& d) {
      Eigen::VectorXd p(d.weights.size() + d.biases.size());
      p << d.weights.reshaped(), d.biases;
      return p;
    };
    auto loss = [&](const Eigen::VectorXd& p) {
      DenseLayer d = l;
      d.weights = p.head(l.weights.size()).reshaped(4, 5);
      d.biases = p.tail(4);
      return (w.array() * dense_forward_batch(d, x).array()).sum();
    };
    DenseLayer g = zeros_like(l);
    const Eigen::MatrixXd y = dense_forward_batch(l, x);
    const Eigen::MatrixXd dx = dense_backward(l, x, y, w, g);
    const Eigen::VectorXd num = finite_diff_grad(loss, pack(l), 1e-5);
    const Eigen::VectorXd ana = pack(g);
    for (Eigen::Index i = 0; i < ana.size(); ++i) EXPECT_LT(oracle::grad_rel_error(ana[i], num[i], 1e-8), 1e-6);
    // input gradient
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i) += 1e-5;
      xm(i) -= 1e-5;
      const double n = ((w.array() * dense_forward_batch(l, xp).array()).sum() -
                        (w.array() * dense_forward_batch(l, xm).array()).sum()) / 2e-5;
      EXPECT_LT(oracle::grad_rel_error(dx(i), n, 1e-8), 1e-6);
    }
  }
}

TEST(GaussianHead, VarianceAboveFloorAndGradients) {
  Rng rng(5);
  GaussianHead head = make_gaussian_head(6, 4, rng, 1e-3);
  head.raw_var_layer.weights *= 30.0;  // push raw values far negative and positive
  Eigen::MatrixXd h(6, 50);
  rng.fill_normal(h);
  const GaussianBatch out = gaussian_head_forward_batch(head, h);
  EXPECT_TRUE((out.var.array() >= 1e-3).all());
  for (Eigen::Index i = 0; i < out.raw.size(); ++i) EXPECT_NEAR(out.var(i), softplus(out.raw(i)) + 1e-3, 1e-14 * (1 + out.var(i)));

  head.raw_var_layer.weights /= 30.0;
  Eigen::MatrixXd h2(6, 3), wm(4, 3), wv(4, 3);
  rng.fill_normal(h2);
  rng.fill_normal(wm);
  rng.fill_normal(wv);
  auto loss_of = [&](const GaussianHead& hd, const Eigen::MatrixXd& in) {
    const GaussianBatch b = gaussian_head_forward_batch(hd, in);
    return (wm.array() * b.mean.array()).sum() + (wv.array() * b.var.array()).sum();
  };
  GaussianHead g{zeros_like(head.mean_layer), zeros_like(head.raw_var_layer), head.var_floor};
  const Eigen::MatrixXd dh = gaussian_head_backward(head, h2, gaussian_head_forward_batch(head, h2), wm, wv, g);
  for (Eigen::Index i = 0; i < head.raw_var_layer.weights.size(); ++i) {
    GaussianHead p = head, m = head;
    p.raw_var_layer.weights(i) += 1e-5;
    m.raw_var_layer.weights(i) -= 1e-5;
    EXPECT_LT(oracle::grad_rel_error(g.raw_var_layer.weights(i), (loss_of(p, h2) - loss_of(m, h2)) / 2e-5, 1e-8), 1e-6);
  }
  for (Eigen::Index i = 0; i < h2.size(); ++i) {
    Eigen::MatrixXd p = h2, m = h2;
    p(i) += 1e-5;
    m(i) -= 1e-5;
    EXPECT_LT(oracle::grad_rel_error(dh(i), (loss_of(head, p) - loss_of(head, m)) / 2e-5, 1e-8), 1e-6);
  }
}

TEST(Reparameterize, Examples) {
  const GaussianVector g = gv({1.0, -2.0}, {4.0, 0.25});
  EXPECT_EQ(reparameterize(g, Eigen::Vector2d::Zero()), g.mean);
  EXPECT_DOUBLE_EQ(reparameterize(gv({1.0}, {4.0}), Eigen::VectorXd::Constant(1, 0.5))[0], 2.0);
  const GaussianVector floor = gv({0.7}, {kDefaultVarFloor});
  EXPECT_LE(std::abs(reparameterize(floor, Eigen::VectorXd::Constant(1, 3.0))[0] - 0.7),
            std::sqrt(kDefaultVarFloor) * 3.0 + 1e-15);
  EXPECT_THROW(reparameterize(g, Eigen::Vector3d::Zero()), Error);
}

TEST(Reparameterize, SampleMoments) {
  const GaussianVector g = gv({0.5, -1.0}, {2.0, 0.1});
  Rng rng(6);
  const int n = 100000;
  Eigen::Vector2d s = Eigen::Vector2d::Zero(), s2 = Eigen::Vector2d::Zero();
  Eigen::VectorXd eps(2);
  for (int i = 0; i < n; ++i) {
    eps << rng.normal(), rng.normal();
    const Eigen::VectorXd x = reparameterize(g, eps);
    s += x;
    s2 += x.cwiseProduct(x);
  }
  for (int d = 0; d < 2; ++d) {
    const double mean = s[d] / n;
    const double var = s2[d] / n - mean * mean;
    EXPECT_NEAR(mean, g.mean[d], 3 * std::sqrt(g.var[d] / n));
    EXPECT_NEAR(var, g.var[d], 3 * g.var[d] * std::sqrt(2.0 / n));
  }
}

TEST(Kl, Examples) {
  EXPECT_NEAR(kl_std_normal(gv({0.0}, {1.0})), 0.0, 1e-12);
  EXPECT_NEAR(kl_std_normal(gv({1.7}, {1.0})), 1.7 * 1.7 / 2, 1e-12);
}

TEST(Kl, MonteCarloOracle) {
  const GaussianVector q = gv({0.3, -0.2}, {0.5, 2.0});
  Rng rng(7);
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double lq = 0, lp = 0;
    for (int d = 0; d < 2; ++d) {
      const double x = q.mean[d] + std::sqrt(q.var[d]) * rng.normal();
      lq += std::log(oracle::normal_pdf(x, q.mean[d], q.var[d]));
      lp += std::log(oracle::normal_pdf(x, 0.0, 1.0));
    }
    s += lq - lp;
    s2 += (lq - lp) * (lq - lp);
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(kl_std_normal(q), mean, 3 * se);
}

TEST(Kl, NonNegativeOnRandomGaussians) {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    GaussianVector g;
    const int d = 1 + static_cast<int>(rng.below(5));
    g.mean.resize(d);
    g.var.resize(d);
    for (int k = 0; k < d; ++k) {
      g.mean[k] = rng.uniform(-3, 3);
      g.var[k] = std::exp(rng.uniform(-6, 3));
    }
    ASSERT_GE(kl_std_normal(g), 0.0);
  }
}

TEST(LogPdf, Examples) {
  const double c = -0.5 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(gaussian_log_pdf(Eigen::VectorXd::Constant(1, 0.4), gv({0.4}, {1.0})), c, 1e-12);
  EXPECT_NEAR(gaussian_log_pdf(Eigen::VectorXd::Constant(1, 1.4), gv({0.4}, {1.0})), c - 0.5, 1e-12);
  const GaussianVector g = gv({0.1, 0.2, -0.3}, {0.5, 1.5, 2.5});
  const Eigen::Vector3d x(1, -1, 0.5);
  double sum = 0;
  for (int d = 0; d < 3; ++d) sum += gaussian_log_pdf(Eigen::VectorXd::Constant(1, x[d]), gv({g.mean[d]}, {g.var[d]}));
  EXPECT_NEAR(gaussian_log_pdf(x, g), sum, 1e-12);
  EXPECT_THROW(gaussian_log_pdf(Eigen::Vector2d::Zero(), g), Error);
}

TEST(Adam, ZeroGradientKeepsParams) {
  AdamState s = AdamState::zeros(3);
  s.m << 1, 2, 3;
  s.v << 1, 1, 1;
  Eigen::VectorXd p(3);
  p << 0.5, -0.5, 2;
  const Eigen::VectorXd before = p, m0 = s.m;
  adam_step(p, Eigen::VectorXd::Zero(3), s);
  EXPECT_EQ(s.step, 1);
  EXPECT_TRUE(s.m.isApprox(0.9 * m0));
  EXPECT_TRUE(s.v.isApprox(Eigen::VectorXd::Constant(3, 0.999)));
  // moments were non-zero, so p moves; from a fresh state it must not
  AdamState fresh = AdamState::zeros(3);
  Eigen::VectorXd q = before;
  adam_step(q, Eigen::VectorXd::Zero(3), fresh);
  EXPECT_EQ(q, before);
}

TEST(Adam, FirstStepIsSignScaled) {
  AdamState s = AdamState::zeros(3);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  const Eigen::Vector3d g(0.3, -2.0, 1e-3);
  adam_step(p, g, s);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -1e-3 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

TEST(Adam, QuadraticDecreasesMonotonically) {
  AdamState s = AdamState::zeros(1, AdamConfig{.lr = 0.1});
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  double prev = 0.5;
  for (int i = 0; i < 2; ++i) {
    adam_step(x, x, s);  // grad of x^2/2
    const double loss = 0.5 * x[0] * x[0];
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  Eigen::VectorXd g(2);
  g << 0.1, -0.4;
  AdamState a = AdamState::zeros(2), b = AdamState::zeros(2);
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2), q = p;
  for (int i = 0; i < 5; ++i) {
    adam_step(p, g, a);
    adam_step(q, g, b);
  }
  EXPECT_EQ(p, q);
  g[1] = std::nan("");
  try {
    adam_step(p, g, a);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(Init, DeterministicGlorot) {
  Rng r1(9), r2(9);
  const DenseLayer a = make_dense(80, 125, Activation::Tanh, r1);
  const DenseLayer b = make_dense(80, 125, Activation::Tanh, r2);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.biases, Eigen::VectorXd::Zero(125));
  const double limit = std::sqrt(6.0 / 205.0);
  EXPECT_LE(a.weights.cwiseAbs().maxCoeff(), limit);
  // 10^4 uniform draws: mean 0, std error limit / sqrt(3 n)
  EXPECT_NEAR(a.weights.mean(), 0.0, 3 * limit / std::sqrt(3.0 * a.weights.size()));
}

TEST(FiniteDiff, Examples) {
  const Eigen::Vector2d p(1, 2);
  const Eigen::VectorXd g = finite_diff_grad([](const Eigen::VectorXd& x) { return 0.5 * x.squaredNorm(); }, p, 1e-5);
  EXPECT_NEAR(g[0], 1.0, 1e-9);
  EXPECT_NEAR(g[1], 2.0, 1e-9);
  EXPECT_EQ(finite_diff_grad([](const Eigen::VectorXd&) { return 3.0; }, p, 1e-5), Eigen::VectorXd::Zero(2));
}
