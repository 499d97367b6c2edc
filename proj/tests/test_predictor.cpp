#include <gtest/gtest.h>

#include <algorithm>

#include "mf/error.hpp"
#include "mf/predictor.hpp"
#include "oracles.hpp"

using namespace mf;

namespace {

ModelSet random_models(int dt, std::uint64_t seed) {
  ModelSet m;
  m.delta_t = dt;
  for (Limb l : kAllLimbs) {
    m[l] = make_limb_cvae(l, dt, seed + static_cast<int>(l));
    // a non-trivial data-space map, as trained models carry
    const int n = m[l].net.io_dim();
    m[l].scaling.shift = Eigen::VectorXd::LinSpaced(n, -0.3, 0.4);
    m[l].scaling.scale = Eigen::VectorXd::LinSpaced(n, 0.5, 2.0);
  }
  return m;
}

FrameWindow normalized_window(const FrameWindow& w) {
  FrameWindow out;
  for (const auto& f : w.frames) out.frames.push_back(normalize_frame(f));
  return out;
}

}  // namespace

TEST(Predictor, OwnersAndSlots) {
  EXPECT_EQ(owner_limb(0), Limb::Root);
  for (int j : {1, 2, 3, 4}) EXPECT_EQ(owner_limb(j), Limb::Torso);
  for (int j : {5, 7}) EXPECT_EQ(owner_limb(j), Limb::Right);
  for (int j : {6, 8}) EXPECT_EQ(owner_limb(j), Limb::Left);
  EXPECT_EQ(limb_slot(Limb::Right, 7), 2);
  EXPECT_EQ(limb_slot(Limb::Torso, 4), 3);
  EXPECT_THROW(limb_slot(Limb::Left, 7), Error);
}

TEST(Predictor, JointMarginalSlice) {
  GaussianVector g;
  g.mean = Eigen::VectorXd::LinSpaced(18, 0, 17);
  g.var = Eigen::VectorXd::LinSpaced(18, 100, 117);
  // right arm, 2 steps: step 1, joint 5 (slot 1) -> flat (1*3+1)*3 = 12
  const GaussianVector m = joint_marginal(g, Limb::Right, 5, 1);
  EXPECT_EQ(m.mean, Eigen::Vector3d(12, 13, 14));
  EXPECT_EQ(m.var, Eigen::Vector3d(112, 113, 114));
}

TEST(Predictor, ZeroNoiseSampleEqualsPredict) {
  const ModelSet models = random_models(5, 3);
  Rng rng(4);
  const Recording rec = oracle::sinusoid_recording(rng, 12);
  const FrameWindow past = window_at(rec, 2, 5);
  const PredictionResult a = predict_world(models, past);
  const PredictionResult b = sample_future_world(models, past, nullptr);
  ASSERT_TRUE(a.world && b.world);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < kNumJoints; ++j) EXPECT_EQ(a.world->frames[k].joints[j], b.world->frames[k].joints[j]);
  EXPECT_EQ(a.world->frames[0].t, past.frames.back().t + 1);

  Rng s1(5), s2(5), s3(6);
  const PredictionResult c = sample_future_world(models, past, &s1);
  const PredictionResult d = sample_future_world(models, past, &s2);
  const PredictionResult e = sample_future_world(models, past, &s3);
  EXPECT_EQ(c.future(Limb::Right).mean, d.future(Limb::Right).mean);
  EXPECT_NE(c.future(Limb::Right).mean, e.future(Limb::Right).mean);
  // root stays in mean mode
  EXPECT_EQ(c.future(Limb::Root).mean, a.future(Limb::Root).mean);
}

TEST(Predictor, AssembledWindowUsesOwningModels) {
  const ModelSet models = random_models(4, 7);
  Rng rng(8);
  const Recording rec = oracle::random_recording(rng, 4);
  const FrameWindow past = window_at(rec, 0, 4);
  const PredictionResult p = predict(models, normalized_window(past), root_relative_vector(past));
  for (int k = 0; k < 4; ++k)
    for (int j = 1; j < kNumJoints; ++j) {
      const Limb l = owner_limb(j);
      EXPECT_EQ(p.normalized.frames[k].joints[j], Vec3(joint_marginal(p.future(l), l, j, k).mean));
    }
}

TEST(Predictor, ToWorldInvertsNormalization) {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const JointFrame f = oracle::random_frame(rng, i);
    Vec3 root;
    SegmentLengths lengths;
    const JointFrame n = normalize_frame(f, &root, &lengths);
    FrameWindow w;
    w.frames = {n};
    const std::vector<Vec3> roots{root};
    const FrameWindow back = to_world(w, roots, lengths);
    for (int j = 0; j < kNumJoints; ++j) ASSERT_LT((back.frames[0].joints[j] - f.joints[j]).norm(), 1e-12);
  }
  FrameWindow two;
  two.frames.resize(2);
  EXPECT_THROW(to_world(two, std::vector<Vec3>{Vec3::Zero()}, SegmentLengths{}), Error);
}

TEST(Predictor, WorldTrackMatchesDenormalizationJacobian) {
  const ModelSet models = random_models(3, 10);
  Rng rng(11);
  const Recording rec = oracle::random_recording(rng, 3);
  const FrameWindow past = window_at(rec, 0, 3);
  Vec3 anchor;
  SegmentLengths lengths;
  normalize_frame(past.frames.back(), &anchor, &lengths);
  const PredictionResult p = predict_world(models, past);
  for (int joint : {2, 7, 8}) {
    const auto track = world_joint_track(p, joint, anchor, lengths);
    ASSERT_EQ(track.size(), 3u);
    for (int k = 0; k < 3; ++k) {
      EXPECT_LT((track[k].mean - p.world->frames[k].joints[joint]).norm(), 1e-12);
      // variance from a finite-difference Jacobian of denormalize_frame
      const Vec3 root = anchor + p.root_displacement[k];
      Vec3 var = Vec3(joint_marginal(p.future(Limb::Root), Limb::Root, 0, k).var);
      for (int j = 1; j < kNumJoints; ++j) {
        const Limb l = owner_limb(j);
        const Vec3 vj = joint_marginal(p.future(l), l, j, k).var;
        for (int c = 0; c < 3; ++c) {
          JointFrame up = p.normalized.frames[k], dn = up;
          up.joints[j][c] += 1e-6;
          dn.joints[j][c] -= 1e-6;
          const Vec3 d = (denormalize_frame(up, root, lengths).joints[joint] -
                          denormalize_frame(dn, root, lengths).joints[joint]) / 2e-6;
          for (int o = 0; o < 3; ++o)
            if (o != c) EXPECT_NEAR(d[o], 0.0, 1e-8);
          var[c] += d[c] * d[c] * vj[c];
        }
      }
      EXPECT_LT((track[k].var - var).cwiseAbs().maxCoeff(), 1e-7 * var.maxCoeff());
    }
  }
}

TEST(Mpe, MatchesNaiveOracle) {
  const int dt = 21;
  Rng rng(12);
  std::vector<Recording> test{oracle::sinusoid_recording(rng, 60), oracle::sinusoid_recording(rng, 55)};
  std::vector<Recording> train{oracle::sinusoid_recording(rng, 70)};
  const ModelSet models = random_models(dt, 13);
  const CvaeForecaster cvae(models);
  const LinearForecaster linear(dt);
  const ConstantForecaster constant = ConstantForecaster::fit(train, dt);
  for (const LimbForecaster* f : std::initializer_list<const LimbForecaster*>{&cvae, &linear, &constant}) {
    const auto curves = evaluate_mpe(*f, test, dt);
    for (Limb l : kAllLimbs) {
      const auto& c = curves[static_cast<int>(l)];
      EXPECT_EQ(c.windows, (60 - 2 * dt) + (55 - 2 * dt));
      const auto naive = oracle::naive_mpe(*f, test, l, dt);
      ASSERT_EQ(c.mpe.size(), naive.size());
      for (int k = 0; k < dt; ++k) EXPECT_NEAR(c.mpe[k], naive[k], 1e-9 * (1 + naive[k])) << f->name() << " " << k;
    }
  }
}

TEST(Mpe, LinearExactOnConstantVelocityRoot) {
  Rng rng(14);
  std::vector<Recording> test{oracle::constant_velocity_recording(rng, 80)};
  const auto curves = evaluate_mpe(LinearForecaster(25), test, 25);
  for (double e : curves[0].mpe) EXPECT_LT(e, 1e-20);
  for (double v : curves[0].mean_var) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Mpe, ConstantForecasterStatistics) {
  Rng rng(15);
  std::vector<Recording> train{oracle::random_recording(rng, 30)};
  const ConstantForecaster f = ConstantForecaster::fit(train, 4);
  const PairDataset ds = PairDataset::build(train, Limb::Root, 4);
  Eigen::MatrixXd past, future;
  ds.gather_all(past, future);
  const GaussianBatch g = f.forecast(Limb::Root, past.leftCols(2));
  for (Eigen::Index r = 0; r < future.rows(); ++r) {
    double mean = 0;
    for (Eigen::Index c = 0; c < future.cols(); ++c) mean += future(r, c);
    mean /= static_cast<double>(future.cols());
    double ss = 0;
    for (Eigen::Index c = 0; c < future.cols(); ++c) ss += (future(r, c) - mean) * (future(r, c) - mean);
    EXPECT_NEAR(g.mean(r, 0), mean, 1e-12);
    EXPECT_NEAR(g.var(r, 1), std::max(ss / static_cast<double>(future.cols() - 1), kDefaultVarFloor), 1e-12);
  }
}

TEST(Mpe, CsvLayout) {
  MpeCurve c{{0.5, 0.25}, {1.0, 2.0}, 7};
  const std::string csv = mpe_csv(c, 30.0);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step_ms,mpe,mean_var");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
