#include "mf/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <json.hpp>

#include "mf/error.hpp"
#include "mf/io_util.hpp"
#include "mf/rng.hpp"

namespace mf {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kJitter = 0.002;            // meters

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

Eigen::Matrix3d torso_rotation(const BodyPose& p) { return rot_y(p.yaw) * rot_x(p.pitch) * rot_z(p.roll); }

// Upper arm and forearm directions in the torso frame. `side` is +1 for the
// right arm and -1 for the left.
std::pair<Vec3, Vec3> arm_directions(const ArmAngles& a, double side) {
  // Flexion about x turns the hanging arm toward -z; abduction about z swings it outward.
  const Eigen::Matrix3d shoulder = rot_x(a.flexion) * rot_z(side * a.abduction) * rot_y(side * a.rotation);
  const Vec3 upper = shoulder * Vec3(0.0, -1.0, 0.0);
  const Vec3 fore = shoulder * Vec3(0.0, -std::cos(a.elbow), -std::sin(a.elbow));
  return {upper, fore};
}

struct Channel {
  double centre = 0.0;
  std::vector<double> amp, freq, phase;  // freq in Hz

  double at(double seconds) const {
    double v = centre;
    for (std::size_t i = 0; i < amp.size(); ++i) v += amp[i] * std::sin(kTwoPi * freq[i] * seconds + phase[i]);
    return v;
  }
};

Channel make_channel(Rng& rng, double centre, double amplitude) {
  Channel c;
  c.centre = centre;
  const int n = 2 + static_cast<int>(rng.below(3));
  std::vector<double> w(n);
  double wsum = 0.0;
  for (int i = 0; i < n; ++i) {
    c.freq.push_back(rng.uniform(0.1, 0.8));
    c.phase.push_back(rng.uniform(0.0, kTwoPi));
    w[i] = rng.uniform(0.5, 1.0);
    wsum += w[i];
  }
  for (int i = 0; i < n; ++i) c.amp.push_back(amplitude * w[i] / wsum * std::min(1.0, 0.25 / c.freq[i]));
  return c;
}

struct ChannelSpec {
  double centre, amplitude, lever;
};

// Root x/y/z, then torso yaw/pitch/roll.
constexpr std::array<ChannelSpec, 6> kChannels{{
    {0.0, 0.03, 1.0}, {0.0, 0.015, 1.0}, {0.0, 0.03, 1.0},
    {0.0, 0.2, 1.25}, {0.05, 0.08, 1.25}, {0.0, 0.05, 1.25},
}};

// Hand goals for free motion, relative to the shoulder in the torso frame
// (right arm; the left one is mirrored in x).
constexpr double kWorkspaceLo[3] = {-0.15, -0.50, -0.48};
constexpr double kWorkspaceHi[3] = {0.25, 0.0, -0.12};
constexpr double kMaxReach = 0.5;
constexpr double kMinReach = 0.12;
constexpr double kPeakSpeed = 0.03;  // meters per frame
// Hands-down resting pose, shoulder-relative. Free motion returns near it on
// some moves; reaches start from it.
const Vec3 kRestOffset(0.05, -0.40, -0.22);
constexpr double kRestProbability = 0.3;

// Piecewise hand path: minimum-jerk moves between random workspace goals,
// some with a sideways detour, separated by random pauses.
class GesturePlanner {
 public:
  GesturePlanner(Rng& rng, double side, int n_frames) {
    Vec3 at = draw_goal(rng, side);
    int t = 0;
    while (t < n_frames) {
      const int pause = static_cast<int>(rng.below(41));
      moves_.push_back({t, t + pause, at, at, 0.0, Vec3::Zero()});
      t += pause;
      const Vec3 goal = rng.uniform() < kRestProbability ? draw_rest(rng, side) : draw_goal(rng, side);
      const double dist = (goal - at).norm();
      const int len = std::max(20, static_cast<int>(std::ceil(1.875 * dist / kPeakSpeed))) + static_cast<int>(rng.below(21));
      Vec3 n(goal.z() - at.z(), 0.0, at.x() - goal.x());
      n = n.norm() > 1e-9 ? n.normalized() : Vec3::UnitX();
      const double detour = rng.uniform() < 0.5 ? rng.uniform(-0.1, 0.1) : 0.0;
      moves_.push_back({t, t + len, at, goal, detour, n});
      t += len;
      at = goal;
    }
  }

  Vec3 at(int t) const {
    auto it = std::upper_bound(moves_.begin(), moves_.end(), t, [](int v, const Move& m) { return v < m.end; });
    if (it == moves_.end()) return moves_.back().to;
    const double len = it->end - it->begin;
    const double u = len > 0 ? std::clamp((t - it->begin + 1) / len, 0.0, 1.0) : 1.0;
    const double s = min_jerk(u);
    return it->from + s * (it->to - it->from) + it->detour * std::sin(std::numbers::pi * s) * it->normal;
  }

 private:
  struct Move {
    int begin, end;
    Vec3 from, to;
    double detour;
    Vec3 normal;
  };
  std::vector<Move> moves_;

  static Vec3 draw_rest(Rng& rng, double side) {
    const Vec3 g = kRestOffset + Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02));
    return Vec3(side * g.x(), g.y(), g.z());
  }

  static Vec3 draw_goal(Rng& rng, double side) {
    for (;;) {
      Vec3 g(rng.uniform(kWorkspaceLo[0], kWorkspaceHi[0]), rng.uniform(kWorkspaceLo[1], kWorkspaceHi[1]),
             rng.uniform(kWorkspaceLo[2], kWorkspaceHi[2]));
      if (g.norm() < kMaxReach && g.norm() > kMinReach) return Vec3(side * g.x(), g.y(), g.z());
    }
  }
};

}  // namespace

Vec3 ArmModel::nominal_shoulder(bool right) const {
  return root_base + Vec3((right ? 1.0 : -1.0) * shoulder_dx, spine + shoulder_dy, 0.0);
}

JointFrame forward_kinematics(const ArmModel& m, const BodyPose& pose) {
  const Eigen::Matrix3d r = torso_rotation(pose);
  JointFrame f;
  f.joints.resize(kNumJoints);
  f.joints[0] = pose.root;
  f.joints[1] = pose.root + r * Vec3(0.0, m.spine, 0.0);
  f.joints[2] = f.joints[1] + r * Vec3(0.0, m.head, 0.0);
  f.joints[3] = f.joints[1] + r * Vec3(m.shoulder_dx, m.shoulder_dy, 0.0);
  f.joints[4] = f.joints[1] + r * Vec3(-m.shoulder_dx, m.shoulder_dy, 0.0);
  const auto [ru, rf] = arm_directions(pose.right, 1.0);
  const auto [lu, lf] = arm_directions(pose.left, -1.0);
  f.joints[5] = f.joints[3] + m.upper_arm * (r * ru);
  f.joints[7] = f.joints[5] + m.forearm * (r * rf);
  f.joints[6] = f.joints[4] + m.upper_arm * (r * lu);
  f.joints[8] = f.joints[6] + m.forearm * (r * lf);
  return f;
}

Vec3 solve_elbow(const ArmModel& m, const Vec3& shoulder, const Vec3& hand) {
  const Vec3 d = hand - shoulder;
  const double dist = d.norm();
  const double l1 = m.upper_arm, l2 = m.forearm;
  if (dist > l1 + l2 || dist < std::abs(l1 - l2))
    throw Error(ErrorCode::TargetUnreachable, fmt::format("hand {:.3f} m from the shoulder, arm reaches [{:.3f}, {:.3f}]",
                                                          dist, std::abs(l1 - l2), l1 + l2));
  const Vec3 u = d / dist;
  const double a = (l1 * l1 - l2 * l2 + dist * dist) / (2.0 * dist);
  const double r = std::sqrt(std::max(0.0, l1 * l1 - a * a));
  Vec3 down = Vec3(0.0, -1.0, 0.0);
  Vec3 w = down - down.dot(u) * u;
  if (w.norm() < 1e-9) w = Vec3(0.0, 0.0, 1.0) - u.z() * u;  // arm vertical: bend backwards
  return shoulder + a * u + r * w.normalized();
}

Recording gen_free_motion(std::uint64_t seed, int n_frames, const ArmModel& model) {
  if (n_frames < 1) throw Error(ErrorCode::InvalidArgument, "n_frames must be >= 1");
  Rng rng(seed, 0x5f5f);
  std::vector<Channel> ch;
  ch.reserve(kChannels.size());
  for (const auto& s : kChannels) ch.push_back(make_channel(rng, s.centre, s.amplitude));
  const GesturePlanner right(rng, 1.0, n_frames), left(rng, -1.0, n_frames);

  Recording rec;
  rec.id = fmt::format("free_{:016x}", seed);
  rec.frames.reserve(static_cast<std::size_t>(n_frames));
  Rng noise(seed, 0x6a17);
  for (int t = 0; t < n_frames; ++t) {
    const double sec = t / kFps;
    double v[kChannels.size()];
    for (std::size_t i = 0; i < kChannels.size(); ++i) v[i] = ch[i].at(sec) + noise.normal() * kJitter / kChannels[i].lever;
    BodyPose p;
    p.root = model.root_base + Vec3(v[0], v[1], v[2]);
    p.yaw = v[3];
    p.pitch = v[4];
    p.roll = v[5];
    JointFrame f = forward_kinematics(model, p);
    const Eigen::Matrix3d r = torso_rotation(p);
    for (const auto& [planner, sh, el, ha] : {std::tuple{&right, 3, 5, 7}, std::tuple{&left, 4, 6, 8}}) {
      const Vec3 hand = f.joints[sh] + r * planner->at(t) + kJitter * Vec3(noise.normal(), noise.normal(), noise.normal());
      f.joints[el] = solve_elbow(model, f.joints[sh], hand);
      f.joints[ha] = f.joints[el] + model.forearm * (hand - f.joints[el]).normalized();
    }
    f.t = t;
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

std::string style_name(ReachStyle s) { return s == ReachStyle::Legible ? "legible" : "predictable"; }

Vec3 rest_hand(const ArmModel& model) { return model.nominal_shoulder(true) + kRestOffset; }

Vec3 reach_hand_path(const Vec3& start, const ReachSpec& spec, double u) {
  u = std::clamp(u, 0.0, 1.0);
  const double s = min_jerk(u);
  const Vec3 chord = spec.target - start;
  Vec3 p = start + s * chord;
  if (spec.style == ReachStyle::Legible && spec.amplitude > 0.0) {
    Vec3 n(chord.z(), 0.0, -chord.x());
    if (n.norm() > 1e-12) {
      n.normalize();
      if (n.x() * (spec.target.x() - start.x()) < 0.0) n = -n;
      p += spec.amplitude * std::sin(std::numbers::pi * s) * n;
    }
  }
  return p;
}

Recording gen_reach(const ReachSpec& spec, std::uint64_t seed, const ArmModel& model) {
  if (spec.duration < 10) throw Error(ErrorCode::InvalidArgument, "reach duration must be >= 10 frames");
  if (spec.amplitude < 0.0) throw Error(ErrorCode::InvalidArgument, "detour amplitude must be >= 0");
  if (spec.rest_frames < 0 || spec.hold_frames < 0) throw Error(ErrorCode::InvalidArgument, "negative frame count");
  const Vec3 start = rest_hand(model) + spec.start_offset;
  const Vec3 shoulder = model.nominal_shoulder(true);
  const Vec3 rest = rest_hand(model) - shoulder;
  const Vec3 left_rest(-rest.x(), rest.y(), rest.z());
  // Checks the whole path up front so a failure never leaves a partial recording.
  for (int i = 0; i <= 20; ++i) solve_elbow(model, shoulder, reach_hand_path(start, spec, i / 20.0));

  Recording rec;
  rec.id = fmt::format("reach_{:016x}", seed);
  const int total = spec.rest_frames + spec.duration + spec.hold_frames;
  Rng noise(seed, 0x7eac);
  for (int i = 0; i < total; ++i) {
    double u = 0.0;
    if (i >= spec.rest_frames) u = std::min(1.0, static_cast<double>(i - spec.rest_frames + 1) / spec.duration);
    BodyPose p;
    p.root = model.root_base + kJitter * Vec3(noise.normal(), noise.normal(), noise.normal());
    p.yaw = noise.normal() * kJitter / 1.25;
    p.pitch = 0.05 + noise.normal() * kJitter / 1.25;
    p.roll = noise.normal() * kJitter / 1.25;
    JointFrame f = forward_kinematics(model, p);
    const Vec3 left_hand = f.joints[4] + torso_rotation(p) * left_rest + kJitter * Vec3(noise.normal(), noise.normal(), noise.normal());
    f.joints[6] = solve_elbow(model, f.joints[4], left_hand);
    f.joints[8] = f.joints[6] + model.forearm * (left_hand - f.joints[6]).normalized();
    const Vec3 hand = reach_hand_path(start, spec, u) + kJitter * Vec3(noise.normal(), noise.normal(), noise.normal());
    f.joints[5] = solve_elbow(model, f.joints[3], hand);
    f.joints[7] = f.joints[5] + model.forearm * (hand - f.joints[5]).normalized();
    f.t = i;
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

CorpusConfig CorpusConfig::paper_shape() {
  CorpusConfig c;
  c.train_recordings = 54;  // 90 minutes at 30 fps
  c.test_recordings = 12;   // 20 minutes
  return c;
}

TargetSet reach_targets(const ArmModel& model, double edge) {
  const Vec3 centre = model.nominal_shoulder(true) + Vec3(0.0, -0.12, -0.30);
  const double k = edge / (2.0 * std::numbers::sqrt2);
  const std::array<Vec3, 4> v{Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  TargetSet set;
  for (int i = 0; i < 4; ++i) set.targets.push_back({fmt::format("T{}", i + 1), centre + k * v[i]});
  return set;
}

TargetSet legibility_targets(const ArmModel& model) {
  const Vec3 centre = model.nominal_shoulder(true) + Vec3(0.0, -0.12, -0.30);
  const double half = 0.08;
  TargetSet set;
  set.targets.push_back({"goal-1", Vec3(rest_hand(model).x() - half, centre.y(), centre.z())});
  set.targets.push_back({"goal-2", Vec3(rest_hand(model).x() + half, centre.y(), centre.z())});
  return set;
}

Corpus gen_corpus(const CorpusConfig& config, std::uint64_t seed) {
  if (config.train_recordings < 1 || config.test_recordings < 1 || config.frames < 1 || config.reaches_per_target < 0 ||
      config.labeled_per_style < 0)
    throw Error(ErrorCode::InvalidArgument, "corpus sizes must be positive");
  const ArmModel model;
  Corpus c;
  for (int i = 0; i < config.train_recordings; ++i) {
    c.train.push_back(gen_free_motion(derive_seed(seed, fmt::format("train-{}", i)), config.frames, model));
    c.train.back().id = fmt::format("train_{:03d}", i);
  }
  for (int i = 0; i < config.test_recordings; ++i) {
    c.test.push_back(gen_free_motion(derive_seed(seed, fmt::format("test-{}", i)), config.frames, model));
    c.test.back().id = fmt::format("test_{:03d}", i);
  }

  auto make_reach = [&](const Vec3& target, ReachStyle style, const std::string& purpose) {
    Rng r(derive_seed(seed, purpose));
    ReachSpec spec;
    spec.target = target;
    spec.style = style;
    spec.amplitude = config.legible_amplitude;
    spec.duration = config.reach_duration + static_cast<int>(r.below(2 * config.duration_jitter + 1)) - config.duration_jitter;
    spec.start_offset = Vec3(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)) * config.start_jitter;
    Recording rec = gen_reach(spec, r.next_u64(), model);
    return std::pair{std::move(rec), spec};
  };

  c.targets = reach_targets(model, config.target_edge);
  for (int g = 0; g < c.targets.size(); ++g) {
    for (int i = 0; i < config.reaches_per_target; ++i) {
      auto [rec, spec] = make_reach(c.targets.targets[g].pos, ReachStyle::Predictable, fmt::format("reach-{}-{}", g, i));
      rec.id = fmt::format("reach_{}_{:02d}", g + 1, i);
      c.reach_index.push_back({rec.id + ".jsonl", g, spec.rest_frames, spec.duration, ""});
      c.reaches.push_back(std::move(rec));
    }
  }

  c.labeled_targets = legibility_targets(model);
  for (int g = 0; g < c.labeled_targets.size(); ++g) {
    for (ReachStyle style : {ReachStyle::Legible, ReachStyle::Predictable}) {
      for (int i = 0; i < config.labeled_per_style; ++i) {
        const std::string name = style_name(style);
        auto [rec, spec] = make_reach(c.labeled_targets.targets[g].pos, style, fmt::format("labeled-{}-{}-{}", name, g, i));
        rec.id = fmt::format("{}_{}_{:02d}", name, g + 1, i);
        c.labeled_index.push_back({rec.id + ".jsonl", g, spec.rest_frames, spec.duration, name});
        c.labeled.push_back(std::move(rec));
      }
    }
  }
  return c;
}

void write_corpus(const Corpus& corpus, const CorpusConfig& config, std::uint64_t seed,
                  const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"train", "test", "reaches", "labeled"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  for (const auto& r : corpus.train) write_recording_jsonl(r, dir / "train" / (r.id + ".jsonl"));
  for (const auto& r : corpus.test) write_recording_jsonl(r, dir / "test" / (r.id + ".jsonl"));
  write_targets(corpus.targets, dir / "targets.json");
  write_targets(corpus.targets, dir / "reaches" / "targets.json");
  for (const auto& r : corpus.reaches) write_recording_jsonl(r, dir / "reaches" / (r.id + ".jsonl"));
  write_reach_index(corpus.reach_index, dir / "reaches" / "index.json");
  write_targets(corpus.labeled_targets, dir / "labeled" / "targets.json");
  for (const auto& r : corpus.labeled) write_recording_jsonl(r, dir / "labeled" / (r.id + ".jsonl"));
  write_reach_index(corpus.labeled_index, dir / "labeled" / "index.json");

  const nlohmann::json manifest = {
      {"seed", seed},
      {"fps", kFps},
      {"frames_per_recording", config.frames},
      {"train_recordings", corpus.train.size()},
      {"test_recordings", corpus.test.size()},
      {"reaches", corpus.reaches.size()},
      {"labeled", corpus.labeled.size()},
      {"reach_duration", config.reach_duration},
      {"legible_amplitude", config.legible_amplitude},
      {"target_edge", config.target_edge},
  };
  write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<Recording> read_recordings_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Recording> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_recording_jsonl(f));
  return out;
}

}  // namespace mf
