#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mf/skeleton.hpp"
#include "mf/target_inference.hpp"

namespace mf {

// Body geometry in meters. The person stands at root_base facing -z with
// +y up, so the right side is +x.
struct ArmModel {
  Vec3 root_base{0.0, 1.0, 2.3};
  double spine = 0.45;
  double head = 0.22;
  double shoulder_dx = 0.18;
  double shoulder_dy = -0.02;
  double upper_arm = 0.30;
  double forearm = 0.27;

  Vec3 nominal_shoulder(bool right) const;
};

// Flexion (forward), abduction (outward), elbow flexion and humeral rotation,
// radians. All zero is the arm hanging straight down.
struct ArmAngles {
  double flexion = 0.0;
  double abduction = 0.0;
  double elbow = 0.0;
  double rotation = 0.0;
};

struct BodyPose {
  Vec3 root = Vec3::Zero();
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  ArmAngles right, left;
};

JointFrame forward_kinematics(const ArmModel& model, const BodyPose& pose);

// Two-link IK: elbow position placing the hand at `hand`, with the elbow on
// the downward side of the shoulder-hand line. Throws TargetUnreachable.
Vec3 solve_elbow(const ArmModel& model, const Vec3& shoulder, const Vec3& hand);

Recording gen_free_motion(std::uint64_t seed, int n_frames, const ArmModel& model = {});

enum class ReachStyle { Predictable, Legible };
std::string style_name(ReachStyle s);

struct ReachSpec {
  Vec3 target = Vec3::Zero();
  int duration = 40;
  ReachStyle style = ReachStyle::Predictable;
  double amplitude = 0.1;  // legible detour, meters
  int rest_frames = 60;
  int hold_frames = 60;
  Vec3 start_offset = Vec3::Zero();  // added to the default rest hand position
};

inline double min_jerk(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }

Vec3 rest_hand(const ArmModel& model);
// Noise-free hand position at u in [0,1].
Vec3 reach_hand_path(const Vec3& start, const ReachSpec& spec, double u);

// rest_frames still frames, `duration` reach frames (the last one at the
// target), then hold_frames at the target.
Recording gen_reach(const ReachSpec& spec, std::uint64_t seed, const ArmModel& model = {});

struct CorpusConfig {
  int train_recordings = 10;
  int test_recordings = 3;
  int frames = 3000;
  int reaches_per_target = 10;
  int labeled_per_style = 5;
  int reach_duration = 40;
  int duration_jitter = 4;  // reach durations vary uniformly by +-this
  double start_jitter = 0.02;
  double legible_amplitude = 0.1;
  double target_edge = 0.275;

  static CorpusConfig desk() { return {}; }
  static CorpusConfig paper_shape();
};

struct Corpus {
  std::vector<Recording> train;
  std::vector<Recording> test;
  TargetSet targets;
  std::vector<Recording> reaches;
  std::vector<ReachInfo> reach_index;
  TargetSet labeled_targets;
  std::vector<Recording> labeled;
  std::vector<ReachInfo> labeled_index;
};

// Four targets on a regular tetrahedron in front of the right shoulder.
TargetSet reach_targets(const ArmModel& model, double edge);
// Two targets to the left (1) and right (2) of the rest hand.
TargetSet legibility_targets(const ArmModel& model);

Corpus gen_corpus(const CorpusConfig& config, std::uint64_t seed);

// Layout: train/, test/ (JSONL recordings), targets.json, reaches/ and
// labeled/ (JSONL + index.json + targets.json), manifest.json.
void write_corpus(const Corpus& corpus, const CorpusConfig& config, std::uint64_t seed,
                  const std::filesystem::path& dir);

std::vector<Recording> read_recordings_dir(const std::filesystem::path& dir);

}  // namespace mf
