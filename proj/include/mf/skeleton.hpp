#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mf {

using Vec3 = Eigen::Vector3d;

inline constexpr int kNumJoints = 9;
inline constexpr double kFps = 30.0;

// Joint enumeration of the upper-body skeleton:
//   0 root (spine base)   1 spine (shoulder centre)   2 head
//   3 right shoulder      4 left shoulder
//   5 right elbow         6 left elbow
//   7 right hand          8 left hand
struct Segment {
  int parent;
  int child;
};

// Parent-before-child order; normalization walks it front to back.
inline constexpr std::array<Segment, 8> kKinematicChain{{
    {0, 1}, {1, 2}, {1, 3}, {1, 4}, {3, 5}, {5, 7}, {4, 6}, {6, 8},
}};

// One frame. A full skeleton frame has kNumJoints joints; limb sub-frames
// carry only the joints of their limb, in limb order.
struct JointFrame {
  std::int64_t t = 0;
  std::vector<Vec3> joints;
};

struct FrameWindow {
  std::vector<JointFrame> frames;

  int delta_t() const { return static_cast<int>(frames.size()); }
  int num_joints() const { return frames.empty() ? 0 : static_cast<int>(frames.front().joints.size()); }
};

struct Recording {
  std::string id;
  std::vector<JointFrame> frames;
  double fps = kFps;

  int length() const { return static_cast<int>(frames.size()); }
};

enum class Limb { Root = 0, Torso = 1, Right = 2, Left = 3 };

inline constexpr std::array<Limb, 4> kAllLimbs{Limb::Root, Limb::Torso, Limb::Right, Limb::Left};

std::span<const int> limb_indices(Limb limb);
std::string_view limb_name(Limb limb);
Limb limb_from_name(std::string_view name);
inline int limb_size(Limb limb) { return static_cast<int>(limb_indices(limb).size()); }

// Per-frame data needed to undo normalize(): the original root position and
// the original length of every kKinematicChain segment.
struct NormalizationContext {
  std::vector<Vec3> root_positions;
  std::vector<std::array<double, kKinematicChain.size()>> segment_lengths;

  int size() const { return static_cast<int>(root_positions.size()); }
};

// Root-centres every frame and rescales every chain segment to unit length.
std::pair<Recording, NormalizationContext> normalize(const Recording& recording);
Recording denormalize(const Recording& normalized, const NormalizationContext& ctx);

// Single-frame forms used by the world-frame reassembly of predictions.
JointFrame normalize_frame(const JointFrame& frame, Vec3* root_out = nullptr,
                           std::array<double, kKinematicChain.size()>* lengths_out = nullptr);
JointFrame denormalize_frame(const JointFrame& frame, const Vec3& root,
                             const std::array<double, kKinematicChain.size()>& lengths);

// Window pairs: for t in [delta_t, T - delta_t), the past window holds the
// frames at positions (t - delta_t, t] and the future window (t, t + delta_t].
// Returns the anchor positions t.
std::vector<int> pair_anchors(int recording_length, int delta_t);
std::vector<std::pair<FrameWindow, FrameWindow>> make_pairs(const Recording& recording, int delta_t);

FrameWindow window_at(const Recording& recording, int first, int delta_t);
FrameWindow select_limb(const FrameWindow& window, Limb limb);

// Layout: index = (frame * n_joints + joint) * 3 + coord.
inline Eigen::Index flat_index(int frame, int joint, int coord, int n_joints) {
  return (static_cast<Eigen::Index>(frame) * n_joints + joint) * 3 + coord;
}
Eigen::VectorXd vectorize(const FrameWindow& window);
FrameWindow devectorize(const Eigen::Ref<const Eigen::VectorXd>& v, int delta_t, int n_joints);

// JSON Lines recording format, one frame per line:
//   {"t": <int>, "joints": [[x,y,z], ... 9 entries]}
Recording read_recording_jsonl(const std::filesystem::path& path);
void write_recording_jsonl(const Recording& recording, const std::filesystem::path& path);
std::string frame_to_json_line(const JointFrame& frame);

void validate_full_frame(const JointFrame& frame);

}  // namespace mf
