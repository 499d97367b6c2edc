#include "mf/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mf/error.hpp"
#include "mf/io_util.hpp"

namespace mf {
namespace {

constexpr std::array<int, 1> kRootIdx{0};
constexpr std::array<int, 4> kTorsoIdx{1, 2, 3, 4};
constexpr std::array<int, 3> kRightIdx{3, 5, 7};
constexpr std::array<int, 3> kLeftIdx{4, 6, 8};

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

std::span<const int> limb_indices(Limb limb) {
  switch (limb) {
    case Limb::Root: return kRootIdx;
    case Limb::Torso: return kTorsoIdx;
    case Limb::Right: return kRightIdx;
    case Limb::Left: return kLeftIdx;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown limb");
}

std::string_view limb_name(Limb limb) {
  switch (limb) {
    case Limb::Root: return "root";
    case Limb::Torso: return "torso";
    case Limb::Right: return "right";
    case Limb::Left: return "left";
  }
  return "?";
}

Limb limb_from_name(std::string_view name) {
  for (Limb l : kAllLimbs)
    if (limb_name(l) == name) return l;
  throw Error(ErrorCode::InvalidArgument, "unknown limb name '" + std::string(name) + "'");
}

void validate_full_frame(const JointFrame& frame) {
  if (frame.joints.size() != static_cast<std::size_t>(kNumJoints))
    throw Error(ErrorCode::ShapeMismatch, "frame " + std::to_string(frame.t) + " has " +
                                              std::to_string(frame.joints.size()) + " joints, expected 9");
  for (const auto& j : frame.joints)
    if (!finite(j)) throw Error(ErrorCode::NonFiniteInput, "frame " + std::to_string(frame.t));
}

JointFrame normalize_frame(const JointFrame& frame, Vec3* root_out,
                           std::array<double, kKinematicChain.size()>* lengths_out) {
  validate_full_frame(frame);
  JointFrame out;
  out.t = frame.t;
  out.joints.assign(kNumJoints, Vec3::Zero());
  for (std::size_t s = 0; s < kKinematicChain.size(); ++s) {
    const auto [p, c] = kKinematicChain[s];
    const Vec3 d = frame.joints[c] - frame.joints[p];
    const double len = d.norm();
    if (!(len > 0.0))
      throw Error(ErrorCode::ZeroLengthSegment, "segment " + std::to_string(p) + "->" + std::to_string(c) +
                                                    " in frame " + std::to_string(frame.t));
    out.joints[c] = out.joints[p] + d / len;
    if (lengths_out) (*lengths_out)[s] = len;
  }
  if (root_out) *root_out = frame.joints[0];
  return out;
}

JointFrame denormalize_frame(const JointFrame& frame, const Vec3& root,
                             const std::array<double, kKinematicChain.size()>& lengths) {
  if (frame.joints.size() != static_cast<std::size_t>(kNumJoints))
    throw Error(ErrorCode::ShapeMismatch, "denormalize expects 9-joint frames");
  JointFrame out;
  out.t = frame.t;
  out.joints.assign(kNumJoints, Vec3::Zero());
  out.joints[0] = root + frame.joints[0];
  for (std::size_t s = 0; s < kKinematicChain.size(); ++s) {
    const auto [p, c] = kKinematicChain[s];
    out.joints[c] = out.joints[p] + lengths[s] * (frame.joints[c] - frame.joints[p]);
  }
  return out;
}

std::pair<Recording, NormalizationContext> normalize(const Recording& recording) {
  Recording out;
  out.id = recording.id;
  out.fps = recording.fps;
  out.frames.reserve(recording.frames.size());
  NormalizationContext ctx;
  ctx.root_positions.resize(recording.frames.size());
  ctx.segment_lengths.resize(recording.frames.size());
  for (std::size_t i = 0; i < recording.frames.size(); ++i)
    out.frames.push_back(normalize_frame(recording.frames[i], &ctx.root_positions[i], &ctx.segment_lengths[i]));
  return {std::move(out), std::move(ctx)};
}

Recording denormalize(const Recording& normalized, const NormalizationContext& ctx) {
  if (ctx.size() != normalized.length() ||
      ctx.segment_lengths.size() != ctx.root_positions.size())
    throw Error(ErrorCode::ContextMismatch, "context has " + std::to_string(ctx.size()) +
                                                " frames, recording has " + std::to_string(normalized.length()));
  Recording out;
  out.id = normalized.id;
  out.fps = normalized.fps;
  out.frames.reserve(normalized.frames.size());
  for (std::size_t i = 0; i < normalized.frames.size(); ++i)
    out.frames.push_back(denormalize_frame(normalized.frames[i], ctx.root_positions[i], ctx.segment_lengths[i]));
  return out;
}

std::vector<int> pair_anchors(int recording_length, int delta_t) {
  if (delta_t < 1) throw Error(ErrorCode::InvalidArgument, "delta_t must be >= 1");
  if (recording_length < 2 * delta_t)
    throw Error(ErrorCode::RecordingTooShort, "recording of " + std::to_string(recording_length) +
                                                  " frames is shorter than 2*delta_t = " +
                                                  std::to_string(2 * delta_t));
  std::vector<int> anchors;
  anchors.reserve(static_cast<std::size_t>(recording_length - 2 * delta_t));
  for (int t = delta_t; t < recording_length - delta_t; ++t) anchors.push_back(t);
  return anchors;
}

FrameWindow window_at(const Recording& recording, int first, int delta_t) {
  if (first < 0 || first + delta_t > recording.length())
    throw Error(ErrorCode::RecordingTooShort, "window [" + std::to_string(first) + ", " +
                                                  std::to_string(first + delta_t) + ") out of range");
  FrameWindow w;
  w.frames.assign(recording.frames.begin() + first, recording.frames.begin() + first + delta_t);
  return w;
}

std::vector<std::pair<FrameWindow, FrameWindow>> make_pairs(const Recording& recording, int delta_t) {
  std::vector<std::pair<FrameWindow, FrameWindow>> pairs;
  for (int t : pair_anchors(recording.length(), delta_t))
    pairs.emplace_back(window_at(recording, t - delta_t + 1, delta_t), window_at(recording, t + 1, delta_t));
  return pairs;
}

FrameWindow select_limb(const FrameWindow& window, Limb limb) {
  const auto idx = limb_indices(limb);
  FrameWindow out;
  out.frames.reserve(window.frames.size());
  for (const auto& f : window.frames) {
    if (f.joints.size() != static_cast<std::size_t>(kNumJoints))
      throw Error(ErrorCode::ShapeMismatch, "select_limb expects full 9-joint frames");
    JointFrame sub;
    sub.t = f.t;
    for (int j : idx) sub.joints.push_back(f.joints[j]);
    out.frames.push_back(std::move(sub));
  }
  return out;
}

Eigen::VectorXd vectorize(const FrameWindow& window) {
  const int n_joints = window.num_joints();
  Eigen::VectorXd v(static_cast<Eigen::Index>(window.delta_t()) * n_joints * 3);
  for (int k = 0; k < window.delta_t(); ++k) {
    const auto& f = window.frames[k];
    if (static_cast<int>(f.joints.size()) != n_joints)
      throw Error(ErrorCode::ShapeMismatch, "ragged window");
    for (int j = 0; j < n_joints; ++j) v.segment<3>(flat_index(k, j, 0, n_joints)) = f.joints[j];
  }
  return v;
}

FrameWindow devectorize(const Eigen::Ref<const Eigen::VectorXd>& v, int delta_t, int n_joints) {
  if (delta_t < 0 || n_joints < 0 || v.size() != static_cast<Eigen::Index>(delta_t) * n_joints * 3)
    throw Error(ErrorCode::LengthMismatch, "vector of length " + std::to_string(v.size()) + " cannot hold (" +
                                               std::to_string(delta_t) + ", " + std::to_string(n_joints) + ", 3)");
  FrameWindow w;
  w.frames.resize(delta_t);
  for (int k = 0; k < delta_t; ++k) {
    w.frames[k].t = k;
    w.frames[k].joints.resize(n_joints);
    for (int j = 0; j < n_joints; ++j) w.frames[k].joints[j] = v.segment<3>(flat_index(k, j, 0, n_joints));
  }
  return w;
}

std::string frame_to_json_line(const JointFrame& frame) {
  nlohmann::json j;
  j["t"] = frame.t;
  auto joints = nlohmann::json::array();
  for (const auto& p : frame.joints) joints.push_back({p.x(), p.y(), p.z()});
  j["joints"] = std::move(joints);
  return j.dump();
}

Recording read_recording_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  Recording rec;
  rec.id = path.stem().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("t") || !j.contains("joints") || !j["joints"].is_array())
      throw Error(ErrorCode::ParseError, where + ": expected {\"t\":..., \"joints\":[...]}");
    JointFrame f;
    try {
      f.t = j["t"].get<std::int64_t>();
      for (const auto& p : j["joints"]) {
        if (!p.is_array() || p.size() != 3) throw Error(ErrorCode::ParseError, where + ": joint is not [x,y,z]");
        f.joints.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (f.joints.size() != static_cast<std::size_t>(kNumJoints))
      throw Error(ErrorCode::ParseError, where + ": " + std::to_string(f.joints.size()) + " joints, expected 9");
    if (!rec.frames.empty() && f.t <= rec.frames.back().t)
      throw Error(ErrorCode::ParseError, where + ": frame index not strictly increasing");
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

void write_recording_jsonl(const Recording& recording, const std::filesystem::path& path) {
  std::string body;
  for (const auto& f : recording.frames) {
    body += frame_to_json_line(f);
    body += '\n';
  }
  write_text_file(path, body);
}

}  // namespace mf
