#include "mf/target_inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

#include "mf/baseline.hpp"
#include "mf/error.hpp"
#include "mf/io_util.hpp"
#include "mf/predictor.hpp"

namespace mf {

using nlohmann::json;

void TargetSet::validate() const {
  if (targets.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two targets");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidArgument, "target sigma must be positive");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].pos.allFinite()) throw Error(ErrorCode::NonFiniteInput, "target position not finite");
    for (std::size_t j = 0; j < i; ++j)
      if (targets[i].pos == targets[j].pos)
        throw Error(ErrorCode::InvalidArgument, "targets " + targets[j].name + " and " + targets[i].name + " coincide");
  }
}

Eigen::VectorXd target_log_scores(const GaussianVector& pred, const TargetSet& targets) {
  if (pred.mean.size() != 3 || pred.var.size() != 3)
    throw Error(ErrorCode::ShapeMismatch, "target scoring needs a 3-d Gaussian");
  if (!(pred.var.array() > 0.0).all() || !pred.var.allFinite())
    throw Error(ErrorCode::DegenerateVariance, "predicted variance must be positive");
  if (!pred.mean.allFinite()) throw Error(ErrorCode::NonFiniteInput, "predicted mean not finite");
  const Eigen::Array3d s = pred.var.array() + targets.sigma * targets.sigma;
  const double log_norm = -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + s.log().sum());
  Eigen::VectorXd out(targets.size());
  for (int g = 0; g < targets.size(); ++g) {
    const Eigen::Array3d d = targets.targets[g].pos.array() - pred.mean.array();
    out[g] = log_norm - 0.5 * (d.square() / s).sum();
  }
  return out;
}

GoalPosterior normalize_log_scores(const Eigen::Ref<const Eigen::VectorXd>& log_scores) {
  const double m = log_scores.maxCoeff();
  if (!std::isfinite(m)) throw Error(ErrorCode::NonFiniteInput, "log-scores not finite");
  Eigen::VectorXd p = (log_scores.array() - m).exp().matrix();
  return p / p.sum();
}

GoalPosterior frame_posterior(const GaussianVector& pred, const TargetSet& targets) {
  return normalize_log_scores(target_log_scores(pred, targets));
}

GoalPosterior sequence_posterior(std::span<const GaussianVector> track, const TargetSet& targets) {
  if (track.empty()) throw Error(ErrorCode::InvalidArgument, "empty evidence track");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(targets.size());
  for (const auto& g : track) total += target_log_scores(g, targets);
  return normalize_log_scores(total);
}

int argmax(const GoalPosterior& posterior) {
  int best = 0;
  for (int i = 1; i < posterior.size(); ++i)
    if (posterior[i] > posterior[best]) best = i;
  return best;
}

TargetSet targets_from_json(std::string_view text, double sigma) {
  TargetSet set;
  set.sigma = sigma;
  try {
    const json j = json::parse(text);
    if (!j.is_array()) throw Error(ErrorCode::ParseError, "targets file must hold a JSON array");
    for (const auto& t : j) {
      const auto& p = t.at("pos");
      if (p.size() != 3) throw Error(ErrorCode::ParseError, "target position must have 3 entries");
      set.targets.push_back({t.at("name").get<std::string>(), Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>())});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("targets: ") + e.what());
  }
  set.validate();
  return set;
}

std::string targets_to_json(const TargetSet& targets) {
  json j = json::array();
  for (const auto& t : targets.targets) j.push_back({{"name", t.name}, {"pos", {t.pos.x(), t.pos.y(), t.pos.z()}}});
  return j.dump(1) + "\n";
}

TargetSet read_targets(const std::filesystem::path& path, double sigma) {
  return targets_from_json(read_text_file(path), sigma);
}

void write_targets(const TargetSet& targets, const std::filesystem::path& path) {
  write_text_file(path, targets_to_json(targets));
}

std::string_view method_name(EvidenceMethod m) {
  switch (m) {
    case EvidenceMethod::Cvae: return "cvae";
    case EvidenceMethod::Linear: return "linear";
    case EvidenceMethod::Current: return "current";
  }
  return "?";
}

EvidenceMethod method_from_name(std::string_view name) {
  if (name == "cvae") return EvidenceMethod::Cvae;
  if (name == "linear") return EvidenceMethod::Linear;
  if (name == "current") return EvidenceMethod::Current;
  throw Error(ErrorCode::InvalidArgument, "unknown evidence method: " + std::string(name));
}

std::vector<ReachInfo> read_reach_index(const std::filesystem::path& path) {
  std::vector<ReachInfo> out;
  try {
    const json j = json::parse(read_text_file(path));
    for (const auto& r : j) {
      ReachInfo info;
      info.file = r.at("file").get<std::string>();
      info.target = r.at("target").get<int>();
      info.onset = r.at("onset").get<int>();
      info.duration = r.at("duration").get<int>();
      if (r.contains("style")) info.style = r.at("style").get<std::string>();
      if (info.onset < 0 || info.duration < 1) throw Error(ErrorCode::ParseError, "bad reach timing in " + info.file);
      out.push_back(std::move(info));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return out;
}

void write_reach_index(std::span<const ReachInfo> reaches, const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& r : reaches) {
    json e = {{"file", r.file}, {"target", r.target}, {"onset", r.onset}, {"duration", r.duration}};
    if (!r.style.empty()) e["style"] = r.style;
    j.push_back(std::move(e));
  }
  write_text_file(path, j.dump(1) + "\n");
}

int evidence_end(const ReachInfo& reach, double fraction) {
  return reach.onset + static_cast<int>(std::lround(fraction * reach.duration));
}

std::vector<GaussianVector> evidence_track(EvidenceMethod method, const ModelSet* models, const Recording& world,
                                           int end, int delta_t) {
  if (end > world.length())
    throw Error(ErrorCode::RecordingTooShort, "evidence window ends at frame " + std::to_string(end) + " of " +
                                                  std::to_string(world.length()));
  const int need = method == EvidenceMethod::Cvae ? delta_t : kVelocityFrames + 1;
  if (end - need < 0 || end - delta_t < 0 || delta_t < 1)
    throw Error(ErrorCode::RecordingTooShort,
                "not enough frames before frame " + std::to_string(end) + " for a " + std::to_string(delta_t) + "-frame window");
  std::vector<GaussianVector> track;
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(3);
  switch (method) {
    case EvidenceMethod::Cvae: {
      if (!models) throw Error(ErrorCode::InvalidArgument, "cvae evidence needs a model set");
      if (models->delta_t != delta_t) throw Error(ErrorCode::ShapeMismatch, "model window length differs");
      const FrameWindow past = window_at(world, end - delta_t, delta_t);
      const PredictionResult pred = predict_world(*models, past);
      SegmentLengths lengths;
      Vec3 root;
      normalize_frame(past.frames.back(), &root, &lengths);
      track = world_joint_track(pred, kHandJoint, root, lengths);
      break;
    }
    case EvidenceMethod::Linear: {
      const int n = std::max(delta_t, kVelocityFrames + 1);
      const FrameWindow future = linear_forecast(window_at(world, end - n, n), delta_t);
      for (const auto& f : future.frames) track.push_back({f.joints[kHandJoint], unit});
      break;
    }
    case EvidenceMethod::Current: {
      for (int t = end - kVelocityFrames; t < end; ++t) track.push_back({world.frames[t].joints[kHandJoint], unit});
      break;
    }
  }
  return track;
}

std::vector<FractionResult> classify_trajectory(EvidenceMethod method, const ModelSet* models, const Recording& world,
                                                const ReachInfo& reach, const TargetSet& targets,
                                                std::span<const double> fractions, int delta_t) {
  targets.validate();
  std::vector<FractionResult> out;
  for (double f : fractions) {
    FractionResult r;
    r.fraction = f;
    r.end = evidence_end(reach, f);
    r.posterior = sequence_posterior(evidence_track(method, models, world, r.end, delta_t), targets);
    r.predicted = argmax(r.posterior);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ClassificationRow> classify_reaches(EvidenceMethod method, const ModelSet* models,
                                                std::span<const Recording> recordings,
                                                std::span<const ReachInfo> index, const TargetSet& targets,
                                                std::span<const double> fractions, int delta_t) {
  if (recordings.size() != index.size()) throw Error(ErrorCode::ShapeMismatch, "recordings and reach index differ in size");
  std::vector<ClassificationRow> rows;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i].target < 0 || index[i].target >= targets.size())
      throw Error(ErrorCode::InvalidArgument, "reach " + index[i].file + " names an unknown target");
    for (auto& r : classify_trajectory(method, models, recordings[i], index[i], targets, fractions, delta_t))
      rows.push_back({method, index[i].file, index[i].style, index[i].target, std::move(r)});
  }
  return rows;
}

std::vector<Recording> read_indexed_recordings(const std::filesystem::path& dir, std::span<const ReachInfo> index) {
  std::vector<Recording> out;
  out.reserve(index.size());
  for (const auto& r : index) out.push_back(read_recording_jsonl(dir / r.file));
  return out;
}

double accuracy(std::span<const ClassificationRow> rows, EvidenceMethod method, double fraction, std::string_view style,
                int target) {
  int n = 0, correct = 0;
  for (const auto& r : rows) {
    if (r.method != method || r.result.fraction != fraction) continue;
    if (!style.empty() && r.style != style) continue;
    if (target >= 0 && r.true_target != target) continue;
    ++n;
    correct += r.result.predicted == r.true_target;
  }
  return n ? static_cast<double>(correct) / n : std::numeric_limits<double>::quiet_NaN();
}

std::string classification_csv(std::span<const ClassificationRow> rows, int n_targets) {
  std::string out = "method,recording,fraction,true_target,predicted";
  for (int g = 1; g <= n_targets; ++g) out += fmt::format(",p_{}", g);
  out += '\n';
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}", method_name(r.method), r.recording, r.result.fraction, r.true_target + 1,
                       r.result.predicted + 1);
    for (Eigen::Index g = 0; g < r.result.posterior.size(); ++g) out += fmt::format(",{}", r.result.posterior[g]);
    out += '\n';
  }
  return out;
}

namespace {
std::string fraction_header(std::string_view first, std::span<const double> fractions) {
  std::string out(first);
  for (double f : fractions) out += fmt::format(",{}%", std::lround(100.0 * f));
  return out + '\n';
}
}  // namespace

std::string accuracy_table_csv(std::span<const ClassificationRow> rows, std::span<const EvidenceMethod> methods,
                               std::span<const double> fractions) {
  std::string out = fraction_header("method", fractions);
  for (EvidenceMethod m : methods) {
    out += method_name(m);
    for (double f : fractions) out += fmt::format(",{:.2f}", 100.0 * accuracy(rows, m, f));
    out += '\n';
  }
  return out;
}

std::string legibility_table_csv(std::span<const ClassificationRow> rows, int n_targets,
                                 std::span<const double> fractions) {
  std::string out = fraction_header("movement", fractions);
  for (int g = 0; g < n_targets; ++g) {
    for (const char* style : {"legible", "predictable"}) {
      out += fmt::format("{} ({})", style, g + 1);
      for (double f : fractions) out += fmt::format(",{:.2f}", 100.0 * accuracy(rows, EvidenceMethod::Cvae, f, style, g));
      out += '\n';
    }
  }
  return out;
}

}  // namespace mf
