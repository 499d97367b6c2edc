#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mf/nn.hpp"
#include "mf/skeleton.hpp"
#include "mf/trainer.hpp"

namespace mf {

inline constexpr double kDefaultTargetSigma = 0.05;  // meters
inline constexpr int kHandJoint = 7;                 // right hand
inline constexpr std::array<double, 5> kDefaultFractions{0.2, 0.43, 0.6, 0.8, 1.0};

struct Target {
  std::string name;
  Vec3 pos = Vec3::Zero();
};

// Candidate goals with an isotropic positional spread and a uniform prior.
struct TargetSet {
  std::vector<Target> targets;
  double sigma = kDefaultTargetSigma;

  int size() const { return static_cast<int>(targets.size()); }
  // Throws InvalidArgument unless there are >= 2 distinct targets and sigma > 0.
  void validate() const;
};

using GoalPosterior = Eigen::VectorXd;

// Unnormalized per-target log-scores log N(mu_g | mu_d, Sigma_d + sigma^2 I).
Eigen::VectorXd target_log_scores(const GaussianVector& pred, const TargetSet& targets);
// exp-normalizes log-scores (max-shifted).
GoalPosterior normalize_log_scores(const Eigen::Ref<const Eigen::VectorXd>& log_scores);

GoalPosterior frame_posterior(const GaussianVector& pred, const TargetSet& targets);
// Sums per-step log-scores before normalizing.
GoalPosterior sequence_posterior(std::span<const GaussianVector> track, const TargetSet& targets);
// Lowest index wins ties.
int argmax(const GoalPosterior& posterior);

TargetSet read_targets(const std::filesystem::path& path, double sigma = kDefaultTargetSigma);
void write_targets(const TargetSet& targets, const std::filesystem::path& path);
TargetSet targets_from_json(std::string_view text, double sigma = kDefaultTargetSigma);
std::string targets_to_json(const TargetSet& targets);

enum class EvidenceMethod { Cvae, Linear, Current };
std::string_view method_name(EvidenceMethod m);
EvidenceMethod method_from_name(std::string_view name);

// One reach recording and the frames in which the hand moves.
struct ReachInfo {
  std::string file;  // relative to the index directory
  int target = 0;
  int onset = 0;
  int duration = 0;
  std::string style;  // "predictable" / "legible", empty for plain reaches
};

std::vector<ReachInfo> read_reach_index(const std::filesystem::path& path);
void write_reach_index(std::span<const ReachInfo> reaches, const std::filesystem::path& path);

// Last frame (exclusive) of the evidence window at a trajectory fraction.
int evidence_end(const ReachInfo& reach, double fraction);

// World-frame hand track used as evidence, from the frames before `end`:
//   Cvae    predicted hand Gaussians over the delta_t frames after end - 1
//   Linear  constant-velocity extrapolation (last 20 frames) over delta_t
//           frames, unit variance
//   Current the last 20 observed hand positions, unit variance
std::vector<GaussianVector> evidence_track(EvidenceMethod method, const ModelSet* models, const Recording& world,
                                           int end, int delta_t);

struct FractionResult {
  double fraction = 0.0;
  int end = 0;
  GoalPosterior posterior;
  int predicted = 0;
};

std::vector<FractionResult> classify_trajectory(EvidenceMethod method, const ModelSet* models, const Recording& world,
                                                const ReachInfo& reach, const TargetSet& targets,
                                                std::span<const double> fractions, int delta_t);

struct ClassificationRow {
  EvidenceMethod method = EvidenceMethod::Cvae;
  std::string recording;
  std::string style;
  int true_target = 0;
  FractionResult result;
};

// Classifies every reach of an index; `recordings` matches `index` entry by
// entry (world frame).
std::vector<ClassificationRow> classify_reaches(EvidenceMethod method, const ModelSet* models,
                                                std::span<const Recording> recordings,
                                                std::span<const ReachInfo> index, const TargetSet& targets,
                                                std::span<const double> fractions, int delta_t);

// Loads the recordings listed in <dir>/index.json, in index order.
std::vector<Recording> read_indexed_recordings(const std::filesystem::path& dir, std::span<const ReachInfo> index);

// Fraction of rows at `fraction` (matching `method`, and `style` / `target`
// unless empty / negative) whose prediction is correct; NaN when none match.
double accuracy(std::span<const ClassificationRow> rows, EvidenceMethod method, double fraction,
                std::string_view style = {}, int target = -1);

// method,recording,fraction,true_target,predicted,p_1..p_N (targets 1-based).
std::string classification_csv(std::span<const ClassificationRow> rows, int n_targets);
// One row per method, one accuracy column (percent) per fraction.
std::string accuracy_table_csv(std::span<const ClassificationRow> rows, std::span<const EvidenceMethod> methods,
                               std::span<const double> fractions);
// Rows "legible (g)" / "predictable (g)" for every target g, cvae evidence.
std::string legibility_table_csv(std::span<const ClassificationRow> rows, int n_targets,
                                 std::span<const double> fractions);

}  // namespace mf
