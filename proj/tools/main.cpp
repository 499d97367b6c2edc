// mf: synthetic corpus generation, training and evaluation of the limb
// motion models.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mf/baseline.hpp"
#include "mf/checkpoint.hpp"
#include "mf/error.hpp"
#include "mf/io_util.hpp"
#include "mf/latent_analysis.hpp"
#include "mf/predictor.hpp"
#include "mf/rng.hpp"
#include "mf/synth_data.hpp"
#include "mf/target_inference.hpp"
#include "mf/trainer.hpp"

namespace fs = std::filesystem;
using namespace mf;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;

int thread_budget(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("MF_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) n = std::min(n, cap);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, std::string("MF_THREADS is not a number: ") + env);
    }
  }
  return n;
}

// Output directories are created fresh; an existing non-empty one needs --force.
void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw Error(ErrorCode::InvalidArgument, dir.string() + " is not empty (use --force to overwrite)");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void prepare_out_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force)
    throw Error(ErrorCode::InvalidArgument, file.string() + " exists (use --force to overwrite)");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, fmt::format("{} directory not found: {}", what, dir.string()));
}

std::vector<Recording> load_split(const fs::path& data, const char* split) {
  require_dir(data / split, split);
  auto recs = read_recordings_dir(data / split);
  if (recs.empty()) throw Error(ErrorCode::IoError, "no .jsonl recordings in " + (data / split).string());
  return recs;
}

// ---- gen-data --------------------------------------------------------------

struct GenArgs {
  fs::path out;
  std::uint64_t seed = 0;
  std::string scale = "desk";
  bool force = false;
};

int run_gen(const GenArgs& a) {
  const CorpusConfig cfg = a.scale == "desk" ? CorpusConfig::desk() : CorpusConfig::paper_shape();
  prepare_out_dir(a.out, a.force);
  const Corpus corpus = gen_corpus(cfg, a.seed);
  write_corpus(corpus, cfg, a.seed, a.out);
  fmt::print("corpus {} (seed {}, scale {})\n", a.out.string(), a.seed, a.scale);
  fmt::print("  train   {} x {} frames\n", corpus.train.size(), cfg.frames);
  fmt::print("  test    {} x {} frames\n", corpus.test.size(), cfg.frames);
  fmt::print("  reaches {} towards {} targets\n", corpus.reaches.size(), corpus.targets.size());
  fmt::print("  labeled {} (legible/predictable, {} targets)\n", corpus.labeled.size(), corpus.labeled_targets.size());
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path data, out, resume;
  std::uint64_t seed = 0;
  int delta_t = 50;
  int threads = 0;
  bool force = false;
  bool quiet = false;
  TrainConfig cfg;
};

std::string loss_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,epoch,loss\n";
  for (const auto& r : history) out += fmt::format("{},{},{}\n", r.step, r.epoch, r.loss);
  return out;
}

int run_train(TrainArgs a) {
  if (a.delta_t < 2) throw Error(ErrorCode::InvalidArgument, "--delta-t must be >= 2");
  const auto train = load_split(a.data, "train");
  ModelSet init;
  const bool resume = !a.resume.empty();
  if (resume) {
    init = load_model_set(a.resume);
    if (init.delta_t != a.delta_t)
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("--resume model uses delta_t {}, requested {}", init.delta_t, a.delta_t));
  }
  prepare_out_dir(a.out, a.force);
  a.cfg.seed = a.seed;

  ProgressFn progress;
  if (!a.quiet)
    progress = [](Limb l, const LossRecord& r) {
      fmt::print(stderr, "[{}] epoch {} step {} loss {:.6g}\n", limb_name(l), r.epoch, r.step, r.loss);
    };
  TrainAllResult res;
  try {
    res = train_all(train, a.delta_t, a.cfg, thread_budget(a.threads), resume ? &init : nullptr, progress);
  } catch (const TrainingDiverged& e) {
    const fs::path path = a.out / fmt::format("{}.last_good.json", limb_name(e.last_good().limb));
    save_checkpoint(e.last_good(), Provenance{a.seed, e.step(), 0, 0.0, false}, path);
    fmt::print(stderr, "error: {}\n  at step {}; parameters before the failing update saved to {}\n", e.what(), e.step(),
               path.string());
    return kExitDiverged;
  }

  std::array<Provenance, 4> prov;
  for (int k = 0; k < 4; ++k) {
    const TrainResult& r = res.per_limb[k];
    prov[k] = Provenance{a.seed + static_cast<std::uint64_t>(k), r.steps, r.epochs, r.final_loss, r.converged};
    write_text_file(a.out / fmt::format("loss_{}.csv", limb_name(kAllLimbs[k])), loss_csv(r.history));
  }
  save_model_set(res.models, prov, a.out);
  for (int k = 0; k < 4; ++k) {
    const TrainResult& r = res.per_limb[k];
    fmt::print("{:<6} epochs {:>4}  steps {:>6}  loss {:.6g}{}\n", limb_name(kAllLimbs[k]), r.epochs, r.steps,
               r.final_loss, r.converged ? "  (converged)" : "");
  }
  return 0;
}

// ---- eval-mpe --------------------------------------------------------------

struct EvalArgs {
  fs::path model, data, out;
  std::vector<std::string> baselines{"linear"};
  bool force = false;
};

std::string mpe_gnuplot(const std::vector<std::string>& methods) {
  std::string s =
      "set datafile separator ','\nset key top left\nset xlabel 'time (ms)'\nset ylabel 'MPE'\n"
      "set terminal pngcairo size 1200,800\nset output 'mpe.png'\nset multiplot layout 2,2\n";
  for (Limb l : kAllLimbs) {
    s += fmt::format("set title '{}'\nplot ", limb_name(l));
    for (std::size_t i = 0; i < methods.size(); ++i)
      s += fmt::format("{}'mpe_{}_{}.csv' skip 1 using 1:2 with lines title '{}'", i ? ", " : "", methods[i],
                       limb_name(l), methods[i]);
    s += '\n';
  }
  return s + "unset multiplot\n";
}

int run_eval(const EvalArgs& a) {
  const ModelSet models = load_model_set(a.model);
  const auto test = load_split(a.data, "test");
  for (const auto& b : a.baselines)
    if (b != "linear" && b != "constant") throw Error(ErrorCode::InvalidArgument, "unknown baseline: " + b);
  if (std::ranges::count(a.baselines, std::string("linear")) > 0 && models.delta_t <= kVelocityFrames)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("the linear baseline needs windows longer than {} frames (model: {})", kVelocityFrames,
                            models.delta_t));
  prepare_out_dir(a.out, a.force);

  std::vector<std::unique_ptr<LimbForecaster>> forecasters;
  forecasters.push_back(std::make_unique<CvaeForecaster>(models));
  for (const auto& b : a.baselines) {
    if (b == "linear") forecasters.push_back(std::make_unique<LinearForecaster>(models.delta_t));
    if (b == "constant") {
      const auto train = load_split(a.data, "train");
      forecasters.push_back(std::make_unique<ConstantForecaster>(ConstantForecaster::fit(train, models.delta_t)));
    }
  }
  std::vector<std::string> names;
  for (const auto& f : forecasters) {
    const auto curves = evaluate_mpe(*f, test, models.delta_t);
    names.push_back(f->name());
    for (Limb l : kAllLimbs) {
      const MpeCurve& c = curves[static_cast<int>(l)];
      write_text_file(a.out / fmt::format("mpe_{}_{}.csv", f->name(), limb_name(l)), mpe_csv(c));
      fmt::print("{:<8} {:<6} step1 {:.6g}  step{} {:.6g}\n", f->name(), limb_name(l), c.mpe.front(), c.mpe.size(),
                 c.mpe.back());
    }
  }
  write_text_file(a.out / "mpe.gp", mpe_gnuplot(names));
  return 0;
}

// ---- sample ----------------------------------------------------------------

struct SampleArgs {
  fs::path model, past, out;
  int n = 5;
  std::uint64_t seed = 0;
  bool zero_noise = false;
  bool force = false;
};

int run_sample(const SampleArgs& a) {
  if (a.n < 1) throw Error(ErrorCode::InvalidArgument, "--n must be >= 1");
  const ModelSet models = load_model_set(a.model);
  const Recording rec = read_recording_jsonl(a.past);
  if (rec.length() < models.delta_t)
    throw Error(ErrorCode::RecordingTooShort,
                fmt::format("{} has {} frames, the model needs {}", a.past.string(), rec.length(), models.delta_t));
  const FrameWindow past = window_at(rec, rec.length() - models.delta_t, models.delta_t);
  prepare_out_file(a.out, a.force);

  Rng rng(derive_seed(a.seed, "sample"));
  std::string out;
  for (int k = 0; k < a.n; ++k) {
    const PredictionResult p = sample_future_world(models, past, a.zero_noise ? nullptr : &rng);
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : p.world->frames) frames.push_back(nlohmann::json::parse(frame_to_json_line(f)));
    out += nlohmann::json{{"sample", k}, {"frames", std::move(frames)}}.dump() + "\n";
  }
  write_text_file(a.out, out);
  fmt::print("wrote {} sampled futures of {} frames to {}\n", a.n, models.delta_t, a.out.string());
  return 0;
}

// ---- classify --------------------------------------------------------------

struct ClassifyArgs {
  fs::path model, reaches, targets, out;
  std::vector<std::string> methods{"cvae", "linear", "current"};
  std::vector<double> fractions{kDefaultFractions.begin(), kDefaultFractions.end()};
  double sigma = kDefaultTargetSigma;
  int delta_t = 50;
  bool force = false;
};

int run_classify(const ClassifyArgs& a) {
  std::vector<EvidenceMethod> methods;
  for (const auto& m : a.methods) methods.push_back(method_from_name(m));
  const bool need_model = std::ranges::count(methods, EvidenceMethod::Cvae) > 0;
  if (need_model && a.model.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required for cvae evidence");
  for (double f : a.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fractions must lie in (0, 1]");
  std::optional<ModelSet> models;
  if (!a.model.empty()) models = load_model_set(a.model);
  const int delta_t = models ? models->delta_t : a.delta_t;
  require_dir(a.reaches, "reaches");
  const auto index = read_reach_index(a.reaches / "index.json");
  const auto recordings = read_indexed_recordings(a.reaches, index);
  const TargetSet targets = read_targets(a.targets.empty() ? a.reaches / "targets.json" : a.targets, a.sigma);
  prepare_out_dir(a.out, a.force);

  std::vector<ClassificationRow> rows;
  for (EvidenceMethod m : methods) {
    auto r = classify_reaches(m, models ? &*models : nullptr, recordings, index, targets, a.fractions, delta_t);
    rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  write_text_file(a.out / "classification.csv", classification_csv(rows, targets.size()));
  const std::string table = accuracy_table_csv(rows, methods, a.fractions);
  write_text_file(a.out / "table1.csv", table);
  fmt::print("{}", table);
  return 0;
}

// ---- latent ----------------------------------------------------------------

struct LatentArgs {
  fs::path model, data, labeled, out;
  std::uint64_t seed = 0;
  int samples = 2000;
  std::string layer = "latent";
  double sigma = kDefaultTargetSigma;
  bool force = false;
};

int run_latent(const LatentArgs& a) {
  if (a.layer != "latent" && a.layer != "hidden") throw Error(ErrorCode::InvalidArgument, "--layer is latent or hidden");
  if (a.samples < 2) throw Error(ErrorCode::InvalidArgument, "--samples must be >= 2");
  const ActivationLayer layer = a.layer == "latent" ? ActivationLayer::LatentMean : ActivationLayer::Hidden;
  const ModelSet models = load_model_set(a.model);
  const int dt = models.delta_t;
  const auto test = load_split(a.data, "test");
  const fs::path labeled_dir = a.labeled.empty() ? a.data / "labeled" : a.labeled;
  require_dir(labeled_dir, "labeled");
  const auto index = read_reach_index(labeled_dir / "index.json");
  const auto labeled = read_indexed_recordings(labeled_dir, index);
  const TargetSet targets = read_targets(labeled_dir / "targets.json", a.sigma);
  prepare_out_dir(a.out, a.force);

  std::vector<Recording> test_norm;
  for (const auto& r : test) test_norm.push_back(normalize(r).first);
  const PairDataset ds = PairDataset::build(test_norm, Limb::Right, dt);
  if (ds.size() < 2) throw Error(ErrorCode::RecordingTooShort, "test recordings yield fewer than two windows");
  std::vector<Eigen::Index> ids(static_cast<std::size_t>(ds.size()));
  std::iota(ids.begin(), ids.end(), Eigen::Index{0});
  Rng rng(derive_seed(a.seed, "latent-samples"));
  shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(a.samples)));
  Eigen::MatrixXd past, future;
  ds.gather(ids, past, future);

  const LimbCvae& arm = models[Limb::Right];
  const Eigen::MatrixXd random_act = encoder_activations(arm, past, layer);
  const PcaModel pca = pca_fit(random_act, 2);

  std::string embedding = "pc1,pc2,label\n";
  auto emit = [&](const Eigen::MatrixXd& coords, const std::string& label) {
    for (Eigen::Index i = 0; i < coords.rows(); ++i) embedding += fmt::format("{},{},{}\n", coords(i, 0), coords(i, 1), label);
  };
  emit(project(pca, random_act), "random");

  std::map<std::string, Eigen::MatrixXd> groups_2d, groups_act;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const ReachInfo& r = index[i];
    const std::string label = fmt::format("{}-{}", r.style, r.target + 1);
    const Recording norm = normalize(labeled[i]).first;
    const Eigen::MatrixXd act =
        encoder_activations(arm, windows_ending(norm, Limb::Right, dt, r.onset, r.onset + r.duration - 1), layer);
    const Eigen::MatrixXd coords = project(pca, act);
    emit(coords, label);
    auto append = [](Eigen::MatrixXd& dst, const Eigen::MatrixXd& src) {
      Eigen::MatrixXd m(dst.rows() + src.rows(), src.cols());
      if (dst.rows()) m.topRows(dst.rows()) = dst;
      m.bottomRows(src.rows()) = src;
      dst = std::move(m);
    };
    append(groups_2d[label], coords);
    append(groups_act[label], act);
  }
  write_text_file(a.out / "embedding.csv", embedding);

  std::string sep = "pair,score_2d,score_full\n";
  for (int g = 1; g <= targets.size(); ++g) {
    const std::string l = fmt::format("legible-{}", g), p = fmt::format("predictable-{}", g);
    if (!groups_2d.count(l) || !groups_2d.count(p)) continue;
    const double s2 = separation_score(groups_2d[l], groups_2d[p]);
    const double sf = separation_score(groups_act[l], groups_act[p]);
    sep += fmt::format("{} vs {},{},{}\n", l, p, s2, sf);
    fmt::print("separation {} vs {}: {:.4f} (2-d), {:.4f} (full)\n", l, p, s2, sf);
  }
  write_text_file(a.out / "separation.csv", sep);

  const std::vector<double> fractions(kDefaultFractions.begin(), kDefaultFractions.end());
  const auto rows = classify_reaches(EvidenceMethod::Cvae, &models, labeled, index, targets, fractions, dt);
  const std::string table = legibility_table_csv(rows, targets.size(), fractions);
  write_text_file(a.out / "table2.csv", table);
  fmt::print("{}", table);

  std::string gp =
      "set datafile separator ','\nset terminal pngcairo size 900,700\nset output 'embedding.png'\n"
      "set xlabel 'PC 1'\nset ylabel 'PC 2'\n"
      "plot 'embedding.csv' skip 1 using (strcol(3) eq 'random' ? $1 : 1/0):2 with points pt 7 ps 0.3 lc rgb '#bbbbbb' title 'random'";
  for (const auto& [label, m] : groups_2d)
    gp += fmt::format(", \\\n     'embedding.csv' skip 1 using (strcol(3) eq '{0}' ? $1 : 1/0):2 with points pt 7 ps 0.6 title '{0}'",
                      label);
  write_text_file(a.out / "embedding.gp", gp + "\n");
  return 0;
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return kExitUsage;
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
    case ErrorCode::VersionMismatch: return kExitIo;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteGradient: return kExitDiverged;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limb-wise motion forecasting: data generation, training and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic corpus");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Seed");
  g->add_option("--scale", gen.scale, "Corpus size")->check(CLI::IsMember({"desk", "paper-shape"}));
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the four limb models");
  t->add_option("--data", tr.data, "Corpus directory")->required();
  t->add_option("--out", tr.out, "Model directory")->required();
  t->add_option("--seed", tr.seed, "Seed");
  t->add_option("--delta-t", tr.delta_t, "Window length in frames");
  t->add_option("--lr", tr.cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  t->add_option("--batch-size", tr.cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  t->add_option("--max-epochs", tr.cfg.max_epochs, "Epoch budget")->check(CLI::PositiveNumber);
  t->add_option("--eval-every", tr.cfg.eval_every, "Batches between loss evaluations (0: each epoch)");
  t->add_option("--patience", tr.cfg.patience, "Evaluations below --rel-tol before stopping")->check(CLI::PositiveNumber);
  t->add_option("--rel-tol", tr.cfg.rel_tol, "Relative improvement threshold");
  t->add_option("--kl-warmup", tr.cfg.kl_warmup, "Fraction of the budget with a KL ramp")->check(CLI::Range(0.0, 1.0));
  t->add_option("--threads", tr.threads, "Limbs trained concurrently (capped by MF_THREADS)");
  t->add_option("--resume", tr.resume, "Continue from a model directory");
  t->add_flag("--quiet", tr.quiet, "No progress output");
  t->add_flag("--force", tr.force, "Overwrite a non-empty output directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval-mpe", "Per-limb motion prediction error on the test split");
  e->add_option("--model", ev.model, "Model directory")->required();
  e->add_option("--data", ev.data, "Corpus directory")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--baseline", ev.baselines, "linear and/or constant")->delimiter(',');
  e->add_flag("--force", ev.force, "Overwrite a non-empty output directory");

  SampleArgs sa;
  auto* s = app.add_subcommand("sample", "Draw future windows after the end of a recording");
  s->add_option("--model", sa.model, "Model directory")->required();
  s->add_option("--past", sa.past, "JSONL recording; its last delta_t frames are the past")->required();
  s->add_option("--n", sa.n, "Number of samples");
  s->add_option("--seed", sa.seed, "Seed");
  s->add_option("--out", sa.out, "Output JSONL file")->required();
  s->add_flag("--zero-noise", sa.zero_noise, "Use zero noise (equals the mean prediction)");
  s->add_flag("--force", sa.force, "Overwrite the output file");

  ClassifyArgs cl;
  auto* c = app.add_subcommand("classify", "End-point classification of reaches");
  c->add_option("--model", cl.model, "Model directory (needed for cvae evidence)");
  c->add_option("--reaches", cl.reaches, "Directory with index.json and reach recordings")->required();
  c->add_option("--targets", cl.targets, "Targets JSON (default: <reaches>/targets.json)");
  c->add_option("--method", cl.methods, "cvae, linear and/or current")->delimiter(',');
  c->add_option("--fractions", cl.fractions, "Trajectory fractions")->delimiter(',');
  c->add_option("--sigma", cl.sigma, "Target spread, meters")->check(CLI::PositiveNumber);
  c->add_option("--delta-t", cl.delta_t, "Window length when no model is given");
  c->add_option("--out", cl.out, "Output directory")->required();
  c->add_flag("--force", cl.force, "Overwrite a non-empty output directory");

  LatentArgs la;
  auto* l = app.add_subcommand("latent", "PCA of right-arm encoder activations");
  l->add_option("--model", la.model, "Model directory")->required();
  l->add_option("--data", la.data, "Corpus directory")->required();
  l->add_option("--labeled", la.labeled, "Labeled reaches (default: <data>/labeled)");
  l->add_option("--out", la.out, "Output directory")->required();
  l->add_option("--seed", la.seed, "Seed");
  l->add_option("--samples", la.samples, "Random test windows for the PCA fit");
  l->add_option("--layer", la.layer, "latent (encoder means) or hidden (200 tanh units)");
  l->add_option("--sigma", la.sigma, "Target spread, meters")->check(CLI::PositiveNumber);
  l->add_flag("--force", la.force, "Overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*s) return run_sample(sa);
    if (*c) return run_classify(cl);
    if (*l) return run_latent(la);
  } catch (const Error& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return exit_code_for(err.code());
  } catch (const fs::filesystem_error& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return kExitIo;
  } catch (const std::exception& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return 1;
  }
  return kExitUsage;
}
