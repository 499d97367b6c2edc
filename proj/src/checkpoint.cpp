#include "mf/checkpoint.hpp"

#include <cmath>

#include <json.hpp>

#include "mf/error.hpp"
#include "mf/io_util.hpp"

namespace mf {
namespace {

using nlohmann::json;

const char* normalization_tag(Limb limb) {
  return limb == Limb::Root ? "root-displacement-from-last-past-frame" : "root-centred-unit-segments";
}

json layer_to_json(const std::string& name, const DenseLayer& l) {
  json j;
  j["name"] = name;
  j["rows"] = l.weights.rows();
  j["cols"] = l.weights.cols();
  j["activation"] = l.activation == Activation::Tanh ? "tanh" : "identity";
  auto w = json::array();
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
  j["weights"] = std::move(w);
  j["biases"] = std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size());
  return j;
}

void layer_from_json(const json& j, const std::string& name, DenseLayer& l) {
  if (j.at("name").get<std::string>() != name)
    throw Error(ErrorCode::ShapeMismatch, "expected layer '" + name + "', found '" + j.at("name").get<std::string>() + "'");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows != l.weights.rows() || cols != l.weights.cols())
    throw Error(ErrorCode::ShapeMismatch, "layer '" + name + "' is " + std::to_string(rows) + "x" +
                                              std::to_string(cols) + ", topology expects " +
                                              std::to_string(l.weights.rows()) + "x" +
                                              std::to_string(l.weights.cols()));
  const auto& w = j.at("weights");
  const auto& b = j.at("biases");
  if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
    throw Error(ErrorCode::ShapeMismatch, "layer '" + name + "' has the wrong number of values");
  const std::string act = j.at("activation").get<std::string>();
  const Activation want = l.activation;
  if ((act == "tanh") != (want == Activation::Tanh))
    throw Error(ErrorCode::ShapeMismatch, "layer '" + name + "' has activation " + act);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) l.weights(r, c) = w[k++].get<double>();
  for (Eigen::Index r = 0; r < rows; ++r) l.biases[r] = b[static_cast<std::size_t>(r)].get<double>();
}

void check_version(const json& j, const char* format) {
  if (!j.contains("format") || j["format"] != format)
    throw Error(ErrorCode::VersionMismatch, std::string("not a ") + format + " document");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "version " + std::to_string(j.at("version").get<int>()) +
                                                " is not supported (expected " +
                                                std::to_string(kCheckpointVersion) + ")");
}

}  // namespace

std::string checkpoint_to_json(const LimbCvae& model, const Provenance& provenance) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["limb"] = std::string(limb_name(model.limb));
  j["delta_t"] = model.delta_t;
  j["var_floor"] = model.net.encoder.head.var_floor;
  j["normalization"] = normalization_tag(model.limb);
  const auto topo = model.net.topology();
  j["topology"] = {{"io_dim", topo.io_dim},
                   {"encoder_width", topo.encoder_width},
                   {"latent_dim", topo.latent_dim},
                   {"transition_width", topo.transition_width},
                   {"decoder_width", topo.decoder_width}};
  auto layers = json::array();
  for_each_layer(model.net, [&](const std::string& name, const DenseLayer& l) { layers.push_back(layer_to_json(name, l)); });
  j["layers"] = std::move(layers);
  if (!model.scaling.identity()) {
    const auto& sc = model.scaling;
    j["scaling"] = {{"shift", std::vector<double>(sc.shift.data(), sc.shift.data() + sc.shift.size())},
                    {"scale", std::vector<double>(sc.scale.data(), sc.scale.data() + sc.scale.size())}};
  }
  j["provenance"] = {{"seed", provenance.seed},
                     {"steps", provenance.steps},
                     {"epochs", provenance.epochs},
                     {"final_loss", provenance.final_loss},
                     {"converged", provenance.converged}};
  return j.dump();
}

LoadedCheckpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
  check_version(j, kCheckpointFormat);
  try {
    LoadedCheckpoint out;
    const Limb limb = limb_from_name(j.at("limb").get<std::string>());
    const int delta_t = j.at("delta_t").get<int>();
    if (delta_t < 1) throw Error(ErrorCode::ShapeMismatch, "delta_t must be >= 1");
    const auto& t = j.at("topology");
    const CvaeTopology topo{t.at("io_dim").get<int>(), t.at("encoder_width").get<int>(), t.at("latent_dim").get<int>(),
                            t.at("transition_width").get<int>(), t.at("decoder_width").get<int>()};
    if (topo != CvaeTopology{limb_io_dim(limb, delta_t)})
      throw Error(ErrorCode::ShapeMismatch, "topology does not match limb " + std::string(limb_name(limb)) +
                                                " at delta_t " + std::to_string(delta_t));
    const double var_floor = j.at("var_floor").get<double>();
    // Build a zero model of the declared topology, then fill it.
    LimbCvae model{limb, delta_t, zeros_like(make_cvae(topo, 0, var_floor)), {}};
    for (GaussianMlp* m : {&model.net.encoder, &model.net.transitioner, &model.net.decoder}) {
      m->hidden.activation = Activation::Tanh;
      m->head.var_floor = var_floor;
    }
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != 9) throw Error(ErrorCode::ShapeMismatch, "expected 9 layers");
    std::size_t k = 0;
    for_each_layer(model.net, [&](const std::string& name, DenseLayer& l) { layer_from_json(layers[k++], name, l); });
    if (j.contains("scaling")) {
      const auto shift = j["scaling"].at("shift").get<std::vector<double>>();
      const auto scale = j["scaling"].at("scale").get<std::vector<double>>();
      if (std::ssize(shift) != topo.io_dim || std::ssize(scale) != topo.io_dim)
        throw Error(ErrorCode::ShapeMismatch, "scaling length does not match io_dim");
      for (double v : scale)
        if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::ShapeMismatch, "scaling must be positive and finite");
      model.scaling.shift = Eigen::Map<const Eigen::VectorXd>(shift.data(), topo.io_dim);
      model.scaling.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), topo.io_dim);
    }
    const auto& p = j.at("provenance");
    out.provenance = Provenance{p.at("seed").get<std::uint64_t>(), p.at("steps").get<std::int64_t>(),
                                p.at("epochs").get<int>(), p.at("final_loss").get<double>(),
                                p.at("converged").get<bool>()};
    out.model = std::move(model);
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const LimbCvae& model, const Provenance& provenance, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(model, provenance) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

void save_model_set(const ModelSet& models, const std::array<Provenance, 4>& provenance,
                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["delta_t"] = models.delta_t;
  json files;
  for (Limb l : kAllLimbs) {
    const std::string file = std::string(limb_name(l)) + ".json";
    save_checkpoint(models[l], provenance[static_cast<int>(l)], dir / file);
    files[std::string(limb_name(l))] = file;
  }
  manifest["limbs"] = std::move(files);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelSet load_model_set(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  check_version(manifest, kManifestFormat);
  ModelSet set;
  set.delta_t = manifest.at("delta_t").get<int>();
  for (Limb l : kAllLimbs) {
    const std::string file = manifest.at("limbs").at(std::string(limb_name(l))).get<std::string>();
    LoadedCheckpoint ck = load_checkpoint(dir / file);
    if (ck.model.limb != l || ck.model.delta_t != set.delta_t)
      throw Error(ErrorCode::ShapeMismatch, file + " does not hold the " + std::string(limb_name(l)) +
                                                " model at delta_t " + std::to_string(set.delta_t));
    set[l] = std::move(ck.model);
  }
  return set;
}

}  // namespace mf
