#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mf/cvae.hpp"
#include "mf/trainer.hpp"

namespace mf {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "mf-limb-cvae";
inline constexpr const char* kManifestFormat = "mf-model-set";

struct Provenance {
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  int epochs = 0;
  double final_loss = 0.0;
  bool converged = false;
};

struct LoadedCheckpoint {
  LimbCvae model;
  Provenance provenance;
};

// One JSON document per limb: format tag, version, limb, delta_t, var_floor,
// normalization convention, the nine layers (row-major weights + biases) and
// provenance. Doubles are written in shortest round-trip form, so a load of
// a save is bitwise identical.
std::string checkpoint_to_json(const LimbCvae& model, const Provenance& provenance);
LoadedCheckpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const LimbCvae& model, const Provenance& provenance, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Directory layout: manifest.json plus <limb>.json for the four limbs.
void save_model_set(const ModelSet& models, const std::array<Provenance, 4>& provenance,
                    const std::filesystem::path& dir);
ModelSet load_model_set(const std::filesystem::path& dir);

}  // namespace mf
