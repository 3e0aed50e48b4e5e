#pragma once

#include <string>

#include "irmae/config.hpp"
#include "irmae/models.hpp"

namespace irmae {

// Fresh model for a run config: architecture from dataset/encoder/latent_dim,
// stack from l/stack_mode/init_variance_scale, parameters initialized from
// Rng(seed)'s "init" stream.
Model build_from_config(const RunConfig& config);

struct LoadedCheckpoint {
  Model model;
  RunConfig config;
};

// Binary layout: "IRMA", u32 version, length-prefixed config text, then a
// named tensor table (name, dtype code, dims, raw little-endian values).
void save_checkpoint(const Model& model, const RunConfig& config, const std::string& path);

// Rebuilds the model from the embedded config, then overwrites every
// parameter from the tensor table; magic/version/shape/length problems all
// surface as distinct FormatError kinds.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace irmae
