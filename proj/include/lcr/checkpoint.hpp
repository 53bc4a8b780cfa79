#pragma once

#include <string>

#include "lcr/model.hpp"
#include "lcr/params.hpp"

namespace lcr {

enum class Stage { pretrained, rl };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);

struct CheckpointMeta {
    model::ModelConfig cfg;
    Stage stage = Stage::pretrained;
};

// Binary checkpoint: magic, format version, model dims, stage tag, then the
// named tensors as little-endian 32-bit floats with length-prefixed names.
// save -> load -> save reproduces the file byte for byte.
void save_checkpoint(const std::string& path, const model::ModelConfig& cfg, Stage stage,
                     const nn::ParamStore& ps);

// Fills ps (which must be empty) with the stored tensors and returns the
// stored dims and stage. Rejects unknown versions and malformed files.
CheckpointMeta load_checkpoint(const std::string& path, nn::ParamStore& ps);

}  // namespace lcr
