#pragma once

#include <string>

#include "rxpp/model.hpp"

namespace rxpp {

// Versioned binary checkpoint: magic "RXPP", format version, length-prefixed
// config-echo JSON, then named tensors as (name length, name, rank, dims,
// float32 little-endian row-major). Includes the EMA buffer and init mask.
void save_checkpoint(const RelationModel& model, const std::string& config_echo_json,
                     const std::string& path);

struct LoadedCheckpoint {
    std::string config_echo_json;
    // tensors are applied onto the model passed to load_checkpoint_into
};

// Reads the config echo only (to rebuild the model before loading weights).
std::string read_checkpoint_config(const std::string& path);

// Applies the stored tensors onto an already-constructed model; throws when a
// stored tensor is missing from or mismatches the model.
void load_checkpoint_into(RelationModel& model, const std::string& path);

}  // namespace rxpp
