// Versioned checkpoints: manifest.json plus raw little-endian arrays for the
// parameter values and optimizer moments. The full config text is embedded so
// a checkpoint alone can rebuild its model.
#pragma once

#include "gtmsm/model.hpp"
#include "gtmsm/optim.hpp"

#include <cstdint>
#include <string>

namespace gtmsm {

void save_checkpoint(const std::string& dir, const Model& m, const AdamState& adam,
                     int64_t update);

// Restores parameters and optimizer state into a model built from the same
// config; rejects config-hash mismatches and unknown versions.
int64_t load_checkpoint_into(const std::string& dir, Model& m, AdamState& adam);

// Reads the embedded config of a checkpoint.
RunConfig checkpoint_config(const std::string& dir);

} // namespace gtmsm
