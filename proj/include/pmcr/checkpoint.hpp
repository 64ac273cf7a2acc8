#pragma once

#include <string>

#include "pmcr/model.hpp"
#include "pmcr/optim.hpp"

namespace pmcr {

inline constexpr const char* kCheckpointMagic = "PMCR1";

// Text header (magic, config, epoch, per-tensor name/shape/offset in
// named_parameters order, then optimizer moments) followed by a contiguous
// little-endian f32 payload. Saving the same state twice produces identical
// bytes.
void save_checkpoint(PmcrNet& model, const AdamW* optimizer, int epoch,
                     const std::string& path);

// Loads into an existing model (and optimizer state if given); every header
// tensor must match the model's name/shape sequence or the first offender is
// reported. Nothing is mutated until the whole file has validated.
// Returns the stored epoch.
int load_checkpoint_into(const std::string& path, PmcrNet& model, AdamW* optimizer);

struct LoadedCheckpoint {
  ModelConfig config;
  int epoch = 0;
  bool has_optimizer = false;
  PmcrNet model;
  AdamW optimizer;
};

// Constructs the model (and optimizer state) described by the header.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace pmcr
