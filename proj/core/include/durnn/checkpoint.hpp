// ===== durnn/checkpoint.hpp =====
//
// Training snapshots: a text header (format version, config hash, iteration,
// optimizer step count, RNG states, the embedded canonical config) followed
// by a tensor manifest (name, shape, byte offset, count) and one contiguous
// blob of little-endian f64 values. Loading rebuilds the network from the
// embedded config and restores every tensor bitwise; the stored config gates
// resumption through resume_hash, so a resume may extend max_iters or move
// out_dir but never change what gets computed (a different architecture in
// particular is rejected).

#pragma once

#include <string>

#include "durnn/cell.hpp"
#include "durnn/config.hpp"
#include "durnn/linalg.hpp"
#include "durnn/optim.hpp"

namespace durnn {

struct LoadedCheckpoint {
  ExperimentConfig config;
  Network net;
  AdamState adam;
  long iteration = 0;
  Rng rng_train{0};
  Rng rng_eval{0};
};

// Writes to a temporary file and renames into place, so an interrupted save
// never clobbers the previous checkpoint. Untrained selection biases are
// saved alongside the trainable tensors; the model state is complete.
void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     const Network& net, const AdamState& adam, long iteration,
                     const Rng& rng_train, const Rng& rng_eval);

// Throws std::runtime_error on unreadable files, format or shape mismatches,
// and on a header hash that does not match the embedded config.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Additionally rejects a checkpoint whose config differs from `expected`.
LoadedCheckpoint load_checkpoint(const std::string& path, const ExperimentConfig& expected);

}  // namespace durnn
