#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spikemix/network.hpp"
#include "spikemix/runconfig.hpp"

namespace spikemix {

// Optimizer snapshot stored alongside the weights so runs can resume.
struct OptimizerSnapshot {
  int epoch = 0;
  int64_t step = 0;
  int64_t total_steps = 0;
  std::vector<std::pair<std::string, Tensor>> velocity;
};

// In-memory image of a checkpoint file. Values are 32-bit in the file; they
// are widened to doubles on load, so loading is lossless with respect to the
// file and a save of a just-loaded checkpoint reproduces it byte for byte.
struct Checkpoint {
  RunConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;  // parameters then buffers
  std::optional<OptimizerSnapshot> optimizer;
};

void save_checkpoint(Network& net, const RunConfig& cfg, const std::string& path,
                     const OptimizerSnapshot* optimizer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

// Builds a network from the checkpoint's config and fills every parameter and
// running statistic by name. All validation happens before any state is
// exposed; a corrupted blob never yields a partially loaded network.
std::unique_ptr<Network> restore_network(const Checkpoint& ckpt);

// Same, with the simulation length overridden (time-inheritance reload).
std::unique_ptr<Network> restore_network_with_t(const Checkpoint& ckpt, int t_steps);

}  // namespace spikemix
