#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/network.hpp"
#include "dcnn/training.hpp"

namespace dcnn {

/// Everything a command needs, assembled from defaults, then the config
/// file, then flags (later sources win).
struct RunConfig {
  NetworkConfig network;
  TrainingConfig training;
  SplitSpec split;
  std::uint64_t seed = 0;
  double threshold = 0.5;
};

/// Parses the `key = value` / `[section]` config format into `cfg`.
/// Unknown sections or keys are ConfigErrors naming the offender.
void apply_config_file(const std::string& path, RunConfig& cfg);

/// Entry point behind the `dcnn` binary. Exit codes: 0 success,
/// 2 usage/config, 3 data/IO, 4 numeric failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace dcnn
