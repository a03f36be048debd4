#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcnn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  /// Offset applied to the seed before the network check found inputs
  /// clear of ReLU/pool kink neighborhoods (finite differences are only
  /// meaningful away from those measure-zero points).
  std::uint64_t data_attempts = 0;

  bool passed() const {
    for (const auto& e : entries)
      if (!(e.max_rel_error < tolerance)) return false;
    return true;
  }
};

/// Central finite-difference check (h = 1e-3, float64 reference forward)
/// of every layer's analytical gradients plus the end-to-end tiny network:
/// conv, maxpool, relu, dense, the fused softmax/cross-entropy, and the
/// whole-network parameter gradients. `inject_error` perturbs one analytic
/// weight gradient so harness failure detection can itself be tested.
GradCheckReport run_gradcheck(std::uint64_t seed, bool inject_error = false);

}  // namespace dcnn
