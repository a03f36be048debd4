#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dcnn/layers.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 0;

  bool operator==(const ConvSpec&) const = default;
};

/// Full architecture description. The default reproduces the binary
/// classification network this project implements: three conv layers
/// (50/120/120 maps, kernels 11/5/3) with 2x2 pools after the first and
/// second conv, then FC-10 and FC-2 feeding a softmax.
struct NetworkConfig {
  std::size_t input_h = 120;
  std::size_t input_w = 120;
  std::vector<ConvSpec> convs = {{50, 11}, {120, 5}, {120, 3}};
  std::set<std::size_t> pool_after = {0, 1};  // 0-based conv indices
  std::vector<std::size_t> fc_dims = {10, 2};
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool operator==(const NetworkConfig&) const = default;
};

struct StageShape {
  std::string name;               // "input", "conv0", "pool0", "flatten", "fc0", ...
  std::vector<std::size_t> dims;  // per-sample dims, e.g. {50, 110, 110}
};

/// Symbolically propagates per-sample shapes through the whole stack.
/// Throws ConfigError naming the offending layer if any derived extent is
/// non-positive or the final width is not 2.
std::vector<StageShape> shape_trace(const NetworkConfig& config);

/// Activations retained by forward for the matching backward call.
struct ForwardTrace {
  const void* owner = nullptr;  // network identity; backward rejects others
  std::vector<Tensor> conv_inputs;
  std::vector<Tensor> conv_preacts;  // pre-ReLU conv outputs
  std::map<std::size_t, PoolCache> pool_caches;
  Shape flatten_shape;
  std::vector<Tensor> dense_inputs;
  std::vector<Tensor> dense_preacts;  // pre-ReLU, hidden FC layers only
  Tensor logits;
  Tensor probs;
};

/// The assembled network: conv/dense parameters plus one momentum velocity
/// buffer per parameter tensor. Forward on a const network is thread-safe;
/// backward and optimizer steps require exclusive ownership.
class Network {
 public:
  /// He-initialized weights (Gaussian, stddev sqrt(2/fan_in)), zero biases
  /// and velocities; deterministic for a given generator state.
  static Network build(const NetworkConfig& config, Rng& rng);

  const NetworkConfig& config() const { return config_; }

  /// batch is [N, 1, input_h, input_w]; trace.probs rows are softmax
  /// outputs over {cancer-free, cancer}.
  ForwardTrace forward(const Tensor& batch) const;

  /// d_logits is the loss gradient at the pre-softmax logits. Returns one
  /// gradient tensor per parameter, in parameters() order.
  std::vector<Tensor> backward(const ForwardTrace& trace,
                               const Tensor& d_logits) const;

  std::vector<std::string> parameter_names() const;
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> velocities();

  /// DCN1 checkpoint: magic, version, config block, then named parameter
  /// tensors in TNSR format. Velocities are not checkpointed; a loaded
  /// network starts with zero velocity.
  void save(const std::string& path) const;
  static Network load(const std::string& path);

 private:
  Network() = default;

  NetworkConfig config_;
  std::vector<ConvLayer> conv_layers_;
  std::vector<DenseLayer> dense_layers_;
  std::vector<Tensor> velocities_;
};

}  // namespace dcnn
