#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dcnn/tensor.hpp"

namespace dcnn {

/// 2-D convolution parameters. `weights` is [out_ch, in_ch, kh, kw],
/// `bias` is [out_ch]. Semantics are cross-correlation (no kernel flip).
struct ConvLayer {
  Tensor weights;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Dense layer: out = W x in + b, with `weights` [out_dim, in_dim].
struct DenseLayer {
  Tensor weights;
  Tensor bias;
};

/// Gradients of one layer: parameter gradients plus the gradient passed
/// to the layer's input. Shapes mirror their counterparts exactly.
struct LayerGrads {
  Tensor d_weights;
  Tensor d_bias;
  Tensor d_input;
};

/// Winning-position map recorded by maxpool_forward; maxpool_backward
/// routes gradients through it.
struct PoolCache {
  Shape in_shape;
  Shape out_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Unrolls one sample [C,H,W] into patch columns [C*kh*kw, outH*outW].
/// This lowering plus a matrix multiply is the production conv path; the
/// naive nested-loop version lives in reference.hpp as the oracle.
Tensor im2col(const Tensor& sample, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t padding);

/// input [N,Cin,H,W] -> [N,Cout,H',W'] with H' = (H + 2p - kh)/stride + 1.
Tensor conv_forward(const ConvLayer& layer, const Tensor& input);
LayerGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                         const Tensor& d_output);

/// 2x2 window, stride 2, odd trailing row/column dropped. Ties go to the
/// first winner in row-major order.
std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input);
Tensor maxpool_backward(const PoolCache& cache, const Tensor& d_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& d_output);

Tensor dense_forward(const DenseLayer& layer, const Tensor& input);
LayerGrads dense_backward(const DenseLayer& layer, const Tensor& input,
                          const Tensor& d_output);

/// Row-wise softmax of [N,K] logits with max subtraction; rows sum to 1
/// within 1e-6 and adding a constant to a row leaves the result unchanged
/// whenever the shifted logits are exactly representable.
Tensor softmax(const Tensor& logits);

}  // namespace dcnn
