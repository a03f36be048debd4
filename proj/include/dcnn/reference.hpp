#pragma once

#include <cstddef>
#include <vector>

namespace dcnn::reference {

/// Naive float64 layer evaluations, independent of the im2col/GEMM
/// production path. They back the convolution oracle and the central
/// finite-difference gradient checks, which need a 64-bit forward pass.

struct Image {
  std::size_t channels = 0, h = 0, w = 0;
  std::vector<double> data;  // row-major [c][y][x]

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * h + y) * w + x];
  }
};

/// Six-nested-loop cross-correlation with per-channel bias.
/// weights laid out [out_ch][in_ch][ky][kx], bias [out_ch].
Image conv2d(const Image& in, const std::vector<double>& weights,
             const std::vector<double>& bias, std::size_t out_ch,
             std::size_t kh, std::size_t kw, std::size_t stride,
             std::size_t padding);

/// 2x2/stride-2 max pool, trailing odd row/column dropped.
Image maxpool2x2(const Image& in);

Image relu(const Image& in);

/// out[o] = sum_i w[o][i] * in[i] + b[o].
std::vector<double> dense(const std::vector<double>& in,
                          const std::vector<double>& weights,
                          const std::vector<double>& bias,
                          std::size_t out_dim);

std::vector<double> relu_vec(const std::vector<double>& in);

std::vector<double> softmax(const std::vector<double>& logits);

/// Mean negative log-likelihood of the true class, probs clipped to
/// >= 1e-12 inside the log.
double cross_entropy(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels);

}  // namespace dcnn::reference
