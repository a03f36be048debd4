#include "dcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/parallel.hpp"

namespace dcnn {

namespace {

std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel)
    throw ShapeError("conv: spatial extent " + std::to_string(in) +
                     " smaller than kernel " + std::to_string(kernel));
  return (padded - kernel) / stride + 1;
}

// out[i,j] = sum_k a[i,k] * b[k,j]; float64 accumulator row, fixed k order.
void gemm_nn(const float* a, const float* b, float* out, std::size_t m,
             std::size_t k, std::size_t n) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = static_cast<double>(arow[kk]);
      const float* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j)
        acc[j] += av * static_cast<double>(brow[j]);
    }
    float* orow = out + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j]);
  }
}

// acc[i,j] += sum_p a[i,p] * b[j,p]  (i.e. A x B^T), accumulating across
// calls so per-sample contributions sum in a fixed order.
void gemm_nt_acc(const float* a, const float* b, double* acc, std::size_t m,
                 std::size_t p, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * p;
    double* accrow = acc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * p;
      double s = 0.0;
      for (std::size_t q = 0; q < p; ++q)
        s += static_cast<double>(arow[q]) * static_cast<double>(brow[q]);
      accrow[j] += s;
    }
  }
}

// out[k,j] = sum_c a[c,k] * b[c,j]  (i.e. A^T x B); c-outer axpy keeps the
// inner loop contiguous while the c order stays fixed per element.
void gemm_tn(const float* a, const float* b, double* acc, std::size_t c,
             std::size_t k, std::size_t n) {
  std::fill(acc, acc + k * n, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const float* arow = a + ci * k;
    const float* brow = b + ci * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = static_cast<double>(arow[kk]);
      double* accrow = acc + kk * n;
      for (std::size_t j = 0; j < n; ++j)
        accrow[j] += av * static_cast<double>(brow[j]);
    }
  }
}

void im2col_into(const float* sample, std::size_t channels, std::size_t h,
                 std::size_t w, std::size_t kh, std::size_t kw,
                 std::size_t stride, std::size_t padding, std::size_t out_h,
                 std::size_t out_w, float* cols) {
  const std::size_t patch = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        float* row = cols + ((c * kh + ky) * kw + kx) * patch;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(padding);
            float v = 0.0f;
            if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                ix < static_cast<std::ptrdiff_t>(w))
              v = sample[(c * h + static_cast<std::size_t>(iy)) * w +
                         static_cast<std::size_t>(ix)];
            row[oy * out_w + ox] = v;
          }
        }
      }
    }
  }
}

// Scatter-add of patch-column gradients back onto the input image.
void col2im_add(const double* d_cols, std::size_t channels, std::size_t h,
                std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t padding, std::size_t out_h,
                std::size_t out_w, double* d_sample) {
  const std::size_t patch = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = d_cols + ((c * kh + ky) * kw + kx) * patch;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) -
              static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            d_sample[(c * h + static_cast<std::size_t>(iy)) * w +
                     static_cast<std::size_t>(ix)] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

struct ConvDims {
  std::size_t batch, in_ch, h, w;
  std::size_t out_ch, kh, kw;
  std::size_t out_h, out_w;
  std::size_t cols_k, patch;
};

ConvDims conv_dims(const ConvLayer& layer, const Tensor& input) {
  if (input.shape().rank() != 4)
    throw ShapeError("conv: input must be [N,C,H,W], got " +
                     input.shape().str());
  if (layer.weights.shape().rank() != 4)
    throw ShapeError("conv: weights must be [out,in,kh,kw], got " +
                     layer.weights.shape().str());
  if (layer.stride == 0) throw ArgumentError("conv: stride must be >= 1");
  ConvDims d;
  d.batch = input.shape()[0];
  d.in_ch = input.shape()[1];
  d.h = input.shape()[2];
  d.w = input.shape()[3];
  d.out_ch = layer.weights.shape()[0];
  d.kh = layer.weights.shape()[2];
  d.kw = layer.weights.shape()[3];
  if (layer.weights.shape()[1] != d.in_ch)
    throw ShapeError("conv: input has " + std::to_string(d.in_ch) +
                     " channels but weights expect " +
                     std::to_string(layer.weights.shape()[1]));
  if (layer.bias.shape() != Shape{d.out_ch})
    throw ShapeError("conv: bias shape " + layer.bias.shape().str() +
                     " does not match out_ch " + std::to_string(d.out_ch));
  d.out_h = conv_out_extent(d.h, d.kh, layer.stride, layer.padding);
  d.out_w = conv_out_extent(d.w, d.kw, layer.stride, layer.padding);
  d.cols_k = d.in_ch * d.kh * d.kw;
  d.patch = d.out_h * d.out_w;
  return d;
}

}  // namespace

Tensor im2col(const Tensor& sample, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t padding) {
  if (sample.shape().rank() != 3)
    throw ShapeError("im2col: sample must be [C,H,W], got " +
                     sample.shape().str());
  const std::size_t c = sample.shape()[0];
  const std::size_t h = sample.shape()[1];
  const std::size_t w = sample.shape()[2];
  const std::size_t out_h = conv_out_extent(h, kh, stride, padding);
  const std::size_t out_w = conv_out_extent(w, kw, stride, padding);
  Tensor cols = Tensor::zeros(Shape{c * kh * kw, out_h * out_w});
  im2col_into(sample.data(), c, h, w, kh, kw, stride, padding, out_h, out_w,
              cols.data());
  return cols;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  const ConvDims d = conv_dims(layer, input);
  Tensor out = Tensor::zeros(Shape{d.batch, d.out_ch, d.out_h, d.out_w});
  const float* wmat = layer.weights.data();  // [out_ch, cols_k] flat view

  parallel_for(d.batch, 1, [&](std::size_t n0, std::size_t n1) {
    std::vector<float> cols(d.cols_k * d.patch);
    for (std::size_t n = n0; n < n1; ++n) {
      const float* sample = input.data() + n * d.in_ch * d.h * d.w;
      im2col_into(sample, d.in_ch, d.h, d.w, d.kh, d.kw, layer.stride,
                  layer.padding, d.out_h, d.out_w, cols.data());
      float* out_sample = out.data() + n * d.out_ch * d.patch;
      gemm_nn(wmat, cols.data(), out_sample, d.out_ch, d.cols_k, d.patch);
      for (std::size_t c = 0; c < d.out_ch; ++c) {
        const float b = layer.bias[c];
        float* row = out_sample + c * d.patch;
        for (std::size_t p = 0; p < d.patch; ++p) row[p] += b;
      }
    }
  });
  return out;
}

LayerGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                         const Tensor& d_output) {
  const ConvDims d = conv_dims(layer, input);
  const Shape expected{d.batch, d.out_ch, d.out_h, d.out_w};
  if (d_output.shape() != expected)
    throw ShapeError("conv_backward: d_output shape " +
                     d_output.shape().str() + " does not match " +
                     expected.str());

  LayerGrads grads;
  grads.d_input = Tensor::zeros(input.shape());
  const std::size_t sample_len = d.in_ch * d.h * d.w;
  const float* wmat = layer.weights.data();

  // Per-sample float64 partials, reduced over the batch in index order so
  // serial and parallel runs agree bitwise.
  const std::size_t chunk = std::min<std::size_t>(d.batch, 8);
  std::vector<std::vector<double>> dw_part(chunk),
      db_part(chunk);
  std::vector<double> dw_acc(d.out_ch * d.cols_k, 0.0);
  std::vector<double> db_acc(d.out_ch, 0.0);

  for (std::size_t base = 0; base < d.batch; base += chunk) {
    const std::size_t count = std::min(chunk, d.batch - base);
    parallel_for(count, 1, [&](std::size_t i0, std::size_t i1) {
      std::vector<float> cols(d.cols_k * d.patch);
      std::vector<double> d_cols(d.cols_k * d.patch);
      std::vector<double> d_sample(sample_len);
      for (std::size_t i = i0; i < i1; ++i) {
        const std::size_t n = base + i;
        const float* sample = input.data() + n * sample_len;
        const float* d_out_sample = d_output.data() + n * d.out_ch * d.patch;

        im2col_into(sample, d.in_ch, d.h, d.w, d.kh, d.kw, layer.stride,
                    layer.padding, d.out_h, d.out_w, cols.data());

        dw_part[i].assign(d.out_ch * d.cols_k, 0.0);
        gemm_nt_acc(d_out_sample, cols.data(), dw_part[i].data(), d.out_ch,
                    d.patch, d.cols_k);

        db_part[i].assign(d.out_ch, 0.0);
        for (std::size_t c = 0; c < d.out_ch; ++c) {
          double s = 0.0;
          const float* row = d_out_sample + c * d.patch;
          for (std::size_t p = 0; p < d.patch; ++p)
            s += static_cast<double>(row[p]);
          db_part[i][c] = s;
        }

        gemm_tn(wmat, d_out_sample, d_cols.data(), d.out_ch, d.cols_k,
                d.patch);
        std::fill(d_sample.begin(), d_sample.end(), 0.0);
        col2im_add(d_cols.data(), d.in_ch, d.h, d.w, d.kh, d.kw, layer.stride,
                   layer.padding, d.out_h, d.out_w, d_sample.data());
        float* d_in = grads.d_input.data() + n * sample_len;
        for (std::size_t j = 0; j < sample_len; ++j)
          d_in[j] = static_cast<float>(d_sample[j]);
      }
    });
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < dw_acc.size(); ++j)
        dw_acc[j] += dw_part[i][j];
      for (std::size_t c = 0; c < d.out_ch; ++c) db_acc[c] += db_part[i][c];
    }
  }

  grads.d_weights = Tensor::zeros(layer.weights.shape());
  for (std::size_t j = 0; j < dw_acc.size(); ++j)
    grads.d_weights[j] = static_cast<float>(dw_acc[j]);
  grads.d_bias = Tensor::zeros(layer.bias.shape());
  for (std::size_t c = 0; c < d.out_ch; ++c)
    grads.d_bias[c] = static_cast<float>(db_acc[c]);
  return grads;
}

std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input) {
  if (input.shape().rank() != 4)
    throw ShapeError("maxpool: input must be [N,C,H,W], got " +
                     input.shape().str());
  const std::size_t n = input.shape()[0], c = input.shape()[1];
  const std::size_t h = input.shape()[2], w = input.shape()[3];
  if (h < 2 || w < 2)
    throw ShapeError("maxpool: spatial extents must be >= 2, got " +
                     input.shape().str());
  if (input.size() > std::numeric_limits<std::uint32_t>::max())
    throw ShapeError("maxpool: input too large for the 32-bit argmax cache");
  const std::size_t out_h = (h - 2) / 2 + 1;
  const std::size_t out_w = (w - 2) / 2 + 1;

  Tensor out = Tensor::zeros(Shape{n, c, out_h, out_w});
  PoolCache cache{input.shape(), out.shape(), {}};
  cache.argmax.resize(out.size());

  std::size_t oi = 0;
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox, ++oi) {
          // Row-major scan with strict > keeps the first winner on ties.
          std::size_t best = input.index4(ni, ci, oy * 2, ox * 2);
          float best_v = input[best];
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  input.index4(ni, ci, oy * 2 + dy, ox * 2 + dx);
              if (input[idx] > best_v) {
                best_v = input[idx];
                best = idx;
              }
            }
          }
          out[oi] = best_v;
          cache.argmax[oi] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

Tensor maxpool_backward(const PoolCache& cache, const Tensor& d_output) {
  if (cache.argmax.size() != cache.out_shape.elements() ||
      d_output.shape() != cache.out_shape)
    throw StateError("maxpool_backward: cache does not match d_output " +
                     d_output.shape().str());
  Tensor d_input = Tensor::zeros(cache.in_shape);
  for (std::size_t i = 0; i < cache.argmax.size(); ++i)
    d_input[cache.argmax[i]] += d_output[i];
  return d_input;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& d_output) {
  if (input.shape() != d_output.shape())
    throw ShapeError("relu_backward: shape mismatch " + input.shape().str() +
                     " vs " + d_output.shape().str());
  Tensor d_input = Tensor::zeros(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    d_input[i] = input[i] > 0.0f ? d_output[i] : 0.0f;
  return d_input;
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& input) {
  if (input.shape().rank() != 2)
    throw ShapeError("dense: input must be [N,in_dim], got " +
                     input.shape().str());
  const std::size_t batch = input.shape()[0];
  const std::size_t in_dim = input.shape()[1];
  const std::size_t out_dim = layer.weights.shape()[0];
  if (layer.weights.shape()[1] != in_dim)
    throw ShapeError("dense: input dim " + std::to_string(in_dim) +
                     " does not match weights " + layer.weights.shape().str());

  Tensor out = Tensor::zeros(Shape{batch, out_dim});
  std::vector<double> acc(batch * out_dim, 0.0);
  gemm_nt_acc(input.data(), layer.weights.data(), acc.data(), batch, in_dim,
              out_dim);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_dim; ++o)
      out[n * out_dim + o] = static_cast<float>(
          acc[n * out_dim + o] + static_cast<double>(layer.bias[o]));
  return out;
}

LayerGrads dense_backward(const DenseLayer& layer, const Tensor& input,
                          const Tensor& d_output) {
  const std::size_t batch = input.shape()[0];
  const std::size_t in_dim = input.shape()[1];
  const std::size_t out_dim = layer.weights.shape()[0];
  if (d_output.shape() != Shape{batch, out_dim})
    throw ShapeError("dense_backward: d_output shape " +
                     d_output.shape().str() + " does not match [" +
                     std::to_string(batch) + ", " + std::to_string(out_dim) +
                     "]");

  LayerGrads grads;
  std::vector<double> dw(out_dim * in_dim);
  gemm_tn(d_output.data(), input.data(), dw.data(), batch, out_dim, in_dim);
  grads.d_weights = Tensor::zeros(layer.weights.shape());
  for (std::size_t j = 0; j < dw.size(); ++j)
    grads.d_weights[j] = static_cast<float>(dw[j]);

  grads.d_bias = Tensor::zeros(layer.bias.shape());
  for (std::size_t o = 0; o < out_dim; ++o) {
    double s = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
      s += static_cast<double>(d_output[n * out_dim + o]);
    grads.d_bias[o] = static_cast<float>(s);
  }

  grads.d_input = Tensor::zeros(input.shape());
  gemm_nn(d_output.data(), layer.weights.data(), grads.d_input.data(), batch,
          out_dim, in_dim);
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.shape().rank() != 2 || logits.shape()[1] < 2)
    throw ShapeError("softmax: expects [N,K] with K >= 2, got " +
                     logits.shape().str());
  if (!all_finite(logits))
    throw NumericError("softmax: non-finite logits");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  Tensor out = Tensor::zeros(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * k;
    float m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    std::vector<double> e(k);
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(row[j] - m));
      sum += e[j];
    }
    for (std::size_t j = 0; j < k; ++j)
      out[i * k + j] = static_cast<float>(e[j] / sum);
  }
  return out;
}

}  // namespace dcnn
