#include "dcnn/reference.hpp"

#include <algorithm>
#include <cmath>

namespace dcnn::reference {

Image conv2d(const Image& in, const std::vector<double>& weights,
             const std::vector<double>& bias, std::size_t out_ch,
             std::size_t kh, std::size_t kw, std::size_t stride,
             std::size_t padding) {
  const std::size_t out_h = (in.h + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (in.w + 2 * padding - kw) / stride + 1;
  Image out{out_ch, out_h, out_w, std::vector<double>(out_ch * out_h * out_w)};
  for (std::size_t oc = 0; oc < out_ch; ++oc) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = bias[oc];
        for (std::size_t ic = 0; ic < in.channels; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
              acc += weights[((oc * in.channels + ic) * kh + ky) * kw + kx] *
                     in.at(ic, static_cast<std::size_t>(iy),
                           static_cast<std::size_t>(ix));
            }
          }
        }
        out.data[(oc * out_h + oy) * out_w + ox] = acc;
      }
    }
  }
  return out;
}

Image maxpool2x2(const Image& in) {
  const std::size_t out_h = (in.h - 2) / 2 + 1;
  const std::size_t out_w = (in.w - 2) / 2 + 1;
  Image out{in.channels, out_h, out_w,
            std::vector<double>(in.channels * out_h * out_w)};
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double m = in.at(c, oy * 2, ox * 2);
        m = std::max(m, in.at(c, oy * 2, ox * 2 + 1));
        m = std::max(m, in.at(c, oy * 2 + 1, ox * 2));
        m = std::max(m, in.at(c, oy * 2 + 1, ox * 2 + 1));
        out.data[(c * out_h + oy) * out_w + ox] = m;
      }
  return out;
}

Image relu(const Image& in) {
  Image out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

std::vector<double> dense(const std::vector<double>& in,
                          const std::vector<double>& weights,
                          const std::vector<double>& bias,
                          std::size_t out_dim) {
  const std::size_t in_dim = in.size();
  std::vector<double> out(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i)
      acc += weights[o * in_dim + i] * in[i];
    out[o] = acc;
  }
  return out;
}

std::vector<double> relu_vec(const std::vector<double>& in) {
  std::vector<double> out = in;
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double cross_entropy(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p =
        std::max(probs[i][static_cast<std::size_t>(labels[i])], 1e-12);
    total += -std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace dcnn::reference
