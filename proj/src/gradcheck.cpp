#include "dcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/layers.hpp"
#include "dcnn/network.hpp"
#include "dcnn/reference.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/training.hpp"

namespace dcnn {

namespace {

constexpr double kStep = 1e-3;
// Kink clearance for the end-to-end check: a +-h parameter step shifts a
// pre-activation by at most a few h at conv depth but gets amplified by
// the weight chain toward the dense layers, so the dense margin is wider.
constexpr double kKinkMargin = 6e-3;
constexpr double kDenseKinkMargin = 2e-2;

std::vector<double> widen(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

double rel_error(const Tensor& analytic, const std::vector<double>& fd) {
  double max_diff = 0.0, max_fd = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    max_diff = std::max(max_diff,
                        std::abs(static_cast<double>(analytic[i]) - fd[i]));
    max_fd = std::max(max_fd, std::abs(fd[i]));
  }
  return max_diff / std::max(max_fd, 1e-12);
}

std::vector<double> fd_gradient(
    std::vector<double> params,
    const std::function<double(const std::vector<double>&)>& eval) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + kStep;
    const double plus = eval(params);
    params[i] = saved - kStep;
    const double minus = eval(params);
    params[i] = saved;
    grad[i] = (plus - minus) / (2.0 * kStep);
  }
  return grad;
}

reference::Image sample_image(const Tensor& batch, std::size_t n) {
  const std::size_t c = batch.shape()[1], h = batch.shape()[2],
                    w = batch.shape()[3];
  reference::Image img{c, h, w, std::vector<double>(c * h * w)};
  const float* base = batch.data() + n * c * h * w;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<double>(base[i]);
  return img;
}

double check_conv(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t batch = 2;
  const Tensor input = fill_normal(rng, Shape{batch, 2, 5, 5}, 0.0f, 1.0f);
  ConvLayer layer{fill_normal(rng, Shape{3, 2, 3, 3}, 0.0f, 0.5f),
                  fill_normal(rng, Shape{3}, 0.0f, 0.1f)};
  const Tensor d_out = fill_normal(rng, Shape{batch, 3, 3, 3}, 0.0f, 1.0f);
  const LayerGrads analytic = conv_backward(layer, input, d_out);

  const auto d64 = widen(d_out);
  const std::size_t out_len = 3 * 3 * 3;
  const auto eval = [&](const std::vector<double>& w,
                        const std::vector<double>& b,
                        const std::vector<double>& x) {
    double j = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      reference::Image img{2, 5, 5,
                           std::vector<double>(x.begin() + n * 50,
                                               x.begin() + (n + 1) * 50)};
      const reference::Image out = reference::conv2d(img, w, b, 3, 3, 3, 1, 0);
      for (std::size_t i = 0; i < out_len; ++i)
        j += d64[n * out_len + i] * out.data[i];
    }
    return j;
  };
  const auto w64 = widen(layer.weights), b64 = widen(layer.bias),
             x64 = widen(input);

  double err = rel_error(
      analytic.d_weights, fd_gradient(w64, [&](const std::vector<double>& w) {
        return eval(w, b64, x64);
      }));
  err = std::max(err, rel_error(analytic.d_bias,
                                fd_gradient(b64,
                                            [&](const std::vector<double>& b) {
                                              return eval(w64, b, x64);
                                            })));
  err = std::max(err, rel_error(analytic.d_input,
                                fd_gradient(x64,
                                            [&](const std::vector<double>& x) {
                                              return eval(w64, b64, x);
                                            })));
  return err;
}

double check_maxpool(std::uint64_t seed) {
  // regenerate until every window's top-two gap clears the kink margin
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt);
    const Tensor input = fill_normal(rng, Shape{1, 2, 6, 6}, 0.0f, 2.0f);
    double min_gap = 1e30;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < 3; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          float vals[4] = {input.at4(0, c, oy * 2, ox * 2),
                           input.at4(0, c, oy * 2, ox * 2 + 1),
                           input.at4(0, c, oy * 2 + 1, ox * 2),
                           input.at4(0, c, oy * 2 + 1, ox * 2 + 1)};
          std::sort(vals, vals + 4);
          min_gap = std::min(min_gap,
                             static_cast<double>(vals[3]) - vals[2]);
        }
    if (min_gap < kKinkMargin) continue;

    const auto [out, cache] = maxpool_forward(input);
    const Tensor d_out = fill_normal(rng, out.shape(), 0.0f, 1.0f);
    const Tensor analytic = maxpool_backward(cache, d_out);
    const auto d64 = widen(d_out);
    const auto fd =
        fd_gradient(widen(input), [&](const std::vector<double>& x) {
          const reference::Image pooled =
              reference::maxpool2x2(reference::Image{2, 6, 6, x});
          double j = 0.0;
          for (std::size_t i = 0; i < pooled.data.size(); ++i)
            j += d64[i] * pooled.data[i];
          return j;
        });
    return rel_error(analytic, fd);
  }
}

double check_relu(std::uint64_t seed) {
  Rng rng(seed);
  const Tensor raw = fill_normal(rng, Shape{48}, 0.0f, 1.0f);
  const Tensor input = map_elementwise(
      raw, [](float x) { return x >= 0.0f ? x + 0.2f : x - 0.2f; });
  const Tensor d_out = fill_normal(rng, Shape{48}, 0.0f, 1.0f);
  const Tensor analytic = relu_backward(input, d_out);
  const auto d64 = widen(d_out);
  const auto fd = fd_gradient(widen(input), [&](const std::vector<double>& x) {
    double j = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      j += d64[i] * (x[i] > 0.0 ? x[i] : 0.0);
    return j;
  });
  return rel_error(analytic, fd);
}

double check_dense(std::uint64_t seed) {
  Rng rng(seed);
  DenseLayer layer{fill_normal(rng, Shape{4, 5}, 0.0f, 0.5f),
                   fill_normal(rng, Shape{4}, 0.0f, 0.5f)};
  const Tensor input = fill_normal(rng, Shape{3, 5}, 0.0f, 1.0f);
  const Tensor d_out = fill_normal(rng, Shape{3, 4}, 0.0f, 1.0f);
  const LayerGrads analytic = dense_backward(layer, input, d_out);

  const auto d64 = widen(d_out);
  const auto eval = [&](const std::vector<double>& w,
                        const std::vector<double>& b,
                        const std::vector<double>& x) {
    double j = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
      const std::vector<double> row(x.begin() + n * 5,
                                    x.begin() + (n + 1) * 5);
      const auto out = reference::dense(row, w, b, 4);
      for (std::size_t o = 0; o < 4; ++o) j += d64[n * 4 + o] * out[o];
    }
    return j;
  };
  const auto w64 = widen(layer.weights), b64 = widen(layer.bias),
             x64 = widen(input);
  double err = rel_error(
      analytic.d_weights, fd_gradient(w64, [&](const std::vector<double>& w) {
        return eval(w, b64, x64);
      }));
  err = std::max(err, rel_error(analytic.d_bias,
                                fd_gradient(b64,
                                            [&](const std::vector<double>& b) {
                                              return eval(w64, b, x64);
                                            })));
  err = std::max(err, rel_error(analytic.d_input,
                                fd_gradient(x64,
                                            [&](const std::vector<double>& x) {
                                              return eval(w64, b64, x);
                                            })));
  return err;
}

double check_softmax_xent(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 4;
  const Tensor logits = fill_normal(rng, Shape{n, 2}, 0.0f, 2.0f);
  std::vector<int> labels(n);
  for (int& label : labels) label = rng.next_u64() % 2;

  const Tensor probs = softmax(logits);
  const CrossEntropyResult ce = cross_entropy_loss(probs, labels);

  const auto fd = fd_gradient(widen(logits), [&](const std::vector<double>& l) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> row(l.begin() + i * 2, l.begin() + (i + 1) * 2);
      const auto p = reference::softmax(row);
      loss += -std::log(
          std::max(p[static_cast<std::size_t>(labels[i])], 1e-12));
    }
    return loss / static_cast<double>(n);
  });
  return rel_error(ce.d_logits, fd);
}

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.input_h = 12;
  cfg.input_w = 12;
  cfg.convs = {{2, 3}, {3, 3}};
  cfg.pool_after = {0};
  cfg.fc_dims = {4, 2};
  return cfg;
}

// Float64 replica of the network forward plus cross-entropy loss, used as
// the FD evaluation function. `params` is aligned with parameter_names().
double f64_network_loss(const NetworkConfig& cfg,
                        const std::vector<std::vector<double>>& params,
                        const Tensor& batch, const std::vector<int>& labels) {
  const std::size_t n = batch.shape()[0];
  std::vector<std::vector<double>> probs;
  for (std::size_t s = 0; s < n; ++s) {
    reference::Image x = sample_image(batch, s);
    std::size_t p = 0;
    for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
      x = reference::conv2d(x, params[p], params[p + 1],
                            cfg.convs[i].out_channels, cfg.convs[i].kernel,
                            cfg.convs[i].kernel, cfg.stride, cfg.padding);
      p += 2;
      x = reference::relu(x);
      if (cfg.pool_after.count(i)) x = reference::maxpool2x2(x);
    }
    std::vector<double> v = x.data;
    for (std::size_t j = 0; j < cfg.fc_dims.size(); ++j) {
      v = reference::dense(v, params[p], params[p + 1], cfg.fc_dims[j]);
      p += 2;
      if (j + 1 < cfg.fc_dims.size()) v = reference::relu_vec(v);
    }
    probs.push_back(reference::softmax(v));
  }
  return reference::cross_entropy(probs, labels);
}

// Kink clearance of a candidate batch: every conv/hidden-dense
// pre-activation away from 0, every pool window's top-two gap open.
bool margins_clear(const Network& net, const NetworkConfig& cfg,
                   const ForwardTrace& trace) {
  for (const Tensor& pre : trace.conv_preacts)
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (std::abs(static_cast<double>(pre[i])) < kKinkMargin) return false;
  for (const Tensor& pre : trace.dense_preacts)
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (std::abs(static_cast<double>(pre[i])) < kDenseKinkMargin)
        return false;

  for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
    if (!cfg.pool_after.count(i)) continue;
    const Tensor pooled_in = relu_forward(trace.conv_preacts[i]);
    const std::size_t b = pooled_in.shape()[0], c = pooled_in.shape()[1];
    const std::size_t h = pooled_in.shape()[2], w = pooled_in.shape()[3];
    for (std::size_t nn = 0; nn < b; ++nn)
      for (std::size_t cc = 0; cc < c; ++cc)
        for (std::size_t oy = 0; oy + 1 < h; oy += 2)
          for (std::size_t ox = 0; ox + 1 < w; ox += 2) {
            float vals[4] = {pooled_in.at4(nn, cc, oy, ox),
                             pooled_in.at4(nn, cc, oy, ox + 1),
                             pooled_in.at4(nn, cc, oy + 1, ox),
                             pooled_in.at4(nn, cc, oy + 1, ox + 1)};
            std::sort(vals, vals + 4);
            if (vals[3] == 0.0f) continue;  // whole window inactive
            if (static_cast<double>(vals[3]) - vals[2] < kKinkMargin)
              return false;
          }
  }
  (void)net;
  return true;
}

std::pair<double, std::uint64_t> check_network(std::uint64_t seed,
                                               bool inject_error) {
  const NetworkConfig cfg = tiny_config();
  Rng init(derive_seed(seed, "gradcheck-init"));
  Network net = Network::build(cfg, init);

  const std::uint64_t data_base = derive_seed(seed, "gradcheck-data");
  for (std::uint64_t attempt = 0; attempt < 5000; ++attempt) {
    Rng data_rng(data_base + attempt);
    const Tensor batch = fill_normal(data_rng, Shape{2, 1, 12, 12}, 0.3f, 0.2f);
    const std::vector<int> labels = {1, 0};
    const ForwardTrace trace = net.forward(batch);
    if (!margins_clear(net, cfg, trace)) continue;

    const CrossEntropyResult ce = cross_entropy_loss(trace.probs, labels);
    std::vector<Tensor> grads = net.backward(trace, ce.d_logits);
    if (inject_error && !grads.empty() && grads[0].size() > 0)
      grads[0][0] += 0.01f;

    std::vector<std::vector<double>> params64;
    for (const Tensor* p : net.parameters()) params64.push_back(widen(*p));

    double err = 0.0;
    for (std::size_t t = 0; t < params64.size(); ++t) {
      const auto fd =
          fd_gradient(params64[t], [&](const std::vector<double>& perturbed) {
            std::vector<std::vector<double>> local = params64;
            local[t] = perturbed;
            return f64_network_loss(cfg, local, batch, labels);
          });
      err = std::max(err, rel_error(grads[t], fd));
    }
    return {err, attempt};
  }
  throw NumericError(
      "gradcheck: no kink-free input found; try a different seed");
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, bool inject_error) {
  GradCheckReport report;
  report.entries.push_back({"conv", check_conv(derive_seed(seed, "conv"))});
  report.entries.push_back(
      {"maxpool", check_maxpool(derive_seed(seed, "maxpool"))});
  report.entries.push_back({"relu", check_relu(derive_seed(seed, "relu"))});
  report.entries.push_back({"dense", check_dense(derive_seed(seed, "dense"))});
  report.entries.push_back(
      {"softmax_xent", check_softmax_xent(derive_seed(seed, "softmax"))});
  const auto [err, attempts] = check_network(seed, inject_error);
  report.entries.push_back({"network", err});
  report.data_attempts = attempts;
  return report;
}

}  // namespace dcnn
