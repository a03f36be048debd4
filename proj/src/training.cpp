#include "dcnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <ostream>

#include "dcnn/errors.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

namespace {

constexpr double kLogClip = 1e-12;

using Clock = std::chrono::steady_clock;

std::pair<Tensor, std::vector<int>> assemble_batch(
    const LabeledDataset& ds, std::span<const std::size_t> indices) {
  const Shape& img = ds.samples[indices[0]].image.shape();
  const std::size_t pixels = img.elements();
  Tensor batch = Tensor::zeros(Shape{indices.size(), img[0], img[1], img[2]});
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = ds.samples[indices[i]];
    std::memcpy(batch.data() + i * pixels, s.image.data(),
                pixels * sizeof(float));
    labels[i] = s.label;
  }
  return {std::move(batch), std::move(labels)};
}

double batch_accuracy(const Tensor& probs, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int pred = probs[i * 2 + 1] >= 0.5f ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::pair<double, double> eval_split(const Network& net,
                                     const LabeledDataset& ds,
                                     std::size_t batch_size) {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> indices(ds.size());
  std::iota(indices.begin(), indices.end(), 0);
  for (std::size_t base = 0; base < ds.size(); base += batch_size) {
    const std::size_t count = std::min(batch_size, ds.size() - base);
    const auto [batch, labels] = assemble_batch(
        ds, std::span(indices).subspan(base, count));
    const ForwardTrace trace = net.forward(batch);
    for (std::size_t i = 0; i < count; ++i) {
      const double p = std::max(
          static_cast<double>(
              trace.probs[i * 2 + static_cast<std::size_t>(labels[i])]),
          kLogClip);
      loss_sum += -std::log(p);
      const int pred = trace.probs[i * 2 + 1] >= 0.5f ? 1 : 0;
      if (pred == labels[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(ds.size()),
          static_cast<double>(correct) / static_cast<double>(ds.size())};
}

std::vector<double> batch_class_weights(std::span<const int> labels) {
  std::size_t cancer = 0;
  for (int label : labels) cancer += label == 1;
  const std::size_t free = labels.size() - cancer;
  std::vector<double> weights(labels.size(), 1.0);
  if (cancer == 0 || free == 0) return weights;  // single-class batch
  const double w = static_cast<double>(free) / static_cast<double>(cancer);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) weights[i] = w;
  return weights;
}

}  // namespace

CrossEntropyResult cross_entropy_loss(const Tensor& probs,
                                      std::span<const int> labels,
                                      std::span<const double> weights) {
  if (probs.shape().rank() != 2 || probs.shape()[1] < 2)
    throw ShapeError("cross_entropy_loss: probs must be [N,K], got " +
                     probs.shape().str());
  const std::size_t n = probs.shape()[0];
  const std::size_t k = probs.shape()[1];
  if (labels.size() != n)
    throw ArgumentError("cross_entropy_loss: got " +
                        std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  if (!weights.empty() && weights.size() != n)
    throw ArgumentError("cross_entropy_loss: weight count mismatch");

  CrossEntropyResult result;
  result.d_logits = Tensor::zeros(probs.shape());
  double loss_sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label != 0 && label != 1)
      throw ArgumentError("cross_entropy_loss: label must be 0 or 1, got " +
                          std::to_string(label));
    const double w = weights.empty() ? 1.0 : weights[i];
    const double p = std::max(
        static_cast<double>(probs[i * k + static_cast<std::size_t>(label)]),
        kLogClip);
    loss_sum += -w * std::log(p);
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = j == static_cast<std::size_t>(label) ? 1.0 : 0.0;
      result.d_logits[i * k + j] = static_cast<float>(
          w * (static_cast<double>(probs[i * k + j]) - onehot) * inv_n);
    }
  }
  result.loss = loss_sum * inv_n;
  return result;
}

void sgd_momentum_step(std::span<Tensor* const> params,
                       std::span<Tensor* const> velocities,
                       std::span<const Tensor> grads, float learning_rate,
                       float momentum) {
  if (params.size() != velocities.size() || params.size() != grads.size())
    throw ShapeError("sgd_momentum_step: parameter/velocity/gradient counts "
                     "disagree");
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& w = *params[t];
    Tensor& v = *velocities[t];
    const Tensor& g = grads[t];
    if (w.shape() != v.shape() || w.shape() != g.shape())
      throw ShapeError("sgd_momentum_step: shape mismatch at tensor " +
                       std::to_string(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] - learning_rate * g[i];
      w[i] = w[i] + v[i];
    }
  }
}

TrainResult train(Network net, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const TrainingConfig& cfg) {
  if (train_set.size() == 0 || val_set.size() == 0)
    throw ArgumentError("train: training and validation sets must be "
                        "non-empty");
  if (cfg.batch_size == 0) throw ArgumentError("train: batch_size must be >= 1");
  if (cfg.learning_rate < 0.0f)
    throw ArgumentError("train: learning_rate must be >= 0");
  if (cfg.momentum < 0.0f || cfg.momentum >= 1.0f)
    throw ArgumentError("train: momentum must lie in [0, 1)");
  const std::size_t eval_every = std::max<std::size_t>(cfg.eval_every, 1);

  const std::size_t n = train_set.size();
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_iterations =
      cfg.epochs ? *cfg.epochs * batches_per_epoch : cfg.max_iterations;

  TrainResult result{net, net, {}, false, 0,
                     std::numeric_limits<double>::infinity(), 0};
  const auto started = Clock::now();
  const auto elapsed_ms = [&started] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                                 started)
        .count();
  };

  const auto record_validation = [&](std::size_t iteration) {
    const auto [loss, acc] = eval_split(net, val_set, cfg.batch_size);
    result.log.records.push_back(
        {iteration, Split::validation, loss, acc, elapsed_ms()});
    if (loss < result.best_val_loss) {
      result.best_val_loss = loss;
      result.best_iteration = iteration;
      result.network = net;
    }
  };
  record_validation(0);  // the freshly initialized network is the baseline

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle on the first batch

  const auto params = net.parameters();
  const auto velocities = net.velocities();

  for (std::size_t it = 1; it <= total_iterations; ++it) {
    if (cursor >= n) {
      for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = shuffle_rng.next_u64() % (i + 1);
        std::swap(order[i], order[j]);
      }
      cursor = 0;
    }
    const std::size_t count = std::min(cfg.batch_size, n - cursor);
    const auto [batch, labels] =
        assemble_batch(train_set, std::span(order).subspan(cursor, count));
    cursor += count;

    // Saturated activations surface as a NumericError from softmax; treat
    // them like a non-finite loss and abort with the last good snapshot.
    try {
      const ForwardTrace trace = net.forward(batch);
      std::vector<double> weights;
      if (cfg.class_weighted_loss) weights = batch_class_weights(labels);
      const CrossEntropyResult ce =
          cross_entropy_loss(trace.probs, labels, weights);
      if (!std::isfinite(ce.loss)) throw NumericError("non-finite loss");

      result.log.records.push_back({it, Split::train, ce.loss,
                                    batch_accuracy(trace.probs, labels),
                                    elapsed_ms()});

      const std::vector<Tensor> grads = net.backward(trace, ce.d_logits);
      sgd_momentum_step(params, velocities, grads, cfg.learning_rate,
                        cfg.momentum);
    } catch (const NumericError&) {
      result.diverged = true;
      result.iterations_run = it - 1;
      result.final_network = net;
      return result;
    }

    if (it % eval_every == 0 || it == total_iterations) record_validation(it);
  }
  result.iterations_run = total_iterations;
  result.final_network = net;
  return result;
}

void export_csv(const TrainingLog& log, std::ostream& out, bool with_timing) {
  out << "iteration,split,loss,accuracy,elapsed_ms\n";
  char line[160];
  for (const LogRecord& r : log.records) {
    std::snprintf(line, sizeof(line), "%zu,%s,%.9g,%.9g,%lld\n", r.iteration,
                  r.split == Split::train ? "train" : "validation", r.loss,
                  r.accuracy,
                  with_timing ? static_cast<long long>(r.elapsed_ms) : 0LL);
    out << line;
  }
}

}  // namespace dcnn
