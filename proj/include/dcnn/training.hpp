#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/network.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

struct TrainingConfig {
  std::size_t batch_size = 128;
  float learning_rate = 1.0e-3f;
  float momentum = 0.9f;
  /// Mini-batch steps. When `epochs` is set it wins and the iteration
  /// budget becomes epochs * batches-per-epoch.
  std::size_t max_iterations = 11000;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
  /// Iterations between validation passes.
  std::size_t eval_every = 100;
  /// Applies the class-frequency weight of the evaluation log-loss as
  /// per-sample training weights (per mini-batch). Off by default: the
  /// training objective is plain unweighted cross-entropy.
  bool class_weighted_loss = false;
};

enum class Split { train, validation };

struct LogRecord {
  std::size_t iteration = 0;
  Split split = Split::train;
  double loss = 0.0;
  double accuracy = 0.0;
  std::int64_t elapsed_ms = 0;  // wall clock since training start
};

struct TrainingLog {
  std::vector<LogRecord> records;
};

/// CSV with header `iteration,split,loss,accuracy,elapsed_ms`. Timing is
/// wall-clock and inherently non-reproducible, so by default the column is
/// written as 0 to keep reruns byte-identical; pass with_timing to keep
/// the measured values.
void export_csv(const TrainingLog& log, std::ostream& out,
                bool with_timing = false);

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor d_logits;  // fused softmax/cross-entropy gradient at the logits
};

/// loss = -(1/N) sum ln(probs[i, label_i]) with probs clipped to >= 1e-12
/// inside the log only; d_logits = (probs - onehot) / N. Optional
/// per-sample weights scale both the loss terms and the gradient rows.
CrossEntropyResult cross_entropy_loss(const Tensor& probs,
                                      std::span<const int> labels,
                                      std::span<const double> weights = {});

/// Classical (heavy-ball) momentum: v <- mu*v - lr*g; w <- w + v.
void sgd_momentum_step(std::span<Tensor* const> params,
                       std::span<Tensor* const> velocities,
                       std::span<const Tensor> grads, float learning_rate,
                       float momentum);

struct TrainResult {
  Network network;        // snapshot with the lowest validation loss
  Network final_network;  // state after the last completed iteration
  TrainingLog log;
  bool diverged = false;
  std::size_t best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t iterations_run = 0;
};

/// Seeded mini-batch SGD: the training set is reshuffled every epoch, the
/// final partial batch is used as-is, and validation loss/accuracy are
/// recorded every eval_every iterations (plus iteration 0 and the final
/// iteration). Returns the snapshot with the lowest validation loss. A
/// non-finite training loss stops the run with `diverged` set and the last
/// good snapshot preserved. Identical (seed, data, config) reproduce the
/// loss/accuracy log bitwise.
TrainResult train(Network net, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const TrainingConfig& cfg);

}  // namespace dcnn
