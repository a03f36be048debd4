#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/network.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/training.hpp"

using namespace dcnn;

namespace {

NetworkConfig blob_config() {
  NetworkConfig cfg;
  cfg.input_h = cfg.input_w = 24;
  cfg.convs = {{4, 5}, {8, 3}};
  cfg.pool_after = {0, 1};
  cfg.fc_dims = {8, 2};
  return cfg;
}

}  // namespace

TEST_CASE("cross entropy loss values") {
  SUBCASE("perfect prediction") {
    const Tensor probs = Tensor::from_data(Shape{1, 2}, {1.0f, 0.0f});
    const std::vector<int> labels = {0};
    const CrossEntropyResult r = cross_entropy_loss(probs, labels);
    CHECK(r.loss >= 0.0);
    CHECK(r.loss <= 1e-12);
  }
  SUBCASE("uniform prediction is ln 2") {
    const Tensor probs = Tensor::full(Shape{3, 2}, 0.5f);
    const std::vector<int> labels = {0, 1, 0};
    const CrossEntropyResult r = cross_entropy_loss(probs, labels);
    CHECK(r.loss == doctest::Approx(0.693147).epsilon(1e-6));
  }
  SUBCASE("fused gradient formula (probs - onehot) / N") {
    const Tensor probs =
        Tensor::from_data(Shape{2, 2}, {0.3f, 0.7f, 0.9f, 0.1f});
    const std::vector<int> labels = {1, 0};
    const CrossEntropyResult r = cross_entropy_loss(probs, labels);
    CHECK(r.d_logits[0] == doctest::Approx(0.3 / 2).epsilon(1e-6));
    CHECK(r.d_logits[1] == doctest::Approx(-0.3 / 2).epsilon(1e-6));
    CHECK(r.d_logits[2] == doctest::Approx(-0.1 / 2).epsilon(1e-6));
    CHECK(r.d_logits[3] == doctest::Approx(0.1 / 2).epsilon(1e-6));
  }
  SUBCASE("per-sample weights scale loss and gradient") {
    const Tensor probs =
        Tensor::from_data(Shape{2, 2}, {0.3f, 0.7f, 0.9f, 0.1f});
    const std::vector<int> labels = {1, 0};
    const std::vector<double> weights = {2.0, 1.0};
    const CrossEntropyResult plain = cross_entropy_loss(probs, labels);
    const CrossEntropyResult weighted =
        cross_entropy_loss(probs, labels, weights);
    CHECK(weighted.d_logits[0] == doctest::Approx(2.0 * plain.d_logits[0]));
    CHECK(weighted.d_logits[2] == doctest::Approx(plain.d_logits[2]));
    CHECK(weighted.loss > plain.loss);
  }
  SUBCASE("bad label") {
    const Tensor probs = Tensor::full(Shape{1, 2}, 0.5f);
    const std::vector<int> labels = {2};
    CHECK_THROWS_AS(cross_entropy_loss(probs, labels), ArgumentError);
  }
}

TEST_CASE("sgd momentum step") {
  SUBCASE("mu = 0 is plain SGD") {
    Tensor w = Tensor::full(Shape{1}, 1.0f);
    Tensor v = Tensor::zeros(Shape{1});
    Tensor g = Tensor::full(Shape{1}, 1.0f);
    Tensor* wp = &w;
    Tensor* vp = &v;
    const std::vector<Tensor> grads = {g};
    sgd_momentum_step({&wp, 1}, {&vp, 1}, grads, 0.1f, 0.0f);
    CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(v[0] == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("zero gradient with zero velocity is a fixed point") {
    Tensor w = Tensor::full(Shape{4}, 2.5f);
    Tensor v = Tensor::zeros(Shape{4});
    Tensor* wp = &w;
    Tensor* vp = &v;
    const std::vector<Tensor> grads = {Tensor::zeros(Shape{4})};
    sgd_momentum_step({&wp, 1}, {&vp, 1}, grads, 0.1f, 0.9f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == 2.5f);
  }
  SUBCASE("two-step hand recurrence") {
    // v1 = -0.1, w1 = 0.9; v2 = 0.9*(-0.1) - 0.1 = -0.19, w2 = 0.71
    Tensor w = Tensor::full(Shape{1}, 1.0f);
    Tensor v = Tensor::zeros(Shape{1});
    Tensor* wp = &w;
    Tensor* vp = &v;
    const std::vector<Tensor> grads = {Tensor::full(Shape{1}, 1.0f)};
    sgd_momentum_step({&wp, 1}, {&vp, 1}, grads, 0.1f, 0.9f);
    CHECK(v[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));
    sgd_momentum_step({&wp, 1}, {&vp, 1}, grads, 0.1f, 0.9f);
    CHECK(v[0] == doctest::Approx(-0.19).epsilon(1e-6));
    CHECK(w[0] == doctest::Approx(0.71).epsilon(1e-6));
  }
  SUBCASE("shape mismatch") {
    Tensor w = Tensor::zeros(Shape{2});
    Tensor v = Tensor::zeros(Shape{3});
    Tensor* wp = &w;
    Tensor* vp = &v;
    const std::vector<Tensor> grads = {Tensor::zeros(Shape{2})};
    CHECK_THROWS_AS(sgd_momentum_step({&wp, 1}, {&vp, 1}, grads, 0.1f, 0.9f),
                    ShapeError);
  }
}

TEST_CASE("lr = 0 training is a bitwise fixed point") {
  const LabeledDataset ds = generate_synthetic(24, 24, 24, 3);
  SplitSpec sspec;
  sspec.seed = 3;
  const SplitResult parts = split(ds, sspec);

  NetworkConfig ncfg = blob_config();
  Rng init(9);
  Network net = Network::build(ncfg, init);
  std::vector<std::vector<float>> before;
  for (const Tensor* p : net.parameters())
    before.emplace_back(p->data(), p->data() + p->size());

  TrainingConfig tcfg;
  tcfg.batch_size = parts.train.size();  // full batch: same loss every step
  tcfg.learning_rate = 0.0f;
  tcfg.momentum = 0.9f;
  tcfg.max_iterations = 20;
  tcfg.eval_every = 10;
  tcfg.seed = 4;
  const TrainResult result = train(net, parts.train, parts.val, tcfg);

  CHECK_FALSE(result.diverged);
  const auto after = result.final_network.parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(std::memcmp(after[i]->data(), before[i].data(),
                      before[i].size() * sizeof(float)) == 0);

  // the per-epoch reshuffle permutes the summation order inside the batch
  // loss, so constancy holds to accumulation noise rather than bitwise
  double first_loss = -1.0;
  for (const LogRecord& r : result.log.records) {
    if (r.split != Split::train) continue;
    if (first_loss < 0.0)
      first_loss = r.loss;
    else
      CHECK(std::abs(r.loss - first_loss) <= 1e-12 * first_loss);
  }
}

TEST_CASE("training is deterministic per seed") {
  const LabeledDataset ds = generate_synthetic(32, 24, 24, 5);
  SplitSpec sspec;
  sspec.seed = 5;
  const SplitResult parts = split(ds, sspec);

  TrainingConfig tcfg;
  tcfg.batch_size = 8;
  tcfg.learning_rate = 0.003f;
  tcfg.max_iterations = 12;
  tcfg.eval_every = 4;
  tcfg.seed = 11;

  const auto run = [&] {
    Rng init(2);
    Network net = Network::build(blob_config(), init);
    return train(net, parts.train, parts.val, tcfg);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.log.records.size() == b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    CHECK(a.log.records[i].iteration == b.log.records[i].iteration);
    CHECK(a.log.records[i].split == b.log.records[i].split);
    CHECK(a.log.records[i].loss == b.log.records[i].loss);          // bitwise
    CHECK(a.log.records[i].accuracy == b.log.records[i].accuracy);  // bitwise
  }
  const auto pa = a.network.parameters();
  const auto pb = b.network.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i]->data(), pb[i]->data(),
                      pa[i]->size() * sizeof(float)) == 0);
}

TEST_CASE("blob task converges within 500 iterations") {
  const LabeledDataset ds = generate_synthetic(160, 24, 24, 7);
  SplitSpec sspec;
  sspec.seed = 7;
  const SplitResult parts = split(ds, sspec);

  Rng init(derive_seed(7, "init"));
  Network net = Network::build(blob_config(), init);

  TrainingConfig tcfg;
  tcfg.batch_size = 16;
  tcfg.learning_rate = 0.01f;
  tcfg.momentum = 0.9f;
  tcfg.max_iterations = 500;
  tcfg.eval_every = 50;
  tcfg.seed = 7;
  const TrainResult result = train(net, parts.train, parts.val, tcfg);
  CHECK_FALSE(result.diverged);

  const MetricsReport train_report = evaluate(result.network, parts.train);
  CHECK(train_report.accuracy > 0.95);

  SUBCASE("best snapshot beats or ties the final validation loss") {
    double last_val = 0.0, min_val = 1e30;
    for (const LogRecord& r : result.log.records)
      if (r.split == Split::validation) {
        last_val = r.loss;
        min_val = std::min(min_val, r.loss);
      }
    CHECK(result.best_val_loss == min_val);
    CHECK(result.best_val_loss <= last_val);
  }
  SUBCASE("window-50 smoothed training loss is non-increasing") {
    std::vector<double> losses;
    for (const LogRecord& r : result.log.records)
      if (r.split == Split::train) losses.push_back(r.loss);
    REQUIRE(losses.size() == 500);
    std::vector<double> smoothed;
    for (std::size_t i = 0; i + 50 <= losses.size(); i += 50) {
      double s = 0.0;
      for (std::size_t j = i; j < i + 50; ++j) s += losses[j];
      smoothed.push_back(s / 50.0);
    }
    for (std::size_t i = 1; i < smoothed.size(); ++i)
      CHECK(smoothed[i] <= smoothed[i - 1] + 0.02);  // mini-batch jitter
    CHECK(smoothed.back() < smoothed.front());
  }
}

TEST_CASE("divergence aborts with the last good snapshot") {
  const LabeledDataset ds = generate_synthetic(24, 24, 24, 13);
  SplitSpec sspec;
  sspec.seed = 13;
  const SplitResult parts = split(ds, sspec);

  Rng init(3);
  Network net = Network::build(blob_config(), init);
  TrainingConfig tcfg;
  tcfg.batch_size = 8;
  tcfg.learning_rate = 1.0e20f;  // guaranteed overflow within a few steps
  tcfg.max_iterations = 50;
  tcfg.eval_every = 50;
  tcfg.seed = 13;
  const TrainResult result = train(net, parts.train, parts.val, tcfg);
  CHECK(result.diverged);
  CHECK(result.iterations_run < 50);
  for (const Tensor* p : result.network.parameters())
    CHECK(all_finite(*p));  // the returned snapshot is the last good one
}

TEST_CASE("train argument validation") {
  const LabeledDataset ds = generate_synthetic(8, 24, 24, 1);
  const LabeledDataset empty;
  Rng init(1);
  Network net = Network::build(blob_config(), init);
  TrainingConfig tcfg;
  CHECK_THROWS_AS(train(net, empty, ds, tcfg), ArgumentError);
  CHECK_THROWS_AS(train(net, ds, empty, tcfg), ArgumentError);
  TrainingConfig bad = tcfg;
  bad.momentum = 1.0f;
  CHECK_THROWS_AS(train(net, ds, ds, bad), ArgumentError);
}

TEST_CASE("csv export shape") {
  TrainingLog log;
  log.records.push_back({1, Split::train, 0.5, 0.75, 123});
  log.records.push_back({4, Split::validation, 0.25, 0.875, 456});
  std::ostringstream out;
  export_csv(log, out);
  const std::string csv = out.str();
  CHECK(csv.find("iteration,split,loss,accuracy,elapsed_ms\n") == 0);
  CHECK(csv.find("1,train,0.5,0.75,0\n") != std::string::npos);
  CHECK(csv.find("4,validation,0.25,0.875,0\n") != std::string::npos);

  std::ostringstream timed;
  export_csv(log, timed, /*with_timing=*/true);
  CHECK(timed.str().find("123") != std::string::npos);
}
