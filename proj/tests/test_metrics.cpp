#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/network.hpp"
#include "dcnn/rng.hpp"

using namespace dcnn;

namespace {

// Independent counting oracle.
ConfusionMatrix count_oracle(const std::vector<int>& preds,
                             const std::vector<int>& labels) {
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1 && preds[i] == 1) cm.tp++;
    if (labels[i] == 1 && preds[i] == 0) cm.fn++;
    if (labels[i] == 0 && preds[i] == 1) cm.fp++;
    if (labels[i] == 0 && preds[i] == 0) cm.tn++;
  }
  return cm;
}

}  // namespace

TEST_CASE("confusion matrix") {
  SUBCASE("perfect agreement") {
    const std::vector<int> v = {1, 1, 0};
    const ConfusionMatrix cm = confusion(v, v);
    CHECK(cm.tp == 2);
    CHECK(cm.tn == 1);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
  }
  SUBCASE("total disagreement") {
    const std::vector<int> labels = {1, 0, 1, 0};
    const std::vector<int> preds = {0, 1, 0, 1};
    const ConfusionMatrix cm = confusion(preds, labels);
    CHECK(cm.tp == 0);
    CHECK(cm.tn == 0);
    CHECK(cm.fp == 2);
    CHECK(cm.fn == 2);
  }
  SUBCASE("random instances match the counting oracle") {
    Rng rng(41);
    for (int round = 0; round < 5; ++round) {
      std::vector<int> preds(1000), labels(1000);
      for (std::size_t i = 0; i < 1000; ++i) {
        preds[i] = rng.next_u64() % 2;
        labels[i] = rng.next_u64() % 2;
      }
      const ConfusionMatrix got = confusion(preds, labels);
      const ConfusionMatrix want = count_oracle(preds, labels);
      CHECK(got.tp == want.tp);
      CHECK(got.fp == want.fp);
      CHECK(got.tn == want.tn);
      CHECK(got.fn == want.fn);
      CHECK(got.total() == 1000);
    }
  }
  SUBCASE("length mismatch and empty inputs") {
    const std::vector<int> a = {1, 0}, b = {1};
    CHECK_THROWS_AS(confusion(a, b), ArgumentError);
    CHECK_THROWS_AS(confusion(std::vector<int>{}, std::vector<int>{}),
                    ArgumentError);
  }
}

TEST_CASE("ratio metrics") {
  SUBCASE("direct ratios") {
    ConfusionMatrix cm;
    cm.tp = 87;
    cm.fn = 13;
    cm.tn = 991;
    cm.fp = 9;
    CHECK(sensitivity(cm) == doctest::Approx(0.87).epsilon(1e-12));
    CHECK(specificity(cm) == doctest::Approx(0.991).epsilon(1e-12));
    CHECK(ppv(cm) == doctest::Approx(87.0 / 96.0).epsilon(1e-12));
  }
  SUBCASE("boundary") {
    ConfusionMatrix cm;
    cm.tp = 5;
    cm.fn = 0;
    CHECK(sensitivity(cm) == 1.0);
  }
  SUBCASE("zero denominators are NaN, never silently 0") {
    ConfusionMatrix cm;
    cm.tn = 10;
    CHECK(std::isnan(sensitivity(cm)));
    CHECK(std::isnan(ppv(cm)));
    CHECK_FALSE(std::isnan(specificity(cm)));
  }
}

TEST_CASE("f1 score") {
  CHECK(f1_score(1.0, 1.0) == 1.0);
  CHECK(f1_score(0.7, 0.7) == doctest::Approx(0.7).epsilon(1e-12));
  // direct evaluation: 2 * 0.5 * 1.0 / 1.5
  CHECK(f1_score(0.5, 1.0) == doctest::Approx(0.666666666667).epsilon(1e-9));
  CHECK(std::isnan(f1_score(0.0, 0.0)));
  CHECK(std::isnan(f1_score(std::nan(""), 1.0)));

  SUBCASE("harmonic <= geometric <= arithmetic, and >= min") {
    Rng rng(55);
    for (int round = 0; round < 200; ++round) {
      const double p = 0.01 + 0.99 * rng.next_double();
      const double t = 0.01 + 0.99 * rng.next_double();
      const double h = f1_score(p, t);
      const double g = std::sqrt(p * t);
      const double a = 0.5 * (p + t);
      CHECK(h >= std::min(p, t) - 1e-12);
      CHECK(h <= g + 1e-12);
      CHECK(g <= a + 1e-12);
    }
  }
}

TEST_CASE("weighted log loss") {
  SUBCASE("hand-checked three-sample example") {
    // labels [1,0,0], true-class probs [0.8, 0.9, 0.6], w(cancer) = 2/1:
    // loss = -(1/3)(2 ln 0.8 + ln 0.9 + ln 0.6)
    const Tensor probs = Tensor::from_data(
        Shape{3, 2}, {0.2f, 0.8f, 0.9f, 0.1f, 0.6f, 0.4f});
    const std::vector<int> labels = {1, 0, 0};
    const WeightedLogLossResult r = weighted_log_loss(probs, labels);
    CHECK(r.weight_defined);
    // direct-summation oracle over the float32-rounded probabilities
    const double oracle = -(2.0 * std::log(static_cast<double>(0.8f)) +
                            std::log(static_cast<double>(0.9f)) +
                            std::log(static_cast<double>(0.6f))) /
                          3.0;
    CHECK(r.value == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(r.value - 0.3541577) < 1e-6);
  }
  SUBCASE("perfect predictions hit the clip floor") {
    const Tensor probs =
        Tensor::from_data(Shape{2, 2}, {0.0f, 1.0f, 1.0f, 0.0f});
    const std::vector<int> labels = {1, 0};
    const WeightedLogLossResult r = weighted_log_loss(probs, labels);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 3.5e-14);
  }
  SUBCASE("uniform predictions on balanced classes give ln 2") {
    const Tensor probs = Tensor::full(Shape{4, 2}, 0.5f);
    const std::vector<int> labels = {1, 1, 0, 0};
    const WeightedLogLossResult r = weighted_log_loss(probs, labels);
    CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("balanced classes degenerate to the unweighted mean") {
    Rng rng(66);
    for (int round = 0; round < 20; ++round) {
      const std::size_t n = 40;
      Tensor probs = Tensor::zeros(Shape{n, 2});
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const float p = static_cast<float>(0.02 + 0.96 * rng.next_double());
        probs[i * 2] = 1.0f - p;
        probs[i * 2 + 1] = p;
        labels[i] = i < n / 2 ? 1 : 0;
      }
      const WeightedLogLossResult r = weighted_log_loss(probs, labels);
      // direct-summation oracle of the unweighted mean
      double oracle = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        oracle += -std::log(static_cast<double>(
            probs[i * 2 + static_cast<std::size_t>(labels[i])]));
      oracle /= static_cast<double>(n);
      CHECK(std::abs(r.value - oracle) < 1e-12);
      CHECK(std::abs(r.value - r.unweighted) < 1e-15);
    }
  }
  SUBCASE("single-class set falls back to unweighted with a signal") {
    const Tensor probs = Tensor::from_data(Shape{2, 2},
                                           {0.3f, 0.7f, 0.2f, 0.8f});
    const std::vector<int> labels = {1, 1};
    const WeightedLogLossResult r = weighted_log_loss(probs, labels);
    CHECK_FALSE(r.weight_defined);
    CHECK(r.value == doctest::Approx(r.unweighted).epsilon(1e-15));
  }
}

TEST_CASE("evaluate on the constant (0.5, 0.5) predictor") {
  // A freshly built network maps all-zero images to exactly (0.5, 0.5),
  // and the >= threshold rule then predicts cancer for every sample.
  NetworkConfig cfg;
  cfg.input_h = cfg.input_w = 12;
  cfg.convs = {{2, 3}};
  cfg.pool_after = {};
  cfg.fc_dims = {2};
  Rng init(1);
  const Network net = Network::build(cfg, init);

  LabeledDataset ds;
  for (std::size_t i = 0; i < 10; ++i) {
    Sample s;
    s.image = Tensor::zeros(Shape{1, 12, 12});
    s.label = i < 5 ? 1 : 0;
    s.id = "z" + std::to_string(i);
    ds.samples.push_back(std::move(s));
  }
  ds.f_cancer = ds.f_free = 5;

  const MetricsReport r = evaluate(net, ds, 0.5);
  CHECK(r.accuracy == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 0.0);
  CHECK(r.tpr == r.sensitivity);  // Eq. 6 is Eq. 2
  CHECK(r.confusion.tp == 5);
  CHECK(r.confusion.fp == 5);
  CHECK(r.n == 10);
  CHECK(r.weighted_log_loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("report serialization") {
  MetricsReport r;
  r.sensitivity = 0.87;
  r.specificity = 0.991;
  r.ppv = std::nan("");
  r.tpr = 0.87;
  r.f1 = 0.9;
  r.accuracy = 0.97;
  r.weighted_log_loss = 0.21;
  r.confusion = {87, 9, 991, 13};
  r.n = 1100;
  r.threshold = 0.5;
  r.flags = {"ppv_undefined"};

  const std::string json = report_to_json(r);
  for (const char* key :
       {"\"sensitivity\"", "\"specificity\"", "\"ppv\"", "\"tpr\"", "\"f1\"",
        "\"accuracy\"", "\"weighted_log_loss\"", "\"tp\"", "\"fp\"", "\"tn\"",
        "\"fn\"", "\"n\"", "\"threshold\"", "\"flags\""})
    CHECK(json.find(key) != std::string::npos);
  CHECK(json.find("\"ppv\": null") != std::string::npos);  // NaN -> null

  const std::string text = confusion_text(r);
  for (const char* name : {"Sensitivity", "Specificity", "F1", "PPV"})
    CHECK(text.find(name) != std::string::npos);
  CHECK(text.find("87") != std::string::npos);
  CHECK(text.find("991") != std::string::npos);
}
