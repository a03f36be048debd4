#include "dcnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dcnn/errors.hpp"

namespace dcnn {

namespace {

constexpr double kProbClip = 1e-15;

double undefined() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

ConfusionMatrix confusion(std::span<const int> preds,
                          std::span<const int> labels) {
  if (preds.size() != labels.size())
    throw ArgumentError("confusion: " + std::to_string(preds.size()) +
                        " predictions vs " + std::to_string(labels.size()) +
                        " labels");
  if (preds.empty()) throw ArgumentError("confusion: empty inputs");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1))
      throw ArgumentError("confusion: entries must be 0 or 1");
    if (labels[i] == 1)
      (preds[i] == 1 ? cm.tp : cm.fn)++;
    else
      (preds[i] == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

double sensitivity(const ConfusionMatrix& cm) {
  const std::uint64_t denom = cm.tp + cm.fn;
  if (denom == 0) return undefined();
  return static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double specificity(const ConfusionMatrix& cm) {
  const std::uint64_t denom = cm.tn + cm.fp;
  if (denom == 0) return undefined();
  return static_cast<double>(cm.tn) / static_cast<double>(denom);
}

double ppv(const ConfusionMatrix& cm) {
  const std::uint64_t denom = cm.tp + cm.fp;
  if (denom == 0) return undefined();
  return static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double f1_score(double ppv_value, double tpr_value) {
  if (std::isnan(ppv_value) || std::isnan(tpr_value)) return undefined();
  if (ppv_value == 0.0 && tpr_value == 0.0) return undefined();
  return 2.0 * ppv_value * tpr_value / (ppv_value + tpr_value);
}

WeightedLogLossResult weighted_log_loss(const Tensor& probs,
                                        std::span<const int> labels) {
  if (probs.shape().rank() != 2 || probs.shape()[1] != 2)
    throw ShapeError("weighted_log_loss: probs must be [N,2], got " +
                     probs.shape().str());
  const std::size_t n = probs.shape()[0];
  if (n == 0 || labels.size() != n)
    throw ArgumentError("weighted_log_loss: labels do not match probs rows");

  std::size_t n_cancer = 0;
  for (int label : labels) {
    if (label != 0 && label != 1)
      throw ArgumentError("weighted_log_loss: labels must be 0 or 1");
    if (label == 1) ++n_cancer;
  }
  const std::size_t n_free = n - n_cancer;

  WeightedLogLossResult result;
  result.weight_defined = n_cancer > 0 && n_free > 0;
  const double cancer_weight =
      result.weight_defined
          ? static_cast<double>(n_free) / static_cast<double>(n_cancer)
          : 1.0;

  double weighted_sum = 0.0, plain_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(
        static_cast<double>(probs[i * 2 + static_cast<std::size_t>(labels[i])]),
        kProbClip, 1.0 - kProbClip);
    const double term = -std::log(q);
    plain_sum += term;
    weighted_sum += (labels[i] == 1 ? cancer_weight : 1.0) * term;
  }
  result.unweighted = plain_sum / static_cast<double>(n);
  result.value = result.weight_defined
                     ? weighted_sum / static_cast<double>(n)
                     : result.unweighted;
  return result;
}

MetricsReport evaluate(const Network& net, const LabeledDataset& dataset,
                       double threshold) {
  if (dataset.size() == 0) throw ArgumentError("evaluate: empty dataset");

  const std::size_t n = dataset.size();
  const std::size_t h = net.config().input_h, w = net.config().input_w;
  Tensor probs = Tensor::zeros(Shape{n, 2});
  std::vector<int> labels(n), preds(n);

  const std::size_t chunk = 64;
  for (std::size_t base = 0; base < n; base += chunk) {
    const std::size_t count = std::min(chunk, n - base);
    Tensor batch = Tensor::zeros(Shape{count, 1, h, w});
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& s = dataset.samples[base + i];
      if (s.image.shape() != Shape{1, h, w})
        throw ShapeError("evaluate: sample \"" + s.id + "\" has shape " +
                         s.image.shape().str() + ", expected [1, " +
                         std::to_string(h) + ", " + std::to_string(w) + "]");
      std::memcpy(batch.data() + i * h * w, s.image.data(),
                  h * w * sizeof(float));
      labels[base + i] = s.label;
    }
    const ForwardTrace trace = net.forward(batch);
    std::memcpy(probs.data() + base * 2, trace.probs.data(),
                count * 2 * sizeof(float));
  }

  for (std::size_t i = 0; i < n; ++i)
    preds[i] = static_cast<double>(probs[i * 2 + 1]) >= threshold ? 1 : 0;

  MetricsReport report;
  report.confusion = confusion(preds, labels);
  report.sensitivity = sensitivity(report.confusion);
  report.specificity = specificity(report.confusion);
  report.ppv = ppv(report.confusion);
  report.tpr = report.sensitivity;
  report.f1 = f1_score(report.ppv, report.tpr);
  report.accuracy =
      static_cast<double>(report.confusion.tp + report.confusion.tn) /
      static_cast<double>(n);
  const WeightedLogLossResult wll = weighted_log_loss(probs, labels);
  report.weighted_log_loss = wll.value;
  report.n = n;
  report.f_cancer = static_cast<std::size_t>(report.confusion.tp +
                                             report.confusion.fn);
  report.f_free = static_cast<std::size_t>(report.confusion.tn +
                                           report.confusion.fp);
  report.threshold = threshold;

  if (std::isnan(report.sensitivity)) report.flags.push_back("sensitivity_undefined");
  if (std::isnan(report.specificity)) report.flags.push_back("specificity_undefined");
  if (std::isnan(report.ppv)) report.flags.push_back("ppv_undefined");
  if (std::isnan(report.f1)) report.flags.push_back("f1_undefined");
  if (!wll.weight_defined)
    report.flags.push_back("weighted_log_loss_unweighted_fallback");
  return report;
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["sensitivity"] = r.sensitivity;
  j["specificity"] = r.specificity;
  j["ppv"] = r.ppv;
  j["tpr"] = r.tpr;
  j["f1"] = r.f1;
  j["accuracy"] = r.accuracy;
  j["weighted_log_loss"] = r.weighted_log_loss;
  j["tp"] = r.confusion.tp;
  j["fp"] = r.confusion.fp;
  j["tn"] = r.confusion.tn;
  j["fn"] = r.confusion.fn;
  j["n"] = r.n;
  j["threshold"] = r.threshold;
  j["flags"] = r.flags;
  return j.dump(2);
}

std::string confusion_text(const MetricsReport& r) {
  std::ostringstream os;
  const auto fmt = [](double v) {
    if (std::isnan(v)) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  os << "Confusion matrix (threshold " << fmt(r.threshold) << ", n = " << r.n
     << ")\n";
  os << "                      predicted cancer   predicted cancer-free\n";
  char line[96];
  std::snprintf(line, sizeof(line), "actual cancer       %15llu %21llu\n",
                static_cast<unsigned long long>(r.confusion.tp),
                static_cast<unsigned long long>(r.confusion.fn));
  os << line;
  std::snprintf(line, sizeof(line), "actual cancer-free  %15llu %21llu\n",
                static_cast<unsigned long long>(r.confusion.fp),
                static_cast<unsigned long long>(r.confusion.tn));
  os << line;
  os << "Sensitivity " << fmt(r.sensitivity) << " | Specificity "
     << fmt(r.specificity) << " | PPV " << fmt(r.ppv) << " | F1 " << fmt(r.f1)
     << "\n";
  os << "Accuracy " << fmt(r.accuracy) << " | Weighted log-loss "
     << fmt(r.weighted_log_loss) << "\n";
  return os.str();
}

}  // namespace dcnn
