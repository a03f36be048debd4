#include "dcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dcnn/errors.hpp"
#include "dcnn/png_io.hpp"
#include "dcnn/rng.hpp"

namespace fs = std::filesystem;

namespace dcnn {

namespace {

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

void count_classes(LabeledDataset& ds) {
  ds.f_cancer = 0;
  ds.f_free = 0;
  for (const Sample& s : ds.samples) (s.label == 1 ? ds.f_cancer : ds.f_free)++;
}

}  // namespace

LabeledDataset load_dataset(const std::string& dir) {
  const fs::path csv_path = fs::path(dir) / "labels.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(csv, line) || strip_cr(line) != "id,filename,label")
    throw FormatError(csv_path.string() +
                      ": expected header \"id,filename,label\"");

  LabeledDataset ds;
  std::unordered_set<std::string> seen_ids;
  std::size_t row = 1;
  while (std::getline(csv, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, filename, label_str;
    if (!std::getline(fields, id, ',') ||
        !std::getline(fields, filename, ',') ||
        !std::getline(fields, label_str))
      throw FormatError(csv_path.string() + " row " + std::to_string(row) +
                        ": expected 3 fields");
    int label;
    if (label_str == "0")
      label = 0;
    else if (label_str == "1")
      label = 1;
    else
      throw FormatError(csv_path.string() + " row " + std::to_string(row) +
                        ": label must be 0 or 1, got \"" + label_str + "\"");
    if (!seen_ids.insert(id).second)
      throw FormatError(csv_path.string() + " row " + std::to_string(row) +
                        ": duplicate id \"" + id + "\"");

    const fs::path img_path = fs::path(dir) / filename;
    if (!fs::exists(img_path))
      throw IoError(csv_path.string() + " row " + std::to_string(row) +
                    ": missing image file \"" + filename + "\"");
    const GrayImage img = read_png_gray(img_path.string());
    Tensor image = Tensor::from_data(Shape{1, img.height, img.width},
                                     std::vector<float>(img.pixels));
    ds.samples.push_back({std::move(image), label, id});
  }
  count_classes(ds);
  return ds;
}

Tensor rescale(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.shape().rank() != 3 || image.shape()[0] != 1)
    throw ShapeError("rescale: image must be [1,H,W], got " +
                     image.shape().str());
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  if (h == out_h && w == out_w) return image;

  Tensor out = Tensor::zeros(Shape{1, out_h, out_w});
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double sy = out_h == 1 ? 0.0
                                 : static_cast<double>(oy) *
                                       static_cast<double>(h - 1) /
                                       static_cast<double>(out_h - 1);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double sx = out_w == 1 ? 0.0
                                   : static_cast<double>(ox) *
                                         static_cast<double>(w - 1) /
                                         static_cast<double>(out_w - 1);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double p00 = image[y0 * w + x0];
      const double p01 = image[y0 * w + x1];
      const double p10 = image[y1 * w + x0];
      const double p11 = image[y1 * w + x1];
      const double v = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) +
                       fy * ((1.0 - fx) * p10 + fx * p11);
      out[oy * out_w + ox] = static_cast<float>(v);
    }
  }
  return out;
}

namespace {

// Largest-remainder apportionment of `total` over per-class counts, so
// every class share is within one sample of exact proportionality.
std::vector<std::size_t> apportion(std::size_t total,
                                   const std::vector<std::size_t>& counts,
                                   std::size_t population) {
  const std::size_t k = counts.size();
  std::vector<std::size_t> share(k);
  std::vector<double> frac(k);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double ideal = static_cast<double>(total) *
                         static_cast<double>(counts[c]) /
                         static_cast<double>(population);
    share[c] = static_cast<std::size_t>(ideal);
    share[c] = std::min(share[c], counts[c]);
    frac[c] = ideal - static_cast<double>(share[c]);
    assigned += share[c];
  }
  while (assigned < total) {
    std::size_t best = k;
    for (std::size_t c = 0; c < k; ++c)
      if (share[c] < counts[c] && (best == k || frac[c] > frac[best]))
        best = c;
    if (best == k) break;  // callers guarantee total <= population
    ++share[best];
    frac[best] -= 1.0;
    ++assigned;
  }
  return share;
}

}  // namespace

SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec) {
  const std::size_t n = dataset.size();
  if (n < 4) throw ArgumentError("split: dataset must have at least 4 samples");
  if (spec.train_frac <= 0.0 || spec.val_frac <= 0.0 || spec.test_frac <= 0.0)
    throw ArgumentError("split: fractions must be positive");
  if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
    throw ArgumentError("split: fractions must sum to 1");

  const std::size_t n_train =
      static_cast<std::size_t>(spec.train_frac * static_cast<double>(n));
  const std::size_t n_trainval = static_cast<std::size_t>(
      (spec.train_frac + spec.val_frac) * static_cast<double>(n));
  const std::size_t n_val = n_trainval - n_train;

  std::vector<std::size_t> class_counts(2, 0);
  for (const Sample& s : dataset.samples)
    ++class_counts[static_cast<std::size_t>(s.label)];

  // Per-(split, class) quotas: train first, validation from the remainder,
  // test takes what is left. Largest remainder keeps every split within one
  // sample of the global class ratio.
  const auto train_quota = apportion(n_train, class_counts, n);
  std::vector<std::size_t> remaining(2);
  for (std::size_t c = 0; c < 2; ++c)
    remaining[c] = class_counts[c] - train_quota[c];
  auto val_quota = apportion(n_val, class_counts, n);
  for (std::size_t c = 0; c < 2; ++c)
    val_quota[c] = std::min(val_quota[c], remaining[c]);
  // top up if the caps above dropped below the target size
  {
    std::size_t assigned = val_quota[0] + val_quota[1];
    for (std::size_t c = 0; c < 2 && assigned < n_val; ++c)
      while (val_quota[c] < remaining[c] && assigned < n_val) {
        ++val_quota[c];
        ++assigned;
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = rng.next_u64() % (i + 1);
    std::swap(order[i], order[j]);
  }

  SplitResult result;
  std::vector<std::size_t> train_left = train_quota;
  std::vector<std::size_t> val_left = val_quota;
  for (const std::size_t idx : order) {
    const Sample& s = dataset.samples[idx];
    const std::size_t c = static_cast<std::size_t>(s.label);
    if (train_left[c] > 0) {
      --train_left[c];
      result.train.samples.push_back(s);
    } else if (val_left[c] > 0) {
      --val_left[c];
      result.val.samples.push_back(s);
    } else {
      result.test.samples.push_back(s);
    }
  }
  count_classes(result.train);
  count_classes(result.val);
  count_classes(result.test);

  for (std::size_t c = 0; c < 2; ++c) {
    if (class_counts[c] == 0) continue;
    const std::size_t in_test =
        class_counts[c] - train_quota[c] - val_quota[c];
    if (train_quota[c] == 0 || val_quota[c] == 0 || in_test == 0)
      result.stratification_warning = true;
  }
  return result;
}

LabeledDataset generate_synthetic(std::size_t n, std::size_t h, std::size_t w,
                                  std::uint64_t seed) {
  if (n < 2 || n % 2 != 0)
    throw ArgumentError("generate_synthetic: n must be even and >= 2");
  if (h < 24 || w < 24)
    throw ArgumentError(
        "generate_synthetic: image size must be at least 24x24 so the "
        "largest disk fits");

  Rng rng(seed);
  LabeledDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 1 : 0;
    Tensor image = Tensor::zeros(Shape{1, h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
      const double v = 0.3 + 0.1 * rng.next_normal();
      image[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    if (label == 1) {
      const double r = 4.0 + 6.0 * rng.next_double();
      const double cy = r + rng.next_double() * (static_cast<double>(h - 1) - 2.0 * r);
      const double cx = r + rng.next_double() * (static_cast<double>(w - 1) - 2.0 * r);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          if (dy * dy + dx * dx <= r * r) image[y * w + x] = 0.9f;
        }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06zu", i);
    ds.samples.push_back({std::move(image), label, id});
  }
  count_classes(ds);
  return ds;
}

void write_dataset(const LabeledDataset& dataset, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "labels.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write labels.csv in " + dir);
  csv << "id,filename,label\n";
  for (const Sample& s : dataset.samples) {
    const std::size_t h = s.image.shape()[1], w = s.image.shape()[2];
    std::vector<unsigned char> pixels(h * w);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const float v = std::clamp(s.image[i], 0.0f, 1.0f);
      pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    const std::string filename = s.id + ".png";
    write_png_gray8((fs::path(dir) / filename).string(), w, h, pixels);
    csv << s.id << "," << filename << "," << s.label << "\n";
  }
  if (!csv) throw IoError("failed writing labels.csv in " + dir);
}

}  // namespace dcnn
