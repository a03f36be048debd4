#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/tensor.hpp"

namespace dcnn {

/// One labeled grayscale image; label 1 = cancer, 0 = cancer-free.
struct Sample {
  Tensor image;  // [1, H, W], values in [0, 1]
  int label = 0;
  std::string id;
};

struct LabeledDataset {
  std::vector<Sample> samples;
  std::size_t f_cancer = 0;  // count of label-1 samples
  std::size_t f_free = 0;    // count of label-0 samples

  std::size_t size() const { return samples.size(); }
};

/// 50/25/25 by default; fractions must be positive and sum to 1 (1e-9).
struct SplitSpec {
  double train_frac = 0.50;
  double val_frac = 0.25;
  double test_frac = 0.25;
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  /// Set when some split received zero samples of a class that exists in
  /// the full dataset.
  bool stratification_warning = false;
};

/// Loads `labels.csv` (header `id,filename,label`) plus the referenced
/// grayscale PNGs from `dir`. Sample order equals CSV order; errors name
/// the offending row or file.
LabeledDataset load_dataset(const std::string& dir);

/// Corner-aligned bilinear resampling of a [1,H,W] image. A matching
/// target size returns the input bitwise; outputs never leave the input's
/// value range. Source coordinate of output x: x * (W-1) / (outW-1).
Tensor rescale(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Seeded stratified partition with cuts at floor(train*N) and
/// floor((train+val)*N). Each split's class ratio stays within one sample
/// of the global ratio; the three parts are disjoint and exhaustive.
SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec);

/// Desk-scale synthetic stand-in for the CT corpus: n/2 "cancer" images
/// (Gaussian background noise around 0.3, sigma 0.1, plus one bright disk
/// of radius U[4,10] px at intensity 0.9) and n/2 noise-only images.
/// A max-pixel threshold separates the classes at > 99% accuracy, so a
/// training run on this data measures the engine, not the data.
LabeledDataset generate_synthetic(std::size_t n, std::size_t h, std::size_t w,
                                  std::uint64_t seed);

/// Writes 8-bit PNGs plus labels.csv in the load_dataset layout.
void write_dataset(const LabeledDataset& dataset, const std::string& dir);

}  // namespace dcnn
