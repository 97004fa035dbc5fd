#pragma once

#include <cstdint>
#include <vector>

#include "dagrnn/tensor.hpp"

namespace dagrnn {

// Per-pixel integer class assignments. 255 marks pixels excluded from
// frequencies, loss, and accuracy.
struct LabelMap {
  static constexpr uint8_t kIgnore = 255;

  int height = 0;
  int width = 0;
  std::vector<uint8_t> ids;  // row-major, height*width entries

  LabelMap() = default;
  LabelMap(int h, int w, uint8_t fill = kIgnore)
      : height(h), width(w), ids(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int i, int j) { return ids[static_cast<size_t>(i) * width + j]; }
  uint8_t at(int i, int j) const { return ids[static_cast<size_t>(i) * width + j]; }
  size_t size() const { return ids.size(); }
  bool operator==(const LabelMap&) const = default;
};

// Occurrence frequencies over the training set's non-ignored pixels.
struct ClassStats {
  std::vector<double> freq;  // indexed by class id, sums to 1
  int class_count() const { return static_cast<int>(freq.size()); }
};

struct ClassWeights {
  std::vector<double> w;
  double eta = 0.0;
  double k = 2.0;
};

// Pixel-weighted class frequencies across a set of label maps. At least one
// non-ignored pixel is required.
ClassStats class_frequencies(const std::vector<LabelMap>& maps, int class_count);

// Rare-class threshold from the mass rule: the non-rare classes are the
// maximal descending-frequency prefix whose accumulated frequency stays
// within `mass`. The threshold is the boundary class's frequency, rounded
// down to one significant decimal digit when the rounded value reproduces
// that prefix split exactly, and left raw otherwise. A single-class stats
// yields eta = 0 (everything frequent).
double compute_eta(const ClassStats& stats, double mass = 0.85);

// w_j = k^ceil(log10(eta / f_j)) for observed classes; classes with zero
// frequency get the maximum weight computed over observed classes.
ClassWeights class_weights(const ClassStats& stats, double eta, double k = 2.0);

struct LossResult {
  double loss = 0.0;
  Tensor d_logits;       // gradient w.r.t. pre-softmax logits, [H x W x C]
  size_t counted = 0;    // non-ignored pixels
  bool all_ignored = false;
};

// Average weighted cross entropy over non-ignored pixels.
//   L = -(1/N) sum_v w[y(v)] log o(v)[y(v)]
// probs is [H x W x C] with softmax rows; the returned gradient is taken
// w.r.t. the pre-softmax logits: (w[y]/N) * (o - onehot(y)) per pixel.
// log is clamped at log(1e-12).
LossResult weighted_ce_loss(const Tensor& probs, const LabelMap& labels,
                            const ClassWeights& weights);

}  // namespace dagrnn
