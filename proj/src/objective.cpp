#include "dagrnn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dagrnn/errors.hpp"

namespace dagrnn {

namespace {

constexpr double kLogClamp = -27.631021115928547;  // log(1e-12)

// Largest d * 10^e <= x with a single leading digit d in 1..9. Values that
// already have one significant digit come back unchanged.
double round_down_one_significant(double x) {
  const int e = static_cast<int>(std::floor(std::log10(x)));
  const double scale = std::pow(10.0, e);
  int d = static_cast<int>(std::floor(x / scale + 1e-12));
  if (d < 1) d = 1;
  if (d > 9) d = 9;
  double cand = d * scale;
  if (std::abs(cand - x) <= 1e-12 * x) return x;
  if (cand > x) cand = d > 1 ? (d - 1) * scale : x;
  return cand;
}

std::vector<bool> rare_split(const ClassStats& stats, double eta) {
  std::vector<bool> rare(stats.freq.size());
  for (size_t j = 0; j < stats.freq.size(); ++j) rare[j] = stats.freq[j] < eta;
  return rare;
}

}  // namespace

ClassStats class_frequencies(const std::vector<LabelMap>& maps, int class_count) {
  if (maps.empty()) throw ConfigError("class_frequencies: empty dataset");
  std::vector<size_t> counts(static_cast<size_t>(class_count), 0);
  size_t total = 0;
  for (const LabelMap& m : maps) {
    for (uint8_t id : m.ids) {
      if (id == LabelMap::kIgnore) continue;
      if (id >= class_count) {
        throw ValidationError("label id " + std::to_string(id) +
                              " >= class count " + std::to_string(class_count));
      }
      ++counts[id];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("class_frequencies: no labeled pixels");
  ClassStats stats;
  stats.freq.resize(counts.size());
  for (size_t j = 0; j < counts.size(); ++j) {
    stats.freq[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
  }
  return stats;
}

double compute_eta(const ClassStats& stats, double mass) {
  const size_t c = stats.freq.size();
  if (c <= 1) return 0.0;

  std::vector<size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return stats.freq[a] > stats.freq[b];
  });

  size_t prefix = 0;
  double cum = 0.0;
  while (prefix < c && cum + stats.freq[order[prefix]] <= mass) {
    cum += stats.freq[order[prefix]];
    ++prefix;
  }
  if (prefix == 0) prefix = 1;  // a dominant head class is always frequent
  if (prefix == c) {
    // Nothing is rare; the least frequent class's own frequency is the
    // threshold that expresses that.
    return stats.freq[order[c - 1]];
  }

  const double boundary = stats.freq[order[prefix - 1]];
  std::vector<bool> prefix_rare(c, true);
  for (size_t i = 0; i < prefix; ++i) prefix_rare[order[i]] = false;

  const double rounded = round_down_one_significant(boundary);
  if (rare_split(stats, rounded) == prefix_rare) return rounded;
  return boundary;
}

ClassWeights class_weights(const ClassStats& stats, double eta, double k) {
  if (eta <= 0.0) throw ConfigError("class weighting requires eta > 0");
  ClassWeights cw;
  cw.eta = eta;
  cw.k = k;
  cw.w.assign(stats.freq.size(), 0.0);
  double max_weight = 0.0;
  for (size_t j = 0; j < stats.freq.size(); ++j) {
    const double f = stats.freq[j];
    if (f <= 0.0) continue;
    const double r = std::log10(eta / f);
    const double nearest = std::round(r);
    const double exponent =
        std::abs(r - nearest) < 1e-9 ? nearest : std::ceil(r);
    cw.w[j] = std::pow(k, exponent);
    max_weight = std::max(max_weight, cw.w[j]);
  }
  if (max_weight == 0.0) throw ConfigError("class weighting saw no observed class");
  for (size_t j = 0; j < cw.w.size(); ++j) {
    if (stats.freq[j] <= 0.0) cw.w[j] = max_weight;
  }
  return cw;
}

LossResult weighted_ce_loss(const Tensor& probs, const LabelMap& labels,
                            const ClassWeights& weights) {
  if (probs.rank() != 3 || static_cast<int>(probs.extent(0)) != labels.height ||
      static_cast<int>(probs.extent(1)) != labels.width) {
    throw DimensionError("probability map " + probs.shape_str() +
                         " does not match label extents " +
                         std::to_string(labels.height) + "x" +
                         std::to_string(labels.width));
  }
  const size_t c = probs.extent(2);
  if (weights.w.size() != c) {
    throw DimensionError("weight vector has " + std::to_string(weights.w.size()) +
                         " classes, probabilities have " + std::to_string(c));
  }

  LossResult r;
  r.d_logits = Tensor(probs.shape());
  size_t n = 0;
  for (uint8_t id : labels.ids) {
    if (id != LabelMap::kIgnore) ++n;
  }
  r.counted = n;
  if (n == 0) {
    r.all_ignored = true;
    return r;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double* o = probs.data();
  double* g = r.d_logits.data();
  double loss = 0.0;
  for (size_t pix = 0; pix < labels.size(); ++pix) {
    const uint8_t y = labels.ids[pix];
    if (y == LabelMap::kIgnore) continue;
    const double wy = weights.w[y];
    const double* row = o + pix * c;
    double* grow = g + pix * c;
    const double log_p = std::max(std::log(row[y]), kLogClamp);
    loss -= wy * log_p;
    const double scale = wy * inv_n;
    for (size_t j = 0; j < c; ++j) grow[j] = scale * row[j];
    grow[y] -= scale;
  }
  r.loss = loss * inv_n;
  return r;
}

}  // namespace dagrnn
