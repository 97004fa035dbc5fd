#pragma once

#include <array>
#include <string>
#include <vector>

#include "dagrnn/objective.hpp"
#include "dagrnn/tensor.hpp"

namespace dagrnn {

// One image/label pair. Image values live in [0, 1].
struct Sample {
  Tensor image;     // [H x W x 3]
  LabelMap labels;  // same extents
  std::string id;
};

struct PaletteEntry {
  std::string name;
  std::array<uint8_t, 3> rgb{0, 0, 0};
};

// Class id -> (name, display color); ids dense in [0, C).
struct Palette {
  std::vector<PaletteEntry> entries;
  int class_count() const { return static_cast<int>(entries.size()); }
};

struct EvalResult {
  double global_accuracy = 0.0;
  double class_accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [truth][pred]

  // Per-class recall; negative when the class has no ground-truth pixels.
  std::vector<double> recalls() const;
  // Global accuracy restricted to ground-truth pixels of the given classes.
  double subset_accuracy(const std::vector<int>& classes) const;
};

// --- Synthetic beacon dataset -------------------------------------------
// Every image is a shared noise texture (uniform, quantized to 8 gray
// levels) carrying a small solid-color beacon patch in the top-left or
// top-right corner. The body's class (0 or 1) is determined solely by which
// corner holds the beacon; beacon pixels are class 2. Body windows away from
// the beacon are statistically identical across the two classes, so labeling
// the body requires propagating the corner evidence.
inline constexpr int kBeaconClassCount = 3;

std::vector<Sample> gen_beacon_dataset(int count, int size, uint64_t seed);
Palette beacon_palette();

// --- Netpbm I/O ----------------------------------------------------------
// Images are binary PPM (P6, 8-bit); label maps binary PGM (P5, 8-bit) with
// 255 = ignore. Parse failures throw ParseError naming the byte offset.
Tensor load_image(const std::string& path);
void save_image(const std::string& path, const Tensor& image);
LabelMap load_labelmap(const std::string& path, int class_count);
void save_labelmap(const std::string& path, const LabelMap& map);
void save_colorized(const std::string& path, const LabelMap& map,
                    const Palette& palette);

// --- Dataset directory ----------------------------------------------------
// Layout: images/<id>.ppm, labels/<id>.pgm, palette.txt ("id name r g b"
// lines), split.txt ("<id> train|test" lines).
struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
  Palette palette;
};

Dataset load_dataset(const std::string& root);
void write_dataset(const std::string& root, const std::vector<Sample>& samples,
                   const Palette& palette, size_t train_count);

Palette load_palette(const std::string& path);

// --- Metrics ---------------------------------------------------------------
// Global accuracy and unweighted mean per-class recall over classes with at
// least one ground-truth pixel. Ignored truth pixels are excluded everywhere.
EvalResult evaluate(const std::vector<LabelMap>& predictions,
                    const std::vector<LabelMap>& truths, int class_count);

}  // namespace dagrnn
