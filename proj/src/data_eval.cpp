#include "dagrnn/data_eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dagrnn/errors.hpp"
#include "dagrnn/rng.hpp"

namespace fs = std::filesystem;

namespace dagrnn {

namespace {

// --- PNM parsing helpers ---------------------------------------------------

struct PnmReader {
  std::ifstream in;
  std::string path;
  size_t offset = 0;

  explicit PnmReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw ParseError(p + ": cannot open file");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path + ": " + what + " at byte offset " +
                     std::to_string(offset));
  }

  int get() {
    const int ch = in.get();
    if (ch != EOF) ++offset;
    return ch;
  }

  // Skips whitespace and '#' comments between header tokens.
  void skip_separators() {
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        while (ch != EOF && ch != '\n') ch = get();
      } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  int read_int(const std::string& field) {
    skip_separators();
    int value = 0;
    bool any = false;
    while (std::isdigit(in.peek())) {
      value = value * 10 + (get() - '0');
      any = true;
    }
    if (!any) fail("expected integer for " + field);
    return value;
  }

  // magic, width, height, maxval, then the single separator byte before data.
  void read_header(const char* magic, int& width, int& height) {
    char m0 = static_cast<char>(get());
    char m1 = static_cast<char>(get());
    if (m0 != magic[0] || m1 != magic[1]) {
      offset = 0;
      fail(std::string("bad magic, expected ") + magic);
    }
    width = read_int("width");
    height = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval));
    const int sep = get();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') {
      fail("missing separator after header");
    }
    if (width < 1 || height < 1) fail("non-positive image extents");
  }

  std::vector<uint8_t> read_payload(size_t n) {
    std::vector<uint8_t> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) {
      offset += static_cast<size_t>(std::max<std::streamsize>(in.gcount(), 0));
      fail("truncated pixel data");
    }
    offset += n;
    return bytes;
  }
};

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw ParseError(path + ": write failed");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

// --- Beacon generator --------------------------------------------------------

Palette beacon_palette() {
  Palette p;
  p.entries = {
      {"body-a", {60, 120, 60}},
      {"body-b", {60, 60, 160}},
      {"beacon", {220, 40, 40}},
  };
  return p;
}

std::vector<Sample> gen_beacon_dataset(int count, int size, uint64_t seed) {
  if (size < 16) throw ConfigError("beacon images need size >= 16");
  Rng rng(seed);
  const int beacon = std::max(2, size / 8);
  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(count));

  for (int idx = 0; idx < count; ++idx) {
    // Alternating classes keep the two body frequencies exactly equal for
    // even counts.
    const bool left = idx % 2 == 0;
    Sample s;
    s.image = Tensor({static_cast<size_t>(size), static_cast<size_t>(size), 3});
    s.labels = LabelMap(size, size, left ? uint8_t{0} : uint8_t{1});

    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double level =
            static_cast<double>(rng.uniform_int(8)) / 7.0;
        for (int ch = 0; ch < 3; ++ch) {
          s.image.at(static_cast<size_t>(i), static_cast<size_t>(j),
                     static_cast<size_t>(ch)) = level;
        }
      }
    }
    const int col0 = left ? 0 : size - beacon;
    for (int i = 0; i < beacon; ++i) {
      for (int j = col0; j < col0 + beacon; ++j) {
        s.image.at(static_cast<size_t>(i), static_cast<size_t>(j), 0) = 1.0;
        s.image.at(static_cast<size_t>(i), static_cast<size_t>(j), 1) = 0.0;
        s.image.at(static_cast<size_t>(i), static_cast<size_t>(j), 2) = 0.0;
        s.labels.at(i, j) = 2;
      }
    }

    std::ostringstream id;
    id << "beacon_";
    id.width(4);
    id.fill('0');
    id << idx;
    s.id = id.str();
    samples.push_back(std::move(s));
  }
  return samples;
}

// --- Netpbm I/O --------------------------------------------------------------

Tensor load_image(const std::string& path) {
  PnmReader r(path);
  int width = 0, height = 0;
  r.read_header("P6", width, height);
  const auto bytes = r.read_payload(static_cast<size_t>(width) * height * 3);
  Tensor img({static_cast<size_t>(height), static_cast<size_t>(width), 3});
  for (size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] / 255.0;
  return img;
}

void save_image(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(2) != 3) {
    throw DimensionError("image must be [HxWx3], got " + image.shape_str());
  }
  std::ostringstream header;
  header << "P6\n" << image.extent(1) << ' ' << image.extent(0) << "\n255\n";
  std::vector<uint8_t> payload(image.size());
  for (size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    payload[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  write_bytes(path, header.str(), payload);
}

LabelMap load_labelmap(const std::string& path, int class_count) {
  PnmReader r(path);
  int width = 0, height = 0;
  r.read_header("P5", width, height);
  const auto bytes = r.read_payload(static_cast<size_t>(width) * height);
  LabelMap map(height, width);
  for (size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != LabelMap::kIgnore && bytes[i] >= class_count) {
      throw ValidationError(path + ": label id " + std::to_string(bytes[i]) +
                            " >= class count " + std::to_string(class_count));
    }
    map.ids[i] = bytes[i];
  }
  return map;
}

void save_labelmap(const std::string& path, const LabelMap& map) {
  std::ostringstream header;
  header << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  write_bytes(path, header.str(), map.ids);
}

void save_colorized(const std::string& path, const LabelMap& map,
                    const Palette& palette) {
  std::ostringstream header;
  header << "P6\n" << map.width << ' ' << map.height << "\n255\n";
  std::vector<uint8_t> payload(map.size() * 3, 0);
  for (size_t i = 0; i < map.size(); ++i) {
    const uint8_t id = map.ids[i];
    if (id == LabelMap::kIgnore) continue;  // ignore renders black
    if (id >= palette.class_count()) {
      throw ValidationError(path + ": label id " + std::to_string(id) +
                            " has no palette entry");
    }
    const auto& rgb = palette.entries[id].rgb;
    payload[i * 3 + 0] = rgb[0];
    payload[i * 3 + 1] = rgb[1];
    payload[i * 3 + 2] = rgb[2];
  }
  write_bytes(path, header.str(), payload);
}

// --- Dataset directory --------------------------------------------------------

Palette load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open palette");
  Palette p;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int id = 0, r = 0, g = 0, b = 0;
    std::string name;
    if (!(ls >> id >> name >> r >> g >> b)) {
      throw ParseError(path + ": bad palette line '" + line + "'");
    }
    if (id != p.class_count()) {
      throw ValidationError(path + ": palette ids must be dense from 0, got " +
                            std::to_string(id));
    }
    p.entries.push_back({name,
                         {static_cast<uint8_t>(r), static_cast<uint8_t>(g),
                          static_cast<uint8_t>(b)}});
  }
  if (p.entries.empty()) throw ConfigError(path + ": empty palette");
  return p;
}

Dataset load_dataset(const std::string& root) {
  const fs::path base(root);
  if (!fs::exists(base / "split.txt")) {
    throw ConfigError(root + ": missing split.txt (not a dataset directory?)");
  }
  Dataset ds;
  ds.palette = load_palette((base / "palette.txt").string());

  std::ifstream split(base / "split.txt");
  std::string line;
  while (std::getline(split, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, part;
    if (!(ls >> id >> part) || (part != "train" && part != "test")) {
      throw ParseError(root + "/split.txt: bad line '" + line + "'");
    }
    Sample s;
    s.id = id;
    s.image = load_image((base / "images" / (id + ".ppm")).string());
    s.labels = load_labelmap((base / "labels" / (id + ".pgm")).string(),
                             ds.palette.class_count());
    if (static_cast<int>(s.image.extent(0)) != s.labels.height ||
        static_cast<int>(s.image.extent(1)) != s.labels.width) {
      throw ValidationError(id + ": image and label extents differ");
    }
    (part == "train" ? ds.train : ds.test).push_back(std::move(s));
  }
  if (ds.train.empty() && ds.test.empty()) {
    throw ConfigError(root + ": split.txt lists no samples");
  }
  return ds;
}

void write_dataset(const std::string& root, const std::vector<Sample>& samples,
                   const Palette& palette, size_t train_count) {
  const fs::path base(root);
  fs::create_directories(base / "images");
  fs::create_directories(base / "labels");

  std::ofstream pal(base / "palette.txt");
  for (int id = 0; id < palette.class_count(); ++id) {
    const auto& e = palette.entries[static_cast<size_t>(id)];
    pal << id << ' ' << e.name << ' ' << int(e.rgb[0]) << ' ' << int(e.rgb[1])
        << ' ' << int(e.rgb[2]) << '\n';
  }

  std::ofstream split(base / "split.txt");
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    save_image((base / "images" / (s.id + ".ppm")).string(), s.image);
    save_labelmap((base / "labels" / (s.id + ".pgm")).string(), s.labels);
    split << s.id << ' ' << (i < train_count ? "train" : "test") << '\n';
  }
}

// --- Metrics --------------------------------------------------------------------

std::vector<double> EvalResult::recalls() const {
  std::vector<double> out(confusion.size(), -1.0);
  for (size_t j = 0; j < confusion.size(); ++j) {
    int64_t row = 0;
    for (int64_t v : confusion[j]) row += v;
    if (row > 0) out[j] = static_cast<double>(confusion[j][j]) / static_cast<double>(row);
  }
  return out;
}

double EvalResult::subset_accuracy(const std::vector<int>& classes) const {
  int64_t correct = 0, total = 0;
  for (int j : classes) {
    for (int64_t v : confusion[static_cast<size_t>(j)]) total += v;
    correct += confusion[static_cast<size_t>(j)][static_cast<size_t>(j)];
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

EvalResult evaluate(const std::vector<LabelMap>& predictions,
                    const std::vector<LabelMap>& truths, int class_count) {
  if (predictions.size() != truths.size()) {
    throw ContractError("evaluate: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(truths.size()) +
                        " truths");
  }
  EvalResult r;
  r.confusion.assign(static_cast<size_t>(class_count),
                     std::vector<int64_t>(static_cast<size_t>(class_count), 0));
  for (size_t i = 0; i < truths.size(); ++i) {
    const LabelMap& t = truths[i];
    const LabelMap& p = predictions[i];
    if (t.height != p.height || t.width != p.width) {
      throw ContractError("evaluate: extents differ at pair " + std::to_string(i));
    }
    for (size_t pix = 0; pix < t.size(); ++pix) {
      const uint8_t y = t.ids[pix];
      if (y == LabelMap::kIgnore) continue;
      const uint8_t q = p.ids[pix];
      if (y >= class_count || q >= class_count) {
        throw ValidationError("evaluate: label id out of range");
      }
      ++r.confusion[y][q];
    }
  }

  int64_t correct = 0, total = 0;
  double recall_sum = 0.0;
  int present = 0;
  for (int j = 0; j < class_count; ++j) {
    int64_t row = 0;
    for (int64_t v : r.confusion[static_cast<size_t>(j)]) row += v;
    correct += r.confusion[static_cast<size_t>(j)][static_cast<size_t>(j)];
    total += row;
    if (row > 0) {
      recall_sum += static_cast<double>(
                        r.confusion[static_cast<size_t>(j)][static_cast<size_t>(j)]) /
                    static_cast<double>(row);
      ++present;
    }
  }
  r.global_accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  r.class_accuracy = present > 0 ? recall_sum / present : 0.0;
  return r;
}

}  // namespace dagrnn
