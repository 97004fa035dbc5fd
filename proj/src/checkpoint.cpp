#include <cstring>
#include <fstream>
#include <sstream>

#include "dagrnn/errors.hpp"
#include "dagrnn/trainer.hpp"

namespace dagrnn {

namespace {

constexpr char kMagic[] = "DAGRNN1";
constexpr int kVersion = 1;

void write_double_le(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_double_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (size_t e : t.shape()) out << ' ' << e;
  out << '\n';
  for (size_t i = 0; i < t.size(); ++i) write_double_le(out, t[i]);
}

std::string read_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(path + ": truncated checkpoint");
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const FullNetwork& net,
                     const OptimizerState& state,
                     const std::map<std::string, std::string>& config_echo) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(path + ": cannot open for writing");
  out << kMagic << '\n' << "version " << kVersion << '\n';
  for (const auto& [key, value] : config_echo) {
    out << "config " << key << ' ' << value << '\n';
  }
  std::ostringstream eta;
  eta.precision(17);
  eta << net.weights.eta;
  out << "config weights.eta " << eta.str() << '\n';
  std::ostringstream kk;
  kk.precision(17);
  kk << net.weights.k;
  out << "config weights.k " << kk.str() << '\n';
  out << "end_config\n";
  out << "epoch " << state.epoch << '\n';

  for (const auto& [name, t] : net.parameters()) write_tensor(out, name, *t);
  write_tensor(out, "class_weights",
               Tensor({net.weights.w.size()}, net.weights.w));
  for (const auto& [name, v] : state.velocity) write_tensor(out, "vel." + name, v);
  out << "end\n";
  if (!out) throw CheckpointError(path + ": write failed");
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open checkpoint");
  CheckpointMeta meta;
  if (read_line(in, path) != kMagic) {
    throw CheckpointError(path + ": bad magic (expected " + kMagic + ")");
  }
  std::istringstream vline(read_line(in, path));
  std::string word;
  int version = 0;
  if (!(vline >> word >> version) || word != "version" || version != kVersion) {
    throw CheckpointError(path + ": unsupported checkpoint version");
  }
  for (;;) {
    const std::string line = read_line(in, path);
    if (line == "end_config") break;
    std::istringstream ls(line);
    std::string tag, key;
    if (!(ls >> tag >> key) || tag != "config") {
      throw CheckpointError(path + ": malformed config line '" + line + "'");
    }
    std::string value;
    std::getline(ls, value);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    meta.config[key] = value;
  }
  std::istringstream eline(read_line(in, path));
  if (!(eline >> word >> meta.epoch) || word != "epoch") {
    throw CheckpointError(path + ": missing epoch record");
  }
  return meta;
}

CheckpointMeta load_checkpoint(const std::string& path, FullNetwork& net,
                               OptimizerState& state) {
  const CheckpointMeta meta = read_checkpoint_meta(path);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open checkpoint");
  // Skip past the header that read_checkpoint_meta validated.
  for (;;) {
    if (read_line(in, path) == "end_config") break;
  }
  read_line(in, path);  // epoch line
  state.epoch = meta.epoch;

  std::map<std::string, Tensor*> params;
  for (auto& [name, t] : net.parameters()) params[name] = t;

  for (;;) {
    const std::string line = read_line(in, path);
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tag, name;
    size_t rank = 0;
    if (!(ls >> tag >> name >> rank) || tag != "tensor") {
      throw CheckpointError(path + ": malformed section header '" + line + "'");
    }
    std::vector<size_t> shape(rank);
    size_t count = 1;
    for (size_t i = 0; i < rank; ++i) {
      if (!(ls >> shape[i])) {
        throw CheckpointError(path + ": malformed shape in section " + name);
      }
      count *= shape[i];
    }
    Tensor payload(shape);
    for (size_t i = 0; i < count; ++i) payload[i] = read_double_le(in);
    if (!in) throw CheckpointError(path + ": truncated payload in section " + name);

    if (name == "class_weights") {
      if (payload.size() != static_cast<size_t>(net.config.class_count)) {
        throw CheckpointError(path + ": class_weights " + payload.shape_str() +
                              " does not match class count " +
                              std::to_string(net.config.class_count));
      }
      net.weights.w.assign(payload.data(), payload.data() + payload.size());
    } else if (name.rfind("vel.", 0) == 0) {
      const std::string pname = name.substr(4);
      const auto it = params.find(pname);
      if (it == params.end() || !payload.same_shape(*it->second)) {
        throw CheckpointError(path + ": velocity " + name + " shape " +
                              payload.shape_str() + " does not match network");
      }
      state.velocity[pname] = std::move(payload);
    } else {
      const auto it = params.find(name);
      if (it == params.end()) {
        throw CheckpointError(path + ": unknown parameter section " + name);
      }
      if (!payload.same_shape(*it->second)) {
        throw CheckpointError(path + ": parameter " + name + " shape " +
                              payload.shape_str() + " does not match network " +
                              it->second->shape_str());
      }
      *it->second = std::move(payload);
    }
  }

  const auto eta = meta.config.find("weights.eta");
  if (eta != meta.config.end()) net.weights.eta = std::stod(eta->second);
  const auto k = meta.config.find("weights.k");
  if (k != meta.config.end()) net.weights.k = std::stod(k->second);
  return meta;
}

}  // namespace dagrnn
