#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dagrnn/config.hpp"
#include "dagrnn/data_eval.hpp"
#include "dagrnn/errors.hpp"
#include "dagrnn/objective.hpp"
#include "dagrnn/rng.hpp"
#include "dagrnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace dagrnn;

namespace {

// Stable exit codes: 0 ok, 2 usage/config, 3 dataset, 4 checkpoint, 5 pairing.
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitPairing = 5;

// Collects raw option strings so file values and flag values funnel through
// one validator (RunConfig::apply) with flag > file > default precedence.
struct OptionSet {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> opts;
  std::string config_path;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& desc, const std::string& default_value) {
    values[key] = default_value;
    opts[key] = cmd->add_option(flag, values[key], desc)->capture_default_str();
  }

  void add_bool(CLI::App* cmd, const std::string& flag, const std::string& key,
                const std::string& desc) {
    values[key] = "false";
    opts[key] = cmd->add_flag_callback(
        flag, [this, key] { values[key] = "true"; }, desc + " (default: false)");
  }

  void add_config_option(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key/value config file");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      for (const auto& [key, value] : parse_config_file(config_path)) {
        cfg.apply(key, value);
      }
    }
    for (const auto& [key, opt] : opts) {
      if (opt->count() > 0) cfg.apply(key, values.at(key));
    }
    return cfg;
  }
};

void add_model_options(CLI::App* cmd, OptionSet& o) {
  RunConfig d;
  o.add(cmd, "--preset", "preset", "network preset (tiny|cnn65)", d.preset);
  o.add(cmd, "--neighborhood", "neighborhood", "grid neighborhood system (4|8)",
        std::to_string(d.neighborhood));
  o.add(cmd, "--hidden-dim", "hidden_dim", "hidden state size (0 = preset default)",
        std::to_string(d.hidden_dim));
  o.add(cmd, "--class-count", "class_count", "class count (0 = palette/preset default)",
        std::to_string(d.class_count));
  o.add(cmd, "--seed", "seed", "master random seed", std::to_string(d.seed));
}

void add_train_options(CLI::App* cmd, OptionSet& o) {
  RunConfig d;
  o.add(cmd, "--eta", "eta", "rare-class threshold, fraction or 'auto' (85%-15% rule)", d.eta);
  o.add(cmd, "--k", "k", "rare-class weighting base", "2");
  o.add(cmd, "--epochs", "epochs", "training epochs", std::to_string(d.epochs));
  o.add(cmd, "--schedule", "schedule",
        "lr schedule (per-epoch-after-10|per-10-epochs)", d.schedule);
  o.add(cmd, "--momentum", "momentum", "SGD momentum coefficient", "0.9");
  o.add(cmd, "--lr", "lr", "base learning rate", "0.001");
  o.add(cmd, "--clip", "clip", "max gradient norm (0 = off)", "0");
  o.add_bool(cmd, "--freeze-conv", "freeze_conv", "do not update the conv stage");
  o.add_bool(cmd, "--no-recurrence", "no_recurrence",
             "ablate recurrence (every W_d pinned at zero)");
}

Palette default_palette(int class_count) {
  Palette p;
  for (int i = 0; i < class_count; ++i) {
    // Spread hues deterministically.
    const uint8_t r = static_cast<uint8_t>((i * 97 + 31) % 256);
    const uint8_t g = static_cast<uint8_t>((i * 57 + 101) % 256);
    const uint8_t b = static_cast<uint8_t>((i * 193 + 53) % 256);
    p.entries.push_back({"class" + std::to_string(i), {r, g, b}});
  }
  return p;
}

FullNetwork network_from_config(const RunConfig& cfg) {
  return build_network(cfg.net_config(), cfg.neighborhood_enum(), cfg.seed,
                       cfg.no_recurrence);
}

int cmd_train(const OptionSet& options, const std::string& log_path) {
  RunConfig cfg;
  try {
    cfg = options.resolve();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Dataset ds;
  try {
    ds = load_dataset(cfg.data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  if (ds.train.empty()) {
    std::cerr << "error: " << cfg.data << " has no training samples\n";
    return kExitData;
  }
  if (cfg.class_count == 0) cfg.class_count = ds.palette.class_count();

  FullNetwork net = network_from_config(cfg);
  std::vector<LabelMap> train_labels;
  train_labels.reserve(ds.train.size());
  for (const Sample& s : ds.train) train_labels.push_back(s.labels);
  const ClassStats stats = class_frequencies(train_labels, net.config.class_count);
  double eta;
  if (cfg.eta == "auto") {
    eta = compute_eta(stats);
  } else {
    eta = std::stod(cfg.eta);
  }
  if (eta > 0.0) {
    net.weights = class_weights(stats, eta, cfg.k);
  }

  OptimizerState state;
  const TrainLog log = train(net, ds.train, cfg.train_options(), state);
  save_checkpoint(cfg.checkpoint, net, state, cfg.echo());

  const std::string tsv = log.to_tsv();
  std::ofstream out(log_path.empty() ? cfg.checkpoint + ".log" : log_path,
                    std::ios::trunc);
  out << tsv;
  std::cout << tsv;
  std::cout << "checkpoint written to " << cfg.checkpoint << '\n';
  return 0;
}

int cmd_predict(const OptionSet& options, const std::string& ckpt_path,
                const std::string& out_dir, const std::string& palette_path,
                const std::vector<std::string>& images) {
  FullNetwork net;
  try {
    const CheckpointMeta meta = read_checkpoint_meta(ckpt_path);
    const RunConfig cfg = RunConfig::from_echo(meta.config);
    net = network_from_config(cfg);
    OptimizerState state;
    load_checkpoint(ckpt_path, net, state);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  }
  (void)options;

  Palette palette = palette_path.empty()
                        ? default_palette(net.config.class_count)
                        : load_palette(palette_path);
  fs::create_directories(out_dir);
  for (const std::string& path : images) {
    const Tensor image = load_image(path);
    const LabelMap labels = predict_labels(net, image);
    const std::string stem = fs::path(path).stem().string();
    save_labelmap((fs::path(out_dir) / (stem + ".pgm")).string(), labels);
    save_colorized((fs::path(out_dir) / (stem + "_color.ppm")).string(), labels,
                   palette);
    std::cout << stem << ": " << labels.width << "x" << labels.height
              << " labels written\n";
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir,
             int class_count, const std::string& palette_path) {
  auto list_pgm = [](const std::string& dir) {
    std::set<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".pgm") ids.insert(entry.path().stem().string());
    }
    return ids;
  };
  if (!fs::is_directory(pred_dir) || !fs::is_directory(truth_dir)) {
    std::cerr << "error: prediction/truth directories must exist\n";
    return kExitData;
  }
  const auto pred_ids = list_pgm(pred_dir);
  const auto truth_ids = list_pgm(truth_dir);
  std::vector<std::string> paired, unpaired;
  for (const auto& id : pred_ids) {
    (truth_ids.count(id) ? paired : unpaired).push_back(id);
  }
  for (const auto& id : truth_ids) {
    if (!pred_ids.count(id)) unpaired.push_back(id);
  }
  if (paired.empty() || !unpaired.empty()) {
    std::cerr << "error: unpaired label maps:";
    if (paired.empty()) std::cerr << " (no common ids)";
    for (const auto& id : unpaired) std::cerr << ' ' << id;
    std::cerr << '\n';
    return kExitPairing;
  }

  Palette palette;
  if (!palette_path.empty()) {
    palette = load_palette(palette_path);
    if (class_count == 0) class_count = palette.class_count();
  }
  std::vector<LabelMap> preds, truths;
  if (class_count == 0) {
    // Infer from the truth maps.
    for (const auto& id : paired) {
      const auto bytes = fs::path(truth_dir) / (id + ".pgm");
      (void)bytes;
    }
    class_count = 0;
    for (const auto& id : paired) {
      LabelMap t = load_labelmap((fs::path(truth_dir) / (id + ".pgm")).string(), 255);
      for (uint8_t v : t.ids) {
        if (v != LabelMap::kIgnore) class_count = std::max(class_count, v + 1);
      }
      truths.push_back(std::move(t));
    }
    for (const auto& id : paired) {
      preds.push_back(
          load_labelmap((fs::path(pred_dir) / (id + ".pgm")).string(), class_count));
    }
  } else {
    for (const auto& id : paired) {
      truths.push_back(
          load_labelmap((fs::path(truth_dir) / (id + ".pgm")).string(), class_count));
      preds.push_back(
          load_labelmap((fs::path(pred_dir) / (id + ".pgm")).string(), class_count));
    }
  }

  const EvalResult r = evaluate(preds, truths, class_count);
  std::printf("global %.1f class %.1f\n", 100.0 * r.global_accuracy,
              100.0 * r.class_accuracy);
  const auto recalls = r.recalls();
  for (int j = 0; j < class_count; ++j) {
    if (recalls[static_cast<size_t>(j)] < 0) continue;
    const std::string name = j < palette.class_count()
                                 ? palette.entries[static_cast<size_t>(j)].name
                                 : "class" + std::to_string(j);
    std::printf("%-3d %-16s %.1f\n", j, name.c_str(),
                100.0 * recalls[static_cast<size_t>(j)]);
  }
  return 0;
}

int cmd_gradcheck(const OptionSet& options, int size, double tol) {
  RunConfig cfg;
  try {
    cfg = options.resolve();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  FullNetwork net = network_from_config(cfg);

  Rng rng(Rng::mix(cfg.seed, 0xc0ffee));
  Sample sample;
  sample.id = "gradcheck";
  sample.image = Tensor({static_cast<size_t>(size), static_cast<size_t>(size), 3});
  for (size_t i = 0; i < sample.image.size(); ++i) sample.image[i] = rng.uniform();
  sample.labels = LabelMap(size, size);
  for (auto& id : sample.labels.ids) {
    id = static_cast<uint8_t>(rng.uniform_int(
        static_cast<uint64_t>(net.config.class_count)));
  }

  const auto report = grad_check_full(net, sample);
  bool ok = true;
  for (const auto& entry : report) {
    const bool pass = entry.max_rel_err < tol;
    ok = ok && pass;
    std::printf("%-16s max_rel_err %.3e (%d entries) %s\n", entry.name.c_str(),
                entry.max_rel_err, entry.checked, pass ? "PASS" : "FAIL");
  }
  std::printf("gradcheck %s at tol %.1e\n", ok ? "PASS" : "FAIL", tol);
  return ok ? 0 : 1;
}

int cmd_inspect_weights(const OptionSet& options) {
  RunConfig cfg;
  try {
    cfg = options.resolve();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  Dataset ds;
  try {
    ds = load_dataset(cfg.data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  const int class_count =
      cfg.class_count > 0 ? cfg.class_count : ds.palette.class_count();
  std::vector<LabelMap> labels;
  for (const Sample& s : ds.train) labels.push_back(s.labels);
  if (labels.empty()) {
    for (const Sample& s : ds.test) labels.push_back(s.labels);
  }
  const ClassStats stats = class_frequencies(labels, class_count);
  const double eta = cfg.eta == "auto" ? compute_eta(stats) : std::stod(cfg.eta);
  const ClassWeights cw = class_weights(stats, eta, cfg.k);

  std::vector<int> order(static_cast<size_t>(class_count));
  for (int j = 0; j < class_count; ++j) order[static_cast<size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return stats.freq[static_cast<size_t>(a)] > stats.freq[static_cast<size_t>(b)];
  });

  std::printf("eta %.6g k %g\n", eta, cfg.k);
  std::printf("%-4s %-16s %-10s %-8s %s\n", "id", "name", "freq", "weight", "split");
  for (int j : order) {
    const std::string name = j < ds.palette.class_count()
                                 ? ds.palette.entries[static_cast<size_t>(j)].name
                                 : "class" + std::to_string(j);
    const double f = stats.freq[static_cast<size_t>(j)];
    std::printf("%-4d %-16s %-10.6f %-8g %s\n", j, name.c_str(), f,
                cw.w[static_cast<size_t>(j)], f < eta ? "rare" : "frequent");
  }
  return 0;
}

int cmd_gen_data(const std::string& out, int count, int size, uint64_t seed,
                 int train_count) {
  const auto samples = gen_beacon_dataset(count, size, seed);
  write_dataset(out, samples, beacon_palette(),
                static_cast<size_t>(train_count));
  std::cout << "wrote " << count << " samples (" << train_count << " train, "
            << count - train_count << " test) to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAG-structured recurrent network scene labeler"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  OptionSet train_opts;
  add_model_options(train_cmd, train_opts);
  add_train_options(train_cmd, train_opts);
  train_opts.add(train_cmd, "--checkpoint", "checkpoint", "output checkpoint path",
                 RunConfig{}.checkpoint);
  train_opts.opts["data"] =
      train_cmd->add_option("--data", train_opts.values["data"], "dataset root directory")
          ->required();
  train_opts.add_config_option(train_cmd);
  std::string train_log_path;
  train_cmd->add_option("--log", train_log_path,
                        "training log path (default: <checkpoint>.log)");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "label images with a trained model");
  OptionSet predict_opts;
  std::string predict_ckpt, predict_out = "predictions", predict_palette;
  std::vector<std::string> predict_images;
  predict_cmd->add_option("--checkpoint", predict_ckpt, "checkpoint path")->required();
  predict_cmd->add_option("--out", predict_out, "output directory")
      ->capture_default_str();
  predict_cmd->add_option("--palette", predict_palette, "palette.txt for colorized maps");
  predict_cmd->add_option("images", predict_images, "input PPM images")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  std::string eval_pred, eval_truth, eval_palette;
  int eval_classes = 0;
  eval_cmd->add_option("--pred", eval_pred, "directory of predicted PGM maps")->required();
  eval_cmd->add_option("--truth", eval_truth, "directory of ground-truth PGM maps")
      ->required();
  eval_cmd->add_option("--classes", eval_classes,
                       "class count (default: from palette or inferred)")
      ->capture_default_str();
  eval_cmd->add_option("--palette", eval_palette, "palette.txt for class names");

  // gradcheck
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  OptionSet gradcheck_opts;
  add_model_options(gradcheck_cmd, gradcheck_opts);
  gradcheck_opts.add_config_option(gradcheck_cmd);
  int gradcheck_size = 12;
  double gradcheck_tol = 1e-4;
  gradcheck_cmd->add_option("--size", gradcheck_size, "synthetic image extent")
      ->capture_default_str();
  gradcheck_cmd->add_option("--tol", gradcheck_tol, "max relative error")
      ->capture_default_str();

  // inspect-weights
  auto* weights_cmd =
      app.add_subcommand("inspect-weights", "show class frequencies and loss weights");
  OptionSet weights_opts;
  add_model_options(weights_cmd, weights_opts);
  weights_opts.add(weights_cmd, "--eta", "eta",
                   "rare-class threshold, fraction or 'auto'", "auto");
  weights_opts.add(weights_cmd, "--k", "k", "rare-class weighting base", "2");
  weights_opts.opts["data"] =
      weights_cmd->add_option("--data", weights_opts.values["data"], "dataset root")
          ->required();
  weights_opts.add_config_option(weights_cmd);

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic beacon dataset");
  std::string gen_out;
  int gen_count = 250, gen_size = 32, gen_train = 200;
  uint64_t gen_seed = 1;
  gen_cmd->add_option("--out", gen_out, "output dataset directory")->required();
  gen_cmd->add_option("--count", gen_count, "total sample count")->capture_default_str();
  gen_cmd->add_option("--size", gen_size, "image extent in pixels")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--train", gen_train, "samples marked train (rest test)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts, train_log_path);
    if (predict_cmd->parsed()) {
      return cmd_predict(predict_opts, predict_ckpt, predict_out, predict_palette,
                         predict_images);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_pred, eval_truth, eval_classes, eval_palette);
    }
    if (gradcheck_cmd->parsed()) {
      return cmd_gradcheck(gradcheck_opts, gradcheck_size, gradcheck_tol);
    }
    if (weights_cmd->parsed()) return cmd_inspect_weights(weights_opts);
    if (gen_cmd->parsed()) {
      return cmd_gen_data(gen_out, gen_count, gen_size, gen_seed, gen_train);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
