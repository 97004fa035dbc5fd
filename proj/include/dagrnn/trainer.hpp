#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dagrnn/conv_net.hpp"
#include "dagrnn/dag_rnn.hpp"
#include "dagrnn/data_eval.hpp"
#include "dagrnn/grid_graph.hpp"
#include "dagrnn/objective.hpp"

namespace dagrnn {

enum class ScheduleMode {
  // Base rate through decay_start_epoch, then *decay once per epoch.
  kPerEpochAfterStart,
  // *decay once per decay_start_epoch-sized block.
  kPerBlock,
};

struct TrainOptions {
  int epochs = 35;
  uint64_t seed = 0;
  double base_lr = 1e-3;
  double lr_decay = 0.9;
  int decay_start_epoch = 10;
  ScheduleMode schedule = ScheduleMode::kPerEpochAfterStart;
  double momentum = 0.9;
  double grad_clip = 0.0;  // max global gradient norm; 0 disables
  bool freeze_conv = false;
};

double learning_rate(const TrainOptions& opts, int epoch);

// conv stage -> DAG-RNN ensemble -> deconvolution -> softmax. The parameter
// registry gives every tensor a stable name used by gradients, the
// optimizer, and checkpoints.
struct FullNetwork {
  struct ConvBlock {
    ConvLayer conv;
    bool relu_after = true;
    bool pool_after = false;
  };

  NetConfig config;
  Neighborhood neighborhood = Neighborhood::N8;
  bool recurrence_frozen = false;  // ENN ablation: every W_d pinned at zero

  std::vector<ConvBlock> conv_blocks;
  EnsembleParams rnn;
  DeconvLayer deconv;
  ClassWeights weights;  // defaults to all-ones

  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;

  // DAG sets cached per feature-map extent.
  const std::array<GridDag, 4>& dags_for(int height, int width) const;

 private:
  mutable std::map<std::pair<int, int>, std::array<GridDag, 4>> dag_cache_;
};

FullNetwork build_network(const NetConfig& config, Neighborhood neighborhood,
                          uint64_t seed, bool ablate_recurrence = false);

// Per-pixel class likelihoods [H x W x C]; rows sum to 1. Input extents must
// be at least the downsampling factor; non-multiples are padded on the
// bottom/right internally and the prediction cropped back.
Tensor forward_full(const FullNetwork& net, const Tensor& image);

LabelMap predict_labels(const FullNetwork& net, const Tensor& image);

struct BackwardResult {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;
  LabelMap prediction;
  size_t counted = 0;
};

// Loss plus exact reverse-mode gradients for every parameter tensor.
BackwardResult backward_full(const FullNetwork& net, const Tensor& image,
                             const LabelMap& labels);

struct OptimizerState {
  std::map<std::string, Tensor> velocity;
  int epoch = 0;  // last completed epoch
};

// v <- momentum*v - lr*g; theta <- theta + v. Velocities are created lazily.
void sgd_step(FullNetwork& net, const std::map<std::string, Tensor>& grads,
              OptimizerState& state, double lr, double momentum,
              double grad_clip = 0.0);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double global_acc = 0.0;
  double class_acc = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::string to_tsv() const;
};

// Per-image SGD over the shuffled dataset, resuming after state.epoch. The
// shuffle order depends only on (seed, epoch), so a run resumed from a
// checkpoint retraces the original trajectory exactly. Non-finite loss
// aborts with the offending image named.
TrainLog train(FullNetwork& net, const std::vector<Sample>& data,
               const TrainOptions& opts, OptimizerState& state);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_diff = 0.0;
  int checked = 0;
};

// Central finite differences against backward_full, sampling up to
// max_entries entries per tensor (deterministic stride). The relative error
// is measured against the larger of the two gradient scales per tensor.
std::vector<GradCheckEntry> grad_check_full(FullNetwork& net, const Sample& sample,
                                            double step = 1e-6,
                                            int max_entries = 64);

// --- Checkpoints ------------------------------------------------------------
// Layout: magic "DAGRNN1", version line, "config <key> <value>" echo lines,
// epoch, then named tensor sections (shape header + little-endian 64-bit
// payload) for parameters, class weights, and velocities.

struct CheckpointMeta {
  std::map<std::string, std::string> config;
  int epoch = 0;
};

void save_checkpoint(const std::string& path, const FullNetwork& net,
                     const OptimizerState& state,
                     const std::map<std::string, std::string>& config_echo);

CheckpointMeta read_checkpoint_meta(const std::string& path);

// Fills an already-built network (and optimizer state) from a checkpoint.
// Any shape disagreement raises CheckpointError naming the tensor.
CheckpointMeta load_checkpoint(const std::string& path, FullNetwork& net,
                               OptimizerState& state);

}  // namespace dagrnn
