#include "dagrnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "dagrnn/errors.hpp"
#include "dagrnn/rng.hpp"

namespace dagrnn {

namespace {

Tensor reshape(const Tensor& t, std::vector<size_t> shape) {
  return Tensor(std::move(shape), std::vector<double>(t.data(), t.data() + t.size()));
}

Tensor pad_to_multiple(const Tensor& image, int multiple) {
  const int h = static_cast<int>(image.extent(0));
  const int w = static_cast<int>(image.extent(1));
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  const size_t c = image.extent(2);
  Tensor out({static_cast<size_t>(ph), static_cast<size_t>(pw), c});
  for (int i = 0; i < h; ++i) {
    std::memcpy(out.data() + (static_cast<size_t>(i) * pw) * c,
                image.data() + (static_cast<size_t>(i) * w) * c,
                static_cast<size_t>(w) * c * sizeof(double));
  }
  return out;
}

// Forward activations retained for the backward pass.
struct ConvStageTrace {
  std::vector<Tensor> inputs;       // input handed to each conv
  std::vector<Tensor> activations;  // after conv (+relu), before pooling
  std::vector<PoolResult> pools;    // valid where pool_after
  Tensor features;                  // stage output
};

struct FullTrace {
  int raw_h = 0, raw_w = 0;  // pre-padding extents
  Tensor padded;
  ConvStageTrace conv;
  DagRnnTrace rnn;
  Tensor probs;  // [padded H x padded W x C], softmax rows
};

ConvStageTrace conv_stage_forward(const FullNetwork& net, const Tensor& input) {
  ConvStageTrace t;
  Tensor cur = input;
  for (const auto& block : net.conv_blocks) {
    t.inputs.push_back(cur);
    Tensor act = conv_forward(block.conv, cur);
    if (block.relu_after) act = relu(act);
    t.activations.push_back(act);
    if (block.pool_after) {
      t.pools.push_back(maxpool_forward(act));
      cur = t.pools.back().output;
    } else {
      t.pools.emplace_back();
      cur = act;
    }
  }
  t.features = cur;
  return t;
}

FullTrace forward_trace(const FullNetwork& net, const Tensor& image) {
  if (image.rank() != 3 || image.extent(2) != 3) {
    throw DimensionError("network input must be [HxWx3], got " + image.shape_str());
  }
  const int ds = net.config.downsample;
  if (static_cast<int>(image.extent(0)) < ds || static_cast<int>(image.extent(1)) < ds) {
    throw DimensionError("image " + image.shape_str() +
                         " smaller than the network minimum " + std::to_string(ds));
  }
  FullTrace t;
  t.raw_h = static_cast<int>(image.extent(0));
  t.raw_w = static_cast<int>(image.extent(1));
  t.padded = pad_to_multiple(image, ds);
  t.conv = conv_stage_forward(net, t.padded);

  const int fh = static_cast<int>(t.conv.features.extent(0));
  const int fw = static_cast<int>(t.conv.features.extent(1));
  const size_t d = t.conv.features.extent(2);
  const Tensor x = reshape(t.conv.features, {static_cast<size_t>(fh) * fw, d});
  t.rnn = forward_ensemble(net.rnn, net.dags_for(fh, fw), x, OutputMode::kDeferred);

  const size_t c = static_cast<size_t>(net.config.class_count);
  const Tensor preact_map =
      reshape(t.rnn.preact, {static_cast<size_t>(fh), static_cast<size_t>(fw), c});
  Tensor logits = deconv_forward(net.deconv, preact_map);

  // Output nonlinearity applied after deconvolution.
  t.probs = Tensor(logits.shape());
  const size_t pixels = logits.size() / c;
  for (size_t p = 0; p < pixels; ++p) {
    Tensor row({c});
    std::memcpy(row.data(), logits.data() + p * c, c * sizeof(double));
    const Tensor sm = softmax(row);
    std::memcpy(t.probs.data() + p * c, sm.data(), c * sizeof(double));
  }
  return t;
}

Tensor crop(const Tensor& map, int h, int w) {
  if (static_cast<int>(map.extent(0)) == h && static_cast<int>(map.extent(1)) == w) {
    return map;
  }
  const size_t c = map.extent(2);
  const size_t pw = map.extent(1);
  Tensor out({static_cast<size_t>(h), static_cast<size_t>(w), c});
  for (int i = 0; i < h; ++i) {
    std::memcpy(out.data() + static_cast<size_t>(i) * w * c,
                map.data() + static_cast<size_t>(i) * pw * c,
                static_cast<size_t>(w) * c * sizeof(double));
  }
  return out;
}

LabelMap argmax_labels(const Tensor& probs) {
  const int h = static_cast<int>(probs.extent(0));
  const int w = static_cast<int>(probs.extent(1));
  const size_t c = probs.extent(2);
  LabelMap map(h, w);
  const double* p = probs.data();
  for (size_t pix = 0; pix < map.size(); ++pix) {
    const double* row = p + pix * c;
    size_t best = 0;
    for (size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    map.ids[pix] = static_cast<uint8_t>(best);
  }
  return map;
}

void zero_matching(std::map<std::string, Tensor>& grads, const std::string& prefix,
                   const std::string& suffix) {
  for (auto& [name, g] : grads) {
    const bool pre = prefix.empty() || name.rfind(prefix, 0) == 0;
    const bool suf = suffix.empty() ||
                     (name.size() >= suffix.size() &&
                      name.compare(name.size() - suffix.size(), suffix.size(),
                                   suffix) == 0);
    if (pre && suf) g.fill(0.0);
  }
}

}  // namespace

double learning_rate(const TrainOptions& opts, int epoch) {
  if (opts.schedule == ScheduleMode::kPerBlock) {
    const int blocks = (epoch - 1) / opts.decay_start_epoch;
    return opts.base_lr * std::pow(opts.lr_decay, blocks);
  }
  if (epoch <= opts.decay_start_epoch) return opts.base_lr;
  return opts.base_lr * std::pow(opts.lr_decay, epoch - opts.decay_start_epoch);
}

std::vector<std::pair<std::string, Tensor*>> FullNetwork::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < conv_blocks.size(); ++i) {
    const std::string base = "conv" + std::to_string(i);
    out.emplace_back(base + ".kernels", &conv_blocks[i].conv.kernels);
    out.emplace_back(base + ".bias", &conv_blocks[i].conv.bias);
  }
  for (Direction d : kDirections) {
    const std::string base = std::string("rnn.") + direction_name(d);
    DirectionParams& p = rnn.dir(d);
    out.emplace_back(base + ".U", &p.U);
    out.emplace_back(base + ".W", &p.W);
    out.emplace_back(base + ".V", &p.V);
    out.emplace_back(base + ".b", &p.b);
  }
  out.emplace_back("rnn.c", &rnn.c);
  out.emplace_back("deconv.kernels", &deconv.kernels);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> FullNetwork::parameters() const {
  auto mutable_params = const_cast<FullNetwork*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_params.size());
  for (auto& [name, t] : mutable_params) out.emplace_back(name, t);
  return out;
}

const std::array<GridDag, 4>& FullNetwork::dags_for(int height, int width) const {
  const auto key = std::make_pair(height, width);
  auto it = dag_cache_.find(key);
  if (it == dag_cache_.end()) {
    GridSpec spec{height, width, neighborhood};
    std::array<GridDag, 4> dags{decompose(spec, Direction::SE),
                                decompose(spec, Direction::SW),
                                decompose(spec, Direction::NW),
                                decompose(spec, Direction::NE)};
    it = dag_cache_.emplace(key, std::move(dags)).first;
  }
  return it->second;
}

FullNetwork build_network(const NetConfig& config, Neighborhood neighborhood,
                          uint64_t seed, bool ablate_recurrence) {
  FullNetwork net;
  net.config = config;
  net.neighborhood = neighborhood;
  net.recurrence_frozen = ablate_recurrence;

  Rng rng(seed);
  for (const ConvBlockSpec& spec : config.blocks) {
    FullNetwork::ConvBlock block;
    block.conv = make_conv_same(spec.kh, spec.kw, spec.c_in, spec.c_out, rng);
    block.relu_after = spec.relu_after;
    block.pool_after = spec.pool_after;
    net.conv_blocks.push_back(std::move(block));
  }
  net.rnn = init_ensemble_params(static_cast<size_t>(config.hidden_dim),
                                 static_cast<size_t>(config.feature_dim()),
                                 static_cast<size_t>(config.class_count), rng);
  if (ablate_recurrence) {
    for (Direction d : kDirections) net.rnn.dir(d).W.fill(0.0);
  }
  net.deconv = make_deconv_bilinear(config.class_count, config.downsample);
  net.weights.w.assign(static_cast<size_t>(config.class_count), 1.0);
  net.weights.eta = 0.0;
  net.weights.k = 2.0;
  return net;
}

Tensor forward_full(const FullNetwork& net, const Tensor& image) {
  FullTrace t = forward_trace(net, image);
  return crop(t.probs, t.raw_h, t.raw_w);
}

LabelMap predict_labels(const FullNetwork& net, const Tensor& image) {
  return argmax_labels(forward_full(net, image));
}

BackwardResult backward_full(const FullNetwork& net, const Tensor& image,
                             const LabelMap& labels) {
  if (static_cast<int>(image.extent(0)) != labels.height ||
      static_cast<int>(image.extent(1)) != labels.width) {
    throw DimensionError("label extents do not match image " + image.shape_str());
  }
  FullTrace t = forward_trace(net, image);
  const Tensor probs = crop(t.probs, t.raw_h, t.raw_w);

  BackwardResult result;
  result.prediction = argmax_labels(probs);
  const LossResult loss = weighted_ce_loss(probs, labels, net.weights);
  result.loss = loss.loss;
  result.counted = loss.counted;

  const size_t c = static_cast<size_t>(net.config.class_count);
  const int ph = static_cast<int>(t.probs.extent(0));
  const int pw = static_cast<int>(t.probs.extent(1));

  // Padded pixels carry zero upstream error.
  Tensor d_logits({static_cast<size_t>(ph), static_cast<size_t>(pw), c});
  for (int i = 0; i < t.raw_h; ++i) {
    std::memcpy(d_logits.data() + (static_cast<size_t>(i) * pw) * c,
                loss.d_logits.data() + (static_cast<size_t>(i) * t.raw_w) * c,
                static_cast<size_t>(t.raw_w) * c * sizeof(double));
  }

  const int fh = static_cast<int>(t.conv.features.extent(0));
  const int fw = static_cast<int>(t.conv.features.extent(1));
  const size_t d = t.conv.features.extent(2);
  const size_t n = static_cast<size_t>(fh) * fw;

  const Tensor preact_map = reshape(t.rnn.preact, {static_cast<size_t>(fh),
                                                   static_cast<size_t>(fw), c});
  DeconvGrads dg = deconv_backward(net.deconv, preact_map, d_logits);
  result.grads["deconv.kernels"] = std::move(dg.d_kernels);

  const Tensor d_preact = reshape(dg.d_input, {n, c});
  const Tensor x = reshape(t.conv.features, {n, d});
  EnsembleGrads eg =
      backward_ensemble(net.rnn, net.dags_for(fh, fw), x, t.rnn, d_preact);
  for (Direction dir : kDirections) {
    const std::string base = std::string("rnn.") + direction_name(dir);
    DirectionGrads& g = eg.dirs[static_cast<size_t>(dir)];
    result.grads[base + ".U"] = std::move(g.dU);
    result.grads[base + ".W"] = std::move(g.dW);
    result.grads[base + ".V"] = std::move(g.dV);
    result.grads[base + ".b"] = std::move(g.db);
  }
  result.grads["rnn.c"] = std::move(eg.dc);

  Tensor d_cur = reshape(eg.dx, {static_cast<size_t>(fh), static_cast<size_t>(fw), d});
  for (size_t bi = net.conv_blocks.size(); bi-- > 0;) {
    const auto& block = net.conv_blocks[bi];
    if (block.pool_after) {
      d_cur = maxpool_backward(t.conv.activations[bi], t.conv.pools[bi], d_cur);
    }
    if (block.relu_after) {
      d_cur = hadamard(d_cur, relu_grad(t.conv.activations[bi]));
    }
    ConvGrads cg = conv_backward(block.conv, t.conv.inputs[bi], d_cur);
    const std::string base = "conv" + std::to_string(bi);
    result.grads[base + ".kernels"] = std::move(cg.d_kernels);
    result.grads[base + ".bias"] = std::move(cg.d_bias);
    d_cur = std::move(cg.d_input);
  }

  if (net.recurrence_frozen) zero_matching(result.grads, "rnn.", ".W");
  return result;
}

void sgd_step(FullNetwork& net, const std::map<std::string, Tensor>& grads,
              OptimizerState& state, double lr, double momentum,
              double grad_clip) {
  double scale = 1.0;
  if (grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
      for (size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > grad_clip) scale = grad_clip / norm;
  }
  for (auto& [name, param] : net.parameters()) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!g.same_shape(*param)) {
      throw ContractError("gradient shape " + g.shape_str() + " for " + name +
                          " does not match parameter " + param->shape_str());
    }
    auto vit = state.velocity.find(name);
    if (vit == state.velocity.end()) {
      vit = state.velocity.emplace(name, Tensor(param->shape())).first;
    }
    Tensor& v = vit->second;
    double* vd = v.data();
    double* pd = param->data();
    const double* gd = g.data();
    for (size_t i = 0; i < v.size(); ++i) {
      vd[i] = momentum * vd[i] - lr * scale * gd[i];
      pd[i] += vd[i];
    }
  }
}

std::string TrainLog::to_tsv() const {
  std::string out = "epoch\tlr\tmean_loss\tglobal_acc\tclass_acc\n";
  char line[160];
  for (const EpochLog& e : epochs) {
    std::snprintf(line, sizeof(line), "%d\t%.10g\t%.8f\t%.6f\t%.6f\n", e.epoch,
                  e.lr, e.mean_loss, e.global_acc, e.class_acc);
    out += line;
  }
  return out;
}

TrainLog train(FullNetwork& net, const std::vector<Sample>& data,
               const TrainOptions& opts, OptimizerState& state) {
  if (data.empty()) throw ConfigError("training requires a nonempty dataset");
  TrainLog log;
  std::vector<size_t> order(data.size());

  for (int epoch = state.epoch + 1; epoch <= opts.epochs; ++epoch) {
    const double lr = learning_rate(opts, epoch);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(opts.seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::vector<LabelMap> preds, truths;
    preds.reserve(data.size());
    truths.reserve(data.size());
    for (size_t idx : order) {
      BackwardResult r = backward_full(net, data[idx].image, data[idx].labels);
      if (!std::isfinite(r.loss)) {
        throw ContractError("training diverged: non-finite loss at image index " +
                            std::to_string(idx) + " (id " + data[idx].id +
                            "), epoch " + std::to_string(epoch));
      }
      loss_sum += r.loss;
      preds.push_back(std::move(r.prediction));
      truths.push_back(data[idx].labels);
      if (opts.freeze_conv) zero_matching(r.grads, "conv", "");
      sgd_step(net, r.grads, state, lr, opts.momentum, opts.grad_clip);
    }
    state.epoch = epoch;

    const EvalResult eval = evaluate(preds, truths, net.config.class_count);
    log.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(data.size()),
                          eval.global_accuracy, eval.class_accuracy});
  }
  return log;
}

std::vector<GradCheckEntry> grad_check_full(FullNetwork& net, const Sample& sample,
                                            double step, int max_entries) {
  const BackwardResult base = backward_full(net, sample.image, sample.labels);
  auto loss_at = [&]() {
    const Tensor probs = forward_full(net, sample.image);
    return weighted_ce_loss(probs, sample.labels, net.weights).loss;
  };

  std::vector<GradCheckEntry> report;
  for (auto& [name, param] : net.parameters()) {
    const Tensor& analytic = base.grads.at(name);
    GradCheckEntry entry;
    entry.name = name;
    const size_t size = param->size();
    const size_t stride =
        std::max<size_t>(1, size / static_cast<size_t>(max_entries));
    double scale = 0.0;
    std::vector<std::pair<double, double>> pairs;  // analytic, numeric
    for (size_t i = 0; i < size; i += stride) {
      const double saved = (*param)[i];
      (*param)[i] = saved + step;
      const double up = loss_at();
      (*param)[i] = saved - step;
      const double down = loss_at();
      (*param)[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      pairs.emplace_back(analytic[i], numeric);
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
      ++entry.checked;
    }
    for (auto& [a, n] : pairs) {
      const double diff = std::abs(a - n);
      entry.max_abs_diff = std::max(entry.max_abs_diff, diff);
      entry.max_rel_err = std::max(entry.max_rel_err, diff / std::max(scale, 1e-12));
    }
    report.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dagrnn
