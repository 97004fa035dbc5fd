#include "dagrnn/conv_net.hpp"

#include <cmath>
#include <limits>

#include "dagrnn/errors.hpp"

namespace dagrnn {

namespace {

double glorot_limit(size_t fan_in, size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void check_conv_input(const ConvLayer& layer, const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("conv input must be rank-3, got " + input.shape_str());
  }
  if (static_cast<int>(input.extent(2)) != layer.in_channels()) {
    throw DimensionError("conv channel mismatch: input " + input.shape_str() +
                         " vs kernels " + layer.kernels.shape_str());
  }
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  if (h + layer.pad_begin + layer.pad_end < layer.kh() ||
      w + layer.pad_begin + layer.pad_end < layer.kw()) {
    throw DimensionError("kernel " + layer.kernels.shape_str() +
                         " larger than padded input " + input.shape_str());
  }
}

}  // namespace

ConvLayer make_conv(int kh, int kw, int c_in, int c_out, int stride, int padding,
                    Rng& rng) {
  ConvLayer layer;
  const double limit = glorot_limit(static_cast<size_t>(kh) * kw * c_in,
                                    static_cast<size_t>(kh) * kw * c_out);
  layer.kernels = Tensor({static_cast<size_t>(kh), static_cast<size_t>(kw),
                          static_cast<size_t>(c_in), static_cast<size_t>(c_out)});
  for (size_t i = 0; i < layer.kernels.size(); ++i) {
    layer.kernels[i] = rng.uniform(-limit, limit);
  }
  layer.bias = Tensor({static_cast<size_t>(c_out)});
  layer.stride = stride;
  layer.pad_begin = padding;
  layer.pad_end = padding;
  return layer;
}

ConvLayer make_conv_same(int kh, int kw, int c_in, int c_out, Rng& rng) {
  ConvLayer layer = make_conv(kh, kw, c_in, c_out, 1, 0, rng);
  layer.pad_begin = (kh - 1) / 2;
  layer.pad_end = kh - 1 - layer.pad_begin;
  return layer;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  check_conv_input(layer, input);
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  const int ci = layer.in_channels(), co = layer.out_channels();
  const int kh = layer.kh(), kw = layer.kw(), s = layer.stride;
  const int ho = (h + layer.pad_begin + layer.pad_end - kh) / s + 1;
  const int wo = (w + layer.pad_begin + layer.pad_end - kw) / s + 1;

  Tensor out({static_cast<size_t>(ho), static_cast<size_t>(wo),
              static_cast<size_t>(co)});
  const double* in = input.data();
  const double* k = layer.kernels.data();
  double* od = out.data();
  for (int oi = 0; oi < ho; ++oi) {
    for (int oj = 0; oj < wo; ++oj) {
      double* orow = od + (static_cast<size_t>(oi) * wo + oj) * co;
      for (int c = 0; c < co; ++c) orow[c] = layer.bias[static_cast<size_t>(c)];
      for (int ki = 0; ki < kh; ++ki) {
        const int y = oi * s + ki - layer.pad_begin;
        if (y < 0 || y >= h) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int x = oj * s + kj - layer.pad_begin;
          if (x < 0 || x >= w) continue;
          const double* icell = in + (static_cast<size_t>(y) * w + x) * ci;
          const double* kcell = k + (static_cast<size_t>(ki) * kw + kj) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const double v = icell[c];
            if (v == 0.0) continue;
            const double* krow = kcell + static_cast<size_t>(c) * co;
            for (int c2 = 0; c2 < co; ++c2) orow[c2] += v * krow[c2];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                        const Tensor& d_output) {
  check_conv_input(layer, input);
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  const int ci = layer.in_channels(), co = layer.out_channels();
  const int kh = layer.kh(), kw = layer.kw(), s = layer.stride;
  const int ho = static_cast<int>(d_output.extent(0));
  const int wo = static_cast<int>(d_output.extent(1));
  const int expect_ho = (h + layer.pad_begin + layer.pad_end - kh) / s + 1;
  const int expect_wo = (w + layer.pad_begin + layer.pad_end - kw) / s + 1;
  if (ho != expect_ho || wo != expect_wo ||
      static_cast<int>(d_output.extent(2)) != co) {
    throw ContractError("conv upstream " + d_output.shape_str() +
                        " does not match forward context");
  }

  ConvGrads g;
  g.d_input = Tensor(input.shape());
  g.d_kernels = Tensor(layer.kernels.shape());
  g.d_bias = Tensor({static_cast<size_t>(co)});

  const double* in = input.data();
  const double* k = layer.kernels.data();
  const double* dout = d_output.data();
  double* din = g.d_input.data();
  double* dk = g.d_kernels.data();

  for (int oi = 0; oi < ho; ++oi) {
    for (int oj = 0; oj < wo; ++oj) {
      const double* orow = dout + (static_cast<size_t>(oi) * wo + oj) * co;
      for (int c = 0; c < co; ++c) g.d_bias[static_cast<size_t>(c)] += orow[c];
      for (int ki = 0; ki < kh; ++ki) {
        const int y = oi * s + ki - layer.pad_begin;
        if (y < 0 || y >= h) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int x = oj * s + kj - layer.pad_begin;
          if (x < 0 || x >= w) continue;
          const size_t cell = (static_cast<size_t>(y) * w + x) * ci;
          const size_t kcell = (static_cast<size_t>(ki) * kw + kj) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const double v = in[cell + c];
            const double* krow = k + kcell + static_cast<size_t>(c) * co;
            double* dkrow = dk + kcell + static_cast<size_t>(c) * co;
            double acc = 0.0;
            for (int c2 = 0; c2 < co; ++c2) {
              const double e = orow[c2];
              acc += krow[c2] * e;
              dkrow[c2] += v * e;
            }
            din[cell + c] += acc;
          }
        }
      }
    }
  }
  return g;
}

PoolResult maxpool_forward(const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("pool input must be rank-3, got " + input.shape_str());
  }
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  const int c = static_cast<int>(input.extent(2));
  const int ho = (h + 1) / 2, wo = (w + 1) / 2;

  PoolResult r;
  r.output = Tensor({static_cast<size_t>(ho), static_cast<size_t>(wo),
                     static_cast<size_t>(c)});
  r.argmax.assign(static_cast<size_t>(ho) * wo * c, 0);
  const double* in = input.data();
  for (int oi = 0; oi < ho; ++oi) {
    for (int oj = 0; oj < wo; ++oj) {
      for (int ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        size_t best_idx = 0;
        for (int di = 0; di < 2; ++di) {
          const int y = oi * 2 + di;
          if (y >= h) break;
          for (int dj = 0; dj < 2; ++dj) {
            const int x = oj * 2 + dj;
            if (x >= w) break;
            const size_t idx = (static_cast<size_t>(y) * w + x) * c + ch;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const size_t out_idx = (static_cast<size_t>(oi) * wo + oj) * c + ch;
        r.output[out_idx] = best;
        r.argmax[out_idx] = best_idx;
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const Tensor& input, const PoolResult& pooled,
                        const Tensor& d_output) {
  if (!d_output.same_shape(pooled.output)) {
    throw ContractError("pool upstream " + d_output.shape_str() +
                        " does not match forward context");
  }
  Tensor din(input.shape());
  for (size_t i = 0; i < pooled.argmax.size(); ++i) {
    din[pooled.argmax[i]] += d_output[i];
  }
  return din;
}

DeconvLayer make_deconv_bilinear(int channels, int stride) {
  DeconvLayer layer;
  layer.stride = stride;
  const int k = 2 * stride;
  layer.kernels = Tensor({static_cast<size_t>(k), static_cast<size_t>(k),
                          static_cast<size_t>(channels), static_cast<size_t>(channels)});
  const double factor = (k + 1) / 2;
  const double center = (k % 2 == 1) ? factor - 1.0 : factor - 0.5;
  for (int ki = 0; ki < k; ++ki) {
    const double wi = 1.0 - std::abs(ki - center) / factor;
    for (int kj = 0; kj < k; ++kj) {
      const double wj = 1.0 - std::abs(kj - center) / factor;
      for (int c = 0; c < channels; ++c) {
        layer.kernels.at(static_cast<size_t>(ki), static_cast<size_t>(kj),
                         static_cast<size_t>(c), static_cast<size_t>(c)) = wi * wj;
      }
    }
  }
  return layer;
}

Tensor deconv_forward(const DeconvLayer& layer, const Tensor& input) {
  if (input.rank() != 3 ||
      static_cast<int>(input.extent(2)) != layer.in_channels()) {
    throw DimensionError("deconv channel mismatch: input " + input.shape_str() +
                         " vs kernels " + layer.kernels.shape_str());
  }
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  const int ci = layer.in_channels(), co = layer.out_channels();
  const int kh = layer.kh(), kw = layer.kw(), s = layer.stride;
  const int off = layer.crop();
  const int ho = h * s, wo = w * s;

  Tensor out({static_cast<size_t>(ho), static_cast<size_t>(wo),
              static_cast<size_t>(co)});
  const double* in = input.data();
  const double* k = layer.kernels.data();
  double* od = out.data();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double* icell = in + (static_cast<size_t>(i) * w + j) * ci;
      for (int ki = 0; ki < kh; ++ki) {
        const int y = i * s + ki - off;
        if (y < 0 || y >= ho) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int x = j * s + kj - off;
          if (x < 0 || x >= wo) continue;
          double* ocell = od + (static_cast<size_t>(y) * wo + x) * co;
          const double* kcell = k + (static_cast<size_t>(ki) * kw + kj) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const double v = icell[c];
            if (v == 0.0) continue;
            const double* krow = kcell + static_cast<size_t>(c) * co;
            for (int c2 = 0; c2 < co; ++c2) ocell[c2] += v * krow[c2];
          }
        }
      }
    }
  }
  return out;
}

DeconvGrads deconv_backward(const DeconvLayer& layer, const Tensor& input,
                            const Tensor& d_output) {
  const int h = static_cast<int>(input.extent(0));
  const int w = static_cast<int>(input.extent(1));
  const int ci = layer.in_channels(), co = layer.out_channels();
  const int kh = layer.kh(), kw = layer.kw(), s = layer.stride;
  const int off = layer.crop();
  const int ho = h * s, wo = w * s;
  if (static_cast<int>(d_output.extent(0)) != ho ||
      static_cast<int>(d_output.extent(1)) != wo ||
      static_cast<int>(d_output.extent(2)) != co) {
    throw ContractError("deconv upstream " + d_output.shape_str() +
                        " does not match forward context");
  }

  DeconvGrads g;
  g.d_input = Tensor(input.shape());
  g.d_kernels = Tensor(layer.kernels.shape());
  const double* in = input.data();
  const double* k = layer.kernels.data();
  const double* dout = d_output.data();
  double* din = g.d_input.data();
  double* dk = g.d_kernels.data();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t cell = (static_cast<size_t>(i) * w + j) * ci;
      for (int ki = 0; ki < kh; ++ki) {
        const int y = i * s + ki - off;
        if (y < 0 || y >= ho) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int x = j * s + kj - off;
          if (x < 0 || x >= wo) continue;
          const double* ocell = dout + (static_cast<size_t>(y) * wo + x) * co;
          const size_t kcell = (static_cast<size_t>(ki) * kw + kj) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const double v = in[cell + c];
            const double* krow = k + kcell + static_cast<size_t>(c) * co;
            double* dkrow = dk + kcell + static_cast<size_t>(c) * co;
            double acc = 0.0;
            for (int c2 = 0; c2 < co; ++c2) {
              const double e = ocell[c2];
              acc += krow[c2] * e;
              dkrow[c2] += v * e;
            }
            din[cell + c] += acc;
          }
        }
      }
    }
  }
  return g;
}

size_t NetConfig::parameter_count() const {
  size_t n = 0;
  for (const ConvBlockSpec& b : blocks) {
    n += static_cast<size_t>(b.kh) * b.kw * b.c_in * b.c_out + b.c_out;
  }
  const size_t h = static_cast<size_t>(hidden_dim);
  const size_t d = static_cast<size_t>(feature_dim());
  const size_t c = static_cast<size_t>(class_count);
  n += 4 * (h * d + h * h + c * h + h);  // U, W, V, b per direction
  n += c;                                // shared output bias
  n += static_cast<size_t>(2 * downsample) * (2 * downsample) * c * c;  // deconv
  return n;
}

NetConfig build_preset(const std::string& name) {
  NetConfig cfg;
  cfg.preset = name;
  if (name == "cnn65") {
    cfg.blocks = {
        {8, 8, 3, 64, true, true},
        {6, 6, 64, 128, true, true},
        {5, 5, 128, 256, true, true},
        {4, 4, 256, 256, true, false},
        {1, 1, 256, 64, true, false},
    };
    cfg.downsample = 8;
    cfg.hidden_dim = 64;
    cfg.class_count = 33;
  } else if (name == "tiny") {
    cfg.blocks = {
        {3, 3, 3, 8, true, true},
        {3, 3, 8, 16, true, true},
    };
    cfg.downsample = 4;
    cfg.hidden_dim = 16;
    cfg.class_count = 3;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected cnn65 or tiny)");
  }
  return cfg;
}

}  // namespace dagrnn
