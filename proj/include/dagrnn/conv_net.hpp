#pragma once

#include <string>
#include <vector>

#include "dagrnn/rng.hpp"
#include "dagrnn/tensor.hpp"

namespace dagrnn {

// Feature maps are rank-3 [H x W x C]; kernels rank-4 [kh x kw x c_in x c_out].

// Cross-correlation layer. Padding may differ between the leading (top/left)
// and trailing (bottom/right) edges: with an even kernel extent the
// same-extent geometry needs one extra trailing pad cell, so a single
// symmetric integer cannot express it.
struct ConvLayer {
  Tensor kernels;  // [kh x kw x c_in x c_out]
  Tensor bias;     // [c_out]
  int stride = 1;
  int pad_begin = 0;  // top and left
  int pad_end = 0;    // bottom and right

  int kh() const { return static_cast<int>(kernels.extent(0)); }
  int kw() const { return static_cast<int>(kernels.extent(1)); }
  int in_channels() const { return static_cast<int>(kernels.extent(2)); }
  int out_channels() const { return static_cast<int>(kernels.extent(3)); }
};

ConvLayer make_conv(int kh, int kw, int c_in, int c_out, int stride, int padding,
                    Rng& rng);
// Stride-1 layer whose output extent equals its input extent regardless of
// kernel parity: pad_begin = (k-1)/2, pad_end = k-1-pad_begin.
ConvLayer make_conv_same(int kh, int kw, int c_in, int c_out, Rng& rng);

Tensor conv_forward(const ConvLayer& layer, const Tensor& input);

struct ConvGrads {
  Tensor d_input;
  Tensor d_kernels;
  Tensor d_bias;
};
ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                        const Tensor& d_output);

// Non-overlapping 2x2 max pooling. Odd extents behave as if padded with
// -infinity on the trailing edge; ties resolve to the first cell in row-major
// order. argmax holds, per output cell and channel, the flat index into the
// input tensor that supplied the maximum.
struct PoolResult {
  Tensor output;
  std::vector<size_t> argmax;
};
PoolResult maxpool_forward(const Tensor& input);
Tensor maxpool_backward(const Tensor& input, const PoolResult& pooled,
                        const Tensor& d_output);

// Learned upsampling with transposed-convolution semantics: every input cell
// scatters a kernel-weighted footprint into the output, overlaps summing.
// The full scatter extent (in-1)*stride + k is cropped by (k-stride)/2 on the
// leading edges so the output is exactly stride*H x stride*W.
struct DeconvLayer {
  Tensor kernels;  // [kh x kw x c_in x c_out]
  int stride = 1;

  int kh() const { return static_cast<int>(kernels.extent(0)); }
  int kw() const { return static_cast<int>(kernels.extent(1)); }
  int in_channels() const { return static_cast<int>(kernels.extent(2)); }
  int out_channels() const { return static_cast<int>(kernels.extent(3)); }
  int crop() const { return (kh() - stride) / 2; }
};

// Channelwise bilinear interpolation weights: identity between matching
// channels, zero across channels. kernel extent 2*stride.
DeconvLayer make_deconv_bilinear(int channels, int stride);

Tensor deconv_forward(const DeconvLayer& layer, const Tensor& input);

struct DeconvGrads {
  Tensor d_input;
  Tensor d_kernels;
};
DeconvGrads deconv_backward(const DeconvLayer& layer, const Tensor& input,
                            const Tensor& d_output);

// One convolutional stage step as assembled by a preset.
struct ConvBlockSpec {
  int kh = 3, kw = 3;
  int c_in = 3, c_out = 8;
  bool relu_after = true;
  bool pool_after = false;  // 2x2 max pool
};

struct NetConfig {
  std::string preset;
  std::vector<ConvBlockSpec> blocks;
  int downsample = 1;     // product of pool factors; also the deconv stride
  int hidden_dim = 64;    // DAG-RNN stage
  int class_count = 3;

  int feature_dim() const { return blocks.back().c_out; }
  size_t parameter_count() const;
};

// Known presets: "cnn65" (five conv layers 8x8x3x64 / 6x6x64x128 /
// 5x5x128x256 / 4x4x256x256 / 1x1x256x64, pooling after the first three,
// hidden 64, 33 classes) and "tiny" (two 3x3 layers, 16 channels, hidden 16,
// 3 classes). Unknown names raise ConfigError.
NetConfig build_preset(const std::string& name);

}  // namespace dagrnn
