#pragma once

#include <array>
#include <vector>

#include "srn/config.hpp"
#include "srn/nn.hpp"

namespace srn {

/// Enhanced visual features V for a batch: `values` is [batch, height*width,
/// channels] with cells in row-major (i, j) order.
template <typename T>
struct FeatureMap2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Tensor<T> values;

  std::size_t batch() const { return values.dim(0); }
  std::size_t cells() const { return height * width; }
};

struct BackboneConfig {
  std::size_t channels = 1;
  std::array<std::size_t, 3> conv_widths{16, 32, 64};
  std::size_t convs_per_stage = 2;
  bool fpn_merge = true;
  std::size_t units = 2;
  TransformerConfig transformer;

  static BackboneConfig from(const ModelConfig& m);
  std::size_t d_model() const { return transformer.d_model; }
};

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [3*3*Cin, Cout]
  Tensor<T> bias;    // [Cout]
  LayerNorm<T> norm;
  std::size_t stride = 1;
};

template <typename T>
struct BackboneParams {
  std::array<std::vector<ConvLayer<T>>, 3> stages;
  Linear<T> top;      // deepest stage -> d
  Linear<T> lateral;  // stage 2 -> d, only with fpn_merge
  std::vector<TransformerUnitParams<T>> units;

  static BackboneParams create(ParameterSet<T>& ps, const std::string& prefix,
                               const BackboneConfig& config);
};

/// Row-index encoding (d/2 wide) concatenated with column-index encoding.
template <typename T>
Tensor<T> positional_encoding_2d(std::size_t height, std::size_t width, std::size_t d);

/// images [B,H,W,C] with H, W divisible by 8. Three conv stages (stride 2
/// each, conv-norm-relu), FPN-style merge of the two deepest stages, 2D
/// positional encoding, transformer units over the h·w grid. When
/// `pre_transformer` is given it receives the merged features before the
/// positional encoding.
template <typename T>
FeatureMap2D<T> extract_features(const Tensor<T>& images, const BackboneConfig& config,
                                 const BackboneParams<T>& params,
                                 Tensor<T>* pre_transformer = nullptr);

}  // namespace srn
