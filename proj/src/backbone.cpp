#include "srn/backbone.hpp"

#include "srn/errors.hpp"

namespace srn {

BackboneConfig BackboneConfig::from(const ModelConfig& m) {
  BackboneConfig c;
  c.channels = m.channels;
  c.conv_widths = m.conv_widths;
  c.convs_per_stage = m.convs_per_stage;
  c.fpn_merge = m.fpn_merge;
  c.units = m.backbone_units;
  c.transformer = m.backbone_transformer();
  return c;
}

template <typename T>
BackboneParams<T> BackboneParams<T>::create(ParameterSet<T>& ps, const std::string& prefix,
                                            const BackboneConfig& config) {
  BackboneParams p;
  std::size_t cin = config.channels;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t cout = config.conv_widths[s];
    for (std::size_t l = 0; l < config.convs_per_stage; ++l) {
      const std::string name = prefix + ".stage" + std::to_string(s + 1) + ".conv" + std::to_string(l + 1);
      ConvLayer<T> layer;
      layer.weight = ps.create(name + ".weight", {9 * cin, cout}, Init::Glorot);
      layer.bias = ps.create(name + ".bias", {cout}, Init::Zeros);
      layer.norm = LayerNorm<T>::create(ps, name + ".norm", cout);
      layer.stride = l == 0 ? 2 : 1;
      p.stages[s].push_back(std::move(layer));
      cin = cout;
    }
  }
  const std::size_t d = config.d_model();
  p.top = Linear<T>::create(ps, prefix + ".top", config.conv_widths[2], d);
  if (config.fpn_merge) p.lateral = Linear<T>::create(ps, prefix + ".lateral", config.conv_widths[1], d);
  for (std::size_t u = 0; u < config.units; ++u)
    p.units.push_back(TransformerUnitParams<T>::create(ps, prefix + ".unit" + std::to_string(u),
                                                       config.transformer));
  return p;
}

template <typename T>
Tensor<T> positional_encoding_2d(std::size_t height, std::size_t width, std::size_t d) {
  if (d == 0 || d % 4 != 0) {
    throw ConfigError("2D positional encoding width must be divisible by 4, got " + std::to_string(d));
  }
  const auto rows = positional_encoding<T>(height, d / 2);
  const auto cols = positional_encoding<T>(width, d / 2);
  std::vector<T> out(height * width * d);
  const std::size_t half = d / 2;
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      T* dst = out.data() + (i * width + j) * d;
      for (std::size_t c = 0; c < half; ++c) {
        dst[c] = rows[i * half + c];
        dst[half + c] = cols[j * half + c];
      }
    }
  return Tensor<T>({height * width, d}, std::move(out));
}

namespace {

// Apply a per-pixel linear map to an NHWC tensor.
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const Linear<T>& layer) {
  const auto& s = x.shape();
  auto flat = reshape(x, {s[0] * s[1] * s[2], s[3]});
  auto y = layer(flat);
  return reshape(y, {s[0], s[1], s[2], y.dim(1)});
}

template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const ConvLayer<T>& layer) {
  auto y = conv2d(x, layer.weight, layer.bias, 3, layer.stride, 1);
  return relu(layer.norm(y));
}

}  // namespace

template <typename T>
FeatureMap2D<T> extract_features(const Tensor<T>& images, const BackboneConfig& config,
                                 const BackboneParams<T>& params, Tensor<T>* pre_transformer) {
  if (images.rank() != 4 || images.dim(3) != config.channels) {
    throw InputError("backbone expects images [B,H,W," + std::to_string(config.channels) +
                     "], got " + shape_str(images.shape()));
  }
  if (images.dim(1) % 8 != 0 || images.dim(2) % 8 != 0) {
    throw InputError("image height and width must be divisible by 8, got " +
                     shape_str(images.shape()));
  }
  std::array<Tensor<T>, 3> stage_out;
  Tensor<T> x = images;
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& layer : params.stages[s]) x = conv_block(x, layer);
    stage_out[s] = x;
  }
  Tensor<T> merged = pointwise(stage_out[2], params.top);
  if (config.fpn_merge) {
    auto lateral = pointwise(stage_out[1], params.lateral);
    merged = avg_pool2x(add(upsample2x(merged), lateral));
  }
  if (pre_transformer) *pre_transformer = merged;

  const std::size_t batch = merged.dim(0), h = merged.dim(1), w = merged.dim(2),
                    d = merged.dim(3);
  auto seq = reshape(merged, {batch * h * w, d});
  if (!params.units.empty()) {
    seq = add(seq, tile_rows(positional_encoding_2d<T>(h, w, d), batch));
    const auto mask = AttentionMask::all(h * w, h * w);
    for (const auto& unit : params.units) seq = transformer_unit(seq, mask, unit, batch);
  }
  return FeatureMap2D<T>{h, w, d, reshape(seq, {batch, h * w, d})};
}

#define SRN_INSTANTIATE_BACKBONE(T)                                                          \
  template struct BackboneParams<T>;                                                         \
  template Tensor<T> positional_encoding_2d<T>(std::size_t, std::size_t, std::size_t);       \
  template FeatureMap2D<T> extract_features(const Tensor<T>&, const BackboneConfig&,         \
                                            const BackboneParams<T>&, Tensor<T>*);

SRN_INSTANTIATE_BACKBONE(float)
SRN_INSTANTIATE_BACKBONE(double)

}  // namespace srn
