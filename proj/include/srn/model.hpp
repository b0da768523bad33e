#pragma once

#include <string>
#include <vector>

#include "srn/backbone.hpp"
#include "srn/config.hpp"
#include "srn/gsrm.hpp"
#include "srn/pvam.hpp"
#include "srn/serial.hpp"
#include "srn/vsfd.hpp"

namespace srn {

template <typename T>
struct ForwardResult {
  FeatureMap2D<T> features;
  AlignedFeatures<T> aligned;   // undefined for the serial decoder
  Tensor<T> embedding_logits;   // [B*N, K]
  Tensor<T> reasoning_logits;   // [B*N, K], reasoning variants in the joint stage
  Tensor<T> output_logits;      // head the predictions come from
  Tensor<T> gate;               // gated fusion only
  // Defined only when labels were supplied.
  Tensor<T> l_e, l_r, l_f, total;
};

/// Backbone plus one of the decoders selected by ModelConfig::decoder.
/// Parameter names are prefixed backbone., pvam., gsrm., vsfd. or serial.
template <typename T>
class SrnModel {
 public:
  SrnModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  const BackboneParams<T>& backbone() const { return backbone_; }
  const PvamParams<T>& pvam() const { return pvam_; }
  const GsrmParams<T>& gsrm() const { return gsrm_; }
  const VsfdParams<T>& vsfd() const { return vsfd_; }
  const SerialDecoderParams<T>& serial() const { return serial_; }
  BackboneConfig backbone_config() const { return BackboneConfig::from(config_); }

  FeatureMap2D<T> features(const Tensor<T>& images) const;

  /// Warmup runs the backbone, PVAM and the embedding classifier only and
  /// the loss is α_e·L_e. Joint runs the configured decoder with the full
  /// loss. `labels` is [B*N] image-major, or empty for no losses.
  ForwardResult<T> forward(const Tensor<T>& images, std::span<const int> labels, Stage stage,
                           const LossWeights& weights, bool keep_attention = false) const;
  /// The same starting from already extracted visual features.
  ForwardResult<T> forward_features(const FeatureMap2D<T>& features, std::span<const int> labels,
                                    Stage stage, const LossWeights& weights,
                                    bool keep_attention = false) const;

  /// Greedy EOS-truncated predictions. When `attention` is given and the
  /// decoder is parallel it receives the PVAM maps [B, N, h*w].
  std::vector<std::vector<int>> predict(const Tensor<T>& images,
                                        AlignedFeatures<T>* attention = nullptr) const;

  /// Whether parameter `name` is optimized during `stage`.
  bool trains(const std::string& name, Stage stage) const;

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  BackboneParams<T> backbone_;
  PvamParams<T> pvam_;
  GsrmParams<T> gsrm_;
  VsfdParams<T> vsfd_;
  SerialDecoderParams<T> serial_;
};

}  // namespace srn
