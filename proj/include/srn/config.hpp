#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "srn/nn.hpp"

namespace srn {

enum class DecoderKind { Srn, SrnNoGsrm, Fsrm, Bsrm, Serial };
enum class FusionMode { Gated, Add, Concat, Dot };
enum class Stage { Warmup, Joint };

std::string to_string(DecoderKind kind);
std::string to_string(FusionMode mode);
DecoderKind parse_decoder(const std::string& text);
FusionMode parse_fusion(const std::string& text);

struct LossWeights {
  double embedding = 1.0;
  double reasoning = 0.15;
  double fusion = 2.0;
};

struct ModelConfig {
  std::size_t image_height = 16;
  std::size_t image_width = 64;
  std::size_t channels = 1;
  std::array<std::size_t, 3> conv_widths{16, 32, 64};
  std::size_t convs_per_stage = 2;
  bool fpn_merge = true;
  std::size_t d_model = 64;
  std::size_t backbone_units = 2;
  std::size_t backbone_heads = 8;
  std::size_t backbone_ff = 128;
  std::size_t max_len = 8;       // N, output positions including EOS padding
  std::size_t num_classes = 13;  // K, characters plus EOS (EOS is K-1)
  std::size_t gsrm_units = 4;
  std::size_t gsrm_heads = 8;
  std::size_t gsrm_ff = 128;
  bool gsrm_shared_streams = false;
  NormOrder norm_order = NormOrder::Post;
  DecoderKind decoder = DecoderKind::Srn;
  FusionMode fusion = FusionMode::Gated;
  bool teacher_forcing = false;

  int eos() const { return static_cast<int>(num_classes) - 1; }
  TransformerConfig backbone_transformer() const {
    return {d_model, backbone_heads, backbone_ff, norm_order};
  }
  TransformerConfig gsrm_transformer() const { return {d_model, gsrm_heads, gsrm_ff, norm_order}; }
  void validate() const;
};

struct TrainConfig {
  std::size_t warmup_epochs = 3;
  std::size_t joint_epochs = 9;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Synthetic dataset generation knobs.
struct DataConfig {
  std::size_t count = 25000;  // all splits together
  std::size_t lexicon_size = 50;
  std::size_t min_word_len = 3;
  std::size_t max_word_len = 6;
  double noise = 0.7;
  double confusability = 0.7;
  std::uint64_t seed = 7;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  /// key=value lines, '#' comments; unknown keys and malformed values throw ConfigError.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string serialize() const;
  /// Apply one key=value assignment.
  void set(const std::string& key, const std::string& value);
};

}  // namespace srn
