#pragma once

#include <string>
#include <vector>

#include "srn/config.hpp"
#include "srn/nn.hpp"

namespace srn {

/// Visual-semantic fusion decoder. The gate z = σ([g, s]·W_z) is elementwise
/// (W_z maps 2d -> d, no bias) and f = z*g + (1-z)*s.
template <typename T>
struct VsfdParams {
  Tensor<T> gate;             // W_z [2d, d]
  Linear<T> concat_projection;  // [2d, d] + bias, concat fusion only
  Linear<T> classifier;       // f_t -> K logits

  static VsfdParams create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d,
                           std::size_t num_classes, FusionMode mode);
};

template <typename T>
Tensor<T> fuse(const Tensor<T>& g, const Tensor<T>& s, const VsfdParams<T>& params,
               Tensor<T>* gate_out = nullptr);

/// add: g+s, dot: g⊙s, concat: [g,s]·W + b, gated: fuse().
template <typename T>
Tensor<T> fuse_variant(const Tensor<T>& g, const Tensor<T>& s, FusionMode mode,
                       const VsfdParams<T>& params);

template <typename T>
Tensor<T> decode_logits(const Tensor<T>& fused, const VsfdParams<T>& params);

template <typename T>
Tensor<T> decode_loss(const Tensor<T>& fused, std::span<const int> labels,
                      const VsfdParams<T>& params);

/// α_e·L_e + α_r·L_r + α_f·L_f. Undefined terms are skipped.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_e, const Tensor<T>& l_r, const Tensor<T>& l_f,
                     const LossWeights& weights);

/// Per-position argmax of [groups*N, K] logits, each sequence cut at its
/// first EOS (ties go to the lowest class).
template <typename T>
std::vector<std::vector<int>> decode_sequences(const Tensor<T>& logits, std::size_t groups,
                                               int eos);

template <typename T>
std::vector<std::vector<int>> predict(const Tensor<T>& fused, const VsfdParams<T>& params,
                                      std::size_t groups, int eos);

/// Cut a raw per-position class list at its first EOS.
std::vector<int> truncate_at_eos(std::span<const int> classes, int eos);

}  // namespace srn
