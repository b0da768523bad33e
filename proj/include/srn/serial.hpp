#pragma once

#include <vector>

#include "srn/backbone.hpp"

namespace srn {

/// Recurrent attention baseline: p(y_t | e_{t-1}, H_{t-1}, g_t). The query of
/// step t is the previous hidden state, so steps run strictly in sequence.
///   score  = w_a · tanh(H_{t-1}·W_h + v_ij·W_v)
///   c_t    = Σ softmax(score) v_ij
///   H_t    = GRU([c_t, e_{t-1}], H_{t-1})
///   logits = H_t·W_c + b_c
/// H_0 = 0 and e_0 is the START row of the decoder's embedding table.
template <typename T>
struct SerialDecoderParams {
  Tensor<T> w_h;            // [d, d]
  Tensor<T> w_v;            // [d, d]
  Tensor<T> w_a;            // [d]
  Linear<T> input_gates;    // [2d, 3d], order reset|update|candidate
  Linear<T> hidden_gates;   // [d, 3d]
  Tensor<T> embedding;      // [K+1, d]
  Linear<T> classifier;     // [d, K]
  std::size_t num_classes = 0;

  static SerialDecoderParams create(ParameterSet<T>& ps, const std::string& prefix,
                                    std::size_t d, std::size_t num_classes);
  int start_index() const { return static_cast<int>(num_classes); }
};

struct SerialDecodeResult {
  std::vector<std::vector<int>> sequences;  // EOS-truncated, one per image
  std::vector<double> step_seconds;         // wall time of each recurrent step
  std::size_t steps = 0;
  std::size_t attention_evaluations = 0;
};

/// Greedy decoding; stops once every image has emitted EOS or after max_len
/// steps, so a single image takes min(first EOS + 1, max_len) steps. With
/// `stop_at_eos` false all max_len steps run (sequences are still cut).
template <typename T>
SerialDecodeResult serial_decode(const FeatureMap2D<T>& v, const SerialDecoderParams<T>& params,
                                 std::size_t max_len, int eos, bool stop_at_eos = true);

/// Teacher-forced mean cross-entropy over max_len steps; step t consumes the
/// embedding of labels[t-1]. `labels` is [B*max_len], image-major.
template <typename T>
Tensor<T> serial_train_step(const FeatureMap2D<T>& v, std::span<const int> labels,
                            const SerialDecoderParams<T>& params, std::size_t max_len);

/// Per-step logits [B*max_len, K] (image-major) under teacher forcing.
template <typename T>
Tensor<T> serial_teacher_forced_logits(const FeatureMap2D<T>& v, std::span<const int> labels,
                                       const SerialDecoderParams<T>& params, std::size_t max_len);

}  // namespace srn
