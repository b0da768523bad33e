#pragma once

#include <vector>

#include "srn/nn.hpp"

namespace srn {

enum class Direction { Forward, Backward };

/// Global semantic reasoning. The character embedding table has K rows for
/// the classes (EOS included) plus START (row K) and END (row K+1) sentinels
/// that are never predicted.
template <typename T>
struct GsrmParams {
  Linear<T> embedding_classifier;  // g_t -> K logits
  Tensor<T> char_embedding;        // [K+2, d]
  std::vector<TransformerUnitParams<T>> forward_units;
  std::vector<TransformerUnitParams<T>> backward_units;  // empty when shared with forward
  Linear<T> reasoning_classifier;  // s_t -> K logits
  bool shared_streams = false;
  std::size_t num_classes = 0;

  struct Options {
    std::size_t d_model = 64;
    std::size_t num_classes = 13;
    std::size_t units = 4;
    TransformerConfig transformer;
    bool shared_streams = false;
    bool with_forward = true;
    bool with_backward = true;
    bool embedding_block_only = false;  // SRN without the reasoning block
  };
  static GsrmParams create(ParameterSet<T>& ps, const std::string& prefix, const Options& opt);

  int start_index() const { return static_cast<int>(num_classes); }
  int end_index() const { return static_cast<int>(num_classes) + 1; }
  const std::vector<TransformerUnitParams<T>>& units(Direction dir) const {
    return dir == Direction::Forward || shared_streams ? forward_units : backward_units;
  }
};

template <typename T>
struct VisualToSemantic {
  Tensor<T> logits;          // [rows, K]
  std::vector<int> indices;  // argmax per row, ties to the lowest class
  Tensor<T> embeddings;      // E', [rows, d]
};

template <typename T>
struct SemanticFeatures {
  Tensor<T> s;       // [rows, d]
  Tensor<T> logits;  // [rows, K]
};

/// g is [B*N, d] (or [B, N, d]). The argmax blocks gradient: E' depends on the
/// classifier only through integer indices. With `teacher_labels` the lookup
/// uses ground truth instead of the argmax.
template <typename T>
VisualToSemantic<T> visual_to_semantic(const Tensor<T>& g, const GsrmParams<T>& params,
                                       const std::vector<int>* teacher_labels = nullptr);

template <typename T>
Tensor<T> embedding_loss(const Tensor<T>& embedding_logits, std::span<const int> labels);

/// Both directional streams over `groups` stacked sequences of length N:
///   forward  input [START, e'_0..e'_{N-2}], causal mask      -> sees e'_{<t}
///   backward input [e'_1..e'_{N-1}, END],   anti-causal mask -> sees e'_{>t}
/// each with positional encoding and the stream's transformer units;
/// s_t = forward_t + backward_t, so s_t never reads e'_t.
template <typename T>
SemanticFeatures<T> reason(const Tensor<T>& e_prime, const GsrmParams<T>& params,
                           std::size_t groups = 1);

/// Single-stream variant (forward-only or backward-only reasoning).
template <typename T>
SemanticFeatures<T> reason_one_way(const Tensor<T>& e_prime, const GsrmParams<T>& params,
                                   Direction direction, std::size_t groups = 1);

template <typename T>
Tensor<T> reasoning_loss(const Tensor<T>& reasoning_logits, std::span<const int> labels);

}  // namespace srn
