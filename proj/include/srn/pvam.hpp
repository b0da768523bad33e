#pragma once

#include "srn/backbone.hpp"

namespace srn {

/// Parallel visual attention. Scores for reading order t at cell (i,j):
///   e = w_e · tanh(f_o(t)·W_o + v_ij·W_v)
/// softmax over all cells, then g_t = Σ α v_ij. No bias terms. The query is
/// the reading-order embedding only, so every t is computed independently.
template <typename T>
struct PvamParams {
  Tensor<T> w_e;            // [d]
  Tensor<T> w_o;            // [d, d]
  Tensor<T> w_v;            // [d, d]
  Tensor<T> reading_order;  // f_o, [N, d]

  static PvamParams create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d,
                           std::size_t max_len);
  std::size_t width() const { return w_e.dim(0); }
  std::size_t max_len() const { return reading_order.dim(0); }
};

template <typename T>
struct AlignedFeatures {
  Tensor<T> g;          // [B, N, d]
  Tensor<T> attention;  // [B, N, h*w]; undefined when not kept
  std::size_t height = 0;
  std::size_t width = 0;
};

template <typename T>
AlignedFeatures<T> attend_all(const FeatureMap2D<T>& v, const PvamParams<T>& params,
                              bool keep_attention = true);

/// Reading order t alone; g is [B, 1, d] and attention [B, 1, h*w]. Matches
/// row t of attend_all bit for bit.
template <typename T>
AlignedFeatures<T> attend_single(const FeatureMap2D<T>& v, std::size_t t,
                                 const PvamParams<T>& params);

}  // namespace srn
