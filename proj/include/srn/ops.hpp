#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "srn/tensor.hpp"

namespace srn {

/// Boolean [queries, keys] matrix; true means the query may attend to the key.
/// Every query row must allow at least one key.
class AttentionMask {
 public:
  AttentionMask(std::size_t queries, std::size_t keys, std::vector<std::uint8_t> allowed);

  static AttentionMask all(std::size_t queries, std::size_t keys);
  /// Query t sees keys 0..t.
  static AttentionMask causal(std::size_t length);
  /// Query t sees keys t..length-1.
  static AttentionMask anti_causal(std::size_t length);

  std::size_t queries() const { return queries_; }
  std::size_t keys() const { return keys_; }
  bool allowed(std::size_t q, std::size_t k) const { return allowed_[q * keys_ + k] != 0; }

 private:
  std::size_t queries_;
  std::size_t keys_;
  std::vector<std::uint8_t> allowed_;
};

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T offset);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sin(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// x[..., n] + bias[n]; the only broadcast the core supports.
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// [m,k]·[k,n] or batched [B,m,k]·[B,k,n]. Each output row is accumulated in
/// a fixed order that does not depend on the number of rows.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// -(1/N) Σ_t log softmax(logits_t)[targets_t] over every row, padding included.
template <typename T>
Tensor<T> cross_entropy_mean(const Tensor<T>& logits, std::span<const int> targets);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Concatenate two 2D tensors along columns.
template <typename T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);
/// Slice along the leading axis.
template <typename T> Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count);

/// Concatenate along the leading axis; trailing extents must agree.
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

/// Row lookup; gradient scatter-adds into `table`.
template <typename T> Tensor<T> embed(std::span<const int> indices, const Tensor<T>& table);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// Scaled dot-product attention, `groups` independent sequences stacked along
/// rows: q [groups*Lq, d], k and v [groups*Lk, d]. Heads split d evenly.
/// Disallowed keys get -1e9 added before the softmax. When `weights` is given
/// it receives the [groups, heads, Lq, Lk] attention weights.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionMask& mask, std::size_t groups, std::size_t heads,
                               std::vector<T>* weights = nullptr);

/// NHWC convolution: x [B,H,W,C], weight [kh*kw*C, Cout] in (ky,kx,c) row
/// order, bias [Cout]; zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t kernel, std::size_t stride, std::size_t padding);

/// Nearest-neighbour ×2 upsampling of [B,H,W,C].
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x);
/// 2×2 average pooling, stride 2, of [B,H,W,C] (H and W even).
template <typename T> Tensor<T> avg_pool2x(const Tensor<T>& x);

/// out[b,t,p] = Σ_c w[c]·tanh(query[bq,t,c] + keys[b,p,c]) with query
/// [Bq,Nq,d] (Bq is 1 or B), keys [B,P,d], w [d]. Output [B,Nq,P].
template <typename T>
Tensor<T> additive_scores(const Tensor<T>& query, const Tensor<T>& keys, const Tensor<T>& w);

/// Shift each of `groups` stacked sequences of x [groups*L, d] by one row and
/// fill the vacated slot with `fill` [1,d]. Forward: [fill, x_0..x_{L-2}];
/// backward: [x_1..x_{L-1}, fill].
template <typename T>
Tensor<T> shift_sequence(const Tensor<T>& x, const Tensor<T>& fill, std::size_t groups,
                         bool forward);

/// Row-wise argmax of a 2D tensor, ties to the lowest index. Not differentiable.
template <typename T> std::vector<int> argmax_rows(const Tensor<T>& x);

}  // namespace srn
