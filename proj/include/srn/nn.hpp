#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srn/ops.hpp"
#include "srn/tensor.hpp"

namespace srn {

enum class Init { Zeros, Ones, Glorot };

/// Named trainable tensors. Each tensor's initial values come from a stream
/// seeded by (master seed, name), so a parameter starts identical in every
/// model variant that declares it, regardless of declaration order.
template <typename T>
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor<T> create(const std::string& name, Shape shape, Init init);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out], undefined when the layer has none

  static Linear create(ParameterSet<T>& ps, const std::string& prefix, std::size_t in,
                       std::size_t out, bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNorm create(ParameterSet<T>& ps, const std::string& prefix, std::size_t width);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

enum class NormOrder { Post, Pre };

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::size_t ff_dim = 128;
  NormOrder norm_order = NormOrder::Post;

  void validate() const;
};

template <typename T>
struct MultiHeadAttentionParams {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttentionParams create(ParameterSet<T>& ps, const std::string& prefix,
                                         std::size_t d_model, std::size_t heads);
};

/// Per-head scaled dot-product attention over projected q/k/v, heads
/// concatenated and output-projected. Inputs hold `groups` stacked sequences.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionMask& mask, const MultiHeadAttentionParams<T>& p,
                               std::size_t groups = 1, std::vector<T>* weights = nullptr);

template <typename T>
struct TransformerUnitParams {
  MultiHeadAttentionParams<T> attention;
  Linear<T> ff_in, ff_out;
  LayerNorm<T> norm1, norm2;
  NormOrder norm_order = NormOrder::Post;

  static TransformerUnitParams create(ParameterSet<T>& ps, const std::string& prefix,
                                      const TransformerConfig& config);
};

/// Self-attention + feed-forward with residuals. Post-norm:
/// y = LN2(h + FFN(h)), h = LN1(x + MHA(x)). Pre-norm moves each LN inside
/// its residual branch.
template <typename T>
Tensor<T> transformer_unit(const Tensor<T>& x, const AttentionMask& mask,
                           const TransformerUnitParams<T>& p, std::size_t groups = 1);

/// PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(p / 10000^(2i/d)).
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d);

/// Repeat a [L, d] table `groups` times along rows.
template <typename T>
Tensor<T> tile_rows(const Tensor<T>& table, std::size_t groups);

}  // namespace srn
