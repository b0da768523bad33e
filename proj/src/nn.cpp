#include "srn/nn.hpp"

#include <cmath>
#include <random>

#include "srn/errors.hpp"
#include "srn/random.hpp"

namespace srn {

template <typename T>
Tensor<T> ParameterSet<T>::create(const std::string& name, Shape shape, Init init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n, T(0));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::Glorot: {
      const double fan_in = static_cast<double>(shape.empty() ? 1 : shape[0]);
      const double fan_out = static_cast<double>(shape.size() < 2 ? 1 : shape[1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::mt19937_64 rng(mix_seed(seed_, fnv1a(name)));
      for (auto& v : values) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
      break;
    }
  }
  Tensor<T> t(std::move(shape), std::move(values), true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

template <typename T>
Linear<T> Linear<T>::create(ParameterSet<T>& ps, const std::string& prefix, std::size_t in,
                            std::size_t out, bool with_bias) {
  Linear l;
  l.weight = ps.create(prefix + ".weight", {in, out}, Init::Glorot);
  if (with_bias) l.bias = ps.create(prefix + ".bias", {out}, Init::Zeros);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(ParameterSet<T>& ps, const std::string& prefix,
                                  std::size_t width) {
  return {ps.create(prefix + ".gamma", {width}, Init::Ones),
          ps.create(prefix + ".beta", {width}, Init::Zeros)};
}

void TransformerConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ConfigError("transformer width " + std::to_string(d_model) +
                      " must be a positive multiple of head count " + std::to_string(heads));
  }
  if (ff_dim == 0) throw ConfigError("transformer feed-forward width must be positive");
}

template <typename T>
MultiHeadAttentionParams<T> MultiHeadAttentionParams<T>::create(ParameterSet<T>& ps,
                                                                const std::string& prefix,
                                                                std::size_t d_model,
                                                                std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_model) +
                      " not divisible by heads " + std::to_string(heads));
  }
  MultiHeadAttentionParams p;
  p.query = Linear<T>::create(ps, prefix + ".query", d_model, d_model);
  p.key = Linear<T>::create(ps, prefix + ".key", d_model, d_model);
  p.value = Linear<T>::create(ps, prefix + ".value", d_model, d_model);
  p.output = Linear<T>::create(ps, prefix + ".output", d_model, d_model);
  p.heads = heads;
  return p;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionMask& mask, const MultiHeadAttentionParams<T>& p,
                               std::size_t groups, std::vector<T>* weights) {
  auto attended =
      scaled_dot_attention(p.query(q), p.key(k), p.value(v), mask, groups, p.heads, weights);
  return p.output(attended);
}

template <typename T>
TransformerUnitParams<T> TransformerUnitParams<T>::create(ParameterSet<T>& ps,
                                                          const std::string& prefix,
                                                          const TransformerConfig& config) {
  config.validate();
  TransformerUnitParams p;
  p.attention =
      MultiHeadAttentionParams<T>::create(ps, prefix + ".attn", config.d_model, config.heads);
  p.ff_in = Linear<T>::create(ps, prefix + ".ff_in", config.d_model, config.ff_dim);
  p.ff_out = Linear<T>::create(ps, prefix + ".ff_out", config.ff_dim, config.d_model);
  p.norm1 = LayerNorm<T>::create(ps, prefix + ".norm1", config.d_model);
  p.norm2 = LayerNorm<T>::create(ps, prefix + ".norm2", config.d_model);
  p.norm_order = config.norm_order;
  return p;
}

template <typename T>
Tensor<T> transformer_unit(const Tensor<T>& x, const AttentionMask& mask,
                           const TransformerUnitParams<T>& p, std::size_t groups) {
  auto ffn = [&p](const Tensor<T>& h) { return p.ff_out(relu(p.ff_in(h))); };
  if (p.norm_order == NormOrder::Post) {
    auto h = p.norm1(add(x, multi_head_attention(x, x, x, mask, p.attention, groups)));
    return p.norm2(add(h, ffn(h)));
  }
  auto n1 = p.norm1(x);
  auto h = add(x, multi_head_attention(n1, n1, n1, mask, p.attention, groups));
  return add(h, ffn(p.norm2(h)));
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  if (d == 0 || d % 2 != 0) {
    throw ConfigError("positional encoding width must be even, got " + std::to_string(d));
  }
  if (length == 0) throw ConfigError("positional encoding length must be positive");
  std::vector<T> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / d);
      pe[pos * d + 2 * i] = static_cast<T>(std::sin(angle));
      pe[pos * d + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>({length, d}, std::move(pe));
}

template <typename T>
Tensor<T> tile_rows(const Tensor<T>& table, std::size_t groups) {
  std::vector<T> out;
  out.reserve(table.numel() * groups);
  for (std::size_t g = 0; g < groups; ++g)
    out.insert(out.end(), table.data().begin(), table.data().end());
  Shape shape = table.shape();
  shape[0] *= groups;
  return Tensor<T>(std::move(shape), std::move(out));
}

#define SRN_INSTANTIATE_NN(T)                                                                  \
  template class ParameterSet<T>;                                                              \
  template struct Linear<T>;                                                                   \
  template struct LayerNorm<T>;                                                                \
  template struct MultiHeadAttentionParams<T>;                                                 \
  template struct TransformerUnitParams<T>;                                                    \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const AttentionMask&,                                \
                                          const MultiHeadAttentionParams<T>&, std::size_t,     \
                                          std::vector<T>*);                                    \
  template Tensor<T> transformer_unit(const Tensor<T>&, const AttentionMask&,                  \
                                      const TransformerUnitParams<T>&, std::size_t);           \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                         \
  template Tensor<T> tile_rows(const Tensor<T>&, std::size_t);

SRN_INSTANTIATE_NN(float)
SRN_INSTANTIATE_NN(double)

}  // namespace srn
