#include "srn/vsfd.hpp"

#include "srn/errors.hpp"

namespace srn {

template <typename T>
VsfdParams<T> VsfdParams<T>::create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d,
                                    std::size_t num_classes, FusionMode mode) {
  VsfdParams p;
  if (mode == FusionMode::Gated) p.gate = ps.create(prefix + ".gate", {2 * d, d}, Init::Glorot);
  if (mode == FusionMode::Concat)
    p.concat_projection = Linear<T>::create(ps, prefix + ".concat_projection", 2 * d, d);
  p.classifier = Linear<T>::create(ps, prefix + ".classifier", d, num_classes);
  return p;
}

namespace {

template <typename T>
void check_pair(const Tensor<T>& g, const Tensor<T>& s) {
  if (g.shape() != s.shape() || g.rank() != 2) {
    throw ConfigError("fusion needs matching [rows, d] inputs, got " + shape_str(g.shape()) +
                      " and " + shape_str(s.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> fuse(const Tensor<T>& g, const Tensor<T>& s, const VsfdParams<T>& params,
               Tensor<T>* gate_out) {
  check_pair(g, s);
  if (!params.gate.defined()) throw ConfigError("gated fusion requested without gate weights");
  auto z = sigmoid(matmul(concat_cols(g, s), params.gate));
  if (gate_out) *gate_out = z;
  auto one_minus_z = add_scalar(scale(z, T(-1)), T(1));
  return add(mul(z, g), mul(one_minus_z, s));
}

template <typename T>
Tensor<T> fuse_variant(const Tensor<T>& g, const Tensor<T>& s, FusionMode mode,
                       const VsfdParams<T>& params) {
  check_pair(g, s);
  switch (mode) {
    case FusionMode::Gated:
      return fuse(g, s, params);
    case FusionMode::Add:
      return add(g, s);
    case FusionMode::Dot:
      return mul(g, s);
    case FusionMode::Concat:
      if (!params.concat_projection.weight.defined())
        throw ConfigError("concat fusion requested without projection weights");
      return params.concat_projection(concat_cols(g, s));
  }
  throw ConfigError("invalid fusion mode");
}

template <typename T>
Tensor<T> decode_logits(const Tensor<T>& fused, const VsfdParams<T>& params) {
  return params.classifier(fused);
}

template <typename T>
Tensor<T> decode_loss(const Tensor<T>& fused, std::span<const int> labels,
                      const VsfdParams<T>& params) {
  return cross_entropy_mean(decode_logits(fused, params), labels);
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_e, const Tensor<T>& l_r, const Tensor<T>& l_f,
                     const LossWeights& weights) {
  Tensor<T> total;
  auto accumulate = [&total](const Tensor<T>& term, double w) {
    if (!term.defined()) return;
    auto weighted = scale(term, static_cast<T>(w));
    total = total.defined() ? add(total, weighted) : weighted;
  };
  accumulate(l_e, weights.embedding);
  accumulate(l_r, weights.reasoning);
  accumulate(l_f, weights.fusion);
  if (!total.defined()) throw ContractError("total_loss needs at least one loss term");
  return total;
}

std::vector<int> truncate_at_eos(std::span<const int> classes, int eos) {
  std::vector<int> out;
  for (int c : classes) {
    if (c == eos) break;
    out.push_back(c);
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> decode_sequences(const Tensor<T>& logits, std::size_t groups,
                                               int eos) {
  const auto classes = argmax_rows(logits);
  if (groups == 0 || classes.size() % groups != 0) {
    throw DimensionError("decode: " + std::to_string(classes.size()) +
                         " rows do not split into " + std::to_string(groups) + " sequences");
  }
  const std::size_t len = classes.size() / groups;
  std::vector<std::vector<int>> out;
  for (std::size_t g = 0; g < groups; ++g)
    out.push_back(truncate_at_eos(std::span<const int>(classes).subspan(g * len, len), eos));
  return out;
}

template <typename T>
std::vector<std::vector<int>> predict(const Tensor<T>& fused, const VsfdParams<T>& params,
                                      std::size_t groups, int eos) {
  return decode_sequences(decode_logits(fused, params), groups, eos);
}

#define SRN_INSTANTIATE_VSFD(T)                                                                 \
  template struct VsfdParams<T>;                                                                \
  template Tensor<T> fuse(const Tensor<T>&, const Tensor<T>&, const VsfdParams<T>&, Tensor<T>*); \
  template Tensor<T> fuse_variant(const Tensor<T>&, const Tensor<T>&, FusionMode,               \
                                  const VsfdParams<T>&);                                        \
  template Tensor<T> decode_logits(const Tensor<T>&, const VsfdParams<T>&);                     \
  template Tensor<T> decode_loss(const Tensor<T>&, std::span<const int>, const VsfdParams<T>&); \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                const LossWeights&);                                            \
  template std::vector<std::vector<int>> decode_sequences(const Tensor<T>&, std::size_t, int);  \
  template std::vector<std::vector<int>> predict(const Tensor<T>&, const VsfdParams<T>&,        \
                                                 std::size_t, int);

SRN_INSTANTIATE_VSFD(float)
SRN_INSTANTIATE_VSFD(double)

}  // namespace srn
