#include "srn/gsrm.hpp"

#include "srn/errors.hpp"

namespace srn {

template <typename T>
GsrmParams<T> GsrmParams<T>::create(ParameterSet<T>& ps, const std::string& prefix,
                                    const Options& opt) {
  GsrmParams p;
  p.num_classes = opt.num_classes;
  p.shared_streams = opt.shared_streams;
  p.embedding_classifier =
      Linear<T>::create(ps, prefix + ".embedding_classifier", opt.d_model, opt.num_classes);
  if (opt.embedding_block_only) return p;
  if (opt.units == 0) throw ConfigError("GSRM needs at least one transformer unit");
  p.char_embedding = ps.create(prefix + ".char_embedding", {opt.num_classes + 2, opt.d_model},
                               Init::Glorot);
  const bool need_forward = opt.with_forward || (opt.shared_streams && opt.with_backward);
  if (need_forward) {
    for (std::size_t u = 0; u < opt.units; ++u)
      p.forward_units.push_back(TransformerUnitParams<T>::create(
          ps, prefix + ".forward.unit" + std::to_string(u), opt.transformer));
  }
  if (opt.with_backward && !opt.shared_streams) {
    for (std::size_t u = 0; u < opt.units; ++u)
      p.backward_units.push_back(TransformerUnitParams<T>::create(
          ps, prefix + ".backward.unit" + std::to_string(u), opt.transformer));
  }
  p.reasoning_classifier =
      Linear<T>::create(ps, prefix + ".reasoning_classifier", opt.d_model, opt.num_classes);
  return p;
}

template <typename T>
VisualToSemantic<T> visual_to_semantic(const Tensor<T>& g, const GsrmParams<T>& params,
                                       const std::vector<int>* teacher_labels) {
  Tensor<T> rows = g;
  if (g.rank() == 3) rows = reshape(g, {g.dim(0) * g.dim(1), g.dim(2)});
  VisualToSemantic<T> out;
  out.logits = params.embedding_classifier(rows);
  out.indices = argmax_rows(out.logits);
  if (teacher_labels && teacher_labels->size() != out.indices.size())
    throw DimensionError("visual_to_semantic: " + std::to_string(teacher_labels->size()) +
                         " teacher labels for " + std::to_string(out.indices.size()) + " rows");
  if (params.char_embedding.defined()) {
    const auto& idx = teacher_labels ? *teacher_labels : out.indices;
    out.embeddings = embed(std::span<const int>(idx), params.char_embedding);
  }
  return out;
}

template <typename T>
Tensor<T> embedding_loss(const Tensor<T>& embedding_logits, std::span<const int> labels) {
  return cross_entropy_mean(embedding_logits, labels);
}

template <typename T>
Tensor<T> reasoning_loss(const Tensor<T>& reasoning_logits, std::span<const int> labels) {
  return cross_entropy_mean(reasoning_logits, labels);
}

namespace {

template <typename T>
Tensor<T> run_stream(const Tensor<T>& e_prime, const GsrmParams<T>& params, Direction dir,
                     std::size_t groups) {
  const auto& units = params.units(dir);
  if (units.empty()) {
    throw ConfigError(std::string("GSRM has no ") +
                      (dir == Direction::Forward ? "forward" : "backward") + " stream");
  }
  if (e_prime.rank() != 2 || groups == 0 || e_prime.dim(0) % groups != 0 ||
      e_prime.dim(1) != params.char_embedding.dim(1)) {
    throw DimensionError("GSRM input " + shape_str(e_prime.shape()) + " for " +
                         std::to_string(groups) + " sequences of width " +
                         std::to_string(params.char_embedding.dim(1)));
  }
  const std::size_t len = e_prime.dim(0) / groups, d = e_prime.dim(1);
  const bool forward = dir == Direction::Forward;
  const int sentinel = forward ? params.start_index() : params.end_index();
  auto fill = embed(std::span<const int>(&sentinel, 1), params.char_embedding);
  auto x = shift_sequence(e_prime, fill, groups, forward);
  x = add(x, tile_rows(positional_encoding<T>(len, d), groups));
  const auto mask = forward ? AttentionMask::causal(len) : AttentionMask::anti_causal(len);
  for (const auto& unit : units) x = transformer_unit(x, mask, unit, groups);
  return x;
}

}  // namespace

template <typename T>
SemanticFeatures<T> reason(const Tensor<T>& e_prime, const GsrmParams<T>& params,
                           std::size_t groups) {
  auto s = add(run_stream(e_prime, params, Direction::Forward, groups),
               run_stream(e_prime, params, Direction::Backward, groups));
  return {s, params.reasoning_classifier(s)};
}

template <typename T>
SemanticFeatures<T> reason_one_way(const Tensor<T>& e_prime, const GsrmParams<T>& params,
                                   Direction direction, std::size_t groups) {
  auto s = run_stream(e_prime, params, direction, groups);
  return {s, params.reasoning_classifier(s)};
}

#define SRN_INSTANTIATE_GSRM(T)                                                               \
  template struct GsrmParams<T>;                                                              \
  template VisualToSemantic<T> visual_to_semantic(const Tensor<T>&, const GsrmParams<T>&,     \
                                                  const std::vector<int>*);                   \
  template Tensor<T> embedding_loss(const Tensor<T>&, std::span<const int>);                  \
  template Tensor<T> reasoning_loss(const Tensor<T>&, std::span<const int>);                  \
  template SemanticFeatures<T> reason(const Tensor<T>&, const GsrmParams<T>&, std::size_t);   \
  template SemanticFeatures<T> reason_one_way(const Tensor<T>&, const GsrmParams<T>&,         \
                                              Direction, std::size_t);

SRN_INSTANTIATE_GSRM(float)
SRN_INSTANTIATE_GSRM(double)

}  // namespace srn
