#include "srn/serial.hpp"

#include <chrono>

#include "srn/errors.hpp"

namespace srn {

template <typename T>
SerialDecoderParams<T> SerialDecoderParams<T>::create(ParameterSet<T>& ps,
                                                      const std::string& prefix, std::size_t d,
                                                      std::size_t num_classes) {
  SerialDecoderParams p;
  p.w_h = ps.create(prefix + ".w_h", {d, d}, Init::Glorot);
  p.w_v = ps.create(prefix + ".w_v", {d, d}, Init::Glorot);
  p.w_a = ps.create(prefix + ".w_a", {d}, Init::Glorot);
  p.input_gates = Linear<T>::create(ps, prefix + ".input_gates", 2 * d, 3 * d);
  p.hidden_gates = Linear<T>::create(ps, prefix + ".hidden_gates", d, 3 * d);
  p.embedding = ps.create(prefix + ".embedding", {num_classes + 1, d}, Init::Glorot);
  p.classifier = Linear<T>::create(ps, prefix + ".classifier", d, num_classes);
  p.num_classes = num_classes;
  return p;
}

namespace {

template <typename T>
struct StepContext {
  const FeatureMap2D<T>& v;
  const SerialDecoderParams<T>& params;
  Tensor<T> keys;  // [B, cells, d]
  std::size_t d;
};

template <typename T>
StepContext<T> make_context(const FeatureMap2D<T>& v, const SerialDecoderParams<T>& params) {
  const std::size_t d = params.w_h.dim(0);
  if (v.channels != d || v.values.dim(2) != d) {
    throw ConfigError("serial decoder width " + std::to_string(d) +
                      " does not match feature channels " + std::to_string(v.channels));
  }
  const std::size_t batch = v.batch(), cells = v.cells();
  auto keys = reshape(matmul(reshape(v.values, {batch * cells, d}), params.w_v), {batch, cells, d});
  return {v, params, keys, d};
}

// One recurrent step; returns the new hidden state and writes the logits.
template <typename T>
Tensor<T> gru_step(const StepContext<T>& ctx, const Tensor<T>& hidden,
                   std::span<const int> previous, Tensor<T>& logits) {
  const std::size_t batch = ctx.v.batch(), d = ctx.d;
  const auto& p = ctx.params;
  auto query = reshape(matmul(hidden, p.w_h), {batch, 1, d});
  auto alpha = softmax(additive_scores(query, ctx.keys, p.w_a), 2);
  auto context = reshape(matmul(alpha, ctx.v.values), {batch, d});
  auto x = concat_cols(context, embed(previous, p.embedding));
  auto gx = p.input_gates(x);
  auto gh = p.hidden_gates(hidden);
  auto r = sigmoid(add(slice_cols(gx, 0, d), slice_cols(gh, 0, d)));
  auto z = sigmoid(add(slice_cols(gx, d, d), slice_cols(gh, d, d)));
  auto n = tanh(add(slice_cols(gx, 2 * d, d), mul(r, slice_cols(gh, 2 * d, d))));
  auto next = add(n, mul(z, sub(hidden, n)));
  logits = p.classifier(next);
  return next;
}

}  // namespace

template <typename T>
SerialDecodeResult serial_decode(const FeatureMap2D<T>& v, const SerialDecoderParams<T>& params,
                                 std::size_t max_len, int eos, bool stop_at_eos) {
  if (max_len == 0) throw ConfigError("serial decode needs max_len > 0");
  NoGradGuard guard;
  using clock = std::chrono::steady_clock;
  const auto ctx = make_context(v, params);
  const std::size_t batch = v.batch();
  auto hidden = Tensor<T>::zeros({batch, ctx.d});
  std::vector<int> previous(batch, params.start_index());
  std::vector<std::vector<int>> raw(batch);
  std::vector<bool> done(batch, false);

  SerialDecodeResult result;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto start = clock::now();
    Tensor<T> logits;
    hidden = gru_step(ctx, hidden, previous, logits);
    previous = argmax_rows(logits);
    result.step_seconds.push_back(std::chrono::duration<double>(clock::now() - start).count());
    ++result.steps;
    result.attention_evaluations += batch;
    bool all_done = true;
    for (std::size_t b = 0; b < batch; ++b) {
      if (!done[b]) {
        if (previous[b] == eos) done[b] = true;
        else raw[b].push_back(previous[b]);
      }
      all_done = all_done && done[b];
    }
    if (all_done && stop_at_eos) break;
  }
  result.sequences = std::move(raw);
  return result;
}

template <typename T>
Tensor<T> serial_teacher_forced_logits(const FeatureMap2D<T>& v, std::span<const int> labels,
                                       const SerialDecoderParams<T>& params, std::size_t max_len) {
  const std::size_t batch = v.batch();
  if (labels.size() != batch * max_len) {
    throw DimensionError("serial decoder: expected " + std::to_string(batch * max_len) +
                         " labels, got " + std::to_string(labels.size()));
  }
  const auto ctx = make_context(v, params);
  auto hidden = Tensor<T>::zeros({batch, ctx.d});
  std::vector<int> previous(batch, params.start_index());
  std::vector<Tensor<T>> steps;
  for (std::size_t t = 0; t < max_len; ++t) {
    Tensor<T> logits;
    hidden = gru_step(ctx, hidden, previous, logits);
    steps.push_back(logits);
    for (std::size_t b = 0; b < batch; ++b) previous[b] = labels[b * max_len + t];
  }
  // steps are time-major; gather rows into image-major order
  std::vector<int> order(batch * max_len);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < max_len; ++t)
      order[b * max_len + t] = static_cast<int>(t * batch + b);
  return embed(std::span<const int>(order), concat_rows(steps));
}

template <typename T>
Tensor<T> serial_train_step(const FeatureMap2D<T>& v, std::span<const int> labels,
                            const SerialDecoderParams<T>& params, std::size_t max_len) {
  return cross_entropy_mean(serial_teacher_forced_logits(v, labels, params, max_len), labels);
}

#define SRN_INSTANTIATE_SERIAL(T)                                                              \
  template struct SerialDecoderParams<T>;                                                      \
  template SerialDecodeResult serial_decode(const FeatureMap2D<T>&,                            \
                                            const SerialDecoderParams<T>&, std::size_t, int,   \
                                            bool);                                             \
  template Tensor<T> serial_teacher_forced_logits(const FeatureMap2D<T>&, std::span<const int>, \
                                                  const SerialDecoderParams<T>&, std::size_t); \
  template Tensor<T> serial_train_step(const FeatureMap2D<T>&, std::span<const int>,           \
                                       const SerialDecoderParams<T>&, std::size_t);

SRN_INSTANTIATE_SERIAL(float)
SRN_INSTANTIATE_SERIAL(double)

}  // namespace srn
