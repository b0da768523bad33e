#include "srn/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

#include "srn/backbone.hpp"
#include "srn/errors.hpp"
#include "srn/gsrm.hpp"
#include "srn/pvam.hpp"
#include "srn/random.hpp"
#include "srn/serial.hpp"
#include "srn/vsfd.hpp"

namespace srn {

namespace {

using T = double;
using Rng = std::mt19937_64;

struct Instance {
  std::function<Tensor<T>()> loss;
  std::vector<Tensor<T>> inputs;
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t pick(Rng& rng, std::initializer_list<std::size_t> options) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(options.size()));
  return *(options.begin() + i);
}

bool coin(Rng& rng) { return uniform01(rng) < 0.5; }

Tensor<T> random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<T> values(n);
  for (auto& v : values) v = uniform(rng, -1.0, 1.0);
  return Tensor<T>(std::move(shape), std::move(values), requires_grad);
}

std::vector<int> random_labels(std::size_t count, std::size_t classes, Rng& rng) {
  std::vector<int> out(count);
  for (auto& l : out) l = static_cast<int>(uniform01(rng) * static_cast<double>(classes));
  return out;
}

// Zero biases and unit gains are special points; move every parameter off
// its initial value.
std::vector<Tensor<T>> jittered(const ParameterSet<T>& ps, Rng& rng) {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : ps.entries()) {
    Tensor<T> handle = t;
    for (auto& v : handle.mutable_data()) v += uniform(rng, -0.3, 0.3);
    out.push_back(handle);
  }
  return out;
}

// Scalar readout with a fixed random weight per output element.
struct Projection {
  Tensor<T> weights;
  Tensor<T> operator()(const Tensor<T>& y) const { return sum(mul(y, weights)); }
};

Projection projection(const Shape& shape, Rng& rng) {
  return {random_tensor(shape, rng, false)};
}

TransformerConfig small_transformer(Rng& rng, std::size_t d) {
  TransformerConfig c;
  c.d_model = d;
  c.heads = d == 8 ? pick(rng, {1, 2, 4}) : pick(rng, {1, 2});
  c.ff_dim = pick(rng, {4, 8, 12});
  c.norm_order = coin(rng) ? NormOrder::Post : NormOrder::Pre;
  return c;
}

AttentionMask random_mask(Rng& rng, std::size_t length) {
  switch (pick(rng, {0, 1, 2})) {
    case 0: return AttentionMask::all(length, length);
    case 1: return AttentionMask::causal(length);
    default: return AttentionMask::anti_causal(length);
  }
}

Instance nn_blocks_instance(Rng& rng) {
  const std::size_t d = pick(rng, {4, 8}), len = pick(rng, {2, 3, 5}), groups = pick(rng, {1, 2});
  const std::size_t in = pick(rng, {3, 6});
  ParameterSet<T> ps(rng());
  const auto proj_in = Linear<T>::create(ps, "in", in, d, coin(rng));
  const auto norm = LayerNorm<T>::create(ps, "norm", d);
  const auto unit = TransformerUnitParams<T>::create(ps, "unit", small_transformer(rng, d));
  const auto mask = random_mask(rng, len);
  auto x = random_tensor({groups * len, in}, rng);
  const auto readout = projection({groups * len, d}, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.push_back(x);
  inst.loss = [=] { return readout(transformer_unit(norm(proj_in(x)), mask, unit, groups)); };
  return inst;
}

Instance backbone_instance(Rng& rng) {
  BackboneConfig cfg;
  cfg.conv_widths = {pick(rng, {2, 3}), pick(rng, {2, 4}), pick(rng, {3, 4})};
  cfg.convs_per_stage = pick(rng, {1, 2});
  cfg.fpn_merge = coin(rng);
  cfg.units = pick(rng, {0, 1});
  cfg.transformer = small_transformer(rng, pick(rng, {4, 8}));
  const std::size_t batch = pick(rng, {1, 2}), h = 8 * pick(rng, {1, 2}), w = 8 * pick(rng, {1, 2, 3});
  ParameterSet<T> ps(rng());
  const auto params = BackboneParams<T>::create(ps, "backbone", cfg);
  auto images = random_tensor({batch, h, w, 1}, rng);
  const auto readout = projection({batch, (h / 8) * (w / 8), cfg.d_model()}, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.push_back(images);
  inst.loss = [=] { return readout(extract_features(images, cfg, params).values); };
  return inst;
}

FeatureMap2D<T> random_features(Rng& rng, std::size_t batch, std::size_t h, std::size_t w,
                                std::size_t d) {
  return {h, w, d, random_tensor({batch, h * w, d}, rng)};
}

Instance pvam_instance(Rng& rng) {
  const std::size_t d = pick(rng, {4, 8}), n = pick(rng, {2, 4, 6}), batch = pick(rng, {1, 2});
  ParameterSet<T> ps(rng());
  const auto params = PvamParams<T>::create(ps, "pvam", d, n);
  const auto v = random_features(rng, batch, pick(rng, {1, 2}), pick(rng, {2, 3, 4}), d);
  const auto readout = projection({batch, n, d}, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.push_back(v.values);
  inst.loss = [=] { return readout(attend_all(v, params, false).g); };
  return inst;
}

Instance gsrm_instance(Rng& rng) {
  const std::size_t d = pick(rng, {4, 8}), n = pick(rng, {2, 3, 5}), groups = pick(rng, {1, 2});
  const std::size_t k = pick(rng, {3, 5});
  typename GsrmParams<T>::Options opt;
  opt.d_model = d;
  opt.num_classes = k;
  opt.units = pick(rng, {1, 2});
  opt.transformer = small_transformer(rng, d);
  opt.shared_streams = coin(rng);
  const int mode = static_cast<int>(pick(rng, {0, 1, 2}));  // both, forward, backward
  opt.with_forward = mode != 2;
  opt.with_backward = mode != 1;
  ParameterSet<T> ps(rng());
  const auto params = GsrmParams<T>::create(ps, "gsrm", opt);
  auto g = random_tensor({groups * n, d}, rng);
  const auto labels = random_labels(groups * n, k, rng);
  const auto readout = projection({groups * n, d}, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.push_back(g);
  inst.loss = [=] {
    auto vts = visual_to_semantic(g, params);
    auto sem = mode == 0 ? reason(vts.embeddings, params, groups)
                         : reason_one_way(vts.embeddings, params,
                                          mode == 1 ? Direction::Forward : Direction::Backward,
                                          groups);
    return add(add(embedding_loss(vts.logits, labels), reasoning_loss(sem.logits, labels)),
               readout(sem.s));
  };
  return inst;
}

Instance vsfd_instance(Rng& rng) {
  const std::size_t d = pick(rng, {4, 8}), rows = pick(rng, {2, 5, 8}), k = pick(rng, {3, 6});
  const auto mode = static_cast<FusionMode>(pick(rng, {0, 0, 1, 2, 3}));
  ParameterSet<T> ps(rng());
  const auto params = VsfdParams<T>::create(ps, "vsfd", d, k, mode);
  auto g = random_tensor({rows, d}, rng), s = random_tensor({rows, d}, rng);
  const auto labels = random_labels(rows, k, rng);
  LossWeights w{uniform(rng, 0.5, 1.5), uniform(rng, 0.05, 0.3), uniform(rng, 1.0, 3.0)};
  auto l_e = random_tensor({}, rng), l_r = random_tensor({}, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.insert(inst.inputs.end(), {g, s, l_e, l_r});
  inst.loss = [=] {
    auto fused = mode == FusionMode::Gated ? fuse(g, s, params) : fuse_variant(g, s, mode, params);
    return total_loss(l_e, l_r, decode_loss(fused, labels, params), w);
  };
  return inst;
}

Instance serial_instance(Rng& rng) {
  const std::size_t d = pick(rng, {4, 8}), n = pick(rng, {1, 3, 5}), batch = pick(rng, {1, 2});
  const std::size_t k = pick(rng, {3, 5});
  ParameterSet<T> ps(rng());
  const auto params = SerialDecoderParams<T>::create(ps, "serial", d, k);
  const auto v = random_features(rng, batch, pick(rng, {1, 2}), pick(rng, {2, 3}), d);
  const auto labels = random_labels(batch * n, k, rng);
  Instance inst;
  inst.inputs = jittered(ps, rng);
  inst.inputs.push_back(v.values);
  inst.loss = [=] { return serial_train_step(v, labels, params, n); };
  return inst;
}

using Builder = Instance (*)(Rng&);

const std::vector<std::pair<std::string, Builder>>& builders() {
  static const std::vector<std::pair<std::string, Builder>> table{
      {"backbone", backbone_instance}, {"nn-blocks", nn_blocks_instance},
      {"pvam", pvam_instance},         {"gsrm", gsrm_instance},
      {"vsfd", vsfd_instance},         {"serial", serial_instance}};
  return table;
}

}  // namespace

const std::vector<std::string>& gradient_suite_modules() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : builders()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<ModuleGradResult> gradient_suite(std::size_t instances, std::uint64_t seed,
                                             const std::vector<std::string>& modules,
                                             double tolerance) {
  for (const auto& m : modules) {
    const auto& known = gradient_suite_modules();
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ConfigError("unknown module '" + m + "' for the gradient suite");
  }
  std::vector<ModuleGradResult> results;
  for (const auto& [name, build] : builders()) {
    if (!modules.empty() && std::find(modules.begin(), modules.end(), name) == modules.end())
      continue;
    const auto start = std::chrono::steady_clock::now();
    ModuleGradResult r;
    r.module = name;
    for (std::size_t i = 0; i < instances; ++i) {
      const std::uint64_t s = mix_seed(mix_seed(seed, fnv1a(name)), i);
      Rng rng(s);
      const auto inst = build(rng);
      const auto report = grad_check(inst.loss, inst.inputs, 1e-6, tolerance, 8, s);
      ++r.instances;
      if (report.passed && report.checked > 0) ++r.passed;
      r.probes += report.checked;
      r.skipped += report.unchecked;
      r.max_rel_error = std::max(r.max_rel_error, report.max_rel_error);
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(r);
  }
  return results;
}

}  // namespace srn
