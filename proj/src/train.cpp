#include "srn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "srn/errors.hpp"
#include "srn/random.hpp"

namespace srn {

// ---------------------------------------------------------------- Adam

Adam::Adam(const TrainConfig& config)
    : lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps) {}

void Adam::step(SrnModel<float>& model, Stage stage) {
  NoGradGuard guard;
  for (auto& [name, param] : model.parameters().entries()) {
    if (!model.trains(name, stage) || !param.has_grad()) continue;
    auto& slot = slots_[name];
    const std::size_t n = param.numel();
    if (slot.m.empty()) {
      slot.m.assign(n, 0.0f);
      slot.v.assign(n, 0.0f);
    }
    ++slot.step;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.step));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.step));
    const float step_size = static_cast<float>(lr_ / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float eps = static_cast<float>(eps_);
    auto g = param.grad();
    Tensor<float> handle = param;
    auto w = handle.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      slot.m[i] = b1 * slot.m[i] + (1.0f - b1) * g[i];
      slot.v[i] = b2 * slot.v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step_size * slot.m[i] / (std::sqrt(slot.v[i] * inv_c2) + eps);
    }
  }
}

// ---------------------------------------------------------------- metrics

std::string EpochMetrics::line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %zu L_e %.6f L_r %.6f L_f %.6f total %.6f val_word_acc %.6f",
                epoch, l_e, l_r, l_f, total, val_word_acc);
  return buf;
}

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

EvalMetrics score_predictions(const std::vector<std::vector<int>>& predictions,
                              const std::vector<std::vector<int>>& truths) {
  if (predictions.size() != truths.size())
    throw DimensionError("score: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truths.size()) + " labels");
  EvalMetrics out;
  out.samples = truths.size();
  if (truths.empty()) return out;
  double words = 0, chars = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto& p = predictions[i];
    const auto& t = truths[i];
    if (p == t) words += 1;
    const double norm = static_cast<double>(std::max({p.size(), t.size(), std::size_t{1}}));
    chars += 1.0 - static_cast<double>(edit_distance(p, t)) / norm;
  }
  out.word_accuracy = words / static_cast<double>(truths.size());
  out.char_accuracy = chars / static_cast<double>(truths.size());
  return out;
}

EvalMetrics evaluate(const SrnModel<float>& model, const Split& split, std::size_t batch_size) {
  if (split.charset.num_classes() != model.config().num_classes)
    throw ConfigError("dataset charset has " + std::to_string(split.charset.num_classes()) +
                      " classes, model expects " + std::to_string(model.config().num_classes));
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<int>> predictions, truths;
  for (std::size_t begin = 0; begin < split.size(); begin += batch_size) {
    const std::size_t end = std::min(split.size(), begin + batch_size);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    auto batch = model.predict(image_batch<float>(split, idx));
    for (auto& p : batch) predictions.push_back(std::move(p));
  }
  for (const auto& w : split.words) {
    std::vector<int> t;
    for (char c : w) t.push_back(split.charset.index(c));
    truths.push_back(std::move(t));
  }
  return score_predictions(predictions, truths);
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(const RunConfig& config, const Split& train, const Split& val)
    : config_(config),
      train_(train),
      val_(val),
      model_(config.model, config.train.seed),
      adam_(config.train) {
  config_.train.validate();
  if (train.size() == 0) throw InputError("training split is empty");
  if (train.charset.num_classes() != config.model.num_classes)
    throw ConfigError("charset has " + std::to_string(train.charset.num_classes()) +
                      " classes but num_classes is " + std::to_string(config.model.num_classes));
}

EpochMetrics Trainer::run_epoch(Stage stage) {
  const std::size_t epoch = epochs_done_ + 1;
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(config_.train.seed, mix_seed(fnv1a("shuffle"), epoch)));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.stage = stage;
  const std::size_t bs = config_.train.batch_size, n = config_.model.max_len;
  for (std::size_t begin = 0; begin < order.size(); begin += bs) {
    const std::size_t end = std::min(order.size(), begin + bs);
    std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const auto images = image_batch<float>(train_, idx);
    const auto labels = label_batch(train_, idx, n);
    auto out = model_.forward(images, labels, stage, config_.train.weights);
    const double total = out.total.item();
    if (!std::isfinite(total)) {
      throw DivergenceError("loss is " + std::to_string(total) + " at epoch " +
                            std::to_string(epoch) + ", step " + std::to_string(steps_ + 1) +
                            " (stage " + (stage == Stage::Warmup ? "warmup" : "joint") + ")");
    }
    out.total.backward();
    adam_.step(model_, stage);
    model_.parameters().zero_grad();
    ++steps_;
    const double w = static_cast<double>(end - begin);
    metrics.total += w * total;
    if (out.l_e.defined()) metrics.l_e += w * out.l_e.item();
    if (stage == Stage::Joint) {
      if (out.l_r.defined()) metrics.l_r += w * out.l_r.item();
      if (out.l_f.defined()) metrics.l_f += w * out.l_f.item();
    }
  }
  const double count = static_cast<double>(order.size());
  metrics.l_e /= count;
  metrics.l_r /= count;
  metrics.l_f /= count;
  metrics.total /= count;
  metrics.val_word_acc = val_.size() ? evaluate(model_, val_).word_accuracy : 0.0;
  epochs_done_ = epoch;
  return metrics;
}

std::vector<EpochMetrics> Trainer::run(std::ostream* log) {
  std::vector<EpochMetrics> out;
  const std::size_t warmup = config_.train.warmup_epochs;
  const std::size_t total = warmup + config_.train.joint_epochs;
  while (epochs_done_ < total) {
    auto m = run_epoch(epochs_done_ < warmup ? Stage::Warmup : Stage::Joint);
    if (log) *log << m.line() << '\n' << std::flush;
    out.push_back(m);
  }
  return out;
}

void Trainer::fork_from(const Trainer& other) {
  NoGradGuard guard;
  const auto& source = other.model_.parameters();
  for (auto& [name, param] : model_.parameters().entries()) {
    if (!source.contains(name)) continue;
    const auto& src = source.at(name);
    if (src.shape() != param.shape()) continue;
    Tensor<float> handle = param;
    auto dst = handle.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
    if (auto it = other.adam_.slots().find(name); it != other.adam_.slots().end())
      adam_.slots()[name] = it->second;
  }
  steps_ = other.steps_;
  epochs_done_ = other.epochs_done_;
}

}  // namespace srn
