#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "srn/data.hpp"
#include "srn/model.hpp"

namespace srn {

/// Adam with bias correction. Each parameter keeps its own step count, so a
/// parameter that was frozen so far starts its correction from step one.
class Adam {
 public:
  struct Slot {
    std::vector<float> m, v;
    std::uint64_t step = 0;
  };

  explicit Adam(const TrainConfig& config);

  /// Update every parameter of `model` that trains in `stage` and holds a
  /// gradient.
  void step(SrnModel<float>& model, Stage stage);

  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::map<std::string, Slot> slots_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  Stage stage = Stage::Warmup;
  double l_e = 0, l_r = 0, l_f = 0, total = 0;
  double val_word_acc = 0;

  /// `epoch <k> L_e <v> L_r <v> L_f <v> total <v> val_word_acc <v>`
  std::string line() const;
};

struct EvalMetrics {
  double word_accuracy = 0;
  double char_accuracy = 0;
  std::size_t samples = 0;
};

std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

/// Word accuracy: exact match after EOS truncation. Char accuracy: mean of
/// 1 - edit distance / max(|prediction|, |truth|, 1).
EvalMetrics score_predictions(const std::vector<std::vector<int>>& predictions,
                              const std::vector<std::vector<int>>& truths);

EvalMetrics evaluate(const SrnModel<float>& model, const Split& split,
                     std::size_t batch_size = 64);

/// Two-stage training over a fixed train/val split.
class Trainer {
 public:
  Trainer(const RunConfig& config, const Split& train, const Split& val);

  SrnModel<float>& model() { return model_; }
  const SrnModel<float>& model() const { return model_; }
  const RunConfig& config() const { return config_; }
  std::uint64_t step_count() const { return steps_; }
  std::size_t epochs_done() const { return epochs_done_; }

  /// One pass over the training split, shuffled by (seed, global epoch).
  /// A non-finite loss throws DivergenceError.
  EpochMetrics run_epoch(Stage stage);

  /// Remaining warmup epochs then joint epochs; each metrics line is also
  /// written to `log` when given.
  std::vector<EpochMetrics> run(std::ostream* log = nullptr);

  /// Copy parameters (by name, where shapes agree), optimizer state and the
  /// epoch counter from a trainer on the same data, e.g. to branch several
  /// decoder variants off one warmup.
  void fork_from(const Trainer& other);

 private:
  RunConfig config_;
  const Split& train_;
  const Split& val_;
  SrnModel<float> model_;
  Adam adam_;
  std::uint64_t steps_ = 0;
  std::size_t epochs_done_ = 0;
};

}  // namespace srn
