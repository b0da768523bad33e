#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "srn/checkpoint.hpp"
#include "srn/train.hpp"

namespace srn {

// ---------------------------------------------------------------- inference

struct InferResult {
  std::string text;
  std::vector<std::filesystem::path> attention_files;
};

/// Attention map of one position, min-max rescaled to [0, 255] (a constant
/// map becomes mid gray) and upsampled by nearest neighbour.
GrayImage attention_image(std::span<const float> alpha, std::size_t height, std::size_t width,
                          std::size_t upsample = 8);

/// Decode one image. With `dump_attention` each decoded position t writes
/// <out_dir>/attention_<t>.pgm; without it nothing is written.
InferResult infer(const Checkpoint& checkpoint, const std::filesystem::path& image_path,
                  bool dump_attention, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- benchmark

struct LatencyRow {
  std::size_t length = 0;       // N
  double srn_mean = 0, srn_std = 0;        // seconds per image, image to string
  double serial_mean = 0, serial_std = 0;
  double srn_decoder_mean = 0, serial_decoder_mean = 0;  // given the visual features
  double ratio = 0;             // serial_mean / srn_mean
  double decoder_ratio = 0;
  std::size_t serial_steps = 0;   // recurrent steps taken by the serial decoder
  std::size_t srn_graph_ops = 0;  // operations in the parallel decoder's forward graph
};

struct BenchmarkOptions {
  std::vector<std::size_t> lengths{10, 25, 50};
  std::size_t repetitions = 5;
};

/// For each N: an SRN and a serial model sharing the backbone (and any
/// parameters from `base` whose names and shapes fit) decode a word of N-1
/// symbols rendered at width 8N, batch size 1, after one warm-up pass. The
/// serial decoder runs all N steps.
std::vector<LatencyRow> benchmark(const Checkpoint& base, const BenchmarkOptions& options);

std::string format_latency_table(const std::vector<LatencyRow>& rows);

// ---------------------------------------------------------------- ablation

struct AblationVariant {
  std::string label;
  DecoderKind decoder = DecoderKind::Srn;
  FusionMode fusion = FusionMode::Gated;
  std::size_t gsrm_units = 4;
};

struct AblationResult {
  AblationVariant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_word_acc;
  std::vector<double> test_char_acc;
  std::vector<std::vector<EpochMetrics>> logs;

  double mean_word_acc() const;
};

struct DataSplits {
  Split train, val, test;
};

/// Dataset description from `config.data` and the model's image size.
DatasetSpec dataset_spec(const RunConfig& config, const Charset& charset = Charset::standard());

/// Render all three splits described by `config.data` in memory.
DataSplits make_splits(const RunConfig& config, const Charset& charset = Charset::standard());

/// Train every variant for every seed and score it on the test split. Per
/// seed the warmup runs once and each parallel variant branches off it (the
/// warmup stage touches only parameters the variants share); serial
/// variants train from scratch.
std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<AblationVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds,
                                         const DataSplits& data, std::ostream* progress = nullptr);

std::string format_ablation_table(const std::vector<AblationResult>& results);

/// Named sweeps: "decoders" (srn, srn_no_gsrm, fsrm, bsrm), "fusion"
/// (gated, add, concat, dot) and "units" (gsrm_units 1..6).
std::vector<AblationVariant> ablation_sweep(const std::string& name);

}  // namespace srn
