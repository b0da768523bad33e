#include "srn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "srn/errors.hpp"

namespace srn {

// ---------------------------------------------------------------- inference

GrayImage attention_image(std::span<const float> alpha, std::size_t height, std::size_t width,
                          std::size_t upsample) {
  if (alpha.size() != height * width || upsample == 0)
    throw DimensionError("attention map of " + std::to_string(alpha.size()) + " cells is not " +
                         std::to_string(height) + "x" + std::to_string(width));
  const auto [lo, hi] = std::minmax_element(alpha.begin(), alpha.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  GrayImage img{height * upsample, width * upsample, {}};
  img.pixels.resize(img.height * img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const float a = alpha[(y / upsample) * width + x / upsample];
      const double v = range > 0 ? (a - *lo) / range * 255.0 : 128.0;
      img.pixels[y * img.width + x] = static_cast<std::uint8_t>(std::lround(v));
    }
  return img;
}

InferResult infer(const Checkpoint& checkpoint, const std::filesystem::path& image_path,
                  bool dump_attention, const std::filesystem::path& out_dir) {
  const auto model = checkpoint.restore();
  const auto& cfg = model->config();
  const GrayImage img = read_pgm(image_path);
  if (img.height != cfg.image_height || img.width % 8 != 0)
    throw InputError(image_path.string() + " is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + "; the model needs height " +
                     std::to_string(cfg.image_height) + " and a width divisible by 8");
  Split one;
  one.charset = checkpoint.charset;
  one.images.push_back(img);
  one.words.emplace_back();
  const std::size_t idx = 0;
  const auto x = image_batch<float>(one, std::span<const std::size_t>(&idx, 1));

  InferResult result;
  AlignedFeatures<float> aligned;
  const bool parallel = cfg.decoder != DecoderKind::Serial;
  if (dump_attention && !parallel)
    throw ConfigError("attention maps are only available for the parallel decoders");
  const auto seqs = model->predict(x, dump_attention ? &aligned : nullptr);
  result.text = decode_labels(seqs[0], checkpoint.charset);
  if (!dump_attention) return result;

  std::filesystem::create_directories(out_dir);
  const std::size_t cells = aligned.height * aligned.width;
  const auto maps = aligned.attention.data();
  for (std::size_t t = 0; t < seqs[0].size(); ++t) {
    const auto path = out_dir / ("attention_" + std::to_string(t) + ".pgm");
    write_pgm(path, attention_image(maps.subspan(t * cells, cells), aligned.height, aligned.width,
                                    img.height / aligned.height));
    result.attention_files.push_back(path);
  }
  return result;
}

// ---------------------------------------------------------------- benchmark

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  if (xs.size() > 1) var /= static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var)};
}

void copy_matching(SrnModel<float>& model, const Checkpoint& base) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : base.parameters) by_name[r.name] = &r;
  for (const auto& [name, t] : model.parameters().entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->values.size() != t.numel() ||
        !std::equal(it->second->extents.begin(), it->second->extents.end(), t.shape().begin(),
                    t.shape().end()))
      continue;
    Tensor<float> handle = t;
    std::copy(it->second->values.begin(), it->second->values.end(), handle.mutable_data().begin());
  }
}

}  // namespace

std::vector<LatencyRow> benchmark(const Checkpoint& base, const BenchmarkOptions& options) {
  if (options.repetitions < 3) throw ConfigError("benchmark needs at least 3 repetitions");
  std::vector<LatencyRow> rows;
  for (std::size_t n : options.lengths) {
    if (n < 2) throw ConfigError("benchmark lengths must be at least 2");
    ModelConfig cfg = base.config.model;
    cfg.max_len = n;
    cfg.image_width = 8 * n;
    cfg.decoder = DecoderKind::Srn;
    SrnModel<float> srn(cfg, base.config.train.seed);
    cfg.decoder = DecoderKind::Serial;
    SrnModel<float> serial(cfg, base.config.train.seed);
    copy_matching(srn, base);
    copy_matching(serial, base);

    std::string word;
    for (std::size_t i = 0; i + 1 < n; ++i) word.push_back(base.charset.symbols[i % base.charset.size()]);
    RenderOptions render;
    render.height = cfg.image_height;
    render.width = cfg.image_width;
    render.noise = 0;
    render.confusability = 0;
    Split one;
    one.charset = base.charset;
    one.images.push_back(render_word(word, base.charset, 1, render));
    one.words.push_back(word);
    const std::size_t idx = 0;
    const auto x = image_batch<float>(one, std::span<const std::size_t>(&idx, 1));

    LatencyRow row;
    row.length = n;
    {
      const auto v = srn.features(x).values.detach();
      FeatureMap2D<float> fm{cfg.image_height / 8, cfg.image_width / 8, cfg.d_model, v};
      row.srn_graph_ops =
          srn.forward_features(fm, {}, Stage::Joint, LossWeights{}).output_logits.graph_size();
    }

    auto run_srn = [&] {
      NoGradGuard guard;
      auto out = srn.forward(x, {}, Stage::Joint, LossWeights{});
      return decode_sequences(out.output_logits, 1, cfg.eos());
    };
    auto run_serial = [&] {
      NoGradGuard guard;
      return serial_decode(serial.features(x), serial.serial(), n, cfg.eos(), false);
    };
    run_srn();
    run_serial();

    std::vector<double> t_srn, t_serial, t_srn_dec, t_serial_dec;
    for (std::size_t r = 0; r < options.repetitions; ++r) {
      auto start = Clock::now();
      run_srn();
      t_srn.push_back(seconds_since(start));
      start = Clock::now();
      const auto res = run_serial();
      t_serial.push_back(seconds_since(start));
      row.serial_steps = res.steps;

      NoGradGuard guard;
      const auto fs = srn.features(x);
      start = Clock::now();
      decode_sequences(srn.forward_features(fs, {}, Stage::Joint, LossWeights{}).output_logits, 1,
                       cfg.eos());
      t_srn_dec.push_back(seconds_since(start));
      const auto fv = serial.features(x);
      start = Clock::now();
      serial_decode(fv, serial.serial(), n, cfg.eos(), false);
      t_serial_dec.push_back(seconds_since(start));
    }
    std::tie(row.srn_mean, row.srn_std) = mean_std(t_srn);
    std::tie(row.serial_mean, row.serial_std) = mean_std(t_serial);
    row.srn_decoder_mean = mean_std(t_srn_dec).first;
    row.serial_decoder_mean = mean_std(t_serial_dec).first;
    row.ratio = row.serial_mean / row.srn_mean;
    row.decoder_ratio = row.serial_decoder_mean / row.srn_decoder_mean;
    rows.push_back(row);
  }
  return rows;
}

std::string format_latency_table(const std::vector<LatencyRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%5s %12s %10s %12s %10s %7s %12s %12s %7s %6s %8s\n", "N",
                "srn_ms", "srn_sd", "serial_ms", "serial_sd", "ratio", "srn_dec_ms",
                "serial_dec_ms", "dec_rt", "steps", "srn_ops");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%5zu %12.4f %10.4f %12.4f %10.4f %7.3f %12.4f %12.4f %7.3f %6zu %8zu\n",
                  r.length, r.srn_mean * 1e3, r.srn_std * 1e3, r.serial_mean * 1e3,
                  r.serial_std * 1e3, r.ratio, r.srn_decoder_mean * 1e3,
                  r.serial_decoder_mean * 1e3, r.decoder_ratio, r.serial_steps, r.srn_graph_ops);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------- ablation

double AblationResult::mean_word_acc() const {
  if (test_word_acc.empty()) return 0;
  double s = 0;
  for (double a : test_word_acc) s += a;
  return s / static_cast<double>(test_word_acc.size());
}

DatasetSpec dataset_spec(const RunConfig& config, const Charset& charset) {
  config.data.validate();
  DatasetSpec spec;
  spec.charset = charset;
  spec.lexicon = generate_lexicon(charset, config.data.lexicon_size, config.data.min_word_len,
                                  config.data.max_word_len, config.data.seed);
  spec.count = config.data.count;
  spec.seed = config.data.seed;
  spec.render.height = config.model.image_height;
  spec.render.width = config.model.image_width;
  spec.render.noise = config.data.noise;
  spec.render.confusability = config.data.confusability;
  return spec;
}

DataSplits make_splits(const RunConfig& config, const Charset& charset) {
  const auto spec = dataset_spec(config, charset);
  return {make_split(spec, 0), make_split(spec, 1), make_split(spec, 2)};
}

std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<AblationVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds,
                                         const DataSplits& data, std::ostream* progress) {
  std::vector<AblationResult> results(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) results[v].variant = variants[v];

  auto variant_config = [&](const AblationVariant& v, std::uint64_t seed) {
    RunConfig cfg = base;
    cfg.train.seed = seed;
    cfg.model.decoder = v.decoder;
    cfg.model.fusion = v.fusion;
    cfg.model.gsrm_units = v.gsrm_units;
    return cfg;
  };

  for (std::uint64_t seed : seeds) {
    RunConfig warm_cfg = base;
    warm_cfg.train.seed = seed;
    warm_cfg.model.decoder = DecoderKind::SrnNoGsrm;
    Trainer warm(warm_cfg, data.train, data.val);
    std::vector<EpochMetrics> warm_log;
    for (std::size_t e = 0; e < base.train.warmup_epochs; ++e) {
      warm_log.push_back(warm.run_epoch(Stage::Warmup));
      if (progress) *progress << "seed " << seed << " warmup " << warm_log.back().line() << std::endl;
    }
    for (std::size_t v = 0; v < variants.size(); ++v) {
      Trainer trainer(variant_config(variants[v], seed), data.train, data.val);
      std::vector<EpochMetrics> log;
      if (variants[v].decoder != DecoderKind::Serial) {
        trainer.fork_from(warm);
        log = warm_log;
      }
      while (trainer.epochs_done() < base.train.warmup_epochs + base.train.joint_epochs) {
        const Stage stage =
            trainer.epochs_done() < base.train.warmup_epochs ? Stage::Warmup : Stage::Joint;
        log.push_back(trainer.run_epoch(stage));
        if (progress)
          *progress << "seed " << seed << " " << variants[v].label << " " << log.back().line()
                    << std::endl;
      }
      const auto m = evaluate(trainer.model(), data.test);
      if (progress)
        *progress << "seed " << seed << " " << variants[v].label << " test_word_acc "
                  << m.word_accuracy << " test_char_acc " << m.char_accuracy << std::endl;
      results[v].seeds.push_back(seed);
      results[v].test_word_acc.push_back(m.word_accuracy);
      results[v].test_char_acc.push_back(m.char_accuracy);
      results[v].logs.push_back(std::move(log));
    }
  }
  return results;
}

std::string format_ablation_table(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-14s mean_word_acc %.4f  per-seed", r.variant.label.c_str(),
                  r.mean_word_acc());
    os << buf;
    for (std::size_t i = 0; i < r.test_word_acc.size(); ++i) {
      std::snprintf(buf, sizeof buf, " [%llu] %.4f/%.4f",
                    static_cast<unsigned long long>(r.seeds[i]), r.test_word_acc[i],
                    r.test_char_acc[i]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<AblationVariant> ablation_sweep(const std::string& name) {
  if (name == "decoders")
    return {{"srn", DecoderKind::Srn},
            {"srn_no_gsrm", DecoderKind::SrnNoGsrm},
            {"fsrm", DecoderKind::Fsrm},
            {"bsrm", DecoderKind::Bsrm}};
  if (name == "fusion")
    return {{"gated", DecoderKind::Srn, FusionMode::Gated},
            {"add", DecoderKind::Srn, FusionMode::Add},
            {"concat", DecoderKind::Srn, FusionMode::Concat},
            {"dot", DecoderKind::Srn, FusionMode::Dot}};
  if (name == "units") {
    std::vector<AblationVariant> out;
    for (std::size_t u = 1; u <= 6; ++u)
      out.push_back({"units" + std::to_string(u), DecoderKind::Srn, FusionMode::Gated, u});
    return out;
  }
  if (name == "serial") return {{"srn", DecoderKind::Srn}, {"serial", DecoderKind::Serial}};
  throw ConfigError("unknown sweep '" + name + "' (decoders, fusion, units, serial)");
}

}  // namespace srn
