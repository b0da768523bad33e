// Command-line front end: gen-data, train, eval, infer, benchmark,
// grad-check and ablate.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "srn/errors.hpp"
#include "srn/gradient_suite.hpp"
#include "srn/harness.hpp"

namespace {

using namespace srn;
namespace fs = std::filesystem;

// Options shared by the commands that build a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string decoder, fusion;
  std::optional<std::size_t> gsrm_units, max_len;
  std::optional<double> alpha_e, alpha_r, alpha_f;

  void attach(CLI::App& app, bool model_flags) {
    app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "random seed (u64)");
    if (!model_flags) return;
    app.add_option("--decoder", decoder, "decoder kind")
        ->check(CLI::IsMember({"srn", "srn_no_gsrm", "fsrm", "bsrm", "serial"}));
    app.add_option("--gsrm-units", gsrm_units, "transformer units per reasoning stream");
    app.add_option("--fusion", fusion, "fusion operator")
        ->check(CLI::IsMember({"gated", "add", "concat", "dot"}));
    app.add_option("--alpha-e", alpha_e, "embedding loss weight");
    app.add_option("--alpha-r", alpha_r, "reasoning loss weight");
    app.add_option("--alpha-f", alpha_f, "fusion loss weight");
    app.add_option("--max-len", max_len, "output positions N");
  }

  RunConfig build() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    auto put = [&](const char* key, const auto& value) {
      std::ostringstream os;
      os.precision(17);
      os << value;
      cfg.set(key, os.str());
    };
    if (seed) put("seed", *seed);
    if (!decoder.empty()) cfg.set("decoder", decoder);
    if (!fusion.empty()) cfg.set("fusion", fusion);
    if (gsrm_units) put("gsrm_units", *gsrm_units);
    if (max_len) put("max_len", *max_len);
    if (alpha_e) put("alpha_e", *alpha_e);
    if (alpha_r) put("alpha_r", *alpha_r);
    if (alpha_f) put("alpha_f", *alpha_f);
    return cfg;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::istringstream is(part);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError(std::string("bad ") + what + " list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Loads the splits from a generated directory, or renders them from the
// config when no directory is given. The model's class count and image size
// follow the data.
DataSplits load_or_render(RunConfig& cfg, const std::string& data_dir) {
  DataSplits d;
  if (data_dir.empty()) {
    d = make_splits(cfg);
  } else {
    d.train = load_split(data_dir, "train");
    d.val = load_split(data_dir, "val");
    d.test = load_split(data_dir, "test");
  }
  cfg.model.num_classes = d.train.charset.num_classes();
  if (!d.train.images.empty()) {
    cfg.model.image_height = d.train.images[0].height;
    cfg.model.image_width = d.train.images[0].width;
  }
  return d;
}

int cmd_gen_data(const ConfigFlags& flags, const std::string& out) {
  RunConfig cfg = flags.build();
  if (flags.seed) cfg.data.seed = *flags.seed;
  const auto spec = dataset_spec(cfg);
  generate_dataset(spec, out);
  const auto sizes = spec.split_sizes();
  std::printf("wrote %zu/%zu/%zu samples over %zu words to %s\n", sizes[0], sizes[1], sizes[2],
              spec.lexicon.size(), out.c_str());
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& data_dir, const std::string& out) {
  RunConfig cfg = flags.build();
  const auto data = load_or_render(cfg, data_dir);
  fs::create_directories(out);
  write_text(fs::path(out) / "config.txt", cfg.serialize());
  Trainer trainer(cfg, data.train, data.val);
  std::ofstream log(fs::path(out) / "metrics.log");
  for (const auto& m : trainer.run(&std::cout)) log << m.line() << '\n';
  const auto ckpt = Checkpoint::capture(trainer.model(), cfg, data.train.charset, trainer.step_count());
  ckpt.save(fs::path(out) / "model.ckpt");
  const auto test = evaluate(trainer.model(), data.test);
  std::printf("test word_accuracy %.6f char_accuracy %.6f\n", test.word_accuracy, test.char_accuracy);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& split) {
  const auto ckpt = Checkpoint::load(checkpoint);
  const auto data = load_split(data_dir, split);
  if (data.charset.symbols != ckpt.charset.symbols)
    throw ConfigError("dataset charset '" + data.charset.symbols + "' differs from the checkpoint's '" +
                      ckpt.charset.symbols + "'");
  const auto model = ckpt.restore();
  const auto m = evaluate(*model, data);
  std::printf("%s word_accuracy %.6f char_accuracy %.6f samples %zu\n", split.c_str(),
              m.word_accuracy, m.char_accuracy, m.samples);
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& image, bool dump,
              const std::string& out) {
  const auto result = infer(Checkpoint::load(checkpoint), image, dump, out);
  std::printf("%s\n", result.text.c_str());
  for (const auto& p : result.attention_files) std::fprintf(stderr, "wrote %s\n", p.c_str());
  return 0;
}

int cmd_benchmark(const ConfigFlags& flags, const std::string& checkpoint,
                  const std::string& lengths, std::size_t reps, const std::string& out) {
  Checkpoint base;
  if (!checkpoint.empty()) {
    base = Checkpoint::load(checkpoint);
  } else {
    base.config = flags.build();
    base.charset = Charset::standard();
    base.config.model.num_classes = base.charset.num_classes();
    SrnModel<float> model(base.config.model, base.config.train.seed);
    base = Checkpoint::capture(model, base.config, base.charset, 0);
  }
  BenchmarkOptions opt;
  opt.lengths = parse_list<std::size_t>(lengths, "length");
  opt.repetitions = reps;
  const auto table = format_latency_table(benchmark(base, opt));
  std::cout << table;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "latency.txt", table);
  }
  return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t instances, const std::vector<std::string>& modules) {
  bool ok = true;
  for (const auto& r : gradient_suite(instances, seed, modules)) {
    std::printf("%-10s %s instances %zu/%zu probes %zu skipped %zu max_rel_err %.3e time %.2fs\n",
                r.module.c_str(), r.ok() ? "PASS" : "FAIL", r.passed, r.instances, r.probes,
                r.skipped, r.max_rel_error, r.seconds);
    ok = ok && r.ok();
  }
  return ok ? 0 : 1;
}

int cmd_ablate(const ConfigFlags& flags, const std::string& sweep, const std::string& seeds,
               const std::string& data_dir, const std::string& out) {
  RunConfig cfg = flags.build();
  const auto data = load_or_render(cfg, data_dir);
  const auto seed_list = parse_list<std::uint64_t>(seeds, "seed");
  fs::create_directories(out);
  std::ofstream progress(fs::path(out) / "progress.log");
  const auto results = run_ablation(cfg, ablation_sweep(sweep), seed_list, data, &progress);
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.logs.size(); ++i) {
      std::ofstream log(fs::path(out) / (r.variant.label + "_seed" + std::to_string(r.seeds[i]) + ".log"));
      for (const auto& m : r.logs[i]) log << m.line() << '\n';
    }
  const auto table = format_ablation_table(results);
  write_text(fs::path(out) / "ablation.txt", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic reasoning network for scene text recognition"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, bench_flags, ablate_flags;
  std::string out, data_dir, checkpoint, image, split = "test", lengths = "10,25,50";
  std::string sweep = "decoders", seeds = "1,2,3";
  std::size_t reps = 5, instances = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> modules;
  bool dump = false;

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset to disk");
  gen_flags.attach(*gen, false);
  gen->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "two-stage training; writes model.ckpt and metrics.log");
  train_flags.attach(*train, true);
  train->add_option("--data", data_dir, "dataset directory (rendered in memory when omitted)");
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "word and character accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* inf = app.add_subcommand("infer", "decode one PGM image");
  inf->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  inf->add_option("--image", image)->required();
  inf->add_flag("--dump-attention", dump, "write one attention map per decoded character");
  out = ".";
  inf->add_option("--out", out, "directory for attention maps");

  auto* bench = app.add_subcommand("benchmark", "parallel vs serial decode latency");
  bench_flags.attach(*bench, false);
  bench->add_option("--checkpoint", checkpoint, "weights to time (untrained when omitted)");
  bench->add_option("--lengths", lengths, "comma separated N values");
  bench->add_option("--repetitions", reps, "timed passes per N")->check(CLI::PositiveNumber);
  bench->add_option("--out", out, "directory for latency.txt");

  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
  grad->add_option("--seed", seed, "random seed (u64)");
  grad->add_option("--instances", instances, "instances per module")->check(CLI::PositiveNumber);
  grad->add_option("--module", modules, "restrict to these modules")
      ->check(CLI::IsMember(gradient_suite_modules()));

  auto* ablate = app.add_subcommand("ablate", "train a sweep of variants over several seeds");
  ablate_flags.attach(*ablate, true);
  ablate->add_option("--sweep", sweep, "decoders, fusion, units or serial")
      ->check(CLI::IsMember({"decoders", "fusion", "units", "serial"}));
  ablate->add_option("--seeds", seeds, "comma separated seeds");
  ablate->add_option("--data", data_dir, "dataset directory (rendered in memory when omitted)");
  ablate->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(gen_flags, out);
    if (*train) return cmd_train(train_flags, data_dir, out);
    if (*eval) return cmd_eval(checkpoint, data_dir, split);
    if (*inf) return cmd_infer(checkpoint, image, dump, out);
    if (*bench) return cmd_benchmark(bench_flags, checkpoint, lengths, reps, bench->count("--out") ? out : "");
    if (*grad) return cmd_grad_check(seed, instances, modules);
    if (*ablate) return cmd_ablate(ablate_flags, sweep, seeds, data_dir, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
