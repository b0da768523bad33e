// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include <zlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "srn/checkpoint.hpp"
#include "srn/gradient_suite.hpp"
#include "srn/harness.hpp"
#include "srn/random.hpp"
#include "srn/serial.hpp"

using namespace srn;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradInstances = 20;
constexpr double kGradSeconds = 120.0;
constexpr double kAttentionSumTolerance = 1e-6;
constexpr double kReasoningGain = 0.03;      // SRN over no GSRM, word accuracy
constexpr double kDirectionSlack = 0.005;    // GSRM against the better one-way stream
constexpr double kFusionSlack = 0.005;       // gated against each other operator
constexpr double kLatencyRatio = 1.5;        // serial over SRN at N = 25
constexpr std::size_t kLatencyLength = 25;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

/// The desk-scale setup: 12 symbols, confusability 0.7, 50-word lexicon,
/// 20k training samples, N = 8, d = 64, pixel noise 0.7, 3 + 9 epochs.
RunConfig setup_config() {
  RunConfig c;
  c.data.count = 25000;
  c.data.lexicon_size = 50;
  c.data.confusability = 0.7;
  c.data.noise = 0.7;
  c.train.warmup_epochs = 3;
  c.train.joint_epochs = 9;
  c.model.max_len = 8;
  c.model.d_model = 64;
  c.model.num_classes = Charset::standard().num_classes();
  return c;
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------- 1

Outcome gradient_checks(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto results = gradient_suite(kGradInstances, seed, {}, kGradTolerance);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome out{seconds <= kGradSeconds, ""};
  std::ostringstream os;
  for (const auto& r : results) {
    out.pass = out.pass && r.ok() && r.instances >= kGradInstances;
    os << r.module << ' ' << r.passed << '/' << r.instances << " max_rel " << std::scientific
       << std::setprecision(2) << r.max_rel_error << std::defaultfloat << "; ";
  }
  os << fmt(seconds, 1) << " s";
  out.detail = os.str();
  return out;
}

// ---------------------------------------------------------------- 2

Outcome parallel_attention(std::uint64_t seed) {
  auto cfg = setup_config();
  const auto data = make_split(dataset_spec(cfg), 2);
  bool equal = true;
  double worst = 0;
  std::size_t rows = 0;
  for (std::uint64_t s = seed; s < seed + 3; ++s) {
    SrnModel<float> model(cfg.model, s);
    std::vector<std::size_t> idx{s, s + 10, s + 20, s + 30};
    const auto v = model.features(image_batch<float>(data, idx));
    const auto all = attend_all(v, model.pvam(), true);
    const std::size_t n = cfg.model.max_len, d = cfg.model.d_model, cells = v.height * v.width;
    for (std::size_t t = 0; t < n; ++t) {
      const auto one = attend_single(v, t, model.pvam());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        equal = equal && bit_equal(one.g.data().subspan(b * d, d), all.g.data().subspan((b * n + t) * d, d));
        equal = equal && bit_equal(one.attention.data().subspan(b * cells, cells),
                                   all.attention.data().subspan((b * n + t) * cells, cells));
        double sum = 0;
        for (float a : all.attention.data().subspan((b * n + t) * cells, cells)) sum += a;
        worst = std::max(worst, std::abs(sum - 1.0));
        ++rows;
      }
    }
  }
  return {equal && worst <= kAttentionSumTolerance,
          std::string("bit-identical ") + (equal ? "yes" : "no") + " over " + std::to_string(rows) +
              " rows; max |sum-1| " + fmt(worst, 9)};
}

// ---------------------------------------------------------------- 3

Outcome reasoning_dependencies(std::uint64_t seed) {
  auto cfg = setup_config();
  const std::size_t n = cfg.model.max_len, d = cfg.model.d_model, groups = 2;
  std::mt19937_64 rng(seed);
  auto random_rows = [&](std::size_t rows) {
    std::vector<float> v(rows * d);
    for (auto& x : v) x = static_cast<float>(uniform01(rng) * 2 - 1);
    return Tensor<float>({rows, d}, v);
  };
  auto row = [&](const Tensor<float>& s, std::size_t r) { return s.data().subspan(r * d, d); };
  std::size_t violations = 0, probes = 0;

  SrnModel<float> both(cfg.model, seed);
  const auto e = random_rows(groups * n);
  const auto base = reason(e, both.gsrm(), groups).s;
  for (std::size_t r = 0; r < groups * n; ++r) {
    auto e2 = e.clone();
    for (auto& x : e2.mutable_data().subspan(r * d, d)) x += 0.75f;
    const auto s2 = reason(e2, both.gsrm(), groups).s;
    const std::size_t g = r / n;
    for (std::size_t u = 0; u < groups * n; ++u) {
      const bool same = bit_equal(row(s2, u), row(base, u));
      const bool expect_same = u == r || u / n != g;
      violations += same != expect_same;
      ++probes;
    }
  }

  for (DecoderKind kind : {DecoderKind::Fsrm, DecoderKind::Bsrm}) {
    auto c = cfg.model;
    c.decoder = kind;
    SrnModel<float> model(c, seed);
    const Direction dir = kind == DecoderKind::Fsrm ? Direction::Forward : Direction::Backward;
    const auto e1 = random_rows(n);
    const auto b1 = reason_one_way(e1, model.gsrm(), dir).s;
    for (std::size_t u = 0; u < n; ++u) {
      auto e2 = e1.clone();
      for (auto& x : e2.mutable_data().subspan(u * d, d)) x -= 0.75f;
      const auto s2 = reason_one_way(e2, model.gsrm(), dir).s;
      for (std::size_t t = 0; t < n; ++t) {
        const bool may_see = dir == Direction::Forward ? u < t : u > t;
        violations += bit_equal(row(s2, t), row(b1, t)) == may_see;
        ++probes;
      }
    }
  }
  return {violations == 0, std::to_string(probes) + " dependency probes at N=" + std::to_string(n) +
                               ", " + std::to_string(violations) + " violations"};
}

// ---------------------------------------------------------------- 4

Outcome fusion_properties(std::uint64_t seed) {
  auto cfg = setup_config();
  SrnModel<double> model(cfg.model, seed);
  std::mt19937_64 rng(seed);
  const std::size_t rows = 64, d = cfg.model.d_model;
  auto random_rows = [&](double scale) {
    std::vector<double> v(rows * d);
    for (auto& x : v) x = (uniform01(rng) * 2 - 1) * scale;
    return Tensor<double>({rows, d}, v);
  };
  std::size_t outside = 0;
  for (double scale : {0.5, 3.0}) {
    const auto g = random_rows(scale), s = random_rows(scale);
    const auto f = fuse(g, s, model.vsfd());
    for (std::size_t i = 0; i < f.numel(); ++i)
      outside += f[i] < std::min(g[i], s[i]) || f[i] > std::max(g[i], s[i]);
  }

  SrnModel<double> zeroed(cfg.model, seed);
  {
    auto gate = Tensor<double>(zeroed.vsfd().gate);
    std::fill(gate.mutable_data().begin(), gate.mutable_data().end(), 0.0);
  }
  const auto g = random_rows(2.0), s = random_rows(2.0);
  const auto f = fuse(g, s, zeroed.vsfd());
  std::size_t not_mean = 0;
  for (std::size_t i = 0; i < f.numel(); ++i) not_mean += f[i] != (g[i] + s[i]) / 2;

  const auto data = make_split(dataset_spec(cfg), 2);
  std::vector<std::size_t> idx{0, 1, 2};
  const auto images = image_batch<double>(data, idx);
  const auto labels = label_batch(data, idx, cfg.model.max_len);
  std::size_t bad_total = 0;
  for (double alpha_e : {1.0, 0.5}) {
    LossWeights w{alpha_e, 0.15, 2.0};
    const auto r = model.forward(images, labels, Stage::Joint, w);
    const double expect = alpha_e * r.l_e.item() + 0.15 * r.l_r.item() + 2.0 * r.l_f.item();
    bad_total += r.total.item() != expect;
  }
  return {outside == 0 && not_mean == 0 && bad_total == 0,
          std::to_string(outside) + " fused values outside [min,max]; " + std::to_string(not_mean) +
              " deviations from the mean at W_z=0; " + std::to_string(bad_total) +
              " total-loss mismatches"};
}

// ---------------------------------------------------------------- 5, 6, 9

struct AblationScores {
  std::map<std::string, double> mean;
  std::string table;
};

AblationScores run_ablations(const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
  const auto cfg = setup_config();
  const auto data = make_splits(cfg);
  std::vector<AblationVariant> variants{
      {"srn", DecoderKind::Srn, FusionMode::Gated, cfg.model.gsrm_units},
      {"srn_no_gsrm", DecoderKind::SrnNoGsrm, FusionMode::Gated, cfg.model.gsrm_units},
      {"fsrm", DecoderKind::Fsrm, FusionMode::Gated, cfg.model.gsrm_units},
      {"bsrm", DecoderKind::Bsrm, FusionMode::Gated, cfg.model.gsrm_units},
      {"add", DecoderKind::Srn, FusionMode::Add, cfg.model.gsrm_units},
      {"concat", DecoderKind::Srn, FusionMode::Concat, cfg.model.gsrm_units},
      {"dot", DecoderKind::Srn, FusionMode::Dot, cfg.model.gsrm_units},
  };
  std::ofstream progress;
  std::ostream* prog = nullptr;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    progress.open(out_dir / "ablation_progress.log");
    prog = &progress;
  }
  const auto results = run_ablation(cfg, variants, seeds, data, prog);
  AblationScores scores;
  for (const auto& r : results) scores.mean[r.variant.label] = r.mean_word_acc();
  scores.table = format_ablation_table(results);
  if (!out_dir.empty()) std::ofstream(out_dir / "ablation.txt") << scores.table;
  return scores;
}

Outcome reasoning_gain(const AblationScores& a) {
  const double gain = a.mean.at("srn") - a.mean.at("srn_no_gsrm");
  return {gain >= kReasoningGain, "srn " + fmt(a.mean.at("srn")) + " vs srn_no_gsrm " +
                                      fmt(a.mean.at("srn_no_gsrm")) + ", gain " + fmt(gain) +
                                      " (need >= " + fmt(kReasoningGain) + ")"};
}

Outcome bidirectional_gain(const AblationScores& a) {
  const double srn = a.mean.at("srn"), f = a.mean.at("fsrm"), b = a.mean.at("bsrm"),
               none = a.mean.at("srn_no_gsrm");
  const bool pass = srn >= std::max(f, b) - kDirectionSlack && f > none && b > none;
  return {pass, "srn " + fmt(srn) + ", fsrm " + fmt(f) + ", bsrm " + fmt(b) + ", srn_no_gsrm " + fmt(none)};
}

Outcome gated_fusion(const AblationScores& a) {
  const double gated = a.mean.at("srn");
  bool pass = true;
  std::string detail = "gated " + fmt(gated);
  for (const char* op : {"add", "concat", "dot"}) {
    pass = pass && gated >= a.mean.at(op) - kFusionSlack;
    detail += std::string(", ") + op + " " + fmt(a.mean.at(op));
  }
  return {pass, detail};
}

// ---------------------------------------------------------------- 7

Outcome latency(std::uint64_t seed, const fs::path& out_dir) {
  auto cfg = setup_config();
  cfg.data.count = 2500;
  cfg.train.warmup_epochs = 1;
  cfg.train.joint_epochs = 1;
  cfg.train.seed = seed;
  const auto data = make_splits(cfg);
  Trainer trainer(cfg, data.train, data.val);
  trainer.run();
  const auto ckpt = Checkpoint::capture(trainer.model(), cfg, data.train.charset, trainer.step_count());
  BenchmarkOptions opt;
  opt.lengths = {10, kLatencyLength, 50};
  opt.repetitions = 5;
  const auto rows = benchmark(ckpt, opt);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir / "latency.txt") << format_latency_table(rows);
  }

  bool constant_graph = true, serial_forced = true;
  for (const auto& r : rows) {
    constant_graph = constant_graph && r.srn_graph_ops == rows.front().srn_graph_ops;
    serial_forced = serial_forced && r.serial_steps == r.length;
  }

  // Early stopping: one image takes min(first EOS + 1, N) steps.
  std::size_t step_mismatch = 0;
  std::mt19937_64 rng(seed);
  for (std::size_t trial = 0; trial < 60; ++trial) {
    ParameterSet<float> ps(mix_seed(seed, trial));
    const std::size_t d = 16, k = 4, n = 2 + trial % 9;
    auto params = SerialDecoderParams<float>::create(ps, "serial", d, k);
    {
      auto bias = Tensor<float>(params.classifier.bias);
      bias.mutable_data()[k - 1] = static_cast<float>(uniform01(rng) * 2 - 1);
    }
    std::vector<float> vals(1 * 6 * d);
    for (auto& x : vals) x = static_cast<float>(uniform01(rng) * 4 - 2);
    FeatureMap2D<float> v{2, 3, d, Tensor<float>({1, 6, d}, vals)};
    const auto r = serial_decode(v, params, n, static_cast<int>(k - 1));
    const std::size_t expect = std::min(r.sequences[0].size() + 1, n);
    step_mismatch += r.steps != expect || r.attention_evaluations != expect;
  }

  double r10 = 0, r25 = 0, r50 = 0;
  std::ostringstream os;
  for (const auto& r : rows) {
    if (r.length == 10) r10 = r.ratio;
    if (r.length == kLatencyLength) r25 = r.ratio;
    if (r.length == 50) r50 = r.ratio;
    os << "N=" << r.length << " srn " << fmt(r.srn_mean * 1e3, 3) << " ms serial "
       << fmt(r.serial_mean * 1e3, 3) << " ms ratio " << fmt(r.ratio, 2) << " (decoders "
       << fmt(r.decoder_ratio, 2) << "); ";
  }
  os << "srn graph ops constant " << (constant_graph ? "yes" : "no") << ", serial step mismatches "
     << step_mismatch;
  const bool pass = r25 >= kLatencyRatio && r50 > r10 && constant_graph && serial_forced && step_mismatch == 0;
  return {pass, os.str()};
}

// ---------------------------------------------------------------- 8

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome reproducibility(std::uint64_t seed, const fs::path& out_dir) {
  auto cfg = setup_config();
  cfg.data.count = 2500;
  cfg.train.warmup_epochs = 1;
  cfg.train.joint_epochs = 1;
  cfg.train.seed = seed;
  const auto data = make_splits(cfg);
  std::vector<std::string> logs[2];
  std::vector<std::vector<std::uint8_t>> files;
  const fs::path dir = out_dir.empty() ? fs::temp_directory_path() / "srn_acceptance" : out_dir;
  fs::create_directories(dir);
  EvalMetrics trained;
  for (int run = 0; run < 2; ++run) {
    Trainer tr(cfg, data.train, data.val);
    std::ostringstream log;
    tr.run(&log);
    logs[run].push_back(log.str());
    const auto path = dir / ("repro_" + std::to_string(run) + ".ckpt");
    Checkpoint::capture(tr.model(), cfg, data.train.charset, tr.step_count()).save(path);
    files.push_back(read_bytes(path));
    if (run == 0) trained = evaluate(tr.model(), data.test);
  }
  const bool same_log = logs[0] == logs[1] && !logs[0].front().empty();
  const bool same_file = files[0] == files[1];

  const auto loaded = Checkpoint::load(dir / "repro_0.ckpt");
  const auto restored = evaluate(*loaded.restore(), data.test);
  const bool same_metrics = restored.word_accuracy == trained.word_accuracy &&
                            restored.char_accuracy == trained.char_accuracy;
  loaded.save(dir / "repro_resaved.ckpt");
  const auto resaved = read_bytes(dir / "repro_resaved.ckpt");
  const auto& bytes = files[0];
  std::uint32_t trailer = 0;
  std::memcpy(&trailer, bytes.data() + bytes.size() - 4, 4);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size() - 4)));
  const bool crc_ok = trailer == crc && resaved == bytes;
  return {same_log && same_file && same_metrics && crc_ok,
          std::string("log identical ") + (same_log ? "yes" : "no") + ", checkpoint bytes identical " +
              (same_file ? "yes" : "no") + ", restored word/char acc " + fmt(restored.word_accuracy) + "/" +
              fmt(restored.char_accuracy) + (same_metrics ? " (equal)" : " (differ)") + ", crc " +
              (crc_ok ? "preserved" : "broken")};
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string criteria = "1,2,3,4,5,6,7,8,9", seeds_text = "1,2,3", out;
  std::uint64_t seed = 1;
  app.add_option("--criteria", criteria, "comma-separated criterion numbers");
  app.add_option("--seeds", seeds_text, "training seeds for the ablations");
  app.add_option("--seed", seed, "seed for the structural checks");
  app.add_option("--out", out, "directory for logs and tables");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::uint64_t> seeds;
  for (auto s : parse_list(seeds_text)) seeds.push_back(s);
  const auto selected = parse_list(criteria);
  auto wanted = [&](std::size_t k) { return std::find(selected.begin(), selected.end(), k) != selected.end(); };

  std::optional<AblationScores> ablations;
  auto scores = [&]() -> const AblationScores& {
    if (!ablations) ablations = run_ablations(seeds, out);
    return *ablations;
  };

  const std::map<std::size_t, std::pair<std::string, std::function<Outcome()>>> table{
      {1, {"finite-difference gradients", [&] { return gradient_checks(seed); }}},
      {2, {"parallel attention", [&] { return parallel_attention(seed); }}},
      {3, {"reasoning dependencies", [&] { return reasoning_dependencies(seed); }}},
      {4, {"fusion and loss", [&] { return fusion_properties(seed); }}},
      {5, {"semantic reasoning gain", [&] { return reasoning_gain(scores()); }}},
      {6, {"bidirectional reasoning", [&] { return bidirectional_gain(scores()); }}},
      {7, {"decoding latency", [&] { return latency(seed, out); }}},
      {8, {"reproducibility", [&] { return reproducibility(seed, out); }}},
      {9, {"gated fusion", [&] { return gated_fusion(scores()); }}},
  };

  bool all = true;
  for (const auto& [k, entry] : table) {
    if (!wanted(k)) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << k << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << entry.first << ": "
              << o.detail << std::endl;
  }
  if (ablations) std::cout << ablations->table;
  return all ? 0 : 1;
}
