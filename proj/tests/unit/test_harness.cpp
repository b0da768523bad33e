#include <doctest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "srn/errors.hpp"
#include "srn/harness.hpp"

using namespace srn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("srn_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config() {
  RunConfig c;
  c.model.conv_widths = {4, 8, 16};
  c.model.d_model = 16;
  c.model.backbone_units = 1;
  c.model.backbone_heads = 4;
  c.model.backbone_ff = 32;
  c.model.gsrm_units = 1;
  c.model.gsrm_heads = 4;
  c.model.gsrm_ff = 32;
  c.train.warmup_epochs = 1;
  c.train.joint_epochs = 1;
  c.train.batch_size = 16;
  c.data.count = 240;
  c.data.lexicon_size = 20;
  return c;
}

const DataSplits& small_data() {
  static const DataSplits data = make_splits(small_config());
  return data;
}

bool same_parameters(const SrnModel<float>& a, const SrnModel<float>& b) {
  const auto& ea = a.parameters().entries();
  const auto& eb = b.parameters().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (ea[i].first != eb[i].first || !test::bit_equal(ea[i].second.data(), eb[i].second.data()))
      return false;
  return true;
}

std::vector<std::string> lines(const std::vector<EpochMetrics>& log) {
  std::vector<std::string> out;
  for (const auto& m : log) out.push_back(m.line());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST_CASE("config files parse, reject unknown keys and round-trip") {
  auto c = RunConfig::parse("# comment\nd_model = 32\nbackbone_heads=4\ngsrm_heads=4\ndecoder=fsrm\nfusion=dot\nalpha_r=0.25\nseed=18446744073709551615\n\n");
  CHECK(c.model.d_model == 32);
  CHECK(c.model.decoder == DecoderKind::Fsrm);
  CHECK(c.model.fusion == FusionMode::Dot);
  CHECK(c.train.weights.reasoning == 0.25);
  CHECK(c.train.seed == 18446744073709551615ULL);
  CHECK(RunConfig::parse(c.serialize()).serialize() == c.serialize());
  CHECK_THROWS_AS(RunConfig::parse("colour=blue\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("d_model=abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("decoder=ctc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("d_model=30\n"), ConfigError);  // not divisible by the heads
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/srn.cfg"), IoError);
}

TEST_CASE("default configuration matches the desk-scale setup") {
  RunConfig c;
  CHECK(c.model.max_len == 8);
  CHECK(c.model.d_model == 64);
  CHECK(c.model.num_classes == 13);
  CHECK(c.train.weights.embedding == 1.0);
  CHECK(c.train.weights.reasoning == 0.15);
  CHECK(c.train.weights.fusion == 2.0);
  CHECK(c.train.beta1 == 0.9);
  CHECK(c.train.beta2 == 0.999);
  CHECK(c.train.adam_eps == 1e-8);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.warmup_epochs == 3);
  CHECK(c.data.confusability == 0.7);
  CHECK(c.data.noise == 0.7);
  CHECK(c.data.count == 25000);
  CHECK(dataset_spec(c).split_sizes()[0] == 20000);
}

// ---------------------------------------------------------------- metrics

TEST_CASE("word and character accuracy") {
  std::vector<std::vector<int>> truth{{1, 2, 3}, {4}, {}};
  auto same = score_predictions(truth, truth);
  CHECK(same.word_accuracy == 1.0);
  CHECK(same.char_accuracy == 1.0);
  std::vector<std::vector<int>> empty(3);
  std::vector<std::vector<int>> nonempty{{1}, {2, 3}, {4}};
  CHECK(score_predictions(empty, nonempty).word_accuracy == 0.0);
  CHECK(score_predictions(empty, nonempty).char_accuracy == 0.0);
  // one substitution, one deletion, one insertion
  std::vector<std::vector<int>> pred{{1, 9, 3}, {1, 2}, {5, 6, 7, 8}};
  std::vector<std::vector<int>> gold{{1, 2, 3}, {1, 2, 3}, {5, 6, 7}};
  auto m = score_predictions(pred, gold);
  CHECK(m.word_accuracy == 0.0);
  CHECK(m.char_accuracy == doctest::Approx(((1 - 1.0 / 3) + (1 - 1.0 / 3) + (1 - 1.0 / 4)) / 3));
  std::vector<int> kitten{10, 8, 19, 19, 4, 13}, sitting{18, 8, 19, 19, 8, 13, 6};
  CHECK(edit_distance(kitten, sitting) == 3);
  CHECK_THROWS_AS(score_predictions(pred, std::vector<std::vector<int>>{{1}}), DimensionError);
}

TEST_CASE("metrics lines use the fixed layout") {
  EpochMetrics m{3, Stage::Joint, 1.5, 0.25, 0.125, 1.78125, 0.5};
  CHECK(m.line() == "epoch 3 L_e 1.500000 L_r 0.250000 L_f 0.125000 total 1.781250 val_word_acc 0.500000");
}

// ---------------------------------------------------------------- training

TEST_CASE("warmup touches only the backbone, PVAM and embedding classifier") {
  auto cfg = small_config();
  Trainer tr(cfg, small_data().train, small_data().val);
  SrnModel<float> init(cfg.model, cfg.train.seed);
  tr.run_epoch(Stage::Warmup);
  for (const auto& [name, p] : tr.model().parameters().entries()) {
    CAPTURE(name);
    const bool frozen = !tr.model().trains(name, Stage::Warmup);
    const bool unchanged = test::bit_equal(p.data(), init.parameters().at(name).data());
    CHECK(frozen == unchanged);
  }
}

TEST_CASE("the stage decides which parameters receive gradient") {
  auto cfg = small_config();
  SrnModel<float> model(cfg.model, 1);
  const auto& split = small_data().train;
  std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto x = image_batch<float>(split, idx);
  const auto y = label_batch(split, idx, cfg.model.max_len);
  for (Stage stage : {Stage::Warmup, Stage::Joint}) {
    model.parameters().zero_grad();
    model.forward(x, y, stage, cfg.train.weights).total.backward();
    for (const auto& [name, p] : model.parameters().entries()) {
      CAPTURE(name);
      bool nonzero = false;
      if (p.has_grad())
        for (float g : p.grad()) nonzero = nonzero || g != 0.0f;
      CHECK(nonzero == model.trains(name, stage));
    }
  }
}

TEST_CASE("training with a fixed seed is bit-for-bit repeatable") {
  auto cfg = small_config();
  Trainer a(cfg, small_data().train, small_data().val), b(cfg, small_data().train, small_data().val);
  CHECK(lines(a.run()) == lines(b.run()));
  CHECK(same_parameters(a.model(), b.model()));
  cfg.train.seed = 2;
  Trainer c(cfg, small_data().train, small_data().val);
  c.run();
  CHECK_FALSE(same_parameters(a.model(), c.model()));
}

TEST_CASE("joint training lowers the total loss") {
  auto cfg = small_config();
  cfg.train.warmup_epochs = 0;
  cfg.train.joint_epochs = 5;
  Trainer tr(cfg, small_data().train, small_data().val);
  auto log = tr.run();
  CHECK(log.back().total < log.front().total);
}

TEST_CASE("branching off a shared warmup equals training from scratch") {
  auto cfg = small_config();
  auto warm_cfg = cfg;
  warm_cfg.model.decoder = DecoderKind::SrnNoGsrm;
  Trainer warm(warm_cfg, small_data().train, small_data().val);
  warm.run_epoch(Stage::Warmup);
  for (DecoderKind kind : {DecoderKind::Srn, DecoderKind::Bsrm}) {
    auto c = cfg;
    c.model.decoder = kind;
    Trainer forked(c, small_data().train, small_data().val), scratch(c, small_data().train, small_data().val);
    forked.fork_from(warm);
    scratch.run_epoch(Stage::Warmup);
    CHECK(same_parameters(forked.model(), scratch.model()));
    CHECK(forked.run_epoch(Stage::Joint).line() == scratch.run_epoch(Stage::Joint).line());
    CHECK(same_parameters(forked.model(), scratch.model()));
  }
}

TEST_CASE("a diverging run stops with a diagnostic") {
  auto cfg = small_config();
  cfg.train.learning_rate = 1e30;
  Trainer tr(cfg, small_data().train, small_data().val);
  CHECK_THROWS_AS(tr.run(), DivergenceError);
}

TEST_CASE("evaluation refuses a charset with a different class count") {
  auto cfg = small_config();
  SrnModel<float> model(cfg.model, 1);
  Split other = small_data().val;
  other.charset = Charset("abc");
  CHECK_THROWS_AS(evaluate(model, other), ConfigError);
}

// ---------------------------------------------------------------- checkpoint

TEST_CASE("checkpoint bytes follow the record layout") {
  std::vector<CheckpointRecord> recs{{"w", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b", {}, {7}}};
  auto bytes = encode_checkpoint(recs);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SRNCKPT1");
  std::uint32_t name_len;
  std::memcpy(&name_len, bytes.data() + 8, 4);
  CHECK(name_len == 1);
  CHECK(bytes[12] == 'w');
  std::uint32_t rank;
  std::memcpy(&rank, bytes.data() + 13, 4);
  CHECK(rank == 2);
  std::uint64_t e1;
  std::memcpy(&e1, bytes.data() + 25, 8);
  CHECK(e1 == 3);
  float first;
  std::memcpy(&first, bytes.data() + 33, 4);
  CHECK(first == 1.0f);
  CHECK(bytes.size() == 8 + (4 + 1 + 4 + 16 + 24) + (4 + 1 + 4 + 4) + 4);
  auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "w");
  CHECK(back[0].extents == std::vector<std::uint64_t>{2, 3});
  CHECK(back[1].values == std::vector<float>{7});
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::vector<CheckpointRecord> recs{{"w", {2}, {1, 2}}};
  auto bytes = encode_checkpoint(recs);
  auto flipped = bytes;
  flipped[20] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), IoError);
  CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 6)), IoError);
  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/model.ckpt"), IoError);
}

TEST_CASE("save, load and restore preserve parameters and metrics") {
  auto cfg = small_config();
  cfg.model.decoder = DecoderKind::Fsrm;
  Trainer tr(cfg, small_data().train, small_data().val);
  tr.run();
  const std::uint64_t step = (std::uint64_t{1} << 50) + 12345;
  auto dir = scratch_dir("ckpt");
  Checkpoint::capture(tr.model(), cfg, small_data().train.charset, step).save(dir / "m.ckpt");
  auto loaded = Checkpoint::load(dir / "m.ckpt");
  CHECK(loaded.step == step);
  CHECK(loaded.config.serialize() == cfg.serialize());
  CHECK(loaded.charset.symbols == small_data().train.charset.symbols);
  CHECK(loaded.charset.confusions == small_data().train.charset.confusions);
  auto model = loaded.restore();
  CHECK(same_parameters(*model, tr.model()));
  auto before = evaluate(tr.model(), small_data().test), after = evaluate(*model, small_data().test);
  CHECK(before.word_accuracy == after.word_accuracy);
  CHECK(before.char_accuracy == after.char_accuracy);
}

// ---------------------------------------------------------------- inference

TEST_CASE("attention images rescale to the full range") {
  std::vector<float> a{0.1f, 0.2f, 0.3f, 0.4f};
  auto img = attention_image(a, 2, 2, 8);
  CHECK(img.height == 16);
  CHECK(img.width == 16);
  CHECK(img.pixels[0] == 0);
  CHECK(img.pixels[15 * 16 + 15] == 255);
  CHECK(img.pixels[7 * 16 + 7] == 0);
  CHECK(img.pixels[8 * 16 + 0] == 170);
  std::vector<float> flat(6, 0.25f);
  for (auto p : attention_image(flat, 2, 3).pixels) CHECK(p == 128);
  CHECK_THROWS_AS(attention_image(flat, 2, 2), DimensionError);
}

TEST_CASE("infer writes one map per decoded character, only when asked") {
  auto cfg = small_config();
  cfg.model.max_len = 3;
  cfg.model.decoder = DecoderKind::SrnNoGsrm;
  SrnModel<float> model(cfg.model, 3);
  // the embedding head ignores g and always says 'c'; uniform attention
  {
    auto w = Tensor<float>(model.gsrm().embedding_classifier.weight);
    std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0f);
    auto b = Tensor<float>(model.gsrm().embedding_classifier.bias);
    std::fill(b.mutable_data().begin(), b.mutable_data().end(), 0.0f);
    b.mutable_data()[1] = 1.0f;
    auto we = Tensor<float>(model.pvam().w_e);
    std::fill(we.mutable_data().begin(), we.mutable_data().end(), 0.0f);
  }
  const auto ckpt = Checkpoint::capture(model, cfg, Charset::standard(), 0);
  auto dir = scratch_dir("infer");
  write_pgm(dir / "in.pgm", small_data().test.images[0]);

  auto quiet = infer(ckpt, dir / "in.pgm", false, dir / "maps");
  CHECK(quiet.text == "ccc");
  CHECK(quiet.attention_files.empty());
  CHECK_FALSE(fs::exists(dir / "maps"));

  auto loud = infer(ckpt, dir / "in.pgm", true, dir / "maps");
  REQUIRE(loud.attention_files.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(loud.attention_files[t] == dir / "maps" / ("attention_" + std::to_string(t) + ".pgm"));
    auto img = read_pgm(loud.attention_files[t]);
    CHECK(img.height == 16);
    CHECK(img.width == 64);
    for (auto p : img.pixels) CHECK(p == 128);
  }
  CHECK_THROWS_AS(infer(ckpt, dir / "missing.pgm", false, dir), IoError);
  write_pgm(dir / "small.pgm", GrayImage{8, 64, std::vector<std::uint8_t>(8 * 64, 0)});
  CHECK_THROWS_AS(infer(ckpt, dir / "small.pgm", false, dir), InputError);
}

// ---------------------------------------------------------------- benchmark and ablation

TEST_CASE("benchmark rows carry the structural counts") {
  auto cfg = small_config();
  SrnModel<float> model(cfg.model, 4);
  const auto ckpt = Checkpoint::capture(model, cfg, Charset::standard(), 0);
  BenchmarkOptions opt;
  opt.lengths = {3, 6};
  opt.repetitions = 3;
  auto rows = benchmark(ckpt, opt);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].serial_steps == 3);
  CHECK(rows[1].serial_steps == 6);
  CHECK(rows[0].srn_graph_ops == rows[1].srn_graph_ops);
  for (const auto& r : rows) {
    CHECK(r.srn_mean > 0);
    CHECK(r.serial_mean > 0);
    CHECK(r.ratio == doctest::Approx(r.serial_mean / r.srn_mean));
  }
  CHECK(format_latency_table(rows).find("ratio") != std::string::npos);
  opt.repetitions = 2;
  CHECK_THROWS_AS(benchmark(ckpt, opt), ConfigError);
}

TEST_CASE("ablation runs every variant for every seed") {
  auto cfg = small_config();
  std::vector<AblationVariant> variants{{"srn", DecoderKind::Srn}, {"none", DecoderKind::SrnNoGsrm},
                                        {"serial", DecoderKind::Serial}};
  auto results = run_ablation(cfg, variants, {1, 2}, small_data());
  REQUIRE(results.size() == 3);
  for (const auto& r : results) {
    CHECK(r.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(r.test_word_acc.size() == 2);
    CHECK(r.logs[0].size() == 2);
    CHECK(r.mean_word_acc() >= 0.0);
  }
  CHECK(results[0].logs[0][0].line() == results[1].logs[0][0].line());
  CHECK(format_ablation_table(results).find("srn") != std::string::npos);
  CHECK_THROWS_AS(ablation_sweep("everything"), ConfigError);
  CHECK(ablation_sweep("fusion").size() == 4);
}
