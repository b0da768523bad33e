#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "helpers.hpp"
#include "srn/data.hpp"
#include "srn/errors.hpp"
#include "srn/serial.hpp"

using namespace srn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("srn_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

// ---------------------------------------------------------------- serial baseline

TEST_CASE("a one-step serial decode evaluates attention once") {
  std::mt19937_64 rng(1);
  ParameterSet<float> ps(1);
  auto p = SerialDecoderParams<float>::create(ps, "s", 8, 5);
  FeatureMap2D<float> v{2, 3, 8, test::random_tensor<float>({1, 6, 8}, rng, false)};
  auto r = serial_decode(v, p, 1, 4);
  CHECK(r.steps == 1);
  CHECK(r.attention_evaluations == 1);
  CHECK(r.step_seconds.size() == 1);
}

TEST_CASE("serial decode takes min(first EOS + 1, N) steps") {
  std::mt19937_64 rng(2);
  const std::size_t n = 9, k = 5;
  const int eos = 4;
  std::size_t seen_early = 0, seen_full = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ParameterSet<float> ps(100 + trial);
    auto p = SerialDecoderParams<float>::create(ps, "s", 8, k);
    // shift the EOS bias so the first EOS lands at varied steps
    p.classifier.bias.mutable_data()[eos] = static_cast<float>(srn::uniform01(rng) * 3 - 1.5);
    FeatureMap2D<float> v{1, 4, 8, test::random_tensor<float>({1, 4, 8}, rng, false, -2, 2)};
    auto full = serial_decode(v, p, n, eos, false);
    CHECK(full.steps == n);
    const std::size_t first_eos = full.sequences[0].size();  // == n when no EOS
    auto r = serial_decode(v, p, n, eos);
    CHECK(r.steps == std::min(first_eos + 1, n));
    CHECK(r.sequences == full.sequences);
    (first_eos + 1 < n ? seen_early : seen_full)++;
  }
  CHECK(seen_early > 0);
  CHECK(seen_full > 0);
}

TEST_CASE("serial decoding is deterministic and its trace is per step") {
  std::mt19937_64 rng(3);
  ParameterSet<float> ps(3);
  auto p = SerialDecoderParams<float>::create(ps, "s", 8, 5);
  FeatureMap2D<float> v{1, 5, 8, test::random_tensor<float>({2, 5, 8}, rng, false)};
  auto a = serial_decode(v, p, 6, 4, false);
  auto b = serial_decode(v, p, 6, 4, false);
  CHECK(a.sequences == b.sequences);
  CHECK(a.step_seconds.size() == a.steps);
  CHECK(a.attention_evaluations == 2 * a.steps);
  for (double s : a.step_seconds) CHECK(s >= 0.0);
}

TEST_CASE("teacher forcing feeds the ground truth of the previous step") {
  std::mt19937_64 rng(4);
  ParameterSet<float> ps(4);
  const std::size_t n = 6, k = 5;
  auto p = SerialDecoderParams<float>::create(ps, "s", 8, k);
  FeatureMap2D<float> v{1, 4, 8, test::random_tensor<float>({1, 4, 8}, rng, false)};
  std::vector<int> labels{0, 1, 2, 3, 4, 4};
  auto base = serial_teacher_forced_logits(v, labels, p, n);
  for (std::size_t t = 0; t < n; ++t) {
    auto changed = labels;
    changed[t] = (labels[t] + 1) % static_cast<int>(k);
    auto out = serial_teacher_forced_logits(v, changed, p, n);
    for (std::size_t u = 0; u < n; ++u) {
      const bool same = test::bit_equal(out.data().subspan(u * k, k), base.data().subspan(u * k, k));
      CHECK(same == (u <= t));
    }
  }
  std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(serial_teacher_forced_logits(v, short_labels, p, n), DimensionError);
}

TEST_CASE("serial loss is ln K for uniform logits and near zero for a certain classifier") {
  std::mt19937_64 rng(5);
  ParameterSet<double> ps(5);
  const std::size_t k = 7;
  auto p = SerialDecoderParams<double>::create(ps, "s", 8, k);
  FeatureMap2D<double> v{1, 3, 8, test::random_tensor<double>({2, 3, 8}, rng, false)};
  std::vector<int> labels(2 * 4, 3);
  for (auto& w : p.classifier.weight.mutable_data()) w = 0;
  for (auto& b : p.classifier.bias.mutable_data()) b = 0;
  CHECK(serial_train_step(v, labels, p, 4).item() == doctest::Approx(std::log(double(k))).epsilon(1e-12));
  p.classifier.bias.mutable_data()[3] = 60;
  CHECK(serial_train_step(v, labels, p, 4).item() < 1e-20);
}

// ---------------------------------------------------------------- labels and charset

TEST_CASE("labels are padded with EOS") {
  Charset cs("ab");
  CHECK(encode_labels("ab", cs, 5) == std::vector<int>{0, 1, 2, 2, 2});
  CHECK(encode_labels("", cs, 3) == std::vector<int>{2, 2, 2});
  CHECK_THROWS_AS(encode_labels("abab", cs, 4), InputError);
  CHECK_THROWS_AS(encode_labels("abz", cs, 5), InputError);
  std::vector<int> l{1, 0, 2, 1};
  CHECK(decode_labels(l, cs) == "ba");
}

TEST_CASE("encoding round-trips lexicon words") {
  auto cs = Charset::standard();
  for (const auto& w : generate_lexicon(cs, 50, 3, 6, 9)) {
    const auto labels = encode_labels(w, cs, 8);
    for (std::size_t i = w.size(); i < 8; ++i) CHECK(labels[i] == cs.eos());
    CHECK(decode_labels(labels, cs) == w);
  }
}

TEST_CASE("charset validation") {
  CHECK_THROWS_AS(Charset("aba"), ConfigError);
  CHECK_THROWS_AS(Charset("abc", {{'a', 'b'}, {'a', 'c'}}), ConfigError);
  CHECK_THROWS_AS(Charset("abc", {{'a', 'z'}}), ConfigError);
  auto cs = Charset::standard();
  CHECK(cs.size() == 12);
  CHECK(cs.num_classes() == 13);
  CHECK(cs.partner('a') == 'o');
  CHECK(cs.partner('u') == 'n');
  CHECK(cs.partner('h') == 0);
}

// ---------------------------------------------------------------- rendering

TEST_CASE("clean rendering is deterministic and seeded rendering repeats") {
  auto cs = Charset::standard();
  RenderOptions clean;
  clean.noise = 0;
  clean.confusability = 0;
  clean.jitter = false;
  auto a = render_word("clash", cs, 1, clean);
  auto b = render_word("clash", cs, 999, clean);
  CHECK(a.pixels == b.pixels);
  RenderOptions noisy;
  CHECK(render_word("clash", cs, 5, noisy).pixels == render_word("clash", cs, 5, noisy).pixels);
  CHECK(render_word("clash", cs, 5, noisy).pixels != render_word("clash", cs, 6, noisy).pixels);
  CHECK(a.height == 16);
  CHECK(a.width == 64);
}

TEST_CASE("full confusability puts both glyphs of a pair on the same midpoint") {
  auto cs = Charset::standard();
  for (auto [x, y] : cs.confusions) {
    const auto gx = glyph_bitmap(x), gy = glyph_bitmap(y);
    CHECK(gx != gy);
    CHECK(mix_glyphs(gx, gy, 1.0) == mix_glyphs(gy, gx, 1.0));
    CHECK(mix_glyphs(gx, gy, 0.0) == gx);
  }
}

TEST_CASE("words that do not fit are rejected") {
  auto cs = Charset::standard();
  RenderOptions opt;
  CHECK_THROWS_AS(render_word("acehilnors", cs, 1, opt), InputError);
  opt.confusability = 1.5;
  CHECK_THROWS_AS(opt.validate(), ConfigError);
}

TEST_CASE("PGM files round-trip and malformed files raise IoError") {
  auto dir = scratch_dir("pgm");
  GrayImage img{3, 4, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 250, 255}};
  write_pgm(dir / "x.pgm", img);
  auto back = read_pgm(dir / "x.pgm");
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.pixels == img.pixels);
  const auto bytes = file_bytes(dir / "x.pgm");
  CHECK(std::string(bytes.begin(), bytes.begin() + 2) == "P5");
  std::ofstream(dir / "bad.pgm") << "P2\n4 3\n255\n";
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), IoError);
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
}

// ---------------------------------------------------------------- lexicon and dataset

TEST_CASE("generated lexicons make every confusion resolvable") {
  auto cs = Charset::standard();
  auto lex = generate_lexicon(cs, 50, 3, 6, 1);
  CHECK(lex.size() == 50);
  CHECK(check_disambiguation(lex, cs).empty());
  for (const auto& w : lex) {
    CHECK(w.size() >= 3);
    CHECK(w.size() <= 6);
  }
  std::vector<std::string> bad{"on", "an"};
  CHECK_FALSE(check_disambiguation(bad, Charset("anoh", {{'a', 'o'}, {'n', 'h'}})).empty());
}

TEST_CASE("dataset splits follow the ratios and the seed") {
  DatasetSpec spec;
  spec.lexicon = generate_lexicon(spec.charset, 20, 3, 6, 2);
  spec.count = 100;
  spec.seed = 4;
  const auto sizes = spec.split_sizes();
  CHECK(sizes == std::array<std::size_t, 3>{80, 10, 10});
  auto d1 = scratch_dir("ds1"), d2 = scratch_dir("ds2");
  generate_dataset(spec, d1);
  generate_dataset(spec, d2);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(file_bytes(e.path()) == file_bytes(d2 / fs::relative(e.path(), d1)));
  }
  CHECK(files == 100 + 3 + 3);
  auto train = load_split(d1, "train");
  CHECK(train.size() == 80);
  CHECK(train.charset.symbols == spec.charset.symbols);
  CHECK(train.charset.confusions == spec.charset.confusions);
  auto test_split = make_split(spec, 2);
  CHECK(load_split(d1, "test").words == test_split.words);
  CHECK(load_split(d1, "test").images[3].pixels == test_split.images[3].pixels);
  spec.lexicon.clear();
  CHECK_THROWS_AS(generate_dataset(spec, d1), InputError);
}

TEST_CASE("word frequencies are close to uniform") {
  DatasetSpec spec;
  spec.lexicon = generate_lexicon(spec.charset, 50, 3, 6, 3);
  spec.count = 10000;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < spec.count; ++i) counts[make_sample(spec, i).word]++;
  CHECK(counts.size() == 50);
  for (const auto& [w, c] : counts) {
    CHECK(c >= 160);
    CHECK(c <= 240);
  }
}

TEST_CASE("datasets with unknown symbols are rejected") {
  auto dir = scratch_dir("badsym");
  std::ofstream(dir / "charset.txt") << "a\nb\n";
  fs::create_directories(dir / "train");
  write_pgm(dir / "train" / "0.pgm", GrayImage{16, 64, std::vector<std::uint8_t>(16 * 64, 0)});
  std::ofstream(dir / "train.tsv") << "train/0.pgm\tabz\n";
  CHECK_THROWS_AS(load_split(dir, "train"), ConfigError);
}

TEST_CASE("image batches are scaled to [0, 1] and labels are image-major") {
  Split s;
  s.charset = Charset("ab");
  s.images = {GrayImage{8, 8, std::vector<std::uint8_t>(64, 255)}, GrayImage{8, 8, std::vector<std::uint8_t>(64, 0)}};
  s.words = {"a", "bb"};
  std::vector<std::size_t> idx{1, 0};
  auto x = image_batch<float>(s, idx);
  CHECK(x.shape() == Shape{2, 8, 8, 1});
  CHECK(x[0] == 0.0f);
  CHECK(x[64] == 1.0f);
  CHECK(label_batch(s, idx, 3) == std::vector<int>{1, 1, 2, 0, 2, 2});
}
