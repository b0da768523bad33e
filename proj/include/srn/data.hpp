#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srn/tensor.hpp"

namespace srn {

/// Ordered single-byte symbols; class i is symbols[i] and EOS is class K-1
/// with K = symbols.size() + 1.
struct Charset {
  std::string symbols;
  std::vector<std::pair<char, char>> confusions;

  Charset() = default;
  Charset(std::string symbols, std::vector<std::pair<char, char>> confusions = {});

  /// 12 letters with four visually close pairs: a/o, c/e, i/l, n/u.
  static Charset standard();

  std::size_t size() const { return symbols.size(); }
  std::size_t num_classes() const { return symbols.size() + 1; }
  int eos() const { return static_cast<int>(symbols.size()); }
  bool contains(char c) const { return symbols.find(c) != std::string::npos; }
  int index(char c) const;
  char symbol(int index) const;
  /// Partner of `c` in a confusion pair, or 0.
  char partner(char c) const;
};

/// Class indices followed by EOS up to length n. Needs word.size() < n.
std::vector<int> encode_labels(const std::string& word, const Charset& charset, std::size_t n);
/// Symbols up to the first EOS.
std::string decode_labels(std::span<const int> labels, const Charset& charset);

constexpr std::size_t kGlyphRows = 7;
constexpr std::size_t kGlyphCols = 5;
using Glyph = std::array<float, kGlyphRows * kGlyphCols>;

/// 5x7 bitmap for a-z and 0-9; ink is 1.
Glyph glyph_bitmap(char c);
/// a + (factor/2)(b - a): factor 1 lands both glyphs of a pair on the midpoint.
Glyph mix_glyphs(const Glyph& a, const Glyph& b, double factor);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

struct RenderOptions {
  std::size_t height = 16;
  std::size_t width = 64;
  std::size_t pitch = 8;         // horizontal cell per character
  std::size_t vertical_scale = 2;
  double noise = 0.35;           // std of additive Gaussian noise, ink units
  double confusability = 0.7;
  bool jitter = true;

  void validate() const;
  /// Longest word the layout can hold.
  std::size_t capacity() const;
};

/// Deterministic in (word, seed, options).
GrayImage render_word(const std::string& word, const Charset& charset, std::uint64_t seed,
                      const RenderOptions& options);

/// Random words over the charset whose confusion-pair swaps never produce
/// another lexicon word.
std::vector<std::string> generate_lexicon(const Charset& charset, std::size_t count,
                                          std::size_t min_len, std::size_t max_len,
                                          std::uint64_t seed);

/// Every confusion pair must occur in some word whose swap at that position
/// yields a non-word. Returns an empty string when satisfied, otherwise the
/// reason.
std::string check_disambiguation(const std::vector<std::string>& lexicon, const Charset& charset);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

struct DatasetSpec {
  Charset charset = Charset::standard();
  std::vector<std::string> lexicon;
  std::size_t count = 25000;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;
  RenderOptions render;

  /// Sample counts of the train/val/test splits.
  std::array<std::size_t, 3> split_sizes() const;
};

struct Sample {
  GrayImage image;
  std::string word;
};

/// Sample `index` of the dataset: word lexicon[index % L], render seed
/// mix_seed(seed, index).
Sample make_sample(const DatasetSpec& spec, std::size_t index);

struct Split {
  Charset charset;
  std::vector<GrayImage> images;
  std::vector<std::string> words;

  std::size_t size() const { return words.size(); }
};

constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

/// Split `which` (0 train, 1 val, 2 test) rendered in memory.
Split make_split(const DatasetSpec& spec, std::size_t which);

/// Writes <dir>/<split>/<index>.pgm, <dir>/<split>.tsv manifests,
/// charset.txt, confusions.txt and lexicon.txt.
void generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

Charset load_charset(const std::filesystem::path& dir);
Split load_split(const std::filesystem::path& dir, const std::string& split);

/// Images [B, H, W, 1] scaled to [0, 1] for the samples `indices`.
template <typename T>
Tensor<T> image_batch(const Split& split, std::span<const std::size_t> indices);

/// Image-major EOS-padded labels [B*n].
std::vector<int> label_batch(const Split& split, std::span<const std::size_t> indices,
                             std::size_t n);

}  // namespace srn
