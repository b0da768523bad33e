#include "srn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "srn/errors.hpp"
#include "srn/random.hpp"

namespace srn {

// ---------------------------------------------------------------- charset

Charset::Charset(std::string syms, std::vector<std::pair<char, char>> pairs)
    : symbols(std::move(syms)), confusions(std::move(pairs)) {
  if (symbols.empty()) throw ConfigError("charset is empty");
  std::set<char> seen;
  for (char c : symbols) {
    if (c == '\n' || c == '\r' || c == '\t' || c == ' ')
      throw ConfigError("charset symbols must be printable");
    if (!seen.insert(c).second) throw ConfigError(std::string("duplicate charset symbol '") + c + "'");
  }
  std::set<char> paired;
  for (auto [a, b] : confusions) {
    if (!contains(a) || !contains(b) || a == b)
      throw ConfigError(std::string("bad confusion pair ") + a + "/" + b);
    if (!paired.insert(a).second || !paired.insert(b).second)
      throw ConfigError(std::string("symbol in more than one confusion pair: ") + a + "/" + b);
  }
}

Charset Charset::standard() {
  return Charset("acehilnorstu", {{'a', 'o'}, {'c', 'e'}, {'i', 'l'}, {'n', 'u'}});
}

int Charset::index(char c) const {
  const auto pos = symbols.find(c);
  if (pos == std::string::npos) throw InputError(std::string("symbol '") + c + "' not in charset");
  return static_cast<int>(pos);
}

char Charset::symbol(int i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= symbols.size())
    throw IndexError("class " + std::to_string(i) + " is not a symbol");
  return symbols[static_cast<std::size_t>(i)];
}

char Charset::partner(char c) const {
  for (auto [a, b] : confusions) {
    if (c == a) return b;
    if (c == b) return a;
  }
  return 0;
}

std::vector<int> encode_labels(const std::string& word, const Charset& charset, std::size_t n) {
  if (word.size() >= n) {
    throw InputError("word '" + word + "' has " + std::to_string(word.size()) +
                     " symbols; at most " + std::to_string(n == 0 ? 0 : n - 1) + " fit with EOS");
  }
  std::vector<int> out(n, charset.eos());
  for (std::size_t i = 0; i < word.size(); ++i) out[i] = charset.index(word[i]);
  return out;
}

std::string decode_labels(std::span<const int> labels, const Charset& charset) {
  std::string out;
  for (int c : labels) {
    if (c == charset.eos()) break;
    out.push_back(charset.symbol(c));
  }
  return out;
}

// ---------------------------------------------------------------- glyphs

namespace {

using Rows = std::array<const char*, kGlyphRows>;

const std::map<char, Rows>& font() {
  static const std::map<char, Rows> table{
      {'a', {".....", ".....", ".###.", "....#", ".####", "#...#", ".####"}},
      {'b', {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."}},
      {'c', {".....", ".....", ".###.", "#....", "#....", "#...#", ".###."}},
      {'d', {"....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"}},
      {'e', {".....", ".....", ".###.", "#...#", "#####", "#....", ".###."}},
      {'f', {"..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."}},
      {'g', {".....", ".####", "#...#", "#...#", ".####", "....#", ".###."}},
      {'h', {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
      {'i', {"..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."}},
      {'j', {"...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."}},
      {'k', {"#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."}},
      {'l', {".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'m', {".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"}},
      {'n', {".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
      {'o', {".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."}},
      {'p', {".....", ".....", "####.", "#...#", "####.", "#....", "#...."}},
      {'q', {".....", ".....", ".##.#", "#..##", ".####", "....#", "....#"}},
      {'r', {".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."}},
      {'s', {".....", ".....", ".###.", "#....", ".###.", "....#", "####."}},
      {'t', {".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."}},
      {'u', {".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"}},
      {'v', {".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
      {'w', {".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."}},
      {'x', {".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"}},
      {'y', {".....", ".....", "#...#", "#...#", ".####", "....#", ".###."}},
      {'z', {".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"}},
      {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
      {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
      {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
      {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
      {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
      {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
      {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
      {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
      {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
  };
  return table;
}

double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

}  // namespace

Glyph glyph_bitmap(char c) {
  const auto it = font().find(c);
  if (it == font().end()) throw InputError(std::string("no glyph for symbol '") + c + "'");
  Glyph g{};
  for (std::size_t r = 0; r < kGlyphRows; ++r)
    for (std::size_t col = 0; col < kGlyphCols; ++col)
      g[r * kGlyphCols + col] = it->second[r][col] == '#' ? 1.0f : 0.0f;
  return g;
}

Glyph mix_glyphs(const Glyph& a, const Glyph& b, double factor) {
  Glyph out{};
  const float half = static_cast<float>(factor / 2.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + half * (b[i] - a[i]);
  return out;
}

// ---------------------------------------------------------------- rendering

void RenderOptions::validate() const {
  if (pitch < kGlyphCols + 2) throw ConfigError("pitch must leave room for glyph jitter");
  if (vertical_scale == 0 || height < kGlyphRows * vertical_scale + 2)
    throw ConfigError("image height too small for the scaled glyphs");
  if (width < pitch) throw ConfigError("image narrower than one character");
  if (noise < 0 || confusability < 0 || confusability > 1)
    throw ConfigError("noise must be >= 0 and confusability in [0, 1]");
}

std::size_t RenderOptions::capacity() const { return width / pitch; }

GrayImage render_word(const std::string& word, const Charset& charset, std::uint64_t seed,
                      const RenderOptions& options) {
  options.validate();
  if (word.size() > options.capacity()) {
    throw InputError("word '" + word + "' needs " + std::to_string(word.size() * options.pitch) +
                     " px, image is " + std::to_string(options.width) + " px wide");
  }
  for (char c : word) charset.index(c);

  std::mt19937_64 rng(seed);
  const double factor = uniform01(rng) * options.confusability;
  const std::size_t glyph_h = kGlyphRows * options.vertical_scale;
  const int free_x = static_cast<int>(options.width - word.size() * options.pitch);
  const int free_y = static_cast<int>(options.height - glyph_h);
  const int cell_pad = static_cast<int>(options.pitch - kGlyphCols) / 2;
  int x0 = free_x / 2;
  if (options.jitter) x0 = std::clamp(x0 + uniform_int(rng, -2, 2), 0, free_x);

  std::vector<float> canvas(options.height * options.width, 0.0f);
  for (std::size_t i = 0; i < word.size(); ++i) {
    Glyph g = glyph_bitmap(word[i]);
    if (char p = charset.partner(word[i])) g = mix_glyphs(g, glyph_bitmap(p), factor);
    int jx = 0, y0 = free_y / 2;
    if (options.jitter) {
      jx = uniform_int(rng, -1, 1);
      y0 = uniform_int(rng, 0, free_y);
    }
    const int left = x0 + static_cast<int>(i * options.pitch) + cell_pad + jx;
    for (std::size_t r = 0; r < glyph_h; ++r) {
      const int y = y0 + static_cast<int>(r);
      for (std::size_t col = 0; col < kGlyphCols; ++col) {
        const int x = left + static_cast<int>(col);
        if (y < 0 || x < 0 || y >= static_cast<int>(options.height) ||
            x >= static_cast<int>(options.width))
          continue;
        float& px = canvas[static_cast<std::size_t>(y) * options.width + static_cast<std::size_t>(x)];
        px = std::max(px, g[(r / options.vertical_scale) * kGlyphCols + col]);
      }
    }
  }

  GrayImage img{options.height, options.width, std::vector<std::uint8_t>(canvas.size())};
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    double v = canvas[i];
    if (options.noise > 0) v += options.noise * standard_normal(rng);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return img;
}

// ---------------------------------------------------------------- lexicon

namespace {

std::vector<std::string> swap_neighbours(const std::string& word, const Charset& charset) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (char p = charset.partner(word[i])) {
      std::string w = word;
      w[i] = p;
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> generate_lexicon(const Charset& charset, std::size_t count,
                                          std::size_t min_len, std::size_t max_len,
                                          std::uint64_t seed) {
  if (count == 0) throw InputError("lexicon size must be positive");
  if (min_len == 0 || min_len > max_len) throw ConfigError("bad lexicon word length range");
  std::mt19937_64 rng(mix_seed(seed, fnv1a("lexicon")));
  std::vector<std::string> words;
  std::set<std::string> taken;
  std::size_t attempts = 0;
  while (words.size() < count) {
    if (++attempts > 1000 * count) throw ConfigError("could not build a disambiguable lexicon");
    const auto len = static_cast<std::size_t>(
        uniform_int(rng, static_cast<int>(min_len), static_cast<int>(max_len)));
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
      w.push_back(charset.symbols[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(charset.size()) - 1))]);
    if (taken.count(w)) continue;
    const auto neighbours = swap_neighbours(w, charset);
    if (std::any_of(neighbours.begin(), neighbours.end(),
                    [&](const std::string& n) { return taken.count(n) != 0; }))
      continue;
    taken.insert(w);
    words.push_back(std::move(w));
  }
  if (auto why = check_disambiguation(words, charset); !why.empty()) throw ConfigError(why);
  return words;
}

std::string check_disambiguation(const std::vector<std::string>& lexicon, const Charset& charset) {
  const std::set<std::string> valid(lexicon.begin(), lexicon.end());
  for (auto [a, b] : charset.confusions) {
    bool witnessed = false;
    for (const auto& w : lexicon) {
      for (std::size_t i = 0; i < w.size() && !witnessed; ++i) {
        if (w[i] != a && w[i] != b) continue;
        std::string swapped = w;
        swapped[i] = w[i] == a ? b : a;
        witnessed = valid.count(swapped) == 0;
      }
      if (witnessed) break;
    }
    if (!witnessed) {
      return std::string("no lexicon word disambiguates the pair ") + a + "/" + b;
    }
  }
  return {};
}

// ---------------------------------------------------------------- PGM

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
    }
    in >> t;
    return t;
  };
  if (token() != "P5") throw IoError(path.string() + " is not a binary PGM");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw IoError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (img.width == 0 || img.height == 0) throw IoError(path.string() + ": empty image");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError(path.string() + ": truncated pixel data");
  return img;
}

// ---------------------------------------------------------------- datasets

std::array<std::size_t, 3> DatasetSpec::split_sizes() const {
  double total = 0;
  for (double r : ratios) {
    if (r < 0) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (total <= 0) throw ConfigError("split ratios sum to zero");
  const auto train = static_cast<std::size_t>(std::floor(count * ratios[0] / total + 1e-9));
  const auto val = static_cast<std::size_t>(std::floor(count * ratios[1] / total + 1e-9));
  return {train, val, count - train - val};
}

Sample make_sample(const DatasetSpec& spec, std::size_t index) {
  if (spec.lexicon.empty()) throw InputError("lexicon is empty");
  Sample s;
  s.word = spec.lexicon[index % spec.lexicon.size()];
  s.image = render_word(s.word, spec.charset, mix_seed(spec.seed, index), spec.render);
  return s;
}

namespace {

std::pair<std::size_t, std::size_t> split_range(const DatasetSpec& spec, std::size_t which) {
  if (which > 2) throw IndexError("split index " + std::to_string(which));
  const auto sizes = spec.split_sizes();
  std::size_t begin = 0;
  for (std::size_t i = 0; i < which; ++i) begin += sizes[i];
  return {begin, begin + sizes[which]};
}

void check_spec(const DatasetSpec& spec) {
  if (spec.lexicon.empty()) throw InputError("lexicon is empty");
  spec.render.validate();
  if (auto why = check_disambiguation(spec.lexicon, spec.charset); !why.empty())
    throw ConfigError(why);
}

}  // namespace

Split make_split(const DatasetSpec& spec, std::size_t which) {
  check_spec(spec);
  const auto [begin, end] = split_range(spec, which);
  Split split;
  split.charset = spec.charset;
  for (std::size_t i = begin; i < end; ++i) {
    auto s = make_sample(spec, i);
    split.images.push_back(std::move(s.image));
    split.words.push_back(std::move(s.word));
  }
  return split;
}

void generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  check_spec(spec);
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out || !(out << text)) throw IoError("cannot write " + (dir / name).string());
  };
  std::string charset_text, confusion_text, lexicon_text;
  for (char c : spec.charset.symbols) charset_text += std::string(1, c) + "\n";
  for (auto [a, b] : spec.charset.confusions) confusion_text += std::string{a, ' ', b, '\n'};
  for (const auto& w : spec.lexicon) lexicon_text += w + "\n";
  write_text("charset.txt", charset_text);
  write_text("confusions.txt", confusion_text);
  write_text("lexicon.txt", lexicon_text);

  for (std::size_t which = 0; which < 3; ++which) {
    const std::string name = kSplitNames[which];
    fs::create_directories(dir / name);
    const auto [begin, end] = split_range(spec, which);
    std::string manifest;
    for (std::size_t i = begin; i < end; ++i) {
      const auto s = make_sample(spec, i);
      char file[32];
      std::snprintf(file, sizeof file, "%06zu.pgm", i);
      write_pgm(dir / name / file, s.image);
      manifest += name + "/" + file + "\t" + s.word + "\n";
    }
    write_text(name + ".tsv", manifest);
  }
}

Charset load_charset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "charset.txt", std::ios::binary);
  if (!in) throw IoError("cannot read " + (dir / "charset.txt").string());
  std::string symbols, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.size() != 1) throw ConfigError("charset line '" + line + "' is not one symbol");
    symbols += line;
  }
  std::vector<std::pair<char, char>> pairs;
  std::ifstream conf(dir / "confusions.txt", std::ios::binary);
  while (conf && std::getline(conf, line)) {
    if (line.empty()) continue;
    if (line.size() != 3 || line[1] != ' ') throw ConfigError("bad confusion line '" + line + "'");
    pairs.emplace_back(line[0], line[2]);
  }
  return Charset(symbols, pairs);
}

Split load_split(const std::filesystem::path& dir, const std::string& split) {
  Split out;
  out.charset = load_charset(dir);
  const auto manifest = dir / (split + ".tsv");
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw IoError("cannot read " + manifest.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("manifest line without tab: " + line);
    std::string word = line.substr(tab + 1);
    for (char c : word) {
      if (!out.charset.contains(c))
        throw ConfigError("manifest word '" + word + "' uses a symbol outside the charset");
    }
    out.images.push_back(read_pgm(dir / line.substr(0, tab)));
    out.words.push_back(std::move(word));
  }
  return out;
}

template <typename T>
Tensor<T> image_batch(const Split& split, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("empty batch");
  const auto& first = split.images.at(indices[0]);
  const std::size_t h = first.height, w = first.width;
  std::vector<T> values;
  values.reserve(indices.size() * h * w);
  for (std::size_t i : indices) {
    const auto& img = split.images.at(i);
    if (img.height != h || img.width != w) throw InputError("images in a batch differ in size");
    for (std::uint8_t p : img.pixels) values.push_back(static_cast<T>(p) / T(255));
  }
  return Tensor<T>({indices.size(), h, w, 1}, std::move(values));
}

std::vector<int> label_batch(const Split& split, std::span<const std::size_t> indices,
                             std::size_t n) {
  std::vector<int> out;
  out.reserve(indices.size() * n);
  for (std::size_t i : indices) {
    const auto labels = encode_labels(split.words.at(i), split.charset, n);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

template Tensor<float> image_batch(const Split&, std::span<const std::size_t>);
template Tensor<double> image_batch(const Split&, std::span<const std::size_t>);

}  // namespace srn
