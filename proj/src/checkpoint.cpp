#include "srn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "srn/errors.hpp"

namespace srn {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'N', 'C', 'K', 'P', 'T', '1'};

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return value;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw IoError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = sizeof(kMagic);
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

CheckpointRecord text_record(const std::string& name, const std::string& text) {
  CheckpointRecord r{name, {std::max<std::uint64_t>(text.size(), 1)}, {}};
  for (unsigned char c : text) r.values.push_back(static_cast<float>(c));
  if (text.empty()) r.values.push_back(0.0f);
  return r;
}

std::string record_text(const CheckpointRecord& r) {
  std::string s;
  for (float v : r.values) {
    if (v < 0 || v > 255 || v != std::floor(v)) throw IoError("corrupt text record " + r.name);
    s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  for (const auto& r : records) {
    std::uint64_t count = 1;
    for (auto e : r.extents) count *= e;
    if (count != r.values.size())
      throw DimensionError("checkpoint record " + r.name + " extents do not match its payload");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.extents.size()));
    for (auto e : r.extents) put_le<std::uint64_t>(out, e);
    for (float v : r.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  put_le<std::uint32_t>(out, crc_of(out.data(), out.size()));
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (stored != crc_of(bytes.data(), body)) throw IoError("checkpoint CRC mismatch");

  Reader in(bytes, body);
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    r.name = in.text(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.extents.push_back(in.get<std::uint64_t>());
      count *= r.extents.back();
    }
    if (count > body) throw IoError("checkpoint record " + r.name + " is implausibly large");
    r.values.resize(count);
    for (auto& v : r.values) v = std::bit_cast<float>(in.get<std::uint32_t>());
    records.push_back(std::move(r));
  }
  return records;
}

Checkpoint Checkpoint::capture(const SrnModel<float>& model, const RunConfig& config,
                               const Charset& charset, std::uint64_t step) {
  Checkpoint ck;
  ck.config = config;
  ck.config.model = model.config();
  ck.charset = charset;
  ck.step = step;
  for (const auto& [name, t] : model.parameters().entries()) {
    CheckpointRecord r;
    r.name = name;
    for (auto e : t.shape()) r.extents.push_back(e);
    r.values.assign(t.data().begin(), t.data().end());
    ck.parameters.push_back(std::move(r));
  }
  return ck;
}

std::unique_ptr<SrnModel<float>> Checkpoint::restore() const {
  auto model = std::make_unique<SrnModel<float>>(config.model, config.train.seed);
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : parameters) by_name[r.name] = &r;
  for (const auto& [name, t] : model->parameters().entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter " + name);
    const auto& r = *it->second;
    if (r.extents.size() != t.rank() || !std::equal(r.extents.begin(), r.extents.end(), t.shape().begin()))
      throw ConfigError("checkpoint parameter " + name + " has the wrong shape");
    Tensor<float> handle = t;
    std::copy(r.values.begin(), r.values.end(), handle.mutable_data().begin());
  }
  return model;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  auto records = parameters;
  records.push_back(text_record("meta/config", config.serialize()));
  std::string cs = charset.symbols;
  cs.push_back('\0');
  for (auto [a, b] : charset.confusions) cs += std::string{a, b};
  records.push_back(text_record("meta/charset", cs));
  CheckpointRecord s{"meta/step", {4}, {}};
  for (int i = 0; i < 4; ++i) s.values.push_back(static_cast<float>((step >> (16 * i)) & 0xFFFF));
  records.push_back(std::move(s));

  const auto bytes = encode_checkpoint(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ck;
  bool has_config = false, has_charset = false;
  for (auto& r : decode_checkpoint(bytes)) {
    if (r.name == "meta/config") {
      ck.config = RunConfig::parse(record_text(r));
      has_config = true;
    } else if (r.name == "meta/charset") {
      const auto text = record_text(r);
      const auto zero = text.find('\0');
      if (zero == std::string::npos || (text.size() - zero - 1) % 2)
        throw IoError("corrupt meta/charset record");
      std::vector<std::pair<char, char>> pairs;
      for (std::size_t i = zero + 1; i < text.size(); i += 2) pairs.emplace_back(text[i], text[i + 1]);
      ck.charset = Charset(text.substr(0, zero), pairs);
      has_charset = true;
    } else if (r.name == "meta/step") {
      if (r.values.size() != 4) throw IoError("corrupt meta/step record");
      for (int i = 0; i < 4; ++i)
        ck.step |= static_cast<std::uint64_t>(r.values[static_cast<std::size_t>(i)]) << (16 * i);
    } else {
      ck.parameters.push_back(std::move(r));
    }
  }
  if (!has_config || !has_charset) throw IoError("checkpoint lacks its metadata records");
  return ck;
}

}  // namespace srn
