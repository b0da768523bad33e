#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "srn/data.hpp"
#include "srn/model.hpp"

namespace srn {

/// One named float32 tensor as stored on disk.
struct CheckpointRecord {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<float> values;
};

/// Raw layout: "SRNCKPT1", then per record u32 name length, name bytes, u32
/// rank, u64 extents, float32 payload (all little-endian), then the CRC32 of
/// every preceding byte.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records);
/// Throws IoError on a bad magic, truncation or CRC mismatch.
std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Model parameters plus three metadata records: meta/config (the run config
/// text, one byte per value), meta/charset (symbols then a 0 and confusion
/// pairs) and meta/step (the step counter as four 16-bit limbs).
struct Checkpoint {
  RunConfig config;
  Charset charset;
  std::uint64_t step = 0;
  std::vector<CheckpointRecord> parameters;

  static Checkpoint capture(const SrnModel<float>& model, const RunConfig& config,
                            const Charset& charset, std::uint64_t step);
  /// Build a model from the stored config and copy the parameters in; every
  /// model parameter must be present with a matching shape.
  std::unique_ptr<SrnModel<float>> restore() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace srn
