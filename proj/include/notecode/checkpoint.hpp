#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecode/errors.hpp"
#include "notecode/numcore/tensor.hpp"

namespace notecode::checkpoint {

// Self-describing container: 8-byte magic, little-endian u64 header length,
// JSON header (kind, config snapshot, vocabulary, tensor directory), then the
// payload — the tensors' float32 data concatenated in directory order,
// little-endian, row-major. save -> load -> save is byte-identical.
inline constexpr char kMagic[8] = {'N', 'O', 'T', 'E', 'C', 'K', 'P', '1'};

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;  // [rows, cols]
  std::uint64_t offset = 0;         // byte offset into the payload

  std::uint64_t elements() const;
  std::uint64_t bytes() const { return elements() * sizeof(float); }
};

struct Checkpoint {
  std::string kind;  // "lm" | "encoder" | "classifier"
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> vocab_itos;
  std::uint64_t vocab_fingerprint = 0;
  std::vector<TensorEntry> directory;
  std::vector<float> payload;

  bool has(const std::string& name) const;

  // Appends the matrix to the payload and directory. Duplicate names rejected.
  void add(const std::string& name, const num::Mat<float>& m);
  void add(const std::string& name, const num::Mat<double>& m);  // stored as f32

  num::Mat<float> get(const std::string& name) const;
};

void save(const Checkpoint& ckpt, const std::string& path);

// Validates magic, header shape, fingerprint, and that tensor extents are
// non-overlapping and in-bounds.
Checkpoint load(const std::string& path);

}  // namespace notecode::checkpoint
