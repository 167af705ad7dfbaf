#include "notecode/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "notecode/textprep.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace notecode::checkpoint {

std::uint64_t TensorEntry::elements() const {
  std::uint64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("tensor '" + name + "' has a negative dimension");
    n *= static_cast<std::uint64_t>(d);
  }
  return n;
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(directory.begin(), directory.end(),
                     [&](const TensorEntry& e) { return e.name == name; });
}

void Checkpoint::add(const std::string& name, const num::Mat<float>& m) {
  if (has(name)) throw ConfigError("checkpoint already holds a tensor named '" + name + "'");
  TensorEntry entry;
  entry.name = name;
  entry.shape = {m.rows(), m.cols()};
  entry.offset = payload.size() * sizeof(float);
  directory.push_back(std::move(entry));
  payload.insert(payload.end(), m.data(), m.data() + m.size());
}

void Checkpoint::add(const std::string& name, const num::Mat<double>& m) {
  add(name, num::Mat<float>(m.cast<float>()));
}

num::Mat<float> Checkpoint::get(const std::string& name) const {
  for (const auto& entry : directory) {
    if (entry.name != name) continue;
    if (entry.shape.size() != 2)
      throw ShapeError("tensor '" + name + "' is not two-dimensional");
    num::Mat<float> m(entry.shape[0], entry.shape[1]);
    std::memcpy(m.data(), payload.data() + entry.offset / sizeof(float),
                entry.bytes());
    return m;
  }
  throw IndexError("checkpoint has no tensor named '" + name + "'");
}

void save(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& entry : ckpt.directory)
    tensors.push_back({{"name", entry.name}, {"shape", entry.shape}, {"offset", entry.offset}});
  nlohmann::json header = {{"format", 1},
                           {"kind", ckpt.kind},
                           {"config", ckpt.config},
                           {"vocab", ckpt.vocab_itos},
                           {"vocab_fingerprint", ckpt.vocab_fingerprint},
                           {"tensors", tensors}};
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  out.write(reinterpret_cast<const char*>(ckpt.payload.data()),
            static_cast<std::streamsize>(ckpt.payload.size() * sizeof(float)));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError("not a checkpoint file: " + path);
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, data.data() + sizeof(kMagic), sizeof(header_len));
  const std::size_t payload_start = sizeof(kMagic) + sizeof(std::uint64_t) + header_len;
  if (payload_start > data.size())
    throw ParseError("checkpoint header length exceeds the file: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.begin() + sizeof(kMagic) + sizeof(std::uint64_t),
                                   data.begin() + static_cast<std::ptrdiff_t>(payload_start));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format", 0) != 1)
    throw SchemaError("unsupported checkpoint format version in " + path);

  Checkpoint ckpt;
  try {
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.vocab_itos = header.at("vocab").get<std::vector<std::string>>();
    ckpt.vocab_fingerprint = header.at("vocab_fingerprint").get<std::uint64_t>();
    for (const auto& t : header.at("tensors")) {
      TensorEntry entry;
      entry.name = t.at("name").get<std::string>();
      entry.shape = t.at("shape").get<std::vector<std::int64_t>>();
      entry.offset = t.at("offset").get<std::uint64_t>();
      ckpt.directory.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint header: ") + e.what());
  }

  const std::size_t payload_bytes = data.size() - payload_start;
  if (payload_bytes % sizeof(float) != 0)
    throw ParseError("checkpoint payload is not a whole number of floats: " + path);
  ckpt.payload.resize(payload_bytes / sizeof(float));
  std::memcpy(ckpt.payload.data(), data.data() + payload_start, payload_bytes);

  // Tensor extents must lie inside the payload and must not overlap.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> extents;
  for (const auto& entry : ckpt.directory) {
    if (entry.offset % sizeof(float) != 0)
      throw ParseError("tensor '" + entry.name + "' is not float-aligned");
    const std::uint64_t end = entry.offset + entry.bytes();
    if (end > payload_bytes)
      throw ParseError("tensor '" + entry.name + "' extends past the checkpoint payload");
    extents.emplace_back(entry.offset, end);
  }
  std::sort(extents.begin(), extents.end());
  for (std::size_t i = 1; i < extents.size(); ++i)
    if (extents[i].first < extents[i - 1].second)
      throw ParseError("checkpoint tensors overlap: " + path);

  if (textprep::fingerprint_tokens(ckpt.vocab_itos) != ckpt.vocab_fingerprint)
    throw DataError("checkpoint vocabulary fingerprint mismatch: " + path);
  return ckpt;
}

}  // namespace notecode::checkpoint
