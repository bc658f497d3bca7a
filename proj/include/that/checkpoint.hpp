#pragma once

// Binary parameter checkpoints:
//   "THAT" | u32 version | config block | u32 param count |
//   per param: u32 name length, name bytes, u32 rank, u32 dims..., f64 values
// All integers little-endian; values are stored as f64 regardless of the
// in-memory precision.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "that/model.hpp"

namespace that {

namespace ckpt_detail {

constexpr char kMagic[4] = {'T', 'H', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ofstream& f, std::uint32_t v) { write_bytes(f, &v, 4); }

inline void read_bytes(std::ifstream& f, void* p, std::size_t n, long long offset,
                       const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n)
    throw DataError(std::string("checkpoint: truncated while reading ") + what, offset);
}

inline std::uint32_t read_u32(std::ifstream& f, long long offset, const char* what) {
  std::uint32_t v = 0;
  read_bytes(f, &v, 4, offset, what);
  return v;
}

struct ConfigBlock {
  std::int32_t bands, channels, blocks, heads, window, scale;
  std::uint8_t use_pci, use_ptsa, use_mvfn, upsample_stage;
};

inline ConfigBlock pack(const ModelConfig& c) {
  return {c.bands,
          c.channels,
          c.blocks,
          c.heads,
          c.window,
          c.scale,
          static_cast<std::uint8_t>(c.use_pci),
          static_cast<std::uint8_t>(c.use_ptsa),
          static_cast<std::uint8_t>(c.use_mvfn),
          static_cast<std::uint8_t>(c.upsample_stage == UpsampleStage::output)};
}

inline ModelConfig unpack(const ConfigBlock& b) {
  ModelConfig c;
  c.bands = b.bands;
  c.channels = b.channels;
  c.blocks = b.blocks;
  c.heads = b.heads;
  c.window = b.window;
  c.scale = b.scale;
  c.use_pci = b.use_pci != 0;
  c.use_ptsa = b.use_ptsa != 0;
  c.use_mvfn = b.use_mvfn != 0;
  c.upsample_stage = b.upsample_stage ? UpsampleStage::output : UpsampleStage::input;
  return c;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& path, ThatModel<T>& model) {
  using namespace ckpt_detail;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  write_bytes(f, kMagic, 4);
  write_u32(f, kVersion);
  const ConfigBlock cb = pack(model.cfg);
  write_bytes(f, &cb.bands, 4);
  write_bytes(f, &cb.channels, 4);
  write_bytes(f, &cb.blocks, 4);
  write_bytes(f, &cb.heads, 4);
  write_bytes(f, &cb.window, 4);
  write_bytes(f, &cb.scale, 4);
  write_bytes(f, &cb.use_pci, 1);
  write_bytes(f, &cb.use_ptsa, 1);
  write_bytes(f, &cb.use_mvfn, 1);
  write_bytes(f, &cb.upsample_stage, 1);
  auto params = model.named_params();
  write_u32(f, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, t] : params) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    write_bytes(f, name.data(), name.size());
    write_u32(f, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32(f, static_cast<std::uint32_t>(t.dim(i)));
    for (T v : t.data()) {
      const double d = static_cast<double>(v);
      write_bytes(f, &d, 8);
    }
  }
  if (!f) throw DataError("checkpoint: write to " + path + " failed");
}

inline ModelConfig read_checkpoint_config(std::ifstream& f, const std::string& path) {
  using namespace ckpt_detail;
  if (!f) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  read_bytes(f, magic, 4, 0, "magic");
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw DataError("checkpoint: bad magic in " + path, 0);
  const auto version = read_u32(f, 4, "version");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version), 4);
  ConfigBlock cb{};
  read_bytes(f, &cb.bands, 4, 8, "config");
  read_bytes(f, &cb.channels, 4, 12, "config");
  read_bytes(f, &cb.blocks, 4, 16, "config");
  read_bytes(f, &cb.heads, 4, 20, "config");
  read_bytes(f, &cb.window, 4, 24, "config");
  read_bytes(f, &cb.scale, 4, 28, "config");
  read_bytes(f, &cb.use_pci, 1, 32, "config");
  read_bytes(f, &cb.use_ptsa, 1, 33, "config");
  read_bytes(f, &cb.use_mvfn, 1, 34, "config");
  read_bytes(f, &cb.upsample_stage, 1, 35, "config");
  return unpack(cb);
}

inline ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return read_checkpoint_config(f, path);
}

template <class T>
ThatModel<T> load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  ModelConfig cfg = read_checkpoint_config(f, path);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw DataError("checkpoint: invalid config in " + path + ": " + e.what(), 8);
  }
  auto model = ThatModel<T>::zeros(cfg);
  auto params = model.named_params();
  const long long base = 36;
  const auto count = read_u32(f, base, "parameter count");
  if (count != params.size())
    throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                        " parameters, file has " + std::to_string(count),
                    base);
  long long at = base + 4;
  for (auto& [name, t] : params) {
    const auto name_len = read_u32(f, at, "name length");
    std::string got(name_len, '\0');
    read_bytes(f, got.data(), name_len, at + 4, "name");
    if (got != name)
      throw DataError("checkpoint: expected parameter '" + name + "', found '" + got + "'", at);
    at += 4 + name_len;
    const auto rank = read_u32(f, at, "rank");
    Shape shape(rank);
    at += 4;
    for (auto& d : shape) {
      d = static_cast<int>(read_u32(f, at, "dims"));
      at += 4;
    }
    if (shape != t.shape())
      throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                          ", model expects " + shape_str(t.shape()),
                      at);
    for (T& v : t.data()) {
      double d = 0.0;
      read_bytes(f, &d, 8, at, name.c_str());
      v = static_cast<T>(d);
      at += 8;
    }
  }
  return model;
}

}  // namespace that
