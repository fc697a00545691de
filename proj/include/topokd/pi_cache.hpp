#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "topokd/binary_io.hpp"
#include "topokd/persistence_image.hpp"

namespace topokd::tda {

/// On-disk layout (all little-endian):
///   "TDPI" | u16 version | u64 PIConfig digest | u64 data digest | u8 normalize
///   | u32 count | u32 channels | u32 resolution
///   | f32 grids, row-major within an image, channel-major within a window, window-major overall.
inline constexpr std::uint16_t kPICacheVersion = 1;

struct PICacheHeader {
  std::uint64_t config_digest = 0;
  std::uint64_t data_digest = 0;
  bool normalize = true;
  std::uint32_t count = 0;
  std::uint32_t channels = 0;
  std::uint32_t resolution = 0;
};

/// Rounds every pixel to float precision, the precision the cache stores.
inline void round_to_storage(std::vector<PIStack>& stacks) {
  for (auto& s : stacks)
    for (auto& img : s)
      for (double& v : img.grid) v = static_cast<double>(static_cast<float>(v));
}

inline void write_pi_cache(std::ostream& os, std::span<const PIStack> stacks, const PIConfig& cfg,
                           std::uint64_t data_digest) {
  io::Writer w(os);
  const std::uint32_t channels = stacks.empty() ? 0 : static_cast<std::uint32_t>(stacks.front().size());
  w.magic("TDPI");
  w.put(kPICacheVersion);
  w.put(cfg.digest());
  w.put(data_digest);
  w.put(static_cast<std::uint8_t>(cfg.normalize));
  w.put(static_cast<std::uint32_t>(stacks.size()));
  w.put(channels);
  w.put(static_cast<std::uint32_t>(cfg.resolution));
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (stacks[i].size() != channels) throw InvalidArgument("PI cache: window " + std::to_string(i) + " has a different channel count");
    for (const auto& img : stacks[i]) {
      if (img.resolution != cfg.resolution) throw InvalidArgument("PI cache: image resolution differs from config");
      for (double v : img.grid) w.f32(v);
    }
  }
  w.check();
}

inline PICacheHeader read_pi_cache_header(io::Reader& r) {
  r.expect_magic("TDPI");
  const auto version = r.get<std::uint16_t>();
  if (version != kPICacheVersion) throw FormatError("PI cache: unsupported version " + std::to_string(version));
  PICacheHeader h;
  h.config_digest = r.get<std::uint64_t>();
  h.data_digest = r.get<std::uint64_t>();
  h.normalize = r.get<std::uint8_t>() != 0;
  h.count = r.get<std::uint32_t>();
  h.channels = r.get<std::uint32_t>();
  h.resolution = r.get<std::uint32_t>();
  return h;
}

inline std::vector<PIStack> read_pi_cache(std::istream& is, PICacheHeader* header_out = nullptr) {
  io::Reader r(is);
  const auto h = read_pi_cache_header(r);
  std::vector<PIStack> stacks(h.count);
  const std::size_t pixels = static_cast<std::size_t>(h.resolution) * h.resolution;
  for (auto& s : stacks) {
    s.resize(h.channels);
    for (auto& img : s) {
      img.resolution = h.resolution;
      img.config_hash = h.config_digest;
      img.grid.resize(pixels);
      for (double& v : img.grid) v = r.f32();
      img.normalized = h.normalize && img.max() > 0.0;
    }
  }
  r.expect_end();
  if (header_out) *header_out = h;
  return stacks;
}

inline void save_pi_cache(const std::filesystem::path& path, std::span<const PIStack> stacks, const PIConfig& cfg,
                          std::uint64_t data_digest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_pi_cache(os, stacks, cfg, data_digest);
}

inline std::vector<PIStack> load_pi_cache(const std::filesystem::path& path, PICacheHeader* header_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return read_pi_cache(is, header_out);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Loads the cache at `path` when its config digest, data digest and window
/// count match; otherwise extracts, rounds to storage precision and rewrites
/// the file. Returned images are identical on both paths.
inline std::vector<PIStack> load_or_extract(const std::filesystem::path& path, std::span<const SignalWindow> windows,
                                            const PIConfig& cfg, std::uint64_t data_digest, unsigned workers = 1,
                                            bool* reused = nullptr) {
  if (reused) *reused = false;
  if (std::filesystem::exists(path)) {
    try {
      PICacheHeader h;
      auto stacks = load_pi_cache(path, &h);
      if (h.config_digest == cfg.digest() && h.data_digest == data_digest && h.count == windows.size() &&
          h.resolution == cfg.resolution) {
        if (reused) *reused = true;
        return stacks;
      }
    } catch (const FormatError&) {
      // stale or corrupt: fall through and rebuild
    }
  }
  auto stacks = extract_pi_batch(windows, cfg, workers);
  round_to_storage(stacks);
  save_pi_cache(path, stacks, cfg, data_digest);
  return stacks;
}

}  // namespace topokd::tda
