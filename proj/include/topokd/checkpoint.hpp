#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "topokd/binary_io.hpp"
#include "topokd/layers.hpp"
#include "topokd/optimizer.hpp"

namespace topokd::nn {

/// Training snapshot. Values are kept at float precision (see
/// `round_to_storage`) so a file round trip reproduces them exactly.
struct Checkpoint {
  Parameters params;
  OptimizerState optimizer;
  std::uint32_t epoch = 0;
  std::string rng_state;
  std::uint64_t config_digest = 0;

  std::uint64_t digest() const {
    Digest d;
    d.text("Checkpoint/1").value(params.digest()).value(epoch).text(rng_state).value(config_digest);
    for (const auto& v : optimizer.velocity) d.values(v.values());
    return d.get();
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline void round_to_storage(std::vector<Tensor>& ts) {
  for (auto& t : ts)
    for (double& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
}

inline void round_to_storage(Parameters& p) {
  round_to_storage(p.tensors);
  round_to_storage(p.buffers);
}

inline std::string rng_state_of(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  if (state.empty()) return rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("corrupt RNG state");
  return rng;
}

/// Snapshot of `params` (and optimizer state) rounded to storage precision.
inline Checkpoint make_checkpoint(Parameters params, OptimizerState optimizer, std::uint32_t epoch,
                                  const std::mt19937_64& rng, std::uint64_t config_digest) {
  Checkpoint c{std::move(params), std::move(optimizer), epoch, rng_state_of(rng), config_digest};
  round_to_storage(c.params);
  round_to_storage(c.optimizer.velocity);
  return c;
}

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "TDCK" | u16 version | u64 config digest | u32 epoch | u32+bytes RNG state
/// | u32 #params | u32 #buffers | u32 #velocity | u64 element count per tensor
/// | f32 params, buffers, velocity in declaration order.
inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  io::Writer w(os);
  w.magic("TDCK");
  w.put(kCheckpointVersion);
  w.put(c.config_digest);
  w.put(c.epoch);
  w.str(c.rng_state);
  w.put(static_cast<std::uint32_t>(c.params.tensors.size()));
  w.put(static_cast<std::uint32_t>(c.params.buffers.size()));
  w.put(static_cast<std::uint32_t>(c.optimizer.velocity.size()));
  for (const auto* group : {&c.params.tensors, &c.params.buffers, &c.optimizer.velocity})
    for (const auto& t : *group) w.put(static_cast<std::uint64_t>(t.size()));
  for (const auto* group : {&c.params.tensors, &c.params.buffers, &c.optimizer.velocity})
    for (const auto& t : *group)
      for (double v : t.values()) w.f32(v);
  w.check();
}

/// Reads a checkpoint written for `arch`; shapes come from the architecture
/// and are checked against the stored element counts.
inline Checkpoint read_checkpoint(std::istream& is, const Architecture& arch) {
  io::Reader r(is);
  r.expect_magic("TDCK");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_digest = r.get<std::uint64_t>();
  c.epoch = r.get<std::uint32_t>();
  c.rng_state = r.str();
  const auto np = r.get<std::uint32_t>();
  const auto nb = r.get<std::uint32_t>();
  const auto nv = r.get<std::uint32_t>();

  c.params = init_parameters(arch, 0);
  if (np != c.params.tensors.size() || nb != c.params.buffers.size())
    throw FormatError("checkpoint: tensor count does not match the architecture");
  if (nv != 0 && nv != np) throw FormatError("checkpoint: optimizer state does not match parameters");
  for (const auto& t : c.params.tensors) c.optimizer.velocity.emplace_back(t.shape());
  if (nv == 0) c.optimizer.velocity.clear();

  for (auto* group : {&c.params.tensors, &c.params.buffers, &c.optimizer.velocity})
    for (const auto& t : *group)
      if (r.get<std::uint64_t>() != t.size()) throw FormatError("checkpoint: tensor size does not match the architecture");
  for (auto* group : {&c.params.tensors, &c.params.buffers, &c.optimizer.velocity})
    for (auto& t : *group)
      for (double& v : t.storage()) v = r.f32();
  r.expect_end();
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, c);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture& arch) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return read_checkpoint(is, arch);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace topokd::nn
