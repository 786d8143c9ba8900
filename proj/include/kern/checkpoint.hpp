#pragma once
// Parameter checkpoints: versioned header, then (name, shape, raw
// little-endian float64) records, then a checksum. Round trips byte-exactly.

#include <string>

#include "kern/io.hpp"
#include "kern/tensor.hpp"

namespace kern {

inline constexpr char kCheckpointMagic[8] = {'K', 'E', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ParameterSet& params, const std::string& path) {
  io::Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(params.size());
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.f64s(t.data());
  }
  io::write_checksummed(path, w);
}

namespace detail {

inline io::Reader open_checkpoint(const std::vector<std::uint8_t>& buf, const std::string& path) {
  io::Reader r = io::open_checksummed(buf, path);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw parse_error(path + ": not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw parse_error(path + ": unsupported checkpoint version " + std::to_string(version));
  return r;
}

}  // namespace detail

inline ParameterSet load_checkpoint(const std::string& path) {
  const auto buf = io::read_file(path);
  io::Reader r = detail::open_checkpoint(buf, path);
  ParameterSet ps;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> data;
    r.f64s(data, detail::shape_numel(shape));
    ps.add(name, Tensor::param(std::move(shape), std::move(data)));
  }
  return ps;
}

// Copies checkpoint values into an existing parameter set (names and shapes
// must match exactly), preserving tensor identity so optimizer state and
// graph references stay valid.
inline void load_checkpoint_into(ParameterSet& params, const std::string& path) {
  ParameterSet loaded = load_checkpoint(path);
  if (loaded.size() != params.size())
    throw validation_error(path + ": checkpoint has " + std::to_string(loaded.size()) +
                           " parameters, expected " + std::to_string(params.size()));
  for (auto& [name, t] : loaded) {
    Tensor& dst = params.at(name);
    if (dst.shape() != t.shape())
      throw validation_error(path + ": shape mismatch for '" + name + "'");
    dst.data() = t.data();
  }
}

}  // namespace kern
