#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hilab/nn.hpp"

namespace hilab {

/// Flat binary checkpoint, little-endian:
///
///   "HILM" | u32 version
///   repeated until EOF:
///     u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_checkpoint(const std::filesystem::path& path);

/// Prefixes every tensor name with `prefix` + '.' and appends to `out`.
void append_prefixed(std::vector<Tensor>& out, const std::string& prefix, const ParamSet& params);

/// Collects tensors whose name starts with `prefix` + '.', prefix removed,
/// in file order.
ParamSet extract_prefixed(const std::vector<Tensor>& tensors, const std::string& prefix);

}  // namespace hilab
