#include "hilab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace hilab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'I', 'L', 'M'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

[[noreturn]] void truncated(const std::filesystem::path& path) {
  throw std::runtime_error("checkpoint " + path.string() + ": truncated tensor record");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  }
  std::uint32_t version = 0;
  if (!get(in, version) || version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version");
  }
  std::vector<Tensor> tensors;
  std::uint32_t name_len = 0;
  while (get(in, name_len)) {
    Tensor t;
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) truncated(path);
    std::uint32_t rank = 0;
    if (!get(in, rank)) truncated(path);
    t.shape.resize(rank);
    for (auto& d : t.shape) {
      std::uint64_t v = 0;
      if (!get(in, v)) truncated(path);
      d = static_cast<std::size_t>(v);
    }
    const std::size_t n = std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
    t.values.resize(n);
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) truncated(path);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void append_prefixed(std::vector<Tensor>& out, const std::string& prefix, const ParamSet& params) {
  for (const auto& t : params.tensors()) {
    Tensor copy = t;
    copy.name = prefix + "." + t.name;
    out.push_back(std::move(copy));
  }
}

ParamSet extract_prefixed(const std::vector<Tensor>& tensors, const std::string& prefix) {
  ParamSet out;
  const std::string head = prefix + ".";
  for (const auto& t : tensors) {
    if (t.name.rfind(head, 0) != 0) continue;
    const std::size_t i = out.add(t.name.substr(head.size()), t.shape);
    out[i].values = t.values;
  }
  return out;
}

}  // namespace hilab
