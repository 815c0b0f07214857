#include "sodetr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sodetr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<bool>(in);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 7);
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[7];
  in.read(magic, 7);
  if (!in || std::memcmp(magic, kCheckpointMagic, 7) != 0) {
    throw std::runtime_error("not a checkpoint (bad magic): " + path);
  }
  std::vector<NamedTensor> out;
  std::uint32_t name_len;
  while (get(in, name_len)) {
    if (name_len > (1u << 16)) throw std::runtime_error("corrupt checkpoint name length in " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank;
    if (!in || !get(in, rank) || rank == 0 || rank > 8) throw std::runtime_error("corrupt checkpoint header in " + path);
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v;
      if (!get(in, v) || v == 0 || v > (1u << 30)) throw std::runtime_error("corrupt checkpoint dims in " + path);
      d = static_cast<int>(v);
    }
    Array data(numel(shape));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    out.push_back({name, Tensor(shape, std::move(data))});
  }
  return out;
}

}  // namespace sodetr
