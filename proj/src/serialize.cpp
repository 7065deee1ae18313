#include "sattn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sattn {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = (value >> (8 * i)) & 0xffu;
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw std::runtime_error("tensor blob: truncated file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor_blob(const std::string& path,
                       const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("tensor blob: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw std::invalid_argument("tensor blob: name too long");
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint8_t>(os, t.precision() == Precision::f32 ? 1 : 0);
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t e : t.shape()) write_le<std::uint64_t>(os, e);
    for (double v : t.values()) write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("tensor blob: write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> read_tensor_blob(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("tensor blob: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("tensor blob: bad magic in '" + path + "'");
  }
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("tensor blob: unsupported version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(is);
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto prec_tag = read_le<std::uint8_t>(is);
    if (prec_tag > 1) throw std::runtime_error("tensor blob: bad precision tag");
    const auto ndim = read_le<std::uint8_t>(is);
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(read_le<std::uint64_t>(is));
      numel *= e;
    }
    std::vector<double> data(numel);
    for (auto& v : data) v = std::bit_cast<double>(read_le<std::uint64_t>(is));
    tensors.emplace_back(std::move(name),
                         Tensor::from(std::move(shape), std::move(data),
                                      prec_tag == 1 ? Precision::f32 : Precision::f64));
  }
  return tensors;
}

}  // namespace sattn
