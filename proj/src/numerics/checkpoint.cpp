#include "dare/numerics/checkpoint.hpp"

#include <limits>
#include <sstream>

#include "dare/numerics/binary_io.hpp"

namespace dare {

std::string encode_checkpoint(const ParameterStore& store) {
  std::ostringstream os(std::ios::binary);
  os.write("DARE", 4);
  binary::put_u32(os, kCheckpointVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError(FormatErrorKind::invalid, "parameter name too long: " + e.name);
    }
    binary::put_u16(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.value.shape();
    if (shape.size() > 255) throw FormatError(FormatErrorKind::invalid, "too many dimensions: " + e.name);
    binary::put_u8(os, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) binary::put_u32(os, static_cast<std::uint32_t>(d));
    for (Real v : e.value.values()) binary::put_f32(os, static_cast<float>(v));
  }
  return os.str();
}

ParameterStore decode_checkpoint(const std::string& bytes) {
  binary::Reader in(std::vector<char>(bytes.begin(), bytes.end()));
  if (in.remaining() < 4) throw FormatError(FormatErrorKind::truncated, "file shorter than magic");
  if (in.bytes(4, "magic") != "DARE") throw FormatError(FormatErrorKind::bad_magic, "not a checkpoint");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::version_mismatch, "checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32("entry count");
  ParameterStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = in.u16("name length");
    std::string name = in.bytes(len, "name");
    const std::uint8_t ndim = in.u8("rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = in.u32("dimension");
      if (dim == 0) throw FormatError(FormatErrorKind::invalid, "zero dimension in " + name);
      shape.push_back(dim);
      numel *= dim;
    }
    in.need(numel * 4, "tensor payload");
    std::vector<Real> data(numel);
    for (auto& v : data) v = static_cast<Real>(in.f32("tensor payload"));
    store.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

void save_checkpoint(const std::string& path, const ParameterStore& store) {
  binary::write_file_atomic(path, encode_checkpoint(store));
}

ParameterStore load_checkpoint(const std::string& path) {
  const auto bytes = binary::read_file(path);
  return decode_checkpoint(std::string(bytes.begin(), bytes.end()));
}

}  // namespace dare
