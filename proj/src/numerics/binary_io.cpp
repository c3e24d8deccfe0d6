#include "dare/numerics/binary_io.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

namespace dare {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::bad_magic:
      return "bad magic";
    case FormatErrorKind::version_mismatch:
      return "version mismatch";
    case FormatErrorKind::truncated:
      return "truncated";
    case FormatErrorKind::io:
      return "i/o error";
    case FormatErrorKind::invalid:
      return "invalid content";
  }
  return "format error";
}

namespace binary {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::io, "cannot open " + tmp + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError(FormatErrorKind::io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(FormatErrorKind::io, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace binary
}  // namespace dare
