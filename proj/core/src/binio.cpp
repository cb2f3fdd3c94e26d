#include "binio.hpp"

#include <cstdio>

namespace gw {

std::vector<std::uint8_t> read_file_bytes(const std::string& path, std::string& error) {
  error.clear();
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) {
    error = "cannot open " + path + " for reading";
    return {};
  }
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(sz > 0 ? static_cast<std::size_t>(sz) : 0);
  if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    error = "short read on " + path;
    std::fclose(f);
    return {};
  }
  std::fclose(f);
  return bytes;
}

bool write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes,
                      std::string& error) {
  error.clear();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) {
    error = "cannot open " + path + " for writing";
    return false;
  }
  if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    error = "short write on " + path;
    std::fclose(f);
    return false;
  }
  std::fclose(f);
  return true;
}

}  // namespace gw
