#include "impz/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "impz/error.hpp"

namespace impz::io {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const nlohmann::json& header,
                     std::span<const double> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  const std::string text = header.dump();
  const std::uint64_t len = to_little<std::uint64_t>(text.size());
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size_bytes()));
  } else {
    for (double v : payload) {
      double le = to_little(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
  if (!out) throw UsageError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path,
                         std::string_view magic) {
  const std::vector<char> bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() < magic.size() ||
      std::string_view(bytes.data(), magic.size()) != magic) {
    throw FormatError(name + ": bad magic, expected \"" + std::string(magic) +
                      "\"");
  }
  std::size_t pos = magic.size();
  if (bytes.size() < pos + sizeof(std::uint64_t)) {
    throw FormatError(name + ": truncated header length");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + pos, sizeof len);
  len = to_little(len);
  pos += sizeof len;
  if (len > bytes.size() - pos) throw FormatError(name + ": truncated header");

  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + static_cast<long>(pos),
                                     bytes.begin() + static_cast<long>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": malformed header: " + e.what());
  }
  pos += len;
  const std::size_t rest = bytes.size() - pos;
  if (rest % sizeof(double) != 0) {
    throw FormatError(name + ": truncated payload");
  }
  c.payload.resize(rest / sizeof(double));
  std::memcpy(c.payload.data(), bytes.data() + pos, rest);
  for (double& v : c.payload) v = to_little(v);
  return c;
}

std::string file_digest(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace impz::io
