#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace wifinet {

// Checkpoint envelope shared by every model type:
//   "WFCK" | u32 version | u64 header bytes | header JSON | u64 value count |
//   values as little-endian 64-bit floats | u64 FNV-1a of header+blob
// Readers verify magic, version and checksum, so a truncated or corrupted
// file fails loudly instead of yielding a silently different model.
inline constexpr char kCheckpointMagic[4] = {'W', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

}  // namespace detail

struct Checkpoint {
  nlohmann::json header;
  std::vector<double> blob;
};

inline void write_checkpoint(const std::string& path, const nlohmann::json& header,
                             const std::vector<double>& blob) {
  if (path.empty()) throw std::runtime_error("empty checkpoint path");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);

  const std::string hdr = header.dump();
  out.write(kCheckpointMagic, 4);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(hdr.size()));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  detail::write_pod(out, static_cast<std::uint64_t>(blob.size()));
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));

  std::uint64_t sum = detail::fnv1a64(hdr.data(), hdr.size());
  sum = detail::fnv1a64(blob.data(), blob.size() * sizeof(double), sum);
  detail::write_pod(out, sum);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  if (path.empty()) throw std::runtime_error("empty checkpoint path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));

  const auto hdr_len = detail::read_pod<std::uint64_t>(in, path);
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (in.gcount() != static_cast<std::streamsize>(hdr_len))
    throw std::runtime_error(path + ": truncated checkpoint");

  const auto count = detail::read_pod<std::uint64_t>(in, path);
  Checkpoint ck;
  ck.blob.resize(count);
  in.read(reinterpret_cast<char*>(ck.blob.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error(path + ": truncated checkpoint");

  const auto stored = detail::read_pod<std::uint64_t>(in, path);
  std::uint64_t sum = detail::fnv1a64(hdr.data(), hdr.size());
  sum = detail::fnv1a64(ck.blob.data(), ck.blob.size() * sizeof(double), sum);
  if (stored != sum) throw std::runtime_error(path + ": checksum mismatch");

  ck.header = nlohmann::json::parse(hdr);
  return ck;
}

}  // namespace wifinet
