#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "ENVAECKP"            8 bytes magic
//   u32 version           currently 1
//   u64 header_length
//   header                UTF-8 JSON: config, step, epoch, rng state,
//                         metadata, and a tensor manifest
//                         [{name, shape, offset}] with byte offsets into
//                         the payload
//   payload               raw f64 tensors in manifest order
//
// Tensor names are "param/<name>", "adam_m/<name>", "adam_v/<name>".

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "envae/config_json.hpp"
#include "envae/train.hpp"

namespace envae {

inline constexpr char kCheckpointMagic[8] = {'E', 'N', 'V', 'A', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { io, bad_magic, version_mismatch, truncated, malformed };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(const std::string& in, std::size_t offset) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<std::uint8_t>(in[offset + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  Json manifest = Json::array();
  std::string payload;
  auto add = [&](const std::string& name, const Tensor& t) {
    manifest.push_back(Json{{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    for (double v : t.data()) detail::put_le(payload, std::bit_cast<std::uint64_t>(v));
  };
  for (const auto& [name, t] : ck.params.tensors) add("param/" + name, t);
  for (const auto& [name, t] : ck.adam.m) add("adam_m/" + name, t);
  for (const auto& [name, t] : ck.adam.v) add("adam_v/" + name, t);

  Json header{{"config", to_json(ck.config)},
              {"step", ck.step},
              {"epoch", ck.epoch},
              {"adam_step", ck.adam.step},
              {"rng_state", ck.rng_state},
              {"metadata", Json::parse(ck.metadata)},
              {"payload_bytes", payload.size()},
              {"tensors", manifest}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  using K = CheckpointErrorKind;
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(K::bad_magic, "bad magic: not an envae checkpoint");
  }
  if (bytes.size() < 20) throw CheckpointError(K::truncated, "truncated checkpoint header");
  const auto version = detail::get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError(K::version_mismatch, "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                                   std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = detail::get_le<std::uint64_t>(bytes, 12);
  if (bytes.size() - 20 < header_len) throw CheckpointError(K::truncated, "truncated checkpoint header");
  const std::size_t payload_at = 20 + header_len;

  Checkpoint ck;
  try {
    const Json header = Json::parse(bytes.begin() + 20, bytes.begin() + static_cast<std::ptrdiff_t>(payload_at));
    ck.version = version;
    ck.config = train_config_from_json(header.at("config"));
    ck.step = header.at("step").get<std::uint64_t>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.adam.step = header.at("adam_step").get<std::uint64_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();
    ck.metadata = header.at("metadata").dump();
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() - payload_at < payload_bytes) throw CheckpointError(K::truncated, "truncated checkpoint payload");
    ck.params.arch = ck.config.arch;
    for (const Json& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t count = numel(shape);
      if (offset + 8 * count > payload_bytes) throw CheckpointError(K::truncated, "tensor '" + name + "' runs past payload");
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, payload_at + offset + 8 * i));
      }
      Tensor t(shape, std::move(data));
      const auto slash = name.find('/');
      const std::string group = name.substr(0, slash);
      const std::string key = name.substr(slash + 1);
      if (group == "param") ck.params.tensors.emplace(key, std::move(t));
      else if (group == "adam_m") ck.adam.m.emplace(key, std::move(t));
      else if (group == "adam_v") ck.adam.v.emplace(key, std::move(t));
      else throw CheckpointError(K::malformed, "unknown tensor group in '" + name + "'");
    }
  } catch (const Json::exception& e) {
    throw CheckpointError(K::malformed, std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(K::malformed, std::string("malformed checkpoint config: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(K::malformed, std::string("malformed checkpoint tensor: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path);
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace envae
