#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsbp/nn/model.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::io {

// Binary tensor container, explicitly little-endian on every host:
//
//   magic   "RSBP"                     4 bytes
//   version u16  (currently 1)
//   dtype   u8   (1: float32, 2: float64)
//   ndim    u8   (1..4)
//   dims    u32 x ndim
//   metalen u32
//   meta    UTF-8 JSON, metalen bytes
//   payload row-major values, dtype-sized, LSB first
//
// Round-trips are bit-exact for both dtypes and all ranks 1-4.

constexpr char kContainerMagic[4] = {'R', 'S', 'B', 'P'};
constexpr std::uint16_t kContainerVersion = 1;

template <typename T>
struct dtype_code;
template <>
struct dtype_code<float> {
  static constexpr std::uint8_t value = 1;
};
template <>
struct dtype_code<double> {
  static constexpr std::uint8_t value = 2;
};

namespace detail {

inline void put_bytes(std::vector<unsigned char>& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

struct Reader {
  const std::vector<unsigned char>& b;
  size_t pos = 0;
  std::uint64_t take(int n) {
    if (pos + static_cast<size_t>(n) > b.size())
      throw std::invalid_argument("container: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(b[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += static_cast<size_t>(n);
    return v;
  }
};

inline std::uint32_t f32_bits(float x) {
  std::uint32_t u;
  std::memcpy(&u, &x, 4);
  return u;
}
inline float f32_from_bits(std::uint32_t u) {
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}
inline std::uint64_t f64_bits(double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  return u;
}
inline double f64_from_bits(std::uint64_t u) {
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

template <typename T>
void put_value(std::vector<unsigned char>& out, T v) {
  if constexpr (sizeof(T) == 4)
    put_bytes(out, f32_bits(v), 4);
  else
    put_bytes(out, f64_bits(v), 8);
}

template <typename T>
T take_value(Reader& r) {
  if constexpr (sizeof(T) == 4)
    return f32_from_bits(static_cast<std::uint32_t>(r.take(4)));
  else
    return f64_from_bits(r.take(8));
}

}  // namespace detail

template <typename T>
std::vector<unsigned char> encode_container(const Tensor<T>& t,
                                            const nlohmann::json& meta) {
  if (t.rank() < 1 || t.rank() > 4)
    throw std::invalid_argument("container: rank must be 1..4");
  const std::string meta_s = meta.is_null() ? "{}" : meta.dump();
  std::vector<unsigned char> out;
  out.reserve(14 + 4 * static_cast<size_t>(t.rank()) + meta_s.size() +
              sizeof(T) * t.size());
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  detail::put_bytes(out, kContainerVersion, 2);
  detail::put_bytes(out, dtype_code<T>::value, 1);
  detail::put_bytes(out, static_cast<std::uint64_t>(t.rank()), 1);
  for (int d = 0; d < t.rank(); ++d) {
    if (t.dim(d) < 0) throw std::invalid_argument("container: negative dim");
    detail::put_bytes(out, static_cast<std::uint64_t>(t.dim(d)), 4);
  }
  detail::put_bytes(out, static_cast<std::uint64_t>(meta_s.size()), 4);
  out.insert(out.end(), meta_s.begin(), meta_s.end());
  for (const T v : t.v) detail::put_value(out, v);
  return out;
}

struct ContainerInfo {
  std::uint16_t version = 0;
  std::uint8_t dtype = 0;
  std::vector<int> dims;
  nlohmann::json meta;
  size_t payload_offset = 0;
  size_t payload_count = 0;
};

inline ContainerInfo peek_container(const std::vector<unsigned char>& bytes) {
  detail::Reader r{bytes};
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0)
    throw std::invalid_argument("container: bad magic (not an RSBP container)");
  r.pos = 4;
  ContainerInfo info;
  info.version = static_cast<std::uint16_t>(r.take(2));
  if (info.version != kContainerVersion)
    throw std::invalid_argument("container: unsupported version " +
                                std::to_string(info.version));
  info.dtype = static_cast<std::uint8_t>(r.take(1));
  if (info.dtype != 1 && info.dtype != 2)
    throw std::invalid_argument("container: unknown dtype code " +
                                std::to_string(info.dtype));
  const int ndim = static_cast<int>(r.take(1));
  if (ndim < 1 || ndim > 4)
    throw std::invalid_argument("container: rank must be 1..4");
  size_t count = 1;
  for (int d = 0; d < ndim; ++d) {
    info.dims.push_back(static_cast<int>(r.take(4)));
    count *= static_cast<size_t>(info.dims.back());
  }
  const size_t meta_len = static_cast<size_t>(r.take(4));
  if (r.pos + meta_len > bytes.size())
    throw std::invalid_argument("container: truncated metadata");
  const std::string meta_s(bytes.begin() + static_cast<long>(r.pos),
                           bytes.begin() + static_cast<long>(r.pos + meta_len));
  info.meta = meta_s.empty() ? nlohmann::json::object()
                             : nlohmann::json::parse(meta_s);
  info.payload_offset = r.pos + meta_len;
  info.payload_count = count;
  const size_t elem = info.dtype == 1 ? 4 : 8;
  if (bytes.size() - info.payload_offset != elem * count)
    throw std::invalid_argument(
        "container: payload length " +
        std::to_string(bytes.size() - info.payload_offset) +
        " != dtype size x product(dims) = " + std::to_string(elem * count));
  return info;
}

template <typename T>
Tensor<T> decode_container(const std::vector<unsigned char>& bytes,
                           nlohmann::json* meta_out = nullptr) {
  const ContainerInfo info = peek_container(bytes);
  if (info.dtype != dtype_code<T>::value)
    throw std::invalid_argument("container: stored dtype code " +
                                std::to_string(info.dtype) +
                                " does not match the requested element type");
  Tensor<T> t(info.dims);
  detail::Reader r{bytes};
  r.pos = info.payload_offset;
  for (size_t i = 0; i < t.size(); ++i) t.v[i] = detail::take_value<T>(r);
  if (meta_out) *meta_out = info.meta;
  return t;
}

// ------------------------------------------------------------- file I/O

inline void write_file(const std::string& path,
                       const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::invalid_argument("write failed: " + path);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::invalid_argument("cannot open: " + path);
  const std::streamsize sz = f.tellg();
  f.seekg(0);
  std::vector<unsigned char> bytes(static_cast<size_t>(sz));
  f.read(reinterpret_cast<char*>(bytes.data()), sz);
  if (!f) throw std::invalid_argument("read failed: " + path);
  return bytes;
}

// --------------------------------------------------------- checkpoints

// A checkpoint is a rank-1 container whose payload concatenates every
// parameter and buffer of the store in registration order; the metadata
// carries the architecture and a layer table {name, shape, offset,
// trainable}. Loading re-registers the architecture and overwrites each
// entry, so names and shapes are verified structurally.

inline nlohmann::json model_config_to_json(const nn::ModelConfig& mc) {
  return {{"variant", nn::variant_name(mc.variant)},
          {"n_views", mc.n_views},
          {"hidden", mc.hidden},
          {"peephole", mc.peephole},
          {"unet",
           {{"depth", mc.unet.depth},
            {"width0", mc.unet.width0},
            {"block_convs", mc.unet.block_convs}}}};
}

inline nn::ModelConfig model_config_from_json(const nlohmann::json& j) {
  nn::ModelConfig mc;
  mc.variant = nn::variant_from_name(j.at("variant").get<std::string>());
  mc.n_views = j.at("n_views").get<int>();
  mc.hidden = j.at("hidden").get<int>();
  mc.peephole = j.at("peephole").get<bool>();
  const auto& u = j.at("unet");
  mc.unet.depth = u.at("depth").get<int>();
  mc.unet.width0 = u.at("width0").get<int>();
  mc.unet.block_convs = u.at("block_convs").get<int>();
  mc.unet.in_channels = mc.hidden;
  mc.validate();
  return mc;
}

template <typename T>
std::vector<unsigned char> encode_checkpoint(
    const nn::ModelConfig& mc, const nn::ParamStore<T>& ps,
    const nlohmann::json& extra_meta = nlohmann::json::object()) {
  size_t total = 0;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& e : ps.entries()) {
    layers.push_back({{"name", e.name},
                      {"shape", e.value.shape},
                      {"offset", total},
                      {"trainable", e.trainable}});
    total += e.value.size();
  }
  Tensor<T> flat({static_cast<int>(total)});
  size_t pos = 0;
  for (const auto& e : ps.entries()) {
    std::copy(e.value.v.begin(), e.value.v.end(), flat.v.begin() + static_cast<long>(pos));
    pos += e.value.size();
  }
  nlohmann::json meta = extra_meta;
  meta["kind"] = "checkpoint";
  meta["model"] = model_config_to_json(mc);
  meta["layers"] = layers;
  return encode_container(flat, meta);
}

template <typename T>
nn::ModelConfig decode_checkpoint(const std::vector<unsigned char>& bytes,
                                  nn::ParamStore<T>& ps_out,
                                  nlohmann::json* meta_out = nullptr) {
  nlohmann::json meta;
  Tensor<T> flat = decode_container<T>(bytes, &meta);
  if (meta.value("kind", "") != "checkpoint")
    throw std::invalid_argument("checkpoint: container is not a checkpoint");
  const nn::ModelConfig mc = model_config_from_json(meta.at("model"));
  ps_out = nn::make_model_params<T>(mc, 0);

  const auto& layers = meta.at("layers");
  if (layers.size() != ps_out.entries().size())
    throw std::invalid_argument(
        "checkpoint: layer count " + std::to_string(layers.size()) +
        " does not match architecture (" +
        std::to_string(ps_out.entries().size()) + ")");
  size_t k = 0;
  for (auto& e : ps_out.entries()) {
    const auto& layer = layers[k++];
    if (layer.at("name").get<std::string>() != e.name)
      throw std::invalid_argument("checkpoint: layer '" +
                                  layer.at("name").get<std::string>() +
                                  "' does not match expected '" + e.name + "'");
    const std::vector<int> shape = layer.at("shape").get<std::vector<int>>();
    if (shape != e.value.shape)
      throw std::invalid_argument("checkpoint: shape mismatch for " + e.name);
    const size_t off = layer.at("offset").get<size_t>();
    if (off + e.value.size() > flat.size())
      throw std::invalid_argument("checkpoint: payload too short for " + e.name);
    std::copy(flat.v.begin() + static_cast<long>(off),
              flat.v.begin() + static_cast<long>(off + e.value.size()),
              e.value.v.begin());
  }
  if (meta_out) *meta_out = meta;
  return mc;
}

}  // namespace rsbp::io
