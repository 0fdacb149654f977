#pragma once

// TSW1 weight files and TSF1 activation fixtures. All integers and floats are
// little-endian; floats are IEEE-754 binary32.
//
// TSW1:
//   "TSW1"  u32 version (=1)
//   u8 channel order (0 rgb, 1 bgr)  f32 mean[3] (network channel order)
//   u32 layer count
//   per layer: u16 name length, UTF-8 name, u8 kind (0 conv, 1 relu, 2 pool)
//     conv: u32 in_maps, out_maps, kernel_h, kernel_w, stride, pad,
//           f32 weights[out*in*kh*kw] (row-major), f32 bias[out]
//     pool: u32 window, stride, mode (0 max, 1 average)
//     relu: nothing
//
// TSF1 (reference activations written by the weight converter):
//   "TSF1"  u32 version (=1)  u32 entry count
//   per entry: u16 name length, UTF-8 name, u32 rank, u32 dims[rank],
//              f32 payload[prod(dims)]

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/network.hpp"

namespace texsyn {

inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr std::uint32_t kFixtureFormatVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    bytes(buf, sizeof(U));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void name(const std::string& s) {
    if (s.size() > 0xffff) throw ValidationError("layer name too long: " + s.substr(0, 32));
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& buffer() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw IoError(source_ + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                    std::to_string(n) + " more)");
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, buf, sizeof(U));
    return v;
  }
  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string name() { return str(u16()); }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  std::vector<std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <typename T>
Tensor<T> read_payload(ByteReader& in, Shape shape) {
  const std::size_t n = element_count(shape);
  in.need(n * 4);
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(in.f32());
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_weights(const Network<T>& net) {
  validate(net);
  detail::ByteWriter out;
  out.bytes("TSW1", 4);
  out.u32(kWeightFormatVersion);
  out.u8(static_cast<std::uint8_t>(net.preprocessing.order));
  for (float m : net.preprocessing.means) out.f32(m);
  out.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    out.name(l.name);
    out.u8(static_cast<std::uint8_t>(l.kind));
    if (l.kind == LayerKind::conv) {
      const auto& p = l.conv;
      for (auto v : {p.in_maps, p.out_maps, p.kernel_h, p.kernel_w, p.stride, p.pad}) out.u32(v);
      for (T w : l.weights.data()) out.f32(static_cast<float>(w));
      for (T b : l.bias.data()) out.f32(static_cast<float>(b));
    } else if (l.kind == LayerKind::pool) {
      out.u32(l.pool.window);
      out.u32(l.pool.stride);
      out.u32(static_cast<std::uint32_t>(l.pool.mode));
    }
  }
  return out.buffer();
}

/// Parses a TSW1 image. The result has no tap points; callers choose them.
template <typename T>
Network<T> decode_weights(std::vector<std::uint8_t> bytes, const std::string& source = "<memory>") {
  detail::ByteReader in(std::move(bytes), source);
  if (in.str(4) != "TSW1") throw FormatError(source + ": bad magic, not a TSW1 weight file");
  if (const auto v = in.u32(); v != kWeightFormatVersion)
    throw FormatError(source + ": unsupported TSW1 version " + std::to_string(v));

  Network<T> net;
  const auto order = in.u8();
  if (order > 1) throw FormatError(source + ": bad channel-order flag " + std::to_string(order));
  net.preprocessing.order = static_cast<ChannelOrder>(order);
  for (auto& m : net.preprocessing.means) m = in.f32();

  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    LayerSpec<T> l;
    l.name = in.name();
    const auto kind = in.u8();
    if (kind > 2)
      throw FormatError(source + ": layer '" + l.name + "' has unknown kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    if (l.kind == LayerKind::conv) {
      auto& p = l.conv;
      p.in_maps = in.u32();
      p.out_maps = in.u32();
      p.kernel_h = in.u32();
      p.kernel_w = in.u32();
      p.stride = in.u32();
      p.pad = in.u32();
      if (p.in_maps == 0 || p.out_maps == 0 || p.kernel_h == 0 || p.kernel_w == 0)
        throw ValidationError(source + ": layer '" + l.name + "' declares an empty weight tensor");
      l.weights = detail::read_payload<T>(in, {p.out_maps, p.in_maps, p.kernel_h, p.kernel_w});
      l.bias = detail::read_payload<T>(in, {p.out_maps});
    } else if (l.kind == LayerKind::pool) {
      l.pool.window = in.u32();
      l.pool.stride = in.u32();
      const auto mode = in.u32();
      if (mode > 1)
        throw ValidationError(source + ": layer '" + l.name + "' has unknown pooling mode");
      l.pool.mode = static_cast<PoolMode>(mode);
    }
    net.layers.push_back(std::move(l));
  }
  if (!in.at_end())
    throw FormatError(source + ": trailing bytes after layer " + std::to_string(count));
  validate(net);
  return net;
}

template <typename T>
Network<T> load_weights(const std::string& path) {
  return decode_weights<T>(detail::read_file(path), path);
}

template <typename T>
void save_weights(const Network<T>& net, const std::string& path) {
  detail::write_file(path, encode_weights(net));
}

/// Conventional VGG tap points, restricted to layers present
/// in `net`: relu1_1 (the rectified conv1_1 output) and pool1..pool4. Falls
/// back to every pooling layer.
template <typename T>
std::vector<std::string> default_taps(const Network<T>& net) {
  std::vector<std::string> taps;
  for (const char* name : {"relu1_1", "pool1", "pool2", "pool3", "pool4"})
    if (net.find(name)) taps.emplace_back(name);
  if (taps.size() >= 2) return taps;
  taps.clear();
  for (const auto& l : net.layers)
    if (l.kind == LayerKind::pool) taps.push_back(l.name);
  if (taps.empty() && !net.layers.empty()) taps.push_back(net.layers.back().name);
  return taps;
}

// Fixtures.

template <typename T>
std::vector<std::uint8_t> encode_fixture(const FeatureStack<T>& stack) {
  detail::ByteWriter out;
  out.bytes("TSF1", 4);
  out.u32(kFixtureFormatVersion);
  out.u32(static_cast<std::uint32_t>(stack.entries.size()));
  for (const auto& e : stack.entries) {
    out.name(e.layer);
    out.u32(static_cast<std::uint32_t>(e.features.rank()));
    for (auto d : e.features.shape()) out.u32(static_cast<std::uint32_t>(d));
    for (T v : e.features.data()) out.f32(static_cast<float>(v));
  }
  return out.buffer();
}

template <typename T>
FeatureStack<T> decode_fixture(std::vector<std::uint8_t> bytes, const std::string& source = "<memory>") {
  detail::ByteReader in(std::move(bytes), source);
  if (in.str(4) != "TSF1") throw FormatError(source + ": bad magic, not a TSF1 fixture");
  if (const auto v = in.u32(); v != kFixtureFormatVersion)
    throw FormatError(source + ": unsupported TSF1 version " + std::to_string(v));
  FeatureStack<T> stack;
  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = in.name();
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw FormatError(source + ": entry '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
      d = in.u32();
      if (d == 0) throw FormatError(source + ": entry '" + name + "' has a zero extent");
    }
    stack.entries.push_back({std::move(name), detail::read_payload<T>(in, std::move(shape))});
  }
  if (!in.at_end()) throw FormatError(source + ": trailing bytes after fixture entries");
  return stack;
}

template <typename T>
FeatureStack<T> load_fixture(const std::string& path) {
  return decode_fixture<T>(detail::read_file(path), path);
}

template <typename T>
void save_fixture(const FeatureStack<T>& stack, const std::string& path) {
  detail::write_file(path, encode_fixture(stack));
}

/// Largest absolute difference between matching layers; throws ShapeError if
/// a fixture layer is missing from `engine` or shapes disagree.
template <typename T>
double max_abs_difference(const FeatureStack<T>& fixture, const FeatureStack<T>& engine) {
  double worst = 0.0;
  for (const auto& e : fixture.entries) {
    const auto* other = engine.find(e.layer);
    if (!other) throw ShapeError("engine stack lacks fixture layer '" + e.layer + "'");
    e.features.require_same_shape(other->features, e.layer.c_str());
    for (std::size_t i = 0; i < e.features.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(e.features[i]) -
                                       static_cast<double>(other->features[i])));
  }
  return worst;
}

}  // namespace texsyn
