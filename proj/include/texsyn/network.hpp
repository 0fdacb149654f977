#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/parallel.hpp"
#include "texsyn/rng.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

enum class LayerKind : std::uint8_t { conv = 0, relu = 1, pool = 2 };
enum class PoolMode : std::uint8_t { max = 0, average = 1 };
enum class ChannelOrder : std::uint8_t { rgb = 0, bgr = 1 };

struct ConvParams {
  std::uint32_t in_maps = 0;
  std::uint32_t out_maps = 0;
  std::uint32_t kernel_h = 3;
  std::uint32_t kernel_w = 3;
  std::uint32_t stride = 1;
  std::uint32_t pad = 1;
};

struct PoolParams {
  std::uint32_t window = 2;
  std::uint32_t stride = 2;
  PoolMode mode = PoolMode::average;
};

/// One layer of a conv/relu/pool chain. Conv layers own weights shaped
/// (out_maps, in_maps, kernel_h, kernel_w) and a bias of length out_maps.
template <typename T>
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  ConvParams conv{};
  PoolParams pool{};
  Tensor<T> weights;
  Tensor<T> bias;
};

/// Display-to-network conversion read from the weight file header. Means are
/// given in network channel order.
struct Preprocessing {
  ChannelOrder order = ChannelOrder::rgb;
  std::array<float, 3> means{0.0f, 0.0f, 0.0f};

  friend bool operator==(const Preprocessing&, const Preprocessing&) = default;
};

template <typename T>
struct Network {
  std::vector<LayerSpec<T>> layers;
  Preprocessing preprocessing;
  std::vector<std::string> tap_points;

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw ConfigError("unknown layer '" + name + "'");
  }

  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.preprocessing = preprocessing;
    out.tap_points = tap_points;
    for (const auto& l : layers) {
      LayerSpec<U> c{l.name, l.kind, l.conv, l.pool, {}, {}};
      if (l.kind == LayerKind::conv) {
        c.weights = l.weights.template cast<U>();
        c.bias = l.bias.template cast<U>();
      }
      out.layers.push_back(std::move(c));
    }
    return out;
  }
};

/// Checks unique names, parameter sanity, weight shapes, channel continuity
/// from a 3-channel input, and that every tap point exists.
template <typename T>
void validate(const Network<T>& net) {
  std::set<std::string> names;
  std::uint32_t channels = 3;
  for (const auto& l : net.layers) {
    if (l.name.empty()) throw ValidationError("layer with empty name");
    if (!names.insert(l.name).second) throw ValidationError("duplicate layer name '" + l.name + "'");
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& p = l.conv;
        if (p.in_maps == 0 || p.out_maps == 0 || p.kernel_h == 0 || p.kernel_w == 0 ||
            p.stride == 0)
          throw ValidationError("layer '" + l.name + "': conv parameters must be positive");
        if (p.in_maps != channels)
          throw ValidationError("layer '" + l.name + "': expects " + std::to_string(p.in_maps) +
                                " input maps, producer has " + std::to_string(channels));
        const Shape ws{p.out_maps, p.in_maps, p.kernel_h, p.kernel_w};
        if (l.weights.shape() != ws)
          throw ValidationError("layer '" + l.name + "': weight shape " +
                                to_string(l.weights.shape()) + ", expected " + to_string(ws));
        if (l.bias.shape() != Shape{p.out_maps})
          throw ValidationError("layer '" + l.name + "': bias shape " + to_string(l.bias.shape()));
        channels = p.out_maps;
        break;
      }
      case LayerKind::pool:
        if (l.pool.window == 0 || l.pool.stride == 0)
          throw ValidationError("layer '" + l.name + "': pool window and stride must be positive");
        if (l.pool.mode != PoolMode::max && l.pool.mode != PoolMode::average)
          throw ValidationError("layer '" + l.name + "': unknown pooling mode");
        break;
      case LayerKind::relu:
        break;
      default:
        throw ValidationError("layer '" + l.name + "': unknown layer kind");
    }
  }
  for (const auto& tap : net.tap_points)
    if (!names.count(tap)) throw ValidationError("tap point '" + tap + "' names no layer");
}

/// Output shape of every layer for a 3×height×width input. Throws ShapeError
/// naming the first layer whose output would be empty.
template <typename T>
std::vector<Shape> infer_shapes(const Network<T>& net, std::size_t height, std::size_t width) {
  std::vector<Shape> shapes;
  shapes.reserve(net.layers.size());
  std::size_t c = 3, h = height, w = width;
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::conv) {
      const auto& p = l.conv;
      const std::size_t ph = h + 2 * p.pad, pw = w + 2 * p.pad;
      if (ph < p.kernel_h || pw < p.kernel_w)
        throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                         " too small for layer '" + l.name + "'");
      h = (ph - p.kernel_h) / p.stride + 1;
      w = (pw - p.kernel_w) / p.stride + 1;
      c = p.out_maps;
    } else if (l.kind == LayerKind::pool) {
      if (h < l.pool.window || w < l.pool.window)
        throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                         " too small for layer '" + l.name + "'");
      h = (h - l.pool.window) / l.pool.stride + 1;
      w = (w - l.pool.window) / l.pool.stride + 1;
    }
    shapes.push_back({c, h, w});
  }
  return shapes;
}

template <typename T>
struct FeatureMap {
  std::string layer;
  Tensor<T> features;  // (N, H, W)

  std::size_t maps() const { return features.extent(0); }
  /// M: elements per map.
  std::size_t spatial() const { return features.extent(1) * features.extent(2); }
};

/// Activations (or gradients with respect to them) at a set of tap points.
template <typename T>
struct FeatureStack {
  std::vector<FeatureMap<T>> entries;

  const FeatureMap<T>* find(const std::string& layer) const {
    for (const auto& e : entries)
      if (e.layer == layer) return &e;
    return nullptr;
  }
  FeatureMap<T>* find(const std::string& layer) {
    for (auto& e : entries)
      if (e.layer == layer) return &e;
    return nullptr;
  }
  const Tensor<T>& at(const std::string& layer) const {
    if (auto* e = find(layer)) return e->features;
    throw ConfigError("feature stack has no layer '" + layer + "'");
  }
  Tensor<T>& at(const std::string& layer) {
    if (auto* e = find(layer)) return e->features;
    throw ConfigError("feature stack has no layer '" + layer + "'");
  }

  /// Zero-filled stack with the same layers and shapes.
  FeatureStack zeros_like() const {
    FeatureStack out;
    for (const auto& e : entries) out.entries.push_back({e.layer, Tensor<T>(e.features.shape())});
    return out;
  }
};

namespace detail {

struct ColumnRange {
  std::size_t lo = 0, hi = 0;  // half-open range of output columns
};

// Output positions o with 0 <= o*stride + k - pad < extent.
inline ColumnRange valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t k,
                                 std::size_t stride, std::size_t pad) {
  const long lo_num = static_cast<long>(pad) - static_cast<long>(k);
  long lo = lo_num <= 0 ? 0 : (lo_num + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  const long hi_num = static_cast<long>(in_extent) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  long hi = hi_num < 0 ? -1 : hi_num / static_cast<long>(stride);
  hi = std::min<long>(hi, static_cast<long>(out_extent) - 1);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const LayerSpec<T>& layer, const Shape& out_shape) {
  const auto& p = layer.conv;
  if (in.extent(0) != p.in_maps)
    throw ShapeError("layer '" + layer.name + "': got " + std::to_string(in.extent(0)) +
                     " input maps, expects " + std::to_string(p.in_maps));
  const std::size_t ih = in.extent(1), iw = in.extent(2);
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  Tensor<T> out(out_shape);
  parallel_for(p.out_maps, [&](std::size_t o) {
    std::span<T> dst = out.map(o);
    std::fill(dst.begin(), dst.end(), layer.bias[o]);
    for (std::size_t i = 0; i < p.in_maps; ++i) {
      std::span<const T> src = in.map(i);
      for (std::size_t ky = 0; ky < p.kernel_h; ++ky) {
        const auto rows = valid_outputs(oh, ih, ky, p.stride, p.pad);
        for (std::size_t kx = 0; kx < p.kernel_w; ++kx) {
          const T w = layer.weights[((o * p.in_maps + i) * p.kernel_h + ky) * p.kernel_w + kx];
          const auto cols = valid_outputs(ow, iw, kx, p.stride, p.pad);
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const std::size_t iy = oy * p.stride + ky - p.pad;
            T* drow = dst.data() + oy * ow;
            const T* srow = src.data() + iy * iw;
            if (p.stride == 1) {
              const T* s = srow + kx - p.pad;
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] += w * s[ox];
            } else {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                drow[ox] += w * srow[ox * p.stride + kx - p.pad];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv_backward_input(const Tensor<T>& dout, const LayerSpec<T>& layer,
                              const Shape& in_shape) {
  const auto& p = layer.conv;
  const std::size_t ih = in_shape[1], iw = in_shape[2];
  const std::size_t oh = dout.extent(1), ow = dout.extent(2);
  Tensor<T> din(in_shape);
  parallel_for(p.in_maps, [&](std::size_t i) {
    std::span<T> dst = din.map(i);
    for (std::size_t o = 0; o < p.out_maps; ++o) {
      std::span<const T> g = dout.map(o);
      for (std::size_t ky = 0; ky < p.kernel_h; ++ky) {
        const auto rows = valid_outputs(oh, ih, ky, p.stride, p.pad);
        for (std::size_t kx = 0; kx < p.kernel_w; ++kx) {
          const T w = layer.weights[((o * p.in_maps + i) * p.kernel_h + ky) * p.kernel_w + kx];
          const auto cols = valid_outputs(ow, iw, kx, p.stride, p.pad);
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const std::size_t iy = oy * p.stride + ky - p.pad;
            T* drow = dst.data() + iy * iw;
            const T* grow = g.data() + oy * ow;
            if (p.stride == 1) {
              T* d = drow + kx - p.pad;
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) d[ox] += w * grow[ox];
            } else {
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                drow[ox * p.stride + kx - p.pad] += w * grow[ox];
            }
          }
        }
      }
    }
  });
  return din;
}

template <typename T>
Tensor<T> pool_forward(const Tensor<T>& in, const LayerSpec<T>& layer, const Shape& out_shape,
                       std::vector<std::uint32_t>* argmax) {
  const auto& p = layer.pool;
  const std::size_t maps = in.extent(0), iw = in.extent(2);
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  Tensor<T> out(out_shape);
  if (argmax) argmax->assign(out.size(), 0);
  const T inv_area = T(1) / static_cast<T>(p.window * p.window);
  parallel_for(maps, [&](std::size_t c) {
    std::span<const T> src = in.map(c);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t y0 = oy * p.stride, x0 = ox * p.stride;
        const std::size_t out_index = (c * oh + oy) * ow + ox;
        if (p.mode == PoolMode::max) {
          std::size_t best = y0 * iw + x0;
          for (std::size_t dy = 0; dy < p.window; ++dy)
            for (std::size_t dx = 0; dx < p.window; ++dx) {
              const std::size_t idx = (y0 + dy) * iw + x0 + dx;
              if (src[idx] > src[best]) best = idx;  // strict: first occurrence wins ties
            }
          out[out_index] = src[best];
          (*argmax)[out_index] = static_cast<std::uint32_t>(best);
        } else {
          T acc = 0;
          for (std::size_t dy = 0; dy < p.window; ++dy)
            for (std::size_t dx = 0; dx < p.window; ++dx) acc += src[(y0 + dy) * iw + x0 + dx];
          out[out_index] = acc * inv_area;
        }
      }
  });
  return out;
}

template <typename T>
Tensor<T> pool_backward(const Tensor<T>& dout, const LayerSpec<T>& layer, const Shape& in_shape,
                        const std::vector<std::uint32_t>& argmax) {
  const auto& p = layer.pool;
  const std::size_t maps = in_shape[0], iw = in_shape[2];
  const std::size_t oh = dout.extent(1), ow = dout.extent(2);
  Tensor<T> din(in_shape);
  const T inv_area = T(1) / static_cast<T>(p.window * p.window);
  parallel_for(maps, [&](std::size_t c) {
    std::span<T> dst = din.map(c);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t out_index = (c * oh + oy) * ow + ox;
        const T g = dout[out_index];
        if (p.mode == PoolMode::max) {
          dst[argmax[out_index]] += g;
        } else {
          const std::size_t y0 = oy * p.stride, x0 = ox * p.stride;
          for (std::size_t dy = 0; dy < p.window; ++dy)
            for (std::size_t dx = 0; dx < p.window; ++dx)
              dst[(y0 + dy) * iw + x0 + dx] += g * inv_area;
        }
      }
  });
  return din;
}

}  // namespace detail

/// Stored activations of one forward evaluation, sufficient for backward.
template <typename T>
struct ForwardPass {
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;               // one per evaluated layer
  std::vector<std::vector<std::uint32_t>> argmax;  // max-pool routing, per layer
  std::vector<std::string> taps;

  FeatureStack<T> features() const;
  const Network<T>* net = nullptr;
};

template <typename T>
FeatureStack<T> ForwardPass<T>::features() const {
  FeatureStack<T> out;
  for (const auto& tap : taps) out.entries.push_back({tap, outputs[net->index_of(tap)]});
  return out;
}

/// Evaluates layers up to the deepest requested tap and keeps every
/// intermediate activation.
template <typename T>
ForwardPass<T> forward_pass(const Network<T>& net, const Tensor<T>& image,
                            const std::vector<std::string>& taps) {
  if (image.rank() != 3 || image.extent(0) != 3)
    throw ShapeError("forward expects a [3,H,W] image, got " + to_string(image.shape()));
  std::size_t last = 0;
  if (taps.empty()) throw ConfigError("forward: no tap points requested");
  for (const auto& tap : taps) last = std::max(last, net.index_of(tap));

  const auto shapes = infer_shapes(net, image.extent(1), image.extent(2));
  ForwardPass<T> pass;
  pass.net = &net;
  pass.input = image;
  pass.taps = taps;
  pass.outputs.reserve(last + 1);
  pass.argmax.resize(last + 1);
  for (std::size_t li = 0; li <= last; ++li) {
    const auto& layer = net.layers[li];
    const Tensor<T>& in = li == 0 ? image : pass.outputs[li - 1];
    switch (layer.kind) {
      case LayerKind::conv:
        pass.outputs.push_back(detail::conv_forward(in, layer, shapes[li]));
        break;
      case LayerKind::relu: {
        Tensor<T> out = in;
        for (auto& v : out.data()) v = v > T(0) ? v : T(0);
        pass.outputs.push_back(std::move(out));
        break;
      }
      case LayerKind::pool:
        pass.outputs.push_back(detail::pool_forward(
            in, layer, shapes[li], layer.pool.mode == PoolMode::max ? &pass.argmax[li] : nullptr));
        break;
    }
  }
  return pass;
}

template <typename T>
FeatureStack<T> forward(const Network<T>& net, const Tensor<T>& image,
                        const std::vector<std::string>& taps) {
  return forward_pass(net, image, taps).features();
}

template <typename T>
FeatureStack<T> forward(const Network<T>& net, const Tensor<T>& image) {
  return forward(net, image, net.tap_points);
}

/// dLoss/dImage given dLoss/dFeatures at the pass's taps. Taps absent from
/// `grads` contribute nothing; layers in `grads` that are not taps of the
/// pass are rejected.
template <typename T>
Tensor<T> backward(const Network<T>& net, const ForwardPass<T>& pass,
                   const FeatureStack<T>& grads) {
  const std::size_t count = pass.outputs.size();
  std::vector<const Tensor<T>*> tap_grads(count, nullptr);
  for (const auto& g : grads.entries) {
    const std::size_t li = net.index_of(g.layer);
    if (li >= count || std::find(pass.taps.begin(), pass.taps.end(), g.layer) == pass.taps.end())
      throw ShapeError("backward: layer '" + g.layer + "' was not a tap of the forward pass");
    if (g.features.shape() != pass.outputs[li].shape())
      throw ShapeError("backward: gradient for '" + g.layer + "' has shape " +
                       to_string(g.features.shape()) + ", activation is " +
                       to_string(pass.outputs[li].shape()));
    tap_grads[li] = &g.features;
  }

  std::optional<Tensor<T>> grad;
  for (std::size_t k = count; k-- > 0;) {
    if (tap_grads[k]) {
      if (grad)
        *grad += *tap_grads[k];
      else
        grad = *tap_grads[k];
    }
    if (!grad) continue;
    const auto& layer = net.layers[k];
    const Tensor<T>& in = k == 0 ? pass.input : pass.outputs[k - 1];
    switch (layer.kind) {
      case LayerKind::conv:
        grad = detail::conv_backward_input(*grad, layer, in.shape());
        break;
      case LayerKind::relu: {
        const auto out = pass.outputs[k].data();
        auto g = grad->data();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!(out[i] > T(0))) g[i] = T(0);
        break;
      }
      case LayerKind::pool:
        grad = detail::pool_backward(*grad, layer, in.shape(), pass.argmax[k]);
        break;
    }
  }
  if (!grad) return Tensor<T>(pass.input.shape());
  return std::move(*grad);
}

template <typename T>
Tensor<T> backward(const Network<T>& net, const Tensor<T>& image, const FeatureStack<T>& grads) {
  std::vector<std::string> taps;
  for (const auto& g : grads.entries) taps.push_back(g.layer);
  if (taps.empty()) return Tensor<T>(image.shape());
  return backward(net, forward_pass(net, image, taps), grads);
}

/// ImageNet channel means in RGB order, used by the builtin network.
inline constexpr std::array<float, 3> kImageNetMeansRgb{123.68f, 116.779f, 103.939f};

/// Three conv3×3/ReLU/pool2 blocks (3→8→16→16 maps) with taps pool1..pool3.
/// Weights are N(0,1)/sqrt(fan_in); biases N(0,1)·0.1. Deterministic in seed.
template <typename T>
Network<T> builtin_tiny_net(std::uint64_t seed, PoolMode pooling = PoolMode::average) {
  Network<T> net;
  net.preprocessing = {ChannelOrder::rgb, kImageNetMeansRgb};
  Rng rng(seed);
  const std::array<std::uint32_t, 4> maps{3, 8, 16, 16};
  for (std::uint32_t block = 1; block <= 3; ++block) {
    const std::string id = std::to_string(block);
    LayerSpec<T> conv;
    conv.name = "conv" + id + "_1";
    conv.kind = LayerKind::conv;
    conv.conv = {maps[block - 1], maps[block], 3, 3, 1, 1};
    const double scale = 1.0 / std::sqrt(static_cast<double>(conv.conv.in_maps * 9));
    conv.weights = fill_noise<T>({conv.conv.out_maps, conv.conv.in_maps, 3, 3}, rng, 0.0, scale);
    conv.bias = fill_noise<T>({conv.conv.out_maps}, rng, 0.0, 0.1);
    net.layers.push_back(std::move(conv));

    LayerSpec<T> relu;
    relu.name = "relu" + id + "_1";
    relu.kind = LayerKind::relu;
    net.layers.push_back(std::move(relu));

    LayerSpec<T> pool;
    pool.name = "pool" + id;
    pool.kind = LayerKind::pool;
    pool.pool = {2, 2, pooling};
    net.layers.push_back(std::move(pool));
    net.tap_points.push_back("pool" + id);
  }
  return net;
}

}  // namespace texsyn
