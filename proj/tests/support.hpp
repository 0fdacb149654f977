#pragma once

// Test-only oracles. Nothing here calls into the kernels it is used to
// check: Gramians are evaluated from index arithmetic on the definition,
// the network oracle is a plain nested-loop evaluator, gradients come from
// central differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "texsyn/texsyn.hpp"

namespace texsyn::oracle {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = scale * rng.gaussian();
  return t;
}

/// Gram entry straight from the definition:
///   standard: Σ_{y,x} F_i(y,x) F_j(y,x) / M
///   shift_x:  Σ_{y, x<W-δ} F_i(y,x+δ) F_j(y,x) / norm
///   shift_y:  Σ_{y<H-δ, x} F_i(y+δ,x) F_j(y,x) / norm
///   flip_lr:  Σ F_i(y,x) F_j(y,W-1-x) / M,  flip_ud analogous.
inline double naive_gram_entry(const Tensor<double>& f, GramKind kind, std::size_t delta,
                               std::size_t i, std::size_t j, bool overlap_norm = false) {
  const std::size_t h = f.extent(1), w = f.extent(2);
  double s = 0.0;
  double norm = static_cast<double>(h * w);
  switch (kind) {
    case GramKind::standard:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) s += f(i, y, x) * f(j, y, x);
      break;
    case GramKind::shift_x:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x + delta < w; ++x) s += f(i, y, x + delta) * f(j, y, x);
      if (overlap_norm) norm = static_cast<double>(h * (w - delta));
      break;
    case GramKind::shift_y:
      for (std::size_t y = 0; y + delta < h; ++y)
        for (std::size_t x = 0; x < w; ++x) s += f(i, y + delta, x) * f(j, y, x);
      if (overlap_norm) norm = static_cast<double>((h - delta) * w);
      break;
    case GramKind::flip_lr:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) s += f(i, y, x) * f(j, y, w - 1 - x);
      break;
    case GramKind::flip_ud:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) s += f(i, y, x) * f(j, h - 1 - y, x);
      break;
  }
  return s / norm;
}

/// Direct evaluation of a conv/relu/pool chain: every output element is a
/// fresh sum over its receptive field with explicit bounds checks.
inline Tensor<double> naive_forward(const Network<double>& net, const Tensor<double>& image,
                                    const std::string& until) {
  Tensor<double> cur = image;
  for (const auto& l : net.layers) {
    const std::size_t c = cur.extent(0), h = cur.extent(1), w = cur.extent(2);
    if (l.kind == LayerKind::conv) {
      const auto& p = l.conv;
      const long oh = (static_cast<long>(h) + 2 * p.pad - p.kernel_h) / p.stride + 1;
      const long ow = (static_cast<long>(w) + 2 * p.pad - p.kernel_w) / p.stride + 1;
      Tensor<double> out({p.out_maps, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
      for (std::size_t o = 0; o < p.out_maps; ++o)
        for (long oy = 0; oy < oh; ++oy)
          for (long ox = 0; ox < ow; ++ox) {
            double s = l.bias[o];
            for (std::size_t i = 0; i < c; ++i)
              for (std::size_t ky = 0; ky < p.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < p.kernel_w; ++kx) {
                  const long iy = oy * p.stride + static_cast<long>(ky) - p.pad;
                  const long ix = ox * p.stride + static_cast<long>(kx) - p.pad;
                  if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                  s += l.weights[((o * c + i) * p.kernel_h + ky) * p.kernel_w + kx] * cur(i, iy, ix);
                }
            out(o, oy, ox) = s;
          }
      cur = std::move(out);
    } else if (l.kind == LayerKind::relu) {
      for (auto& v : cur.data()) v = std::max(v, 0.0);
    } else {
      const auto& p = l.pool;
      const std::size_t oh = (h - p.window) / p.stride + 1, ow = (w - p.window) / p.stride + 1;
      Tensor<double> out({c, oh, ow});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double best = -INFINITY, sum = 0.0;
            for (std::size_t dy = 0; dy < p.window; ++dy)
              for (std::size_t dx = 0; dx < p.window; ++dx) {
                const double v = cur(ch, oy * p.stride + dy, ox * p.stride + dx);
                best = std::max(best, v);
                sum += v;
              }
            out(ch, oy, ox) = p.mode == PoolMode::max ? best : sum / (p.window * p.window);
          }
      cur = std::move(out);
    }
    if (l.name == until) return cur;
  }
  return cur;
}

/// Central differences of f at every element of x.
inline Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f,
                                       Tensor<double> x, double step = 1e-5) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// max_i |a_i − n_i| / max_i |n_i|.
inline double relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

/// Conv/relu/pool chain with VGG-19 layer names and map counts up to pool4.
/// Weights are random; only shapes matter where this is used.
template <typename T>
Network<T> vgg19_shaped_net(std::uint64_t seed = 0, std::size_t max_block = 5) {
  Network<T> net;
  net.preprocessing = {ChannelOrder::bgr, {103.939f, 116.779f, 123.68f}};
  Rng rng(seed);
  const std::vector<std::uint32_t> maps{64, 128, 256, 512, 512};
  const std::vector<std::size_t> convs{2, 2, 4, 4, 4};
  std::uint32_t in = 3;
  for (std::size_t b = 0; b < max_block; ++b) {
    for (std::size_t k = 1; k <= convs[b]; ++k) {
      const std::string id = std::to_string(b + 1) + "_" + std::to_string(k);
      LayerSpec<T> conv;
      conv.name = "conv" + id;
      conv.kind = LayerKind::conv;
      conv.conv = {in, maps[b], 3, 3, 1, 1};
      conv.weights = fill_noise<T>({maps[b], in, 3, 3}, rng, 0.0, 0.01);
      conv.bias = Tensor<T>({maps[b]});
      net.layers.push_back(std::move(conv));
      LayerSpec<T> relu;
      relu.name = "relu" + id;
      relu.kind = LayerKind::relu;
      net.layers.push_back(std::move(relu));
      in = maps[b];
    }
    LayerSpec<T> pool;
    pool.name = "pool" + std::to_string(b + 1);
    pool.kind = LayerKind::pool;
    pool.pool = {2, 2, PoolMode::max};
    net.layers.push_back(std::move(pool));
  }
  net.tap_points = default_taps(net);
  return net;
}

/// Vertical stripes: columns alternate `period/2` dark and `period/2` light,
/// with a slight per-channel tint.
inline ImageBuffer stripe_image(std::size_t size, std::size_t period) {
  ImageBuffer img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const bool light = (x % period) < period / 2;
      img.at(y, x, 0) = light ? 220 : 40;
      img.at(y, x, 1) = light ? 200 : 60;
      img.at(y, x, 2) = light ? 170 : 30;
    }
  return img;
}

/// Mean-removed luminance of a region.
inline std::vector<double> luminance(const ImageBuffer& img, std::size_t x0, std::size_t y0,
                                     std::size_t w, std::size_t h) {
  std::vector<double> g(w * h);
  double mean = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (std::size_t c = 0; c < 3; ++c) v += img.at(y0 + y, x0 + x, c);
      g[y * w + x] = v / 3.0;
      mean += v / 3.0;
    }
  mean /= static_cast<double>(g.size());
  for (auto& v : g) v -= mean;
  return g;
}

/// Normalized autocorrelation at horizontal lag `lag`: mean of products over
/// the overlap divided by the variance of the region.
inline double autocorrelation_x(const ImageBuffer& img, std::size_t lag, std::size_t x0 = 0,
                                std::size_t y0 = 0, std::size_t w = 0, std::size_t h = 0) {
  if (w == 0) w = img.width;
  if (h == 0) h = img.height;
  const auto g = luminance(img, x0, y0, w, h);
  double var = 0.0;
  for (double v : g) var += v * v;
  var /= static_cast<double>(g.size());
  if (var == 0.0) return 0.0;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x + lag < w; ++x) {
      s += g[y * w + x] * g[y * w + x + lag];
      ++n;
    }
  return (s / static_cast<double>(n)) / var;
}

}  // namespace texsyn::oracle
