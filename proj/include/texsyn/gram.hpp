#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

enum class GramKind { standard, shift_x, shift_y, flip_lr, flip_ud };
enum class GramMode { full, diagonal };
enum class ShiftAxis { x, y };

/// Normalizer of shifted Gramians: M of the full map (literal form) or of the
/// cropped overlap.
enum class ShiftNormalization { full_map, overlap };

inline const char* to_string(GramKind k) {
  switch (k) {
    case GramKind::standard: return "standard";
    case GramKind::shift_x: return "shift_x";
    case GramKind::shift_y: return "shift_y";
    case GramKind::flip_lr: return "flip_lr";
    case GramKind::flip_ud: return "flip_ud";
  }
  return "?";
}

inline const char* to_string(GramMode m) { return m == GramMode::full ? "full" : "diagonal"; }

template <typename T>
struct GramMatrix {
  std::string layer;
  GramKind kind = GramKind::standard;
  std::size_t delta = 0;
  Tensor<T> values;  // N × N
  double normalizer = 1.0;

  std::size_t size() const { return values.extent(0); }
};

/// G_ij = <A_i, B_j> / normalizer over rank-3 stacks of equal shape.
template <typename T>
Tensor<T> cross_gram(const Tensor<T>& a, const Tensor<T>& b, double normalizer) {
  a.require_same_shape(b, "cross_gram");
  const std::size_t n = a.extent(0);
  Tensor<T> g({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g(i, j) = static_cast<T>(dot<T>(a.map(i), b.map(j)) / normalizer);
  return g;
}

/// Gradient of a cross Gramian: given dL/dG, accumulates dL/dA and dL/dB.
/// Reductions run over j (resp. i) in increasing order.
template <typename T>
void cross_gram_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<double>& dgram,
                         double normalizer, Tensor<T>& grad_a, Tensor<T>& grad_b) {
  const std::size_t n = a.extent(0);
  const std::size_t m = a.extent(1) * a.extent(2);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dgram(i, j);
      if (d == 0.0) continue;
      auto bj = b.map(j);
      for (std::size_t k = 0; k < m; ++k) acc[k] += d * static_cast<double>(bj[k]);
    }
    auto ga = grad_a.map(i);
    for (std::size_t k = 0; k < m; ++k) ga[k] += static_cast<T>(acc[k] / normalizer);
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = dgram(i, j);
      if (d == 0.0) continue;
      auto ai = a.map(i);
      for (std::size_t k = 0; k < m; ++k) acc[k] += d * static_cast<double>(ai[k]);
    }
    auto gb = grad_b.map(j);
    for (std::size_t k = 0; k < m; ++k) gb[k] += static_cast<T>(acc[k] / normalizer);
  }
}

namespace detail {
template <typename T>
void require_maps(const Tensor<T>& f, const char* op) {
  if (f.rank() != 3)
    throw ShapeError(std::string(op) + " expects [N,H,W] features, got " + to_string(f.shape()));
}
}  // namespace detail

/// G_ij = <F_i, F_j> / M with M = H·W. Diagonal mode keeps only G_ii.
/// The result is exactly symmetric.
template <typename T>
GramMatrix<T> gram(const Tensor<T>& features, GramMode mode = GramMode::full) {
  detail::require_maps(features, "gram");
  const std::size_t n = features.extent(0);
  const double m = static_cast<double>(features.extent(1) * features.extent(2));
  Tensor<T> g({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    g(i, i) = static_cast<T>(dot<T>(features.map(i), features.map(i)) / m);
    if (mode == GramMode::diagonal) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      g(i, j) = static_cast<T>(dot<T>(features.map(i), features.map(j)) / m);
      g(j, i) = g(i, j);
    }
  }
  return {"", GramKind::standard, 0, std::move(g), m};
}

template <typename T>
double shift_normalizer(const Tensor<T>& features, ShiftAxis axis, std::size_t delta,
                        ShiftNormalization norm) {
  const std::size_t h = features.extent(1), w = features.extent(2);
  if (norm == ShiftNormalization::full_map) return static_cast<double>(h * w);
  return axis == ShiftAxis::x ? static_cast<double>(h * (w - delta))
                              : static_cast<double>((h - delta) * w);
}

/// G_ij = <crop(F_i, front, δ), crop(F_j, back, δ)> / M: feature i at
/// position p+δ against feature j at position p along the axis.
template <typename T>
GramMatrix<T> shifted_gram(const Tensor<T>& features, ShiftAxis axis, std::size_t delta,
                           ShiftNormalization norm = ShiftNormalization::full_map) {
  detail::require_maps(features, "shifted_gram");
  Tensor<T> front, back;
  if (axis == ShiftAxis::x) {
    front = crop_columns(features, CropSide::front, delta);
    back = crop_columns(features, CropSide::back, delta);
  } else {
    front = crop_rows(features, CropSide::front, delta);
    back = crop_rows(features, CropSide::back, delta);
  }
  const double normalizer = shift_normalizer(features, axis, delta, norm);
  return {"", axis == ShiftAxis::x ? GramKind::shift_x : GramKind::shift_y, delta,
          cross_gram(front, back, normalizer), normalizer};
}

/// G_ij = <F_i, flip(F_j)> / M.
template <typename T>
GramMatrix<T> flip_gram(const Tensor<T>& features, FlipAxis axis) {
  detail::require_maps(features, "flip_gram");
  const double m = static_cast<double>(features.extent(1) * features.extent(2));
  return {"", axis == FlipAxis::lr ? GramKind::flip_lr : GramKind::flip_ud, 0,
          cross_gram(features, flip(features, axis), m), m};
}

/// Any Gramian kind by key. `mode` applies to the standard kind only.
template <typename T>
GramMatrix<T> compute_gram(const Tensor<T>& features, GramKind kind, std::size_t delta,
                           GramMode mode, ShiftNormalization norm) {
  switch (kind) {
    case GramKind::standard: return gram(features, mode);
    case GramKind::shift_x: return shifted_gram(features, ShiftAxis::x, delta, norm);
    case GramKind::shift_y: return shifted_gram(features, ShiftAxis::y, delta, norm);
    case GramKind::flip_lr: return flip_gram(features, FlipAxis::lr);
    case GramKind::flip_ud: return flip_gram(features, FlipAxis::ud);
  }
  throw ConfigError("unknown Gram kind");
}

/// Accumulates dL/dF into `grad` given dL/dG for a Gramian of `features`.
/// For diagonal mode the caller passes a diagonal dL/dG.
template <typename T>
void gram_backward(const Tensor<T>& features, GramKind kind, std::size_t delta,
                   ShiftNormalization norm, const Tensor<double>& dgram, Tensor<T>& grad) {
  const std::size_t n = features.extent(0), h = features.extent(1), w = features.extent(2);
  switch (kind) {
    case GramKind::standard: {
      const double m = static_cast<double>(h * w);
      cross_gram_backward(features, features, dgram, m, grad, grad);
      return;
    }
    case GramKind::shift_x:
    case GramKind::shift_y: {
      const auto axis = kind == GramKind::shift_x ? ShiftAxis::x : ShiftAxis::y;
      const bool x = axis == ShiftAxis::x;
      Tensor<T> front = x ? crop_columns(features, CropSide::front, delta)
                          : crop_rows(features, CropSide::front, delta);
      Tensor<T> back = x ? crop_columns(features, CropSide::back, delta)
                         : crop_rows(features, CropSide::back, delta);
      Tensor<T> grad_front(front.shape()), grad_back(back.shape());
      cross_gram_backward(front, back, dgram, shift_normalizer(features, axis, delta, norm),
                          grad_front, grad_back);
      // Scatter the cropped gradients back to their source positions.
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t y = 0; y < grad_front.extent(1); ++y)
          for (std::size_t xx = 0; xx < grad_front.extent(2); ++xx) {
            if (x) {
              grad(c, y, xx + delta) += grad_front(c, y, xx);
              grad(c, y, xx) += grad_back(c, y, xx);
            } else {
              grad(c, y + delta, xx) += grad_front(c, y, xx);
              grad(c, y, xx) += grad_back(c, y, xx);
            }
          }
      return;
    }
    case GramKind::flip_lr:
    case GramKind::flip_ud: {
      const auto axis = kind == GramKind::flip_lr ? FlipAxis::lr : FlipAxis::ud;
      const double m = static_cast<double>(h * w);
      Tensor<T> flipped = flip(features, axis);
      Tensor<T> grad_flipped(features.shape());
      cross_gram_backward(features, flipped, dgram, m, grad, grad_flipped);
      grad += flip(grad_flipped, axis);
      return;
    }
  }
}

}  // namespace texsyn
