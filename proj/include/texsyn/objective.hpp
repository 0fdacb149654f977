#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/gram.hpp"
#include "texsyn/network.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

// ---------------------------------------------------------------------------
// Configuration

struct LayerTerm {
  std::string layer;
  double weight = 1.0;               // w_l
  std::vector<std::size_t> deltas;  // cross-correlation offsets, feature-map pixels
};

struct ContentTerm {
  std::string layer;
  double weight = 1.0;
};

struct BorderTerm {
  std::size_t width = 16;
  std::optional<double> weight;  // nullopt: balanced against the style terms at iteration 0
};

/// Everything that defines the synthesis loss apart from the reference data.
struct ObjectiveSpec {
  std::vector<LayerTerm> layers;
  GramMode gram_mode = GramMode::full;
  bool cc = true;
  std::vector<FlipAxis> flips;
  ShiftNormalization shift_normalization = ShiftNormalization::full_map;
  double style_weight = 1.0;  // scales every Gram-based term
  std::optional<ContentTerm> content;
  std::optional<BorderTerm> border;

  std::vector<std::string> style_layers() const {
    std::vector<std::string> out;
    for (const auto& l : layers) out.push_back(l.layer);
    return out;
  }

  /// Layers a forward pass has to expose: the style layers, then the content
  /// layer when it is not already one of them.
  std::vector<std::string> required_taps() const {
    auto taps = style_layers();
    if (content && std::find(taps.begin(), taps.end(), content->layer) == taps.end())
      taps.push_back(content->layer);
    return taps;
  }

  /// Checks weights and offsets against the feature-map shapes every image
  /// the objective will see produces (shapes keyed by layer name).
  void validate(const std::map<std::string, Shape>& layer_shapes) const {
    if (layers.empty()) throw ConfigError("objective has no style layers");
    if (!(style_weight >= 0.0) || !std::isfinite(style_weight))
      throw ConfigError("style weight must be finite and >= 0");
    std::set<std::string> seen;
    for (const auto& l : layers) {
      if (!seen.insert(l.layer).second) throw ConfigError("layer '" + l.layer + "' listed twice");
      if (!(l.weight > 0.0) || !std::isfinite(l.weight))
        throw ConfigError("layer '" + l.layer + "': weight must be > 0");
      auto it = layer_shapes.find(l.layer);
      if (it == layer_shapes.end()) throw ConfigError("layer '" + l.layer + "' is not a tap point");
      const std::size_t extent = std::min(it->second[1], it->second[2]);
      std::set<std::size_t> unique;
      for (auto d : l.deltas) {
        if (d == 0) throw ConfigError("layer '" + l.layer + "': delta must be positive");
        if (d >= extent)
          throw ConfigError("layer '" + l.layer + "': delta " + std::to_string(d) +
                            " must be < feature-map extent " + std::to_string(extent));
        if (!unique.insert(d).second)
          throw ConfigError("layer '" + l.layer + "': delta " + std::to_string(d) + " repeated");
      }
    }
    if (content) {
      if (!(content->weight >= 0.0) || !std::isfinite(content->weight))
        throw ConfigError("content weight must be finite and >= 0");
      if (!layer_shapes.count(content->layer))
        throw ConfigError("content layer '" + content->layer + "' is not a tap point");
    }
    if (border && border->weight && !(*border->weight >= 0.0))
      throw ConfigError("border weight must be >= 0");
  }
};

/// w_l = 1 / (4 N_l^2).
inline double default_layer_weight(std::size_t maps) {
  return 1.0 / (4.0 * static_cast<double>(maps) * static_cast<double>(maps));
}

// ---------------------------------------------------------------------------
// Gram sets

struct GramKey {
  std::string layer;
  GramKind kind = GramKind::standard;
  std::size_t delta = 0;

  friend auto operator<=>(const GramKey&, const GramKey&) = default;
};

template <typename T>
struct GramSet {
  GramMode mode = GramMode::full;
  ShiftNormalization shift_normalization = ShiftNormalization::full_map;
  std::map<GramKey, GramMatrix<T>> grams;

  const GramMatrix<T>& at(const GramKey& key) const {
    auto it = grams.find(key);
    if (it == grams.end())
      throw ConfigError("reference statistics lack " + std::string(to_string(key.kind)) +
                        " Gram for layer '" + key.layer + "' delta " + std::to_string(key.delta));
    return it->second;
  }
};

/// Every Gramian the objective compares, in (layer, kind, delta) order.
inline std::vector<GramKey> gram_keys(const ObjectiveSpec& spec) {
  std::vector<GramKey> keys;
  for (const auto& l : spec.layers) {
    keys.push_back({l.layer, GramKind::standard, 0});
    if (spec.cc)
      for (auto d : l.deltas) {
        keys.push_back({l.layer, GramKind::shift_x, d});
        keys.push_back({l.layer, GramKind::shift_y, d});
      }
    for (auto axis : spec.flips)
      keys.push_back({l.layer, axis == FlipAxis::lr ? GramKind::flip_lr : GramKind::flip_ud, 0});
  }
  return keys;
}

template <typename T>
GramSet<T> compute_grams(const ObjectiveSpec& spec, const FeatureStack<T>& features) {
  GramSet<T> set;
  set.mode = spec.gram_mode;
  set.shift_normalization = spec.shift_normalization;
  for (const auto& key : gram_keys(spec)) {
    auto g = compute_gram(features.at(key.layer), key.kind, key.delta, spec.gram_mode,
                          spec.shift_normalization);
    g.layer = key.layer;
    set.grams.emplace(key, std::move(g));
  }
  return set;
}

/// Plain-text dump: a header line per Gramian followed by N rows of values
/// printed with enough digits to round-trip.
template <typename T>
void write_gramset(std::ostream& os, const GramSet<T>& set) {
  os << "# texsyn gramset v1 mode=" << to_string(set.mode) << " shift_normalization="
     << (set.shift_normalization == ShiftNormalization::full_map ? "full_map" : "overlap") << '\n';
  const auto precision = os.precision(std::numeric_limits<T>::max_digits10);
  for (const auto& [key, g] : set.grams) {
    const std::size_t n = g.size();
    os << "gram layer=" << key.layer << " kind=" << to_string(key.kind) << " delta=" << key.delta
       << " n=" << n << " normalizer=" << g.normalizer << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) os << (j ? " " : "") << g.values(i, j);
      os << '\n';
    }
  }
  os.precision(precision);
}

// ---------------------------------------------------------------------------
// Loss terms

enum class TermKind { style, cc, flip_lr, flip_ud, content, border };

inline const char* to_string(TermKind k) {
  switch (k) {
    case TermKind::style: return "style";
    case TermKind::cc: return "cc";
    case TermKind::flip_lr: return "flip_lr";
    case TermKind::flip_ud: return "flip_ud";
    case TermKind::content: return "content";
    case TermKind::border: return "border";
  }
  return "?";
}

struct LossEntry {
  std::string layer;
  TermKind kind = TermKind::style;
  std::size_t delta = 0;
  double value = 0.0;
};

/// Total plus the per-term breakdown; total is the in-order sum of entries.
struct LossReport {
  double total = 0.0;
  std::vector<LossEntry> entries;

  void add(LossEntry e) {
    total += e.value;
    entries.push_back(std::move(e));
  }
  void merge(const LossReport& other) {
    for (const auto& e : other.entries) add(e);
  }
  double family(TermKind kind) const {
    double s = 0.0;
    for (const auto& e : entries)
      if (e.kind == kind) s += e.value;
    return s;
  }
};

/// A loss report together with dL/dF at each involved layer.
template <typename T>
struct FeatureLoss {
  LossReport report;
  FeatureStack<T> grads;
};

namespace detail {

template <typename T>
Tensor<T>& grad_slot(FeatureStack<T>& grads, const std::string& layer, const Shape& shape) {
  if (auto* e = grads.find(layer)) return e->features;
  grads.entries.push_back({layer, Tensor<T>(shape)});
  return grads.entries.back().features;
}

// ||cand − ref||_F^2 and the difference matrix.
template <typename T>
double gram_mismatch(const GramMatrix<T>& cand, const GramMatrix<T>& ref, Tensor<double>& diff) {
  if (cand.values.shape() != ref.values.shape())
    throw ConfigError("Gram size mismatch at layer '" + ref.layer + "': " +
                      to_string(cand.values.shape()) + " vs " + to_string(ref.values.shape()));
  diff = Tensor<double>(cand.values.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = static_cast<double>(cand.values[i]) - static_cast<double>(ref.values[i]);
    s += diff[i] * diff[i];
  }
  return s;
}

template <typename T>
void require_compatible(const ObjectiveSpec& spec, const GramSet<T>& reference) {
  if (reference.mode != spec.gram_mode)
    throw ConfigError(std::string("reference Grams use mode ") + to_string(reference.mode) +
                      ", objective uses " + to_string(spec.gram_mode));
  if (reference.shift_normalization != spec.shift_normalization)
    throw ConfigError("reference Grams use a different shift normalization");
}

// Adds scale·||Ĝ−G||² to the report and scale·2(Ĝ−G) back-propagated to F̂.
template <typename T>
double accumulate_term(const ObjectiveSpec& spec, const GramSet<T>& reference,
                       const Tensor<T>& features, const GramKey& key, double scale,
                       Tensor<T>& grad) {
  const auto& ref = reference.at(key);
  const auto cand = compute_gram(features, key.kind, key.delta, spec.gram_mode,
                                 spec.shift_normalization);
  Tensor<double> diff;
  const double mismatch = gram_mismatch(cand, ref, diff);
  if (scale != 0.0 && mismatch != 0.0) {
    for (auto& v : diff.data()) v *= 2.0 * scale;
    gram_backward(features, key.kind, key.delta, spec.shift_normalization, diff, grad);
  }
  return scale * mismatch;
}

}  // namespace detail

/// Σ_l w_l ||Ĝ^l − G^l||_F^2 over the objective's layers.
template <typename T>
FeatureLoss<T> style_loss(const ObjectiveSpec& spec, const GramSet<T>& reference,
                          const FeatureStack<T>& candidate) {
  detail::require_compatible(spec, reference);
  FeatureLoss<T> out;
  for (const auto& l : spec.layers) {
    const auto& f = candidate.at(l.layer);
    auto& g = detail::grad_slot(out.grads, l.layer, f.shape());
    const double scale = spec.style_weight * l.weight;
    const double v = detail::accumulate_term(spec, reference, f, {l.layer, GramKind::standard, 0},
                                             scale, g);
    out.report.add({l.layer, TermKind::style, 0, v});
  }
  return out;
}

/// Σ_l w_l Σ_δ ½(||Ĝ_x,δ − G_x,δ||² + ||Ĝ_y,δ − G_y,δ||²). One report entry
/// per (layer, δ).
template <typename T>
FeatureLoss<T> cc_loss(const ObjectiveSpec& spec, const GramSet<T>& reference,
                       const FeatureStack<T>& candidate) {
  detail::require_compatible(spec, reference);
  FeatureLoss<T> out;
  if (!spec.cc) return out;
  for (const auto& l : spec.layers) {
    if (l.deltas.empty()) continue;
    const auto& f = candidate.at(l.layer);
    auto& g = detail::grad_slot(out.grads, l.layer, f.shape());
    const double scale = spec.style_weight * l.weight * 0.5;
    for (auto d : l.deltas) {
      const double vx =
          detail::accumulate_term(spec, reference, f, {l.layer, GramKind::shift_x, d}, scale, g);
      const double vy =
          detail::accumulate_term(spec, reference, f, {l.layer, GramKind::shift_y, d}, scale, g);
      out.report.add({l.layer, TermKind::cc, d, vx + vy});
    }
  }
  return out;
}

/// Σ_l w_l Σ_axis ||Ĝ_axis − G_axis||² over the configured flip axes.
template <typename T>
FeatureLoss<T> flip_loss(const ObjectiveSpec& spec, const GramSet<T>& reference,
                         const FeatureStack<T>& candidate) {
  detail::require_compatible(spec, reference);
  FeatureLoss<T> out;
  if (spec.flips.empty()) return out;
  for (const auto& l : spec.layers) {
    const auto& f = candidate.at(l.layer);
    auto& g = detail::grad_slot(out.grads, l.layer, f.shape());
    const double scale = spec.style_weight * l.weight;
    for (auto axis : spec.flips) {
      const auto kind = axis == FlipAxis::lr ? GramKind::flip_lr : GramKind::flip_ud;
      const double v = detail::accumulate_term(spec, reference, f, {l.layer, kind, 0}, scale, g);
      out.report.add({l.layer, axis == FlipAxis::lr ? TermKind::flip_lr : TermKind::flip_ud, 0, v});
    }
  }
  return out;
}

/// weight/(N·M) · Σ (F̂ − F)^2.
template <typename T>
FeatureLoss<T> content_loss(const std::string& layer, const Tensor<T>& reference,
                            const Tensor<T>& candidate, double weight) {
  reference.require_same_shape(candidate, "content_loss");
  const double nm = static_cast<double>(candidate.size());
  FeatureLoss<T> out;
  Tensor<T> grad(candidate.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double d = static_cast<double>(candidate[i]) - static_cast<double>(reference[i]);
    s += d * d;
    grad[i] = static_cast<T>(2.0 * weight * d / nm);
  }
  out.report.add({layer, TermKind::content, 0, weight * s / nm});
  out.grads.entries.push_back({layer, std::move(grad)});
  return out;
}

/// Single-channel H×W region flags (1 inside).
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), values(w * h, fill) {}

  std::uint8_t& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }
};

template <typename T>
struct PixelLoss {
  double value = 0.0;
  Tensor<T> grad;
};

/// weight · mean over masked (pixel, channel) entries of (canvas − original)^2.
template <typename T>
PixelLoss<T> border_penalty(const Tensor<T>& canvas, const Tensor<T>& original, const Mask& mask,
                            double weight) {
  canvas.require_same_shape(original, "border_penalty");
  if (canvas.rank() != 3 || mask.height != canvas.extent(1) || mask.width != canvas.extent(2))
    throw ShapeError("border_penalty: mask " + std::to_string(mask.width) + "x" +
                     std::to_string(mask.height) + " does not match canvas " +
                     to_string(canvas.shape()));
  const std::size_t pixels = mask.count();
  if (pixels == 0) throw ConfigError("border_penalty: mask selects no pixels");
  const std::size_t channels = canvas.extent(0);
  const double count = static_cast<double>(pixels * channels);
  PixelLoss<T> out{0.0, Tensor<T>(canvas.shape())};
  double s = 0.0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < mask.height; ++y)
      for (std::size_t x = 0; x < mask.width; ++x) {
        if (!mask(y, x)) continue;
        const double d = static_cast<double>(canvas(c, y, x)) - static_cast<double>(original(c, y, x));
        s += d * d;
        out.grad(c, y, x) = static_cast<T>(2.0 * weight * d / count);
      }
  out.value = weight * s / count;
  return out;
}

/// Style, cross-correlation, flip and (optionally) content terms summed in
/// that order, with gradients merged per layer.
template <typename T>
FeatureLoss<T> feature_objective(const ObjectiveSpec& spec, const GramSet<T>& reference,
                                 const FeatureStack<T>& candidate,
                                 const Tensor<T>* content_reference = nullptr) {
  FeatureLoss<T> out;
  auto absorb = [&](FeatureLoss<T>&& part) {
    out.report.merge(part.report);
    for (auto& e : part.grads.entries) {
      auto& slot = detail::grad_slot(out.grads, e.layer, e.features.shape());
      slot += e.features;
    }
  };
  absorb(style_loss(spec, reference, candidate));
  absorb(cc_loss(spec, reference, candidate));
  absorb(flip_loss(spec, reference, candidate));
  if (spec.content) {
    if (!content_reference) throw ConfigError("content term configured without content features");
    absorb(content_loss(spec.content->layer, *content_reference,
                        candidate.at(spec.content->layer), spec.content->weight));
  }
  return out;
}

}  // namespace texsyn
