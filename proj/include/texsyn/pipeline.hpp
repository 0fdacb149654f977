#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/image.hpp"
#include "texsyn/network.hpp"
#include "texsyn/objective.hpp"
#include "texsyn/optimizer.hpp"
#include "texsyn/rng.hpp"
#include "texsyn/schedule.hpp"

namespace texsyn {

enum class JobMode { texture, inpaint, transfer };
enum class InitMode { automatic, noise, content };

inline const char* to_string(JobMode m) {
  switch (m) {
    case JobMode::texture: return "texture";
    case JobMode::inpaint: return "inpaint";
    case JobMode::transfer: return "transfer";
  }
  return "?";
}

/// User-facing objective switches; turned into an ObjectiveSpec once the
/// image sizes are known.
struct ObjectiveOptions {
  GramMode gram_mode = GramMode::full;
  bool cc = true;
  std::vector<FlipAxis> flips;
  std::optional<std::map<std::string, std::vector<std::size_t>>> deltas;  // nullopt: automatic
  ShiftNormalization shift_normalization = ShiftNormalization::full_map;
  double style_weight = 1.0;
  std::optional<std::string> content_layer;  // nullopt: default_content_layer()
  double content_weight = 1e-3;
  std::size_t border_width = 16;
  std::optional<double> border_weight;  // nullopt: auto-balanced
};

/// One synthesis request. `reference` is the texture (texture mode), the
/// reference patch (inpaint) or the style image (transfer); `image` is the
/// damaged image (inpaint) or the content image (transfer).
struct SynthesisJob {
  JobMode mode = JobMode::texture;
  ImageBuffer reference;
  ImageBuffer image;
  Mask mask;
  std::size_t width = 0;  // texture output size; 0 means the reference size
  std::size_t height = 0;
  ObjectiveOptions objective;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  InitMode init = InitMode::automatic;
};

template <typename T>
struct SynthesisResult {
  ImageBuffer image;
  Tensor<T> canvas;
  OptimizeTrace trace;
  ObjectiveSpec spec;
  LossReport initial_report;
  LossReport final_report;
  double border_weight = 0.0;
  std::size_t reference_computations = 0;

  double seconds_per_iteration() const {
    if (trace.steps() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 1; i < trace.iterations.size(); ++i) s += trace.iterations[i].seconds;
    return s / static_cast<double>(trace.steps());
  }
};

/// Called after every accepted iteration with the breakdown at that iterate.
using ProgressFn = std::function<void(const IterationRecord&, const LossReport&)>;

/// The relu following the first conv of the block holding the deepest tap
/// (conv layer itself when no relu follows).
template <typename T>
std::string default_content_layer(const Network<T>& net) {
  if (net.tap_points.empty()) throw ConfigError("network has no tap points");
  std::size_t deepest = 0;
  for (const auto& tap : net.tap_points) deepest = std::max(deepest, net.index_of(tap));
  std::size_t start = 0;
  for (std::size_t i = deepest; i-- > 0;)
    if (net.layers[i].kind == LayerKind::pool) {
      start = i + 1;
      break;
    }
  for (std::size_t i = start; i <= deepest; ++i)
    if (net.layers[i].kind == LayerKind::conv) {
      if (i + 1 < net.layers.size() && net.layers[i + 1].kind == LayerKind::relu)
        return net.layers[i + 1].name;
      return net.layers[i].name;
    }
  return net.layers[deepest].name;
}

/// Output shapes of the given layers for an image size.
template <typename T>
std::map<std::string, Shape> layer_shapes(const Network<T>& net, const std::vector<std::string>& layers,
                                          std::size_t height, std::size_t width) {
  const auto shapes = infer_shapes(net, height, width);
  std::map<std::string, Shape> out;
  for (const auto& l : layers) out[l] = shapes[net.index_of(l)];
  return out;
}

/// Builds and validates the objective for every image size in `sizes`
/// ({height, width} pairs). Automatic offsets come from the smallest height
/// and width so that they are valid for all of them.
template <typename T>
ObjectiveSpec make_objective(const Network<T>& net, const ObjectiveOptions& opt, bool with_content,
                             const std::vector<std::pair<std::size_t, std::size_t>>& sizes) {
  std::size_t min_h = sizes.front().first, min_w = sizes.front().second;
  for (const auto& [h, w] : sizes) {
    min_h = std::min(min_h, h);
    min_w = std::min(min_w, w);
  }
  ObjectiveSpec spec;
  spec.gram_mode = opt.gram_mode;
  spec.cc = opt.cc;
  spec.flips = opt.flips;
  spec.shift_normalization = opt.shift_normalization;
  spec.style_weight = opt.style_weight;

  const auto shapes = infer_shapes(net, min_h, min_w);
  std::optional<DeltaSchedule> automatic;
  if (opt.cc && !opt.deltas) automatic = build_delta_schedule(net, min_h, min_w);
  for (const auto& tap : net.tap_points) {
    LayerTerm term;
    term.layer = tap;
    term.weight = default_layer_weight(shapes[net.index_of(tap)][0]);
    if (opt.cc) {
      if (automatic) {
        term.deltas = automatic->at(tap);
      } else if (auto it = opt.deltas->find(tap); it != opt.deltas->end()) {
        term.deltas = it->second;
      }
    }
    spec.layers.push_back(std::move(term));
  }
  if (opt.cc && opt.deltas)
    for (const auto& [layer, _] : *opt.deltas)
      if (std::find(net.tap_points.begin(), net.tap_points.end(), layer) == net.tap_points.end())
        throw ConfigError("delta schedule names '" + layer + "', which is not a tap point");
  if (with_content) {
    const std::string layer = opt.content_layer ? *opt.content_layer : default_content_layer(net);
    if (!net.find(layer)) throw ConfigError("content layer '" + layer + "' does not exist");
    spec.content = ContentTerm{layer, opt.content_weight};
  }
  spec.border = BorderTerm{opt.border_width, opt.border_weight};

  for (const auto& [h, w] : sizes) spec.validate(layer_shapes(net, spec.required_taps(), h, w));
  return spec;
}

namespace detail {

inline std::vector<double> channel_std(const Tensor<double>& t) {
  std::vector<double> out(3);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto m = t.map(c);
    double mean = 0.0;
    for (double v : m) mean += v;
    mean /= static_cast<double>(m.size());
    double var = 0.0;
    for (double v : m) var += (v - mean) * (v - mean);
    out[c] = std::sqrt(var / static_cast<double>(m.size()));
  }
  return out;
}

template <typename T>
Tensor<T> noise_canvas(const Tensor<T>& like_reference, std::size_t height, std::size_t width,
                       std::uint64_t seed) {
  const auto stddev = channel_std(like_reference.template cast<double>());
  Rng rng(seed);
  Tensor<T> canvas({3, height, width});
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = fill_noise<T>({height, width}, rng, 0.0, stddev[c]);
    std::copy(plane.data().begin(), plane.data().end(), canvas.map(c).begin());
  }
  return canvas;
}

/// Pixels outside `mask` within Chebyshev distance `width` of it.
inline Mask border_band(const Mask& mask, std::size_t width) {
  Mask rows(mask.width, mask.height), band(mask.width, mask.height);
  const long w = static_cast<long>(width);
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask(y, x)) continue;
      const long lo = std::max(0L, static_cast<long>(x) - w);
      const long hi = std::min(static_cast<long>(mask.width) - 1, static_cast<long>(x) + w);
      for (long xx = lo; xx <= hi; ++xx) rows(y, static_cast<std::size_t>(xx)) = 1;
    }
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!rows(y, x)) continue;
      const long lo = std::max(0L, static_cast<long>(y) - w);
      const long hi = std::min(static_cast<long>(mask.height) - 1, static_cast<long>(y) + w);
      for (long yy = lo; yy <= hi; ++yy) band(static_cast<std::size_t>(yy), x) = 1;
    }
  for (std::size_t i = 0; i < band.values.size(); ++i)
    if (mask.values[i]) band.values[i] = 0;
  return band;
}

}  // namespace detail

/// Reference statistics plus the combined loss over a canvas. The reference
/// Gramians (and content features) are computed once, in the constructor.
template <typename T>
class SynthesisObjective {
 public:
  SynthesisObjective(const Network<T>& net, ObjectiveSpec spec, const Tensor<T>& reference,
                     const Tensor<T>* content = nullptr)
      : net_(net), spec_(std::move(spec)), taps_(spec_.required_taps()) {
    auto ref_features = forward(net_, reference, spec_.style_layers());
    grams_ = compute_grams(spec_, ref_features);
    ++reference_computations_;
    if (spec_.content) {
      if (!content) throw ConfigError("content term needs a content image");
      content_features_ = forward(net_, *content, {spec_.content->layer}).at(spec_.content->layer);
    }
  }

  void set_border(Tensor<T> original, Mask band, double weight) {
    border_original_ = std::move(original);
    border_band_ = std::move(band);
    border_weight_ = weight;
  }

  /// Gram and content terms only.
  FeatureLoss<T> feature_terms(const Tensor<T>& canvas) const {
    auto features = forward(net_, canvas, taps_);
    return feature_objective(spec_, grams_, features,
                             spec_.content ? &content_features_ : nullptr);
  }

  double operator()(const Tensor<T>& canvas, Tensor<T>& grad) {
    auto pass = forward_pass(net_, canvas, taps_);
    auto terms = feature_objective(spec_, grams_, pass.features(),
                                   spec_.content ? &content_features_ : nullptr);
    grad = backward(net_, pass, terms.grads);
    if (border_band_) {
      auto b = border_penalty(canvas, *border_original_, *border_band_, border_weight_);
      terms.report.add({"pixels", TermKind::border, 0, b.value});
      grad += b.grad;
    }
    last_report_ = std::move(terms.report);
    return last_report_.total;
  }

  const LossReport& last_report() const { return last_report_; }
  const GramSet<T>& reference_grams() const { return grams_; }
  const ObjectiveSpec& spec() const { return spec_; }
  std::size_t reference_computations() const { return reference_computations_; }

 private:
  const Network<T>& net_;
  ObjectiveSpec spec_;
  std::vector<std::string> taps_;
  GramSet<T> grams_;
  Tensor<T> content_features_;
  std::optional<Tensor<T>> border_original_;
  std::optional<Mask> border_band_;
  double border_weight_ = 0.0;
  LossReport last_report_;
  std::size_t reference_computations_ = 0;
};

namespace detail {

template <typename T>
SynthesisResult<T> run_optimization(const Network<T>& net, SynthesisObjective<T>& objective,
                                    const Tensor<T>& canvas0, OptimizerConfig cfg,
                                    const ProgressFn& progress) {
  SynthesisResult<T> result;
  auto user_callback = cfg.on_iteration;
  LossReport initial;
  bool have_initial = false;
  cfg.on_iteration = [&](const IterationRecord& r) {
    if (!have_initial) {
      initial = objective.last_report();
      have_initial = true;
    }
    if (user_callback) user_callback(r);
    if (progress) progress(r, objective.last_report());
  };
  Objective<T> f = [&](const Tensor<T>& x, Tensor<T>& g) { return objective(x, g); };
  auto opt = minimize(f, canvas0, cfg);

  result.canvas = std::move(opt.x);
  result.trace = std::move(opt.trace);
  result.initial_report = initial;
  Tensor<T> scratch(result.canvas.shape());
  objective(result.canvas, scratch);
  result.final_report = objective.last_report();
  result.image = deprocess(result.canvas, net.preprocessing);
  result.spec = objective.spec();
  result.reference_computations = objective.reference_computations();
  return result;
}

}  // namespace detail

/// Texture synthesis from seeded noise. Flip terms in the objective make this
/// the symmetric-texture procedure; with no flips and cc off it is the plain
/// Gram-matching baseline.
template <typename T>
SynthesisResult<T> synthesize_texture(const Network<T>& net, const SynthesisJob& job,
                                      const ProgressFn& progress = {}) {
  if (job.reference.pixels.empty()) throw ConfigError("texture synthesis needs a reference image");
  const std::size_t h = job.height ? job.height : job.reference.height;
  const std::size_t w = job.width ? job.width : job.reference.width;
  const auto reference = preprocess<T>(job.reference, net.preprocessing);
  auto spec = make_objective(net, job.objective, false,
                             {{h, w}, {job.reference.height, job.reference.width}});
  spec.border.reset();
  SynthesisObjective<T> objective(net, std::move(spec), reference);
  const auto canvas0 = detail::noise_canvas(reference, h, w, job.seed);
  return detail::run_optimization(net, objective, canvas0, job.optimizer, progress);
}

/// Texture synthesis with left-right / up-down flip Gramian terms.
template <typename T>
SynthesisResult<T> synthesize_symmetric(const Network<T>& net, const SynthesisJob& job,
                                        const ProgressFn& progress = {}) {
  return synthesize_texture(net, job, progress);
}

/// Fills the masked region of job.image so that its statistics match
/// job.reference. Pixels farther than the border width from the mask are
/// frozen; the band around the mask is tied to the original by an L2 term.
template <typename T>
SynthesisResult<T> inpaint(const Network<T>& net, const SynthesisJob& job,
                           const ProgressFn& progress = {}) {
  const auto& img = job.image;
  if (img.pixels.empty()) throw ConfigError("inpainting needs an image");
  if (job.reference.pixels.empty()) throw ConfigError("inpainting needs a reference patch");
  if (job.mask.width != img.width || job.mask.height != img.height)
    throw ConfigError("mask is " + std::to_string(job.mask.width) + "x" +
                      std::to_string(job.mask.height) + ", image is " + std::to_string(img.width) +
                      "x" + std::to_string(img.height));
  const std::size_t missing = job.mask.count();
  if (missing == 0) throw ConfigError("mask marks no pixels to inpaint");
  if (missing == job.mask.values.size()) throw ConfigError("mask covers the entire image");

  auto spec = make_objective(net, job.objective, false,
                             {{img.height, img.width}, {job.reference.height, job.reference.width}});
  const std::size_t band_width = spec.border ? spec.border->width : 0;
  const bool weight_given = spec.border && spec.border->weight.has_value();
  const double given_weight = weight_given ? *spec.border->weight : 0.0;
  const auto original = preprocess<T>(img, net.preprocessing);
  const auto reference = preprocess<T>(job.reference, net.preprocessing);
  SynthesisObjective<T> objective(net, std::move(spec), reference);

  // Canvas: the original with the hole set to display mid-gray.
  Tensor<T> canvas0 = original;
  Tensor<T> gray_band = original;
  const Mask band = detail::border_band(job.mask, band_width);
  for (std::size_t c = 0; c < 3; ++c) {
    const T gray = static_cast<T>(127.5) - static_cast<T>(net.preprocessing.means[c]);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        if (job.mask(y, x)) canvas0(c, y, x) = gray;
        if (band(y, x)) gray_band(c, y, x) = gray;
      }
  }

  OptimizerConfig cfg = job.optimizer;
  std::vector<std::uint8_t> frozen(original.size(), 0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < job.mask.values.size(); ++i)
      frozen[c * job.mask.values.size() + i] = !(job.mask.values[i] || band.values[i]);
  cfg.frozen_mask = std::move(frozen);

  double weight = 0.0;
  if (band.count() > 0) {
    if (weight_given) {
      weight = given_weight;
    } else {
      // Balance: a band gone fully gray would cost as much as the initial
      // Gram-term mismatch.
      const double style0 = objective.feature_terms(canvas0).report.total;
      const double unit = border_penalty(gray_band, original, band, 1.0).value;
      weight = unit > 0.0 ? style0 / unit : style0;
      if (!(weight > 0.0)) weight = 1.0;
    }
    objective.set_border(original, band, weight);
  }
  auto result = detail::run_optimization(net, objective, canvas0, cfg, progress);
  result.border_weight = weight;
  return result;
}

/// Renders job.image (content) with the statistics of job.reference (style).
template <typename T>
SynthesisResult<T> transfer(const Network<T>& net, const SynthesisJob& job,
                            const ProgressFn& progress = {}) {
  if (job.image.pixels.empty()) throw ConfigError("transfer needs a content image");
  if (job.reference.pixels.empty()) throw ConfigError("transfer needs a style image");
  const auto& content_img = job.image;
  const ImageBuffer style_img = resize(job.reference, content_img.width, content_img.height);
  auto spec = make_objective(net, job.objective, true, {{content_img.height, content_img.width}});
  spec.border.reset();
  const auto content = preprocess<T>(content_img, net.preprocessing);
  const auto style = preprocess<T>(style_img, net.preprocessing);
  SynthesisObjective<T> objective(net, std::move(spec), style, &content);
  const Tensor<T> canvas0 =
      job.init == InitMode::noise
          ? detail::noise_canvas(style, content_img.height, content_img.width, job.seed)
          : content;
  return detail::run_optimization(net, objective, canvas0, job.optimizer, progress);
}

template <typename T>
SynthesisResult<T> run_job(const Network<T>& net, const SynthesisJob& job,
                           const ProgressFn& progress = {}) {
  switch (job.mode) {
    case JobMode::texture: return synthesize_texture(net, job, progress);
    case JobMode::inpaint: return inpaint(net, job, progress);
    case JobMode::transfer: return transfer(net, job, progress);
  }
  throw ConfigError("unknown job mode");
}

}  // namespace texsyn
