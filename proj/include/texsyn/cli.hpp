#pragma once

// Command-line front end. run_cli() is the whole program; tools/texsyn.cpp
// only forwards argv. Exit codes: 0 success, 1 invalid input or
// configuration, 2 runtime or numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/image.hpp"
#include "texsyn/network.hpp"
#include "texsyn/objective.hpp"
#include "texsyn/optimizer.hpp"
#include "texsyn/pipeline.hpp"
#include "texsyn/schedule.hpp"
#include "texsyn/weights.hpp"

namespace texsyn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

namespace cli {

using Real = float;

/// Raw option values shared by every subcommand; a job file overrides them.
struct Options {
  std::string net = "tiny:0";
  std::string weights;
  std::string taps = "auto";
  std::uint64_t seed = 0;
  std::size_t size = 0;
  std::size_t iters = 1000;
  std::string cc = "on";
  std::string gram_mode = "full";
  std::string flip;
  std::string delta = "auto";
  bool overlap_normalization = false;
  std::string optimizer = "lbfgs";
  std::string trace;
  std::string out;
  std::string job;

  std::string reference, image, mask, content, style;
  std::size_t border_width = 16;
  std::string border_weight = "auto";
  std::string content_layer;
  double content_weight = 1e-3;
  double style_weight = 1.0;
  std::string init = "auto";

  OptimizerConfig optimizer_config;  // fine-grained settings, job files only
};

struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::size_t parse_count(const std::string& s, const std::string& flag) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError(flag + ": '" + s + "' is not a non-negative integer");
  }
}

inline bool parse_on_off(const std::string& v, const std::string& flag) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw UsageError(flag + ": expected on|off, got '" + v + "'");
}

inline std::vector<FlipAxis> parse_flips(const std::string& v) {
  std::vector<FlipAxis> out;
  for (const auto& item : split(v, ',')) {
    FlipAxis axis;
    if (item == "lr")
      axis = FlipAxis::lr;
    else if (item == "ud")
      axis = FlipAxis::ud;
    else
      throw UsageError("--flip: unknown axis '" + item + "' (expected lr, ud)");
    if (std::find(out.begin(), out.end(), axis) != out.end())
      throw UsageError("--flip: axis '" + item + "' given twice");
    out.push_back(axis);
  }
  return out;
}

/// "auto" or "layer=d1,d2,...;layer=...".
inline std::optional<std::map<std::string, std::vector<std::size_t>>> parse_deltas(const std::string& v) {
  if (v == "auto") return std::nullopt;
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& group : split(v, ';')) {
    const auto eq = group.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--delta: expected <layer>=<list>, got '" + group + "'");
    const std::string layer = group.substr(0, eq);
    std::vector<std::size_t> deltas;
    for (const auto& d : split(group.substr(eq + 1), ',')) {
      const auto value = parse_count(d, "--delta");
      if (value == 0) throw UsageError("--delta: offsets must be positive (layer '" + layer + "')");
      deltas.push_back(value);
    }
    if (!out.emplace(layer, std::move(deltas)).second)
      throw UsageError("--delta: layer '" + layer + "' given twice");
  }
  return out;
}

inline Network<Real> open_network(const Options& o) {
  Network<Real> net;
  if (!o.weights.empty()) {
    net = load_weights<Real>(o.weights);
    net.tap_points = default_taps(net);
  } else {
    if (o.net.rfind("tiny:", 0) != 0)
      throw UsageError("--net: expected tiny:<seed>, got '" + o.net + "'");
    net = builtin_tiny_net<Real>(parse_count(o.net.substr(5), "--net"));
  }
  if (o.taps != "auto") net.tap_points = split(o.taps, ',');
  try {
    validate(net);
  } catch (const ValidationError& e) {
    throw UsageError(std::string("--taps: ") + e.what());
  }
  return net;
}

inline ImageBuffer open_image(const std::string& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!std::filesystem::exists(path)) throw UsageError(flag + ": cannot open '" + path + "'");
  return load_png(path);
}

// Job files -----------------------------------------------------------------

inline void apply_job_file(Options& o, const std::string& path, const std::string& subcommand) {
  std::ifstream in(path);
  if (!in) throw UsageError("--job: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("--job: '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("--job: top level must be an object");
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() || base.empty()) ? p : (base / fp).string();
  };

  static const std::map<std::string, std::string> mode_of{
      {"synth", "texture"}, {"inpaint", "inpaint"}, {"transfer", "transfer"}};
  static const std::set<std::string> known{
      "mode", "net", "weights", "taps", "seed", "size", "iters", "cc", "gram_mode", "flip",
      "delta", "overlap_normalization", "optimizer", "trace", "out", "reference", "image",
      "mask", "content", "style", "border_width", "border_weight", "content_layer",
      "content_weight", "style_weight", "init", "lbfgs", "adam", "tolerances"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw UsageError("--job: unknown key '" + key + "'");

  try {
    if (j.contains("mode") && j["mode"].get<std::string>() != mode_of.at(subcommand))
      throw UsageError("--job: mode '" + j["mode"].get<std::string>() + "' does not match subcommand " +
                       subcommand);
    auto str = [&](const char* key, std::string& dst, bool path_like = false) {
      if (j.contains(key)) dst = path_like ? resolve(j[key].get<std::string>()) : j[key].get<std::string>();
    };
    str("net", o.net);
    str("weights", o.weights, true);
    str("gram_mode", o.gram_mode);
    str("optimizer", o.optimizer);
    str("trace", o.trace, true);
    str("out", o.out, true);
    str("reference", o.reference, true);
    str("image", o.image, true);
    str("mask", o.mask, true);
    str("content", o.content, true);
    str("style", o.style, true);
    str("content_layer", o.content_layer);
    str("init", o.init);
    if (j.contains("taps"))
      o.taps = j["taps"].is_array() ? [&] {
        std::string s;
        for (const auto& t : j["taps"]) s += (s.empty() ? "" : ",") + t.get<std::string>();
        return s;
      }()
                                    : j["taps"].get<std::string>();
    if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("size")) o.size = j["size"].get<std::size_t>();
    if (j.contains("iters")) o.iters = j["iters"].get<std::size_t>();
    if (j.contains("cc")) o.cc = j["cc"].is_boolean() ? (j["cc"].get<bool>() ? "on" : "off") : j["cc"].get<std::string>();
    if (j.contains("flip")) {
      if (j["flip"].is_array()) {
        o.flip.clear();
        for (const auto& a : j["flip"]) o.flip += (o.flip.empty() ? "" : ",") + a.get<std::string>();
      } else {
        o.flip = j["flip"].get<std::string>();
      }
    }
    if (j.contains("delta")) {
      if (j["delta"].is_object()) {
        std::string s;
        for (const auto& [layer, list] : j["delta"].items()) {
          s += (s.empty() ? "" : ";") + layer + "=";
          std::string ds;
          for (const auto& d : list) ds += (ds.empty() ? "" : ",") + std::to_string(d.get<std::size_t>());
          s += ds;
        }
        o.delta = s;
      } else {
        o.delta = j["delta"].get<std::string>();
      }
    }
    if (j.contains("overlap_normalization")) o.overlap_normalization = j["overlap_normalization"].get<bool>();
    if (j.contains("border_width")) o.border_width = j["border_width"].get<std::size_t>();
    if (j.contains("border_weight"))
      o.border_weight = j["border_weight"].is_number() ? std::to_string(j["border_weight"].get<double>())
                                                        : j["border_weight"].get<std::string>();
    if (j.contains("content_weight")) o.content_weight = j["content_weight"].get<double>();
    if (j.contains("style_weight")) o.style_weight = j["style_weight"].get<double>();

    auto& cfg = o.optimizer_config;
    if (j.contains("lbfgs")) {
      const auto& l = j["lbfgs"];
      cfg.history = l.value("history", cfg.history);
      cfg.sufficient_decrease = l.value("sufficient_decrease", cfg.sufficient_decrease);
      cfg.curvature = l.value("curvature", cfg.curvature);
      cfg.max_line_search_steps = l.value("max_line_search_steps", cfg.max_line_search_steps);
    }
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      cfg.step_size = a.value("step_size", cfg.step_size);
      cfg.beta1 = a.value("beta1", cfg.beta1);
      cfg.beta2 = a.value("beta2", cfg.beta2);
      cfg.epsilon = a.value("epsilon", cfg.epsilon);
    }
    if (j.contains("tolerances")) {
      const auto& t = j["tolerances"];
      cfg.loss_tolerance = t.value("loss", cfg.loss_tolerance);
      cfg.gradient_tolerance = t.value("gradient", cfg.gradient_tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("--job: ") + e.what());
  }
}

// Job assembly --------------------------------------------------------------

inline ObjectiveOptions objective_options(const Options& o) {
  ObjectiveOptions opt;
  opt.cc = parse_on_off(o.cc, "--cc");
  if (o.gram_mode == "full")
    opt.gram_mode = GramMode::full;
  else if (o.gram_mode == "diagonal")
    opt.gram_mode = GramMode::diagonal;
  else
    throw UsageError("--gram-mode: expected full|diagonal, got '" + o.gram_mode + "'");
  opt.flips = parse_flips(o.flip);
  opt.deltas = parse_deltas(o.delta);
  opt.shift_normalization =
      o.overlap_normalization ? ShiftNormalization::overlap : ShiftNormalization::full_map;
  opt.style_weight = o.style_weight;
  if (!o.content_layer.empty()) opt.content_layer = o.content_layer;
  opt.content_weight = o.content_weight;
  opt.border_width = o.border_width;
  if (o.border_weight != "auto") {
    try {
      std::size_t pos = 0;
      opt.border_weight = std::stod(o.border_weight, &pos);
      if (pos != o.border_weight.size()) throw std::invalid_argument(o.border_weight);
    } catch (const std::exception&) {
      throw UsageError("--border-weight: expected auto or a number, got '" + o.border_weight + "'");
    }
  }
  return opt;
}

inline OptimizerConfig optimizer_config(const Options& o) {
  OptimizerConfig cfg = o.optimizer_config;
  if (o.optimizer == "lbfgs")
    cfg.algorithm = Algorithm::lbfgs;
  else if (o.optimizer == "adam")
    cfg.algorithm = Algorithm::adam;
  else
    throw UsageError("--optimizer: expected lbfgs|adam, got '" + o.optimizer + "'");
  cfg.max_iterations = o.iters;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--job: ") + e.what());
  }
  return cfg;
}

inline void print_progress(std::ostream& err, const IterationRecord& r, const LossReport& report) {
  if (r.iteration % 10 != 0) return;
  err << "iter " << std::setw(5) << r.iteration << "  loss " << std::setprecision(6)
      << std::scientific << report.total;
  for (auto kind : {TermKind::style, TermKind::cc, TermKind::flip_lr, TermKind::flip_ud,
                    TermKind::content, TermKind::border}) {
    bool present = false;
    for (const auto& e : report.entries) present |= e.kind == kind;
    if (present) err << "  " << to_string(kind) << ' ' << report.family(kind);
  }
  err << std::defaultfloat << '\n';
}

inline int run_synthesis(const std::string& subcommand, Options o, std::ostream& out,
                         std::ostream& err) {
  SynthesisJob job;
  Network<Real> net;
  try {
    if (!o.job.empty()) apply_job_file(o, o.job, subcommand);
    if (o.out.empty()) throw UsageError("--out is required");
    net = open_network(o);
    job.objective = objective_options(o);
    job.optimizer = optimizer_config(o);
    job.seed = o.seed;
    if (o.init == "auto")
      job.init = InitMode::automatic;
    else if (o.init == "noise")
      job.init = InitMode::noise;
    else if (o.init == "content")
      job.init = InitMode::content;
    else
      throw UsageError("--init: expected auto|noise|content, got '" + o.init + "'");

    if (subcommand == "synth") {
      job.mode = JobMode::texture;
      job.reference = open_image(o.reference, "--reference");
      job.width = o.size ? o.size : job.reference.width;
      job.height = o.size ? o.size : job.reference.height;
    } else if (subcommand == "inpaint") {
      job.mode = JobMode::inpaint;
      job.image = open_image(o.image, "--image");
      if (o.mask.empty()) throw UsageError("--mask is required");
      if (!std::filesystem::exists(o.mask)) throw UsageError("--mask: cannot open '" + o.mask + "'");
      job.mask = load_mask(o.mask);
      job.reference = open_image(o.reference, "--reference");
    } else {
      job.mode = JobMode::transfer;
      job.image = open_image(o.content, "--content");
      job.reference = open_image(o.style, "--style");
      if (o.size) job.image = resize(job.image, o.size, o.size);
    }
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    auto result = run_job(net, job, [&](const IterationRecord& r, const LossReport& rep) {
      print_progress(err, r, rep);
    });
    save_png(result.image, o.out);
    if (!o.trace.empty()) {
      std::ofstream trace(o.trace);
      if (!trace) throw IoError("cannot write trace '" + o.trace + "'");
      write_trace(trace, result.trace);
    }
    out << "wrote " << o.out << "  iterations " << result.trace.steps() << "  loss "
        << result.trace.initial_loss() << " -> " << result.final_report.total << "  ("
        << to_string(result.trace.termination) << ", " << std::setprecision(3)
        << result.seconds_per_iteration() * 1e3 << " ms/iter)\n";
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run_gram(Options o, std::ostream& out, std::ostream& err) {
  try {
    auto net = open_network(o);
    auto img = open_image(o.image, "--image");
    if (o.size) img = resize(img, o.size, o.size);
    const auto spec = make_objective(net, objective_options(o), false, {{img.height, img.width}});
    const auto features = forward(net, preprocess<Real>(img, net.preprocessing), spec.style_layers());
    const auto grams = compute_grams(spec, features);
    if (o.out.empty()) {
      write_gramset(out, grams);
    } else {
      std::ofstream file(o.out);
      if (!file) throw IoError("cannot write '" + o.out + "'");
      write_gramset(file, grams);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return dynamic_cast<const NumericalError*>(&e) ? kExitRuntime : kExitConfig;
  }
  return kExitOk;
}

inline int run_schedule(Options o, std::ostream& out, std::ostream& err) {
  try {
    if (o.size == 0) throw UsageError("--size is required");
    const auto net = open_network(o);
    const auto schedule = build_delta_schedule(net, o.size, o.size);
    for (const auto& [layer, deltas] : schedule.layers) out << layer << ' ' << format_deltas(deltas) << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

inline void add_network_flags(CLI::App* app, Options& o) {
  app->add_option("--net", o.net, "Builtin network, tiny:<seed>")->capture_default_str();
  app->add_option("--weights", o.weights, "TSW1 weight file (overrides --net)");
  app->add_option("--taps", o.taps, "Comma-separated tap layers, or auto")->capture_default_str();
}

inline void add_objective_flags(CLI::App* app, Options& o) {
  app->add_option("--cc", o.cc, "Cross-correlation (shifted Gram) terms: on|off")->capture_default_str();
  app->add_option("--gram-mode", o.gram_mode, "Gram matrices: full|diagonal")->capture_default_str();
  app->add_option("--flip", o.flip, "Flip Gram terms, comma list of lr,ud (default none)");
  app->add_option("--delta", o.delta, "Offsets: auto or <layer>=<d1,d2,..>;<layer>=...")
      ->capture_default_str();
  app->add_flag("--overlap-normalization", o.overlap_normalization,
                "Normalize shifted Grams by the overlap size instead of the full map");
}

inline void add_run_flags(CLI::App* app, Options& o) {
  add_network_flags(app, o);
  add_objective_flags(app, o);
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app->add_option("--iters", o.iters, "Maximum optimizer iterations")->capture_default_str();
  app->add_option("--optimizer", o.optimizer, "lbfgs|adam")->capture_default_str();
  app->add_option("--trace", o.trace, "Write the per-iteration trace to this file");
  app->add_option("--out", o.out, "Output PNG");
  app->add_option("--job", o.job, "JSON job file; its values override flags");
}

}  // namespace cli

/// Runs one CLI invocation; argv[0] is the program name.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Texture synthesis, inpainting and style transfer by matching (shifted) Gram statistics"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Synthesize a texture from a reference image");
  add_run_flags(synth, o);
  synth->add_option("--reference", o.reference, "Reference texture PNG");
  synth->add_option("--size", o.size, "Output is size x size (0: reference size)")->capture_default_str();

  auto* inp = app.add_subcommand("inpaint", "Fill the masked region of an image");
  add_run_flags(inp, o);
  inp->add_option("--image", o.image, "Image to repair (PNG)");
  inp->add_option("--mask", o.mask, "Mask PNG: 0 keep, 255 missing");
  inp->add_option("--reference", o.reference, "Reference texture patch PNG");
  inp->add_option("--border-width", o.border_width, "Width in pixels of the penalized band around the hole")
      ->capture_default_str();
  inp->add_option("--border-weight", o.border_weight, "Border penalty weight: auto or a number")
      ->capture_default_str();

  auto* tr = app.add_subcommand("transfer", "Render a content image in the style of another");
  add_run_flags(tr, o);
  tr->add_option("--content", o.content, "Content image PNG");
  tr->add_option("--style", o.style, "Style image PNG");
  tr->add_option("--content-layer", o.content_layer, "Layer for the content term (default: first conv of the deepest tapped block)");
  tr->add_option("--content-weight", o.content_weight, "Content term weight")->capture_default_str();
  tr->add_option("--style-weight", o.style_weight, "Weight of all Gram terms")->capture_default_str();
  tr->add_option("--init", o.init, "Starting canvas: auto|content|noise")->capture_default_str();
  tr->add_option("--size", o.size, "Resize the content image to size x size (0 keeps it)")
      ->capture_default_str();

  auto* gram_cmd = app.add_subcommand("gram", "Dump the Gram statistics of an image as text");
  add_network_flags(gram_cmd, o);
  add_objective_flags(gram_cmd, o);
  gram_cmd->add_option("--image", o.image, "Input PNG");
  gram_cmd->add_option("--size", o.size, "Resize to size x size first (0 keeps it)")->capture_default_str();
  gram_cmd->add_option("--out", o.out, "Output text file (default stdout)");

  auto* sched = app.add_subcommand("schedule", "Print the recommended offsets per tap layer");
  add_network_flags(sched, o);
  sched->add_option("--size", o.size, "Square image size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  if (synth->parsed()) return run_synthesis("synth", o, out, err);
  if (inp->parsed()) return run_synthesis("inpaint", o, out, err);
  if (tr->parsed()) return run_synthesis("transfer", o, out, err);
  if (gram_cmd->parsed()) return run_gram(o, out, err);
  return run_schedule(o, out, err);
}

}  // namespace texsyn
