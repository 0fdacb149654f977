#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "texsyn/error.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

enum class Algorithm { lbfgs, adam };

enum class Termination {
  max_iterations,
  loss_tolerance,
  gradient_tolerance,
  line_search_failed,
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::max_iterations: return "max_iterations";
    case Termination::loss_tolerance: return "loss_tolerance";
    case Termination::gradient_tolerance: return "gradient_tolerance";
    case Termination::line_search_failed: return "line_search_failed";
  }
  return "?";
}

struct IterationRecord {
  std::size_t iteration = 0;  // 0 is the starting point
  double loss = 0.0;
  double gradient_norm = 0.0;  // Euclidean, after frozen-mask projection
  double step = 0.0;
  std::size_t evaluations = 0;  // cumulative objective calls
  double seconds = 0.0;         // wall clock spent in this iteration
};

struct OptimizeTrace {
  std::vector<IterationRecord> iterations;
  Termination termination = Termination::max_iterations;

  double initial_loss() const { return iterations.front().loss; }
  double final_loss() const { return iterations.back().loss; }
  std::size_t steps() const { return iterations.empty() ? 0 : iterations.size() - 1; }
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::lbfgs;
  std::size_t max_iterations = 1000;

  // L-BFGS
  std::size_t history = 20;
  double sufficient_decrease = 1e-4;  // c1
  double curvature = 0.9;             // c2
  std::size_t max_line_search_steps = 20;

  // Adam
  double step_size = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Convergence
  double loss_tolerance = 1e-10;      // relative change between accepted iterates (L-BFGS)
  double gradient_tolerance = 1e-10;  // max-abs gradient entry

  /// Nonzero entries mark elements of x that must not move.
  std::optional<std::vector<std::uint8_t>> frozen_mask;

  /// Called after the starting point and after every accepted iteration.
  std::function<void(const IterationRecord&)> on_iteration;

  void validate() const {
    if (history < 1) throw ConfigError("optimizer history must be >= 1");
    if (!(loss_tolerance > 0.0) || !(gradient_tolerance > 0.0))
      throw ConfigError("optimizer tolerances must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw ConfigError("Adam decay rates must lie in (0, 1)");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < curvature && curvature < 1.0))
      throw ConfigError("line search needs 0 < c1 < c2 < 1");
    if (!(step_size > 0.0) || !(epsilon > 0.0))
      throw ConfigError("Adam step size and epsilon must be > 0");
    if (max_line_search_steps < 1) throw ConfigError("line search needs at least one step");
  }
};

/// Loss at x; writes dLoss/dx into grad (pre-sized to x's shape).
template <typename T>
using Objective = std::function<double(const Tensor<T>& x, Tensor<T>& grad)>;

template <typename T>
struct OptimizeResult {
  Tensor<T> x;
  OptimizeTrace trace;
};

inline void write_trace(std::ostream& os, const OptimizeTrace& trace) {
  const auto precision = os.precision(17);
  os << "# iteration loss gradient_norm step evaluations seconds\n";
  for (const auto& r : trace.iterations)
    os << r.iteration << ' ' << r.loss << ' ' << r.gradient_norm << ' ' << r.step << ' '
       << r.evaluations << ' ' << std::setprecision(6) << r.seconds << std::setprecision(17) << '\n';
  os << "# termination " << to_string(trace.termination) << '\n';
  os.precision(precision);
}

namespace detail {

using Vec = std::vector<double>;

inline double vdot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// Wraps the user objective: converts between the double working vector and
/// Tensor<T>, applies the frozen-mask projection, counts calls and rejects
/// non-finite values.
template <typename T>
class Evaluator {
 public:
  Evaluator(const Objective<T>& f, const Tensor<T>& x0, const OptimizerConfig& cfg)
      : f_(f), x_(x0.shape()), g_(x0.shape()), frozen_(cfg.frozen_mask) {
    if (frozen_ && frozen_->size() != x0.size())
      throw ConfigError("frozen mask has " + std::to_string(frozen_->size()) +
                        " entries, x has " + std::to_string(x0.size()));
  }

  double operator()(const Vec& x, Vec& grad, std::size_t iteration) {
    for (std::size_t i = 0; i < x.size(); ++i) x_[i] = static_cast<T>(x[i]);
    g_.fill(T(0));
    const double loss = f_(x_, g_);
    ++calls_;
    if (!std::isfinite(loss)) throw NumericalError("objective returned a non-finite loss", iteration);
    grad.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = static_cast<double>(g_[i]);
      if (!std::isfinite(g)) throw NumericalError("objective returned a non-finite gradient", iteration);
      grad[i] = (frozen_ && (*frozen_)[i]) ? 0.0 : g;
    }
    return loss;
  }

  std::size_t calls() const { return calls_; }

 private:
  const Objective<T>& f_;
  Tensor<T> x_, g_;
  const std::optional<std::vector<std::uint8_t>>& frozen_;
  std::size_t calls_ = 0;
};

struct LinePoint {
  double alpha = 0.0;
  double loss = 0.0;
  double slope = 0.0;  // directional derivative
  Vec x, grad;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db); falls back to
// bisection when the interpolant is degenerate.
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return 0.5 * (a + b);
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return 0.5 * (a + b);
  return b - (b - a) * (db + d2 - d1) / denom;
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic
/// interpolation). Returns the accepted point, or nullopt if no point met
/// the sufficient-decrease condition within the evaluation budget.
template <typename T>
std::optional<LinePoint> strong_wolfe(Evaluator<T>& eval, const Vec& x, double f0, double slope0,
                                      const Vec& dir, double alpha0, const OptimizerConfig& cfg,
                                      std::size_t iteration) {
  const double c1 = cfg.sufficient_decrease, c2 = cfg.curvature;
  std::size_t budget = cfg.max_line_search_steps;

  auto probe = [&](double alpha) {
    LinePoint p;
    p.alpha = alpha;
    p.x.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) p.x[i] = x[i] + alpha * dir[i];
    p.loss = eval(p.x, p.grad, iteration);
    p.slope = vdot(p.grad, dir);
    --budget;
    return p;
  };
  auto armijo = [&](const LinePoint& p) { return p.loss <= f0 + c1 * p.alpha * slope0; };
  auto curvature_ok = [&](const LinePoint& p) { return std::abs(p.slope) <= -c2 * slope0; };

  LinePoint prev;
  prev.alpha = 0.0;
  prev.loss = f0;
  prev.slope = slope0;
  std::optional<LinePoint> best_armijo;

  auto zoom = [&](LinePoint lo, LinePoint hi) -> std::optional<LinePoint> {
    while (budget > 0) {
      const double a = lo.alpha, b = hi.alpha;
      double alpha = cubic_minimizer(a, lo.loss, lo.slope, b, hi.loss, hi.slope);
      const double lo_edge = std::min(a, b), hi_edge = std::max(a, b);
      const double margin = 0.1 * (hi_edge - lo_edge);
      if (!(alpha > lo_edge + margin && alpha < hi_edge - margin)) alpha = 0.5 * (a + b);
      if (hi_edge - lo_edge <= 1e-14 * std::max(1.0, hi_edge)) break;
      LinePoint p = probe(alpha);
      if (!armijo(p) || p.loss >= lo.loss) {
        hi = std::move(p);
      } else {
        if (curvature_ok(p)) return p;
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(p);
      }
    }
    // Budget exhausted: the low end satisfies sufficient decrease if it moved.
    if (lo.alpha > 0.0) return lo;
    return std::nullopt;
  };

  double alpha = alpha0;
  for (std::size_t i = 0; budget > 0; ++i) {
    LinePoint p = probe(alpha);
    if (!armijo(p) || (i > 0 && p.loss >= prev.loss)) return zoom(std::move(prev), std::move(p));
    if (curvature_ok(p)) return p;
    if (p.slope >= 0.0) return zoom(std::move(p), std::move(prev));
    best_armijo = p;
    prev = std::move(p);
    alpha *= 4.0;
  }
  return best_armijo;
}

}  // namespace detail

template <typename T>
OptimizeResult<T> minimize_lbfgs(const Objective<T>& objective, const Tensor<T>& x0,
                                 const OptimizerConfig& cfg) {
  using detail::Vec;
  using clock = std::chrono::steady_clock;
  detail::Evaluator<T> eval(objective, x0, cfg);
  OptimizeTrace trace;

  Vec x(x0.size()), g;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(x0[i]);
  auto t0 = clock::now();
  double f = eval(x, g, 0);
  auto record = [&](std::size_t it, double step, clock::time_point start) {
    IterationRecord r{it, f, std::sqrt(detail::vdot(g, g)), step, eval.calls(),
                      std::chrono::duration<double>(clock::now() - start).count()};
    trace.iterations.push_back(r);
    if (cfg.on_iteration) cfg.on_iteration(r);
  };
  record(0, 0.0, t0);

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vec dir(x.size()), alpha_buf;
  trace.termination = Termination::max_iterations;

  auto converged_gradient = [&] { return detail::max_abs(g) <= cfg.gradient_tolerance; };
  if (converged_gradient()) {
    trace.termination = Termination::gradient_tolerance;
    return {x0, trace};
  }

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const auto start = clock::now();
    std::optional<detail::LinePoint> step;
    for (int attempt = 0; attempt < 2 && !step; ++attempt) {
      // Two-loop recursion; history is dropped before the steepest-descent retry.
      if (attempt == 1) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
      }
      for (std::size_t i = 0; i < x.size(); ++i) dir[i] = -g[i];
      const std::size_t k = s_hist.size();
      alpha_buf.assign(k, 0.0);
      for (std::size_t j = k; j-- > 0;) {
        alpha_buf[j] = rho_hist[j] * detail::vdot(s_hist[j], dir);
        for (std::size_t i = 0; i < x.size(); ++i) dir[i] -= alpha_buf[j] * y_hist[j][i];
      }
      if (k > 0) {
        const double gamma = detail::vdot(s_hist.back(), y_hist.back()) /
                             detail::vdot(y_hist.back(), y_hist.back());
        for (auto& v : dir) v *= gamma;
      }
      for (std::size_t j = 0; j < k; ++j) {
        const double beta = rho_hist[j] * detail::vdot(y_hist[j], dir);
        for (std::size_t i = 0; i < x.size(); ++i) dir[i] += (alpha_buf[j] - beta) * s_hist[j][i];
      }
      double slope = detail::vdot(g, dir);
      if (!(slope < 0.0)) {
        // Not a descent direction; retry from steepest descent.
        if (attempt == 0) continue;
        break;
      }
      const double alpha0 = k == 0 ? 1.0 / std::sqrt(detail::vdot(dir, dir)) : 1.0;
      step = detail::strong_wolfe(eval, x, f, slope, dir, alpha0, cfg, it);
    }
    if (!step) {
      trace.termination = Termination::line_search_failed;
      break;
    }

    Vec s(x.size()), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      s[i] = step->x[i] - x[i];
      y[i] = step->grad[i] - g[i];
    }
    const double sy = detail::vdot(s, y);
    if (sy > 1e-12 * std::sqrt(detail::vdot(s, s) * detail::vdot(y, y))) {
      if (s_hist.size() == cfg.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }

    const double f_prev = f;
    x = std::move(step->x);
    g = std::move(step->grad);
    f = step->loss;
    record(it, step->alpha, start);

    if (converged_gradient()) {
      trace.termination = Termination::gradient_tolerance;
      break;
    }
    const double scale = std::max({std::abs(f_prev), std::abs(f), 1e-300});
    if (std::abs(f_prev - f) <= cfg.loss_tolerance * scale) {
      trace.termination = Termination::loss_tolerance;
      break;
    }
  }

  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i]);
  if (cfg.frozen_mask)
    for (std::size_t i = 0; i < x.size(); ++i)
      if ((*cfg.frozen_mask)[i]) out[i] = x0[i];
  return {std::move(out), std::move(trace)};
}

template <typename T>
OptimizeResult<T> minimize_adam(const Objective<T>& objective, const Tensor<T>& x0,
                                const OptimizerConfig& cfg) {
  using detail::Vec;
  using clock = std::chrono::steady_clock;
  detail::Evaluator<T> eval(objective, x0, cfg);
  OptimizeTrace trace;
  Vec x(x0.size()), g, m(x0.size(), 0.0), v(x0.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(x0[i]);

  auto t0 = clock::now();
  double f = eval(x, g, 0);
  auto record = [&](std::size_t it, double step, clock::time_point start) {
    IterationRecord r{it, f, std::sqrt(detail::vdot(g, g)), step, eval.calls(),
                      std::chrono::duration<double>(clock::now() - start).count()};
    trace.iterations.push_back(r);
    if (cfg.on_iteration) cfg.on_iteration(r);
  };
  record(0, 0.0, t0);
  trace.termination = Termination::max_iterations;
  if (detail::max_abs(g) <= cfg.gradient_tolerance) {
    trace.termination = Termination::gradient_tolerance;
    return {x0, trace};
  }

  double b1t = 1.0, b2t = 1.0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const auto start = clock::now();
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      x[i] -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    f = eval(x, g, it);
    record(it, cfg.step_size, start);
    if (detail::max_abs(g) <= cfg.gradient_tolerance) {
      trace.termination = Termination::gradient_tolerance;
      break;
    }
  }

  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i]);
  if (cfg.frozen_mask)
    for (std::size_t i = 0; i < x.size(); ++i)
      if ((*cfg.frozen_mask)[i]) out[i] = x0[i];
  return {std::move(out), std::move(trace)};
}

/// Minimizes `objective` from x0. Frozen entries keep their starting value
/// bit for bit; a failed line search ends the run at the last accepted
/// iterate.
template <typename T>
OptimizeResult<T> minimize(const Objective<T>& objective, const Tensor<T>& x0,
                           const OptimizerConfig& cfg) {
  cfg.validate();
  return cfg.algorithm == Algorithm::lbfgs ? minimize_lbfgs(objective, x0, cfg)
                                           : minimize_adam(objective, x0, cfg);
}

}  // namespace texsyn
