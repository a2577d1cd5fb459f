#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "nmrdeco/errors.hpp"

namespace nmrdeco {

// y = amplitude * cos(2 pi x / period + phase) + offset
struct SinusoidFit {
  double amplitude = 0.0;
  double period = 0.0;
  double phase = 0.0;  // radians, wrapped to (-pi, pi]
  double offset = 0.0;
  double rms_residual = 0.0;
  int iterations = 0;

  double operator()(double x) const {
    return amplitude * std::cos(2 * std::numbers::pi * x / period + phase) + offset;
  }
};

struct FitOptions {
  double min_period_factor = 0.5;  // x data span
  double max_period_factor = 4.0;
  double grid_ratio = 1.01;        // successive coarse candidates differ by 1%
  double tolerance = 1e-8;         // relative parameter update at convergence
  int max_iterations = 500;
};

namespace detail {

inline double wrap_phase(double p) {
  p = std::remainder(p, 2 * std::numbers::pi);
  if (p <= -std::numbers::pi) p += 2 * std::numbers::pi;
  return p;
}

struct LinearFit {
  double a, b, c, sse;  // y ~ a cos(wx) + b sin(wx) + c
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y, double omega) {
  const auto m = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(m, 3);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double u = omega * x[static_cast<std::size_t>(i)];
    design(i, 0) = std::cos(u);
    design(i, 1) = std::sin(u);
    design(i, 2) = 1.0;
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d p = design.colPivHouseholderQr().solve(rhs);
  return {p(0), p(1), p(2), (design * p - rhs).squaredNorm()};
}

}  // namespace detail

// Least-squares sinusoid: coarse period grid with the linear parameters solved
// per candidate, then damped Gauss-Newton on all four parameters.
inline SinusoidFit fit_sinusoid(std::span<const double> x, std::span<const double> y, const FitOptions& opt = {}) {
  if (x.size() != y.size()) throw InputError("fit_sinusoid: x and y differ in length");
  if (x.size() < 6) throw InputError("fit_sinusoid needs at least 6 samples, got " + std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("fit_sinusoid: non-finite sample");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double span = *xmax - *xmin;
  if (!(span > 0)) throw InputError("fit_sinusoid: samples do not span a range");
  const double yscale = std::max(std::abs(*ymin), std::abs(*ymax));
  if (*ymax - *ymin <= 1e-12 * yscale || yscale == 0.0)
    throw InputError("fit_sinusoid: constant data has no period");

  // Work in centered coordinates for conditioning; shift the phase back at the end.
  double x0 = 0;
  for (double v : x) x0 += v;
  x0 /= static_cast<double>(x.size());
  std::vector<double> xc(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xc[i] = x[i] - x0;

  double best_period = 0, best_sse = std::numeric_limits<double>::infinity();
  detail::LinearFit best{};
  for (double period = opt.min_period_factor * span; period <= opt.max_period_factor * span * (1 + 1e-12);
       period *= opt.grid_ratio) {
    const auto lf = detail::linear_fit(xc, y, 2 * std::numbers::pi / period);
    if (lf.sse < best_sse) {
      best_sse = lf.sse;
      best_period = period;
      best = lf;
    }
  }

  // a cos u + b sin u = A cos(u + phi) with a = A cos phi, b = -A sin phi
  Eigen::Vector4d p(std::hypot(best.a, best.b), best_period, std::atan2(-best.b, best.a), best.c);
  const std::size_t m = x.size();

  auto residuals = [&](const Eigen::Vector4d& q, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i)
      r(static_cast<Eigen::Index>(i)) = y[i] - (q(0) * std::cos(2 * std::numbers::pi * xc[i] / q(1) + q(2)) + q(3));
    return r.squaredNorm();
  };

  Eigen::VectorXd r;
  double sse = residuals(p, r);
  double lambda = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), 4);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double w = 2 * std::numbers::pi / p(1);
      const double u = w * xc[i] + p(2);
      jac(row, 0) = std::cos(u);
      jac(row, 1) = p(0) * std::sin(u) * w * xc[i] / p(1);
      jac(row, 2) = -p(0) * std::sin(u);
      jac(row, 3) = 1.0;
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * r;
    bool accepted = false;
    Eigen::Vector4d step = Eigen::Vector4d::Zero();
    while (lambda < 1e16) {
      Eigen::Matrix4d lhs = jtj;
      for (int k = 0; k < 4; ++k) lhs(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      step = lhs.ldlt().solve(jtr);
      Eigen::Vector4d trial = p + step;
      if (!(trial(1) > 0) || !step.allFinite()) {
        lambda *= 10;
        continue;
      }
      Eigen::VectorXd rt;
      const double sse_t = residuals(trial, rt);
      if (sse_t <= sse) {
        p = trial;
        r = std::move(rt);
        sse = sse_t;
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10;
    }
    if (!accepted) break;  // no descent direction left: at the floating-point floor
    const double amp = std::abs(p(0));
    const bool small = std::abs(step(0)) <= opt.tolerance * amp && std::abs(step(1)) <= opt.tolerance * p(1) &&
                       std::abs(step(2)) <= opt.tolerance && std::abs(step(3)) <= opt.tolerance * std::max(amp, std::abs(p(3)));
    if (small) {
      ++it;
      break;
    }
  }

  SinusoidFit fit;
  fit.amplitude = p(0);
  fit.period = p(1);
  fit.phase = p(2) - 2 * std::numbers::pi * x0 / p(1);
  fit.offset = p(3);
  if (fit.amplitude < 0) {
    fit.amplitude = -fit.amplitude;
    fit.phase += std::numbers::pi;
  }
  fit.phase = detail::wrap_phase(fit.phase);
  fit.rms_residual = std::sqrt(sse / static_cast<double>(m));
  fit.iterations = it;
  if (span < 0.5 * fit.period)
    throw InputError("fit_sinusoid: samples span less than half of the fitted period");
  return fit;
}

}  // namespace nmrdeco
