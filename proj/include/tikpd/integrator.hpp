#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tikpd {

using Vec = Eigen::VectorXd;

/// Right-hand side of an autonomously evaluated ODE: dydt = f(t, y).
using VectorField = std::function<void(double t, const Vec& y, Vec& dydt)>;

struct IntegrationConfig {
  double t_start = 0.0;
  double t_end = 1.0;
  double abs_tol = 1e-6;
  double rel_tol = 1e-3;
  double initial_step = 0.0;  // <= 0 picks (t_end - t_start)/100
  std::size_t max_steps = 1000000;
  /// Interpolation times, strictly inside (t_start, t_end), ascending,
  /// no duplicates. Both endpoints are always emitted.
  std::vector<double> sample_times;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
};

/// Step budget exhausted; `partial` holds everything sampled so far.
class StepLimitError : public std::runtime_error {
 public:
  StepLimitError(const std::string& what, Trajectory partial_trajectory)
      : std::runtime_error(what), partial(std::move(partial_trajectory)) {}

  Trajectory partial;
};

/// Non-finite state produced; `last_valid_time` is the start of the failed
/// step and `partial` holds everything sampled before it.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double t_last,
                  Trajectory partial_trajectory)
      : std::runtime_error(what),
        last_valid_time(t_last),
        partial(std::move(partial_trajectory)) {}

  double last_valid_time;
  Trajectory partial;
};

namespace detail {

inline void validate_config(const IntegrationConfig& cfg) {
  if (!(cfg.t_end >= cfg.t_start))
    throw std::invalid_argument("integrate: t_end must be >= t_start");
  if (!(cfg.abs_tol > 0.0) || !(cfg.rel_tol > 0.0))
    throw std::invalid_argument("integrate: tolerances must be positive");
  if (cfg.max_steps == 0)
    throw std::invalid_argument("integrate: max_steps must be positive");
  double prev = cfg.t_start;
  for (double s : cfg.sample_times) {
    if (!(s > cfg.t_start) || !(s < cfg.t_end))
      throw std::invalid_argument(
          "integrate: sample times must lie strictly inside (t_start, t_end)");
    if (!(s > prev))
      throw std::invalid_argument(
          "integrate: sample times must be strictly ascending");
    prev = s;
  }
}

/// Cubic Hermite interpolant on one accepted step; exact at theta = 0, 1.
inline Vec hermite_interp(const Vec& y0, const Vec& f0, const Vec& y1,
                          const Vec& f1, double h, double theta) {
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  return (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + ((t3 - 2.0 * t2 + theta) * h) * f0 +
         (-2.0 * t3 + 3.0 * t2) * y1 + ((t3 - t2) * h) * f1;
}

}  // namespace detail

/// Adaptive embedded Runge-Kutta 3(2) pair (Bogacki-Shampine coefficients,
/// FSAL) with dense output at the configured sample times.
///
/// Error control: err = max_i |e_i| / (abs_tol + rel_tol * max(|y_i|,
/// |y_new_i|)), accept when err <= 1; step factor 0.9 * err^(-1/3) clamped
/// to [0.2, 5.0]. Identical inputs produce bit-identical trajectories.
inline Trajectory integrate(const VectorField& rhs, const Vec& y0,
                            const IntegrationConfig& cfg) {
  detail::validate_config(cfg);
  if (!y0.allFinite())
    throw std::invalid_argument("integrate: initial state has non-finite entries");

  Trajectory traj;
  traj.times.push_back(cfg.t_start);
  traj.states.push_back(y0);
  if (cfg.t_end == cfg.t_start) return traj;

  const double span = cfg.t_end - cfg.t_start;
  double t = cfg.t_start;
  double h = cfg.initial_step > 0.0 ? cfg.initial_step : span / 100.0;
  Vec y = y0;
  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size());
  Vec ytmp(y.size()), ynew(y.size()), err(y.size());
  rhs(t, y, k1);
  std::size_t next_sample = 0;

  for (;;) {
    if (traj.accepted_steps + traj.rejected_steps >= cfg.max_steps)
      throw StepLimitError("integrate: step limit of " +
                               std::to_string(cfg.max_steps) +
                               " exceeded at t = " + std::to_string(t),
                           std::move(traj));

    const bool final_step = h >= cfg.t_end - t;
    const double hs = final_step ? cfg.t_end - t : h;
    const double tnew = final_step ? cfg.t_end : t + hs;

    ytmp = y + (0.5 * hs) * k1;
    rhs(t + 0.5 * hs, ytmp, k2);
    ytmp = y + (0.75 * hs) * k2;
    rhs(t + 0.75 * hs, ytmp, k3);
    ynew = y + hs * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3);
    rhs(tnew, ynew, k4);
    err = hs * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 -
                (1.0 / 8.0) * k4);

    if (!ynew.allFinite() || !err.allFinite())
      throw DivergenceError(
          "integrate: non-finite state after t = " + std::to_string(t), t,
          std::move(traj));

    double err_norm = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double scale =
          cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      err_norm = std::max(err_norm, std::abs(err(i)) / scale);
    }

    if (err_norm <= 1.0) {
      while (next_sample < cfg.sample_times.size() &&
             cfg.sample_times[next_sample] <= tnew) {
        const double s = cfg.sample_times[next_sample];
        traj.times.push_back(s);
        if (s == tnew)
          traj.states.push_back(ynew);
        else
          traj.states.push_back(
              detail::hermite_interp(y, k1, ynew, k4, hs, (s - t) / hs));
        ++next_sample;
      }
      ++traj.accepted_steps;
      t = tnew;
      y.swap(ynew);
      k1.swap(k4);  // FSAL
      if (t >= cfg.t_end) {
        traj.times.push_back(cfg.t_end);
        traj.states.push_back(y);
        return traj;
      }
    } else {
      ++traj.rejected_steps;
    }

    const double factor =
        err_norm > 0.0 ? 0.9 * std::pow(err_norm, -1.0 / 3.0) : 5.0;
    h = hs * std::clamp(factor, 0.2, 5.0);
  }
}

/// Classical fixed-step order-4 Runge-Kutta; order-verification oracle for
/// the adaptive pair.
inline Vec integrate_fixed_rk4(const VectorField& rhs, const Vec& y0,
                               double t_start, double t_end,
                               std::size_t step_count) {
  if (step_count < 1)
    throw std::invalid_argument("integrate_fixed_rk4: step_count must be >= 1");
  if (!y0.allFinite())
    throw std::invalid_argument("integrate_fixed_rk4: non-finite initial state");

  const double h = (t_end - t_start) / static_cast<double>(step_count);
  Vec y = y0;
  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), ytmp(y.size());
  Vec ynext(y.size());
  for (std::size_t i = 0; i < step_count; ++i) {
    const double t = t_start + static_cast<double>(i) * h;
    rhs(t, y, k1);
    ytmp = y + (0.5 * h) * k1;
    rhs(t + 0.5 * h, ytmp, k2);
    ytmp = y + (0.5 * h) * k2;
    rhs(t + 0.5 * h, ytmp, k3);
    ytmp = y + h * k3;
    rhs(t + h, ytmp, k4);
    ynext = y + (h * (k1 + 2.0 * k2 + 2.0 * k3 + k4)) / 6.0;
    if (!ynext.allFinite()) {
      Trajectory partial;
      partial.times.push_back(t);
      partial.states.push_back(y);
      partial.accepted_steps = i;
      throw DivergenceError(
          "integrate_fixed_rk4: non-finite state after t = " + std::to_string(t),
          t, std::move(partial));
    }
    y.swap(ynext);
  }
  return y;
}

}  // namespace tikpd
