#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "tikpd/dynamics.hpp"
#include "tikpd/integrator.hpp"
#include "tikpd/problem.hpp"

namespace tikpd {

/// Per-sample convergence metrics along a trajectory. `gap` is the
/// augmented-Lagrangian merit L_rho(x, lambda*) - L_rho(x*, lambda*).
struct MetricRow {
  double t = 0.0;
  double gap = 0.0;
  double obj_err = 0.0;
  double feas = 0.0;
  double vel_norm = 0.0;
  double grad_dev = 0.0;
  double dist_min_norm = 0.0;
  double energy_E = 0.0;
  double energy_tilde = 0.0;
  double energy_hat = 0.0;
};

/// t^2-weighted Lyapunov energy anchored at (x*, lambda*):
///   E(t) = t^2 (gap + eps(t)/2 ||x||^2)
///          + 1/2 ||(alpha-1)(x - x*) + t v||^2 + (alpha-1)/2 ||lambda - lambda*||^2.
inline double energy_E(double t, const PrimalDualState& s,
                       const ReferenceSolution& refs, const SystemParams& params,
                       const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "energy_E");
  const double gap =
      augmented_lagrangian(prob, s.x, refs.lambda_star, params.rho) -
      augmented_lagrangian(prob, refs.x_star, refs.lambda_star, params.rho);
  const double eps = schedule_eval(params.schedule, t).epsilon;
  const double a1 = params.alpha - 1.0;
  return t * t * (gap + 0.5 * eps * s.x.squaredNorm()) +
         0.5 * (a1 * (s.x - refs.x_star) + t * s.v).squaredNorm() +
         0.5 * a1 * (s.lambda - refs.lambda_star).squaredNorm();
}

/// Unweighted energy; satisfies E(t) = t^2 Etilde(t) identically.
inline double energy_tilde(double t, const PrimalDualState& s,
                           const ReferenceSolution& refs,
                           const SystemParams& params,
                           const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "energy_tilde");
  const double gap =
      augmented_lagrangian(prob, s.x, refs.lambda_star, params.rho) -
      augmented_lagrangian(prob, refs.x_star, refs.lambda_star, params.rho);
  const double eps = schedule_eval(params.schedule, t).epsilon;
  const double a1 = params.alpha - 1.0;
  return gap + 0.5 * eps * s.x.squaredNorm() +
         0.5 * ((a1 / t) * (s.x - refs.x_star) + s.v).squaredNorm() +
         0.5 * a1 / (t * t) * (s.lambda - refs.lambda_star).squaredNorm();
}

/// Energy anchored at the minimal-norm pair through the regularized
/// objective Leps(y) = L_rho(y, lambda_bar*) + eps/2 ||y||^2:
///   Ehat(t) = Leps(x) - Leps(x_bar*)
///             + 1/2 ||(alpha-1)/t (x - x_bar*) + v||^2
///             + (alpha-1)/(2 t^2) ||lambda - lambda_bar*||^2.
inline double energy_hat(double t, const PrimalDualState& s,
                         const ReferenceSolution& refs,
                         const SystemParams& params,
                         const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "energy_hat");
  const double eps = schedule_eval(params.schedule, t).epsilon;
  const auto reg = [&](const Vec& y) {
    return augmented_lagrangian(prob, y, refs.lambda_bar_star, params.rho) +
           0.5 * eps * y.squaredNorm();
  };
  const double a1 = params.alpha - 1.0;
  return reg(s.x) - reg(refs.x_bar_star) +
         0.5 * ((a1 / t) * (s.x - refs.x_bar_star) + s.v).squaredNorm() +
         0.5 * a1 / (t * t) * (s.lambda - refs.lambda_bar_star).squaredNorm();
}

/// Minimizer of L_rho(., lambda_bar*) + eps/2 ||.||^2, i.e. the solution of
/// the positive-definite system (M + rho A^T A + eps I) x = -q - A^T
/// lambda_bar* + rho A^T b.
inline Vec tikhonov_path_point(const QuadraticProblem& qp,
                               const ReferenceSolution& refs, double rho,
                               double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("tikhonov_path_point: eps must be > 0");
  if (rho < 0.0)
    throw std::invalid_argument("tikhonov_path_point: rho must be >= 0");
  const Eigen::Index n = qp.base.dim_primal;
  const Mat& A = qp.base.constraint_matrix;
  Mat lhs = qp.M + eps * Mat::Identity(n, n);
  Vec rhs = -qp.q;
  if (qp.base.dim_dual > 0) {
    lhs += rho * (A.transpose() * A);
    rhs += -A.transpose() * refs.lambda_bar_star +
           rho * (A.transpose() * qp.base.constraint_rhs);
  }
  Eigen::LLT<Mat> llt(lhs);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("tikhonov_path_point: factorization failed");
  return llt.solve(rhs);
}

struct CertificateReport {
  bool holds = false;
  double max_violation = 0.0;
  double slack = 0.0;
};

namespace detail {

/// Closed form of the integral of s eps(s) over [t0, t] for eps = c/s^r.
inline double weighted_schedule_integral(const TikhonovSchedule& s, double t0,
                                         double t) {
  if (s.c == 0.0) return 0.0;
  if (s.r == 2.0) return s.c * std::log(t / t0);
  const double p = 2.0 - s.r;
  return s.c * (std::pow(t, p) - std::pow(t0, p)) / p;
}

}  // namespace detail

/// Checks the integrated energy descent bound along a trajectory of the
/// regularized flow, instantiated at the minimal-norm pair:
///   E(t) <= E(t0) + (alpha-1)/2 ||x_bar*||^2 * integral of s eps(s)
/// with slack 1e-6 (1 + E(t0)) + 10 rel_tol E(t0) for the discretization.
inline CertificateReport certificate_energy_bound(
    const Trajectory& traj, const StateLayout& layout,
    const ReferenceSolution& refs, const SystemParams& params,
    const ConstrainedProblem& prob, double rel_tol) {
  if (!(params.alpha >= 3.0))
    throw std::invalid_argument("certificate_energy_bound: needs alpha >= 3");
  if (traj.times.empty())
    throw std::invalid_argument("certificate_energy_bound: empty trajectory");

  ReferenceSolution anchored = refs;
  anchored.x_star = refs.x_bar_star;
  anchored.lambda_star = refs.lambda_bar_star;

  const double t0 = traj.times.front();
  const double e0 =
      energy_E(t0, unpack_state(traj.states.front(), layout), anchored, params,
               prob);
  const double coeff =
      0.5 * (params.alpha - 1.0) * refs.x_bar_star.squaredNorm();

  CertificateReport report;
  report.slack = 1e-6 * (1.0 + e0) + 10.0 * rel_tol * e0;
  double max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    const double e =
        energy_E(t, unpack_state(traj.states[i], layout), anchored, params, prob);
    const double bound =
        e0 + coeff * detail::weighted_schedule_integral(params.schedule, t0, t);
    max_violation = std::max(max_violation, e - bound);
  }
  report.max_violation = max_violation;
  report.holds = max_violation <= report.slack;
  return report;
}

/// Checks, at every sample, the regularization-path inequality
///   eps/2 (||x - x_eps||^2 + ||x_eps||^2 - ||x_bar*||^2)
///     <= Leps(x) - Leps(x_bar*)
/// with per-sample slack 1e-8 (1 + |rhs|).
inline CertificateReport certificate_viscosity(const Trajectory& traj,
                                               const StateLayout& layout,
                                               const QuadraticProblem& qp,
                                               const ReferenceSolution& refs,
                                               const SystemParams& params) {
  if (!(params.schedule.c > 0.0))
    throw std::invalid_argument("certificate_viscosity: needs a schedule with c > 0");
  if (traj.times.empty())
    throw std::invalid_argument("certificate_viscosity: empty trajectory");

  CertificateReport report;
  report.holds = true;
  double max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    const double eps = schedule_eval(params.schedule, t).epsilon;
    const PrimalDualState s = unpack_state(traj.states[i], layout);
    const Vec x_eps = tikhonov_path_point(qp, refs, params.rho, eps);
    const auto reg = [&](const Vec& y) {
      return augmented_lagrangian(qp.base, y, refs.lambda_bar_star, params.rho) +
             0.5 * eps * y.squaredNorm();
    };
    const double lhs =
        0.5 * eps *
        ((s.x - x_eps).squaredNorm() + x_eps.squaredNorm() -
         refs.x_bar_star.squaredNorm());
    const double rhs = reg(s.x) - reg(refs.x_bar_star);
    const double slack = 1e-8 * (1.0 + std::abs(rhs));
    if (lhs - rhs > slack) report.holds = false;
    max_violation = std::max(max_violation, lhs - rhs);
    report.slack = std::max(report.slack, slack);
  }
  report.max_violation = max_violation;
  return report;
}

/// Ordinary least-squares slope of log(value) against log(t) over
/// [t_lo, t_hi]. Values at or below 1e-300 are clamped before the log.
inline double rate_fit(std::span<const double> times,
                       std::span<const double> values, double t_lo,
                       double t_hi) {
  if (times.size() != values.size())
    throw std::invalid_argument("rate_fit: times/values size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_lo || times[i] > t_hi) continue;
    lx.push_back(std::log(times[i]));
    ly.push_back(std::log(std::max(values[i], 1e-300)));
  }
  if (lx.size() < 5)
    throw InsufficientDataError("rate_fit: fewer than 5 samples in window");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

/// sup of t^power * value over samples with t in [t_lo, t_hi]; this is the
/// quantity the rate statements actually bound.
inline double tail_supremum(std::span<const double> times,
                            std::span<const double> values, double power,
                            double t_lo, double t_hi) {
  if (times.size() != values.size())
    throw std::invalid_argument("tail_supremum: times/values size mismatch");
  double sup = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_lo || times[i] > t_hi) continue;
    sup = std::max(sup, std::pow(times[i], power) * values[i]);
  }
  return sup;
}

/// All tracked metrics at one phase point.
inline MetricRow metrics_row(double t, const PrimalDualState& s,
                             const ReferenceSolution& refs,
                             const SystemParams& params,
                             const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "metrics_row");
  MetricRow row;
  row.t = t;
  row.gap = augmented_lagrangian(prob, s.x, refs.lambda_star, params.rho) -
            augmented_lagrangian(prob, refs.x_star, refs.lambda_star, params.rho);
  row.obj_err = std::abs(prob.objective(s.x) - refs.f_star);
  row.feas = (prob.constraint_matrix * s.x - prob.constraint_rhs).norm();
  row.vel_norm = s.v.norm();
  row.grad_dev = (prob.gradient(s.x) - prob.gradient(refs.x_star)).norm();
  row.dist_min_norm = (s.x - refs.x_bar_star).norm();
  row.energy_E = energy_E(t, s, refs, params, prob);
  row.energy_tilde = energy_tilde(t, s, refs, params, prob);
  row.energy_hat = energy_hat(t, s, refs, params, prob);
  return row;
}

}  // namespace tikpd
