#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tikpd/integrator.hpp"
#include "tikpd/problem.hpp"

namespace tikpd {

/// Power-law regularization weight eps(t) = c / t^r.
struct TikhonovSchedule {
  double c = 0.0;
  double r = 1.0;
};

struct ScheduleValue {
  double epsilon = 0.0;
  double epsilon_dot = 0.0;
};

enum class ScheduleRegime { None, Fast, Critical, Slow };

inline const char* to_string(ScheduleRegime regime) {
  switch (regime) {
    case ScheduleRegime::None: return "NONE";
    case ScheduleRegime::Fast: return "FAST";
    case ScheduleRegime::Critical: return "CRITICAL";
    case ScheduleRegime::Slow: return "SLOW";
  }
  return "NONE";
}

namespace detail {

inline void check_schedule(const TikhonovSchedule& s) {
  if (s.c < 0.0) throw std::invalid_argument("schedule: c must be >= 0");
  if (!(s.r > 0.0)) throw std::invalid_argument("schedule: r must be > 0");
}

}  // namespace detail

/// (eps(t), d/dt eps(t)) = (c/t^r, -r c/t^(r+1)).
inline ScheduleValue schedule_eval(const TikhonovSchedule& s, double t) {
  detail::check_schedule(s);
  if (!(t > 0.0)) throw std::domain_error("schedule_eval: t must be positive");
  ScheduleValue v;
  v.epsilon = s.c / std::pow(t, s.r);
  v.epsilon_dot = -s.r * s.c / std::pow(t, s.r + 1.0);
  return v;
}

/// Decay-speed regime: the fast regime keeps the 1/t^2 rates, the slow one
/// forces convergence to the minimal-norm solution, r = 2 is the boundary.
inline ScheduleRegime classify_schedule(const TikhonovSchedule& s) {
  detail::check_schedule(s);
  if (s.c == 0.0) return ScheduleRegime::None;
  if (s.r > 2.0) return ScheduleRegime::Fast;
  if (s.r == 2.0) return ScheduleRegime::Critical;
  return ScheduleRegime::Slow;
}

/// Damping exponent, augmented-Lagrangian penalty, regularization schedule
/// and start time of the regularized primal-dual flow.
struct SystemParams {
  double alpha = 3.0;  // must be > 1; rate certificates need >= 3
  double rho = 0.0;
  TikhonovSchedule schedule;
  double t0 = 1.0;
};

namespace detail {

inline void check_params(const SystemParams& p) {
  if (!(p.alpha > 1.0))
    throw std::invalid_argument("system params: alpha must be > 1");
  if (p.rho < 0.0) throw std::invalid_argument("system params: rho must be >= 0");
  if (!(p.t0 > 0.0)) throw std::invalid_argument("system params: t0 must be > 0");
  check_schedule(p.schedule);
}

}  // namespace detail

/// Phase point (x, v = dx/dt, lambda); `mu` carries dlambda/dt and is only
/// populated for the system whose dual variable is second order.
struct PrimalDualState {
  Vec x;
  Vec v;
  Vec lambda;
  Vec mu;

  bool has_mu() const { return mu.size() > 0; }

  bool all_finite() const {
    return x.allFinite() && v.allFinite() && lambda.allFinite() &&
           mu.allFinite();
  }
};

/// Flat-vector layout [x; v; lambda] or [x; v; lambda; mu].
struct StateLayout {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  bool has_mu = false;

  Eigen::Index size() const { return 2 * n + (has_mu ? 2 * m : m); }
};

inline Vec pack_state(const PrimalDualState& s, const StateLayout& layout) {
  Vec y(layout.size());
  y.segment(0, layout.n) = s.x;
  y.segment(layout.n, layout.n) = s.v;
  y.segment(2 * layout.n, layout.m) = s.lambda;
  if (layout.has_mu) y.segment(2 * layout.n + layout.m, layout.m) = s.mu;
  return y;
}

inline PrimalDualState unpack_state(const Vec& y, const StateLayout& layout) {
  if (y.size() != layout.size())
    throw std::invalid_argument("unpack_state: flat state has size " +
                                std::to_string(y.size()) + ", expected " +
                                std::to_string(layout.size()));
  PrimalDualState s;
  s.x = y.segment(0, layout.n);
  s.v = y.segment(layout.n, layout.n);
  s.lambda = y.segment(2 * layout.n, layout.m);
  if (layout.has_mu) s.mu = y.segment(2 * layout.n + layout.m, layout.m);
  return s;
}

namespace detail {

inline void check_rhs_inputs(double t, const PrimalDualState& s,
                             const ConstrainedProblem& prob, const char* where) {
  if (!(t > 0.0)) throw std::domain_error(std::string(where) + ": t must be positive");
  require_dims(prob, s.x, s.lambda, where);
  if (s.v.size() != prob.dim_primal)
    throw std::invalid_argument(std::string(where) + ": v dimension mismatch");
}

}  // namespace detail

/// Regularized flow:
///   dx/dt = v
///   dv/dt = -(alpha/t) v - grad f(x) - A^T lambda - rho A^T (Ax - b) - eps(t) x
///   dlambda/dt = t (A (x + t/(alpha-1) v) - b)
///
/// The rho and eps terms are skipped when exactly zero so the rho = 0,
/// c = 0 case reduces bitwise to the unregularized flow below.
inline PrimalDualState rhs_tikhonov(double t, const PrimalDualState& s,
                                    const SystemParams& params,
                                    const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "rhs_tikhonov");
  detail::check_params(params);
  const Mat& A = prob.constraint_matrix;
  const double eps = schedule_eval(params.schedule, t).epsilon;

  PrimalDualState d;
  d.x = s.v;
  d.v = (-(params.alpha / t)) * s.v - prob.gradient(s.x) -
        A.transpose() * s.lambda;
  if (params.rho != 0.0)
    d.v -= params.rho * (A.transpose() * (A * s.x - prob.constraint_rhs));
  if (eps != 0.0) d.v -= eps * s.x;
  d.lambda =
      t * (A * (s.x + (t / (params.alpha - 1.0)) * s.v) - prob.constraint_rhs);
  return d;
}

/// Unregularized second-order plus first-order flow with a constant scaling
/// coefficient beta (perturbation fixed to zero):
///   dv/dt = -(alpha/t) v - beta grad f(x) - beta A^T lambda
///   dlambda/dt = t beta (A (x + t/(alpha-1) v) - b)
inline PrimalDualState rhs_he_avd(double t, const PrimalDualState& s,
                                  double alpha, double beta,
                                  const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "rhs_he_avd");
  if (!(alpha > 1.0)) throw std::invalid_argument("rhs_he_avd: alpha must be > 1");
  if (!(beta > 0.0)) throw std::invalid_argument("rhs_he_avd: beta must be > 0");
  const Mat& A = prob.constraint_matrix;

  PrimalDualState d;
  d.x = s.v;
  d.v = (-(alpha / t)) * s.v - beta * prob.gradient(s.x) -
        beta * (A.transpose() * s.lambda);
  d.lambda = (t * beta) *
             (A * (s.x + (t / (alpha - 1.0)) * s.v) - prob.constraint_rhs);
  return d;
}

/// Second-order-in-both-variables comparator flow with unit augmented term:
///   dv/dt = -(alpha/t) v - grad f(x) - A^T (lambda + theta t mu) - A^T (Ax - b)
///   dlambda/dt = mu
///   dmu/dt = -(alpha/t) mu + A (x + theta t v) - b
inline PrimalDualState rhs_z_avd(double t, const PrimalDualState& s,
                                 double alpha, double theta,
                                 const ConstrainedProblem& prob) {
  detail::check_rhs_inputs(t, s, prob, "rhs_z_avd");
  if (!(alpha > 1.0)) throw std::invalid_argument("rhs_z_avd: alpha must be > 1");
  if (!(theta > 0.0)) throw std::invalid_argument("rhs_z_avd: theta must be > 0");
  if (s.mu.size() != prob.dim_dual)
    throw std::invalid_argument("rhs_z_avd: mu dimension mismatch");
  const Mat& A = prob.constraint_matrix;

  PrimalDualState d;
  d.x = s.v;
  d.v = (-(alpha / t)) * s.v - prob.gradient(s.x) -
        A.transpose() * (s.lambda + (theta * t) * s.mu) -
        A.transpose() * (A * s.x - prob.constraint_rhs);
  d.lambda = s.mu;
  d.mu = (-(alpha / t)) * s.mu + A * (s.x + (theta * t) * s.v) -
         prob.constraint_rhs;
  return d;
}

inline VectorField tikhonov_field(const SystemParams& params,
                                  const ConstrainedProblem& prob) {
  detail::check_params(params);
  const StateLayout layout{prob.dim_primal, prob.dim_dual, false};
  return [params, prob, layout](double t, const Vec& y, Vec& dydt) {
    dydt = pack_state(rhs_tikhonov(t, unpack_state(y, layout), params, prob),
                      layout);
  };
}

inline VectorField he_avd_field(double alpha, double beta,
                                const ConstrainedProblem& prob) {
  const StateLayout layout{prob.dim_primal, prob.dim_dual, false};
  return [alpha, beta, prob, layout](double t, const Vec& y, Vec& dydt) {
    dydt = pack_state(rhs_he_avd(t, unpack_state(y, layout), alpha, beta, prob),
                      layout);
  };
}

inline VectorField z_avd_field(double alpha, double theta,
                               const ConstrainedProblem& prob) {
  const StateLayout layout{prob.dim_primal, prob.dim_dual, true};
  return [alpha, theta, prob, layout](double t, const Vec& y, Vec& dydt) {
    dydt = pack_state(rhs_z_avd(t, unpack_state(y, layout), alpha, theta, prob),
                      layout);
  };
}

}  // namespace tikpd
