#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "tikpd/diagnostics.hpp"
#include "tikpd/dynamics.hpp"
#include "tikpd/integrator.hpp"
#include "tikpd/problem.hpp"
#include "tikpd/rng.hpp"

using namespace tikpd;

namespace {

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

ReferenceSolution example1_refs() {
  ReferenceSolution refs;
  refs.x_star = Vec::Zero(3);
  refs.lambda_star = Vec::Zero(1);
  refs.x_bar_star = Vec::Zero(3);
  refs.lambda_bar_star = Vec::Zero(1);
  refs.f_star = 0.0;
  return refs;
}

SystemParams example1_params(double c, double r) {
  SystemParams p;
  p.alpha = 13.0;
  p.rho = 1.0;
  p.schedule = {c, r};
  p.t0 = 1.0;
  return p;
}

PrimalDualState ones_state() {
  PrimalDualState s;
  s.x = vec3(1, 1, 1);
  s.v = vec3(1, 1, 1);
  s.lambda = vec1(1);
  return s;
}

Vec random_vec(Rng& rng, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.gaussian();
  return v;
}

Trajectory run_example1(double c, double r, double abs_tol, double rel_tol) {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  const SystemParams params = example1_params(c, r);
  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 100.0;
  cfg.abs_tol = abs_tol;
  cfg.rel_tol = rel_tol;
  cfg.max_steps = 5000000;
  const std::vector<double> grid = log_spaced(1.0, 100.0, 400);
  cfg.sample_times.assign(grid.begin() + 1, grid.end() - 1);
  Vec y0(7);
  y0 << 1, 1, 1, 1, 1, 1, 1;
  return integrate(tikhonov_field(params, prob), y0, cfg);
}

}  // namespace

TEST_CASE("energy hand values at t = 1") {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  const ReferenceSolution refs = example1_refs();
  const SystemParams params = example1_params(3.0, 0.5);
  const PrimalDualState s = ones_state();

  // gap 61.5, eps-term 4.5, mixed 253.5, dual 6.
  CHECK(energy_E(1.0, s, refs, params, prob) ==
        Catch::Approx(325.5).epsilon(1e-13));
  CHECK(energy_tilde(1.0, s, refs, params, prob) ==
        Catch::Approx(325.5).epsilon(1e-13));
  CHECK(energy_hat(1.0, s, refs, params, prob) ==
        Catch::Approx(325.5).epsilon(1e-13));

  PrimalDualState opt;
  opt.x = refs.x_star;
  opt.v = Vec::Zero(3);
  opt.lambda = refs.lambda_star;
  CHECK(energy_E(1.0, opt, refs, params, prob) == 0.0);
  CHECK(energy_tilde(5.0, opt, refs, params, prob) == 0.0);
  CHECK(energy_hat(5.0, opt, refs, params, prob) == 0.0);
}

TEST_CASE("energy identities on sampled states") {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  const ReferenceSolution refs = example1_refs();
  const SystemParams params = example1_params(3.0, 0.5);

  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    const double t = 1.0 + 99.0 * rng.uniform();
    PrimalDualState s;
    s.x = random_vec(rng, 3);
    s.v = random_vec(rng, 3);
    s.lambda = random_vec(rng, 1);

    const double e = energy_E(t, s, refs, params, prob);
    const double tilde = energy_tilde(t, s, refs, params, prob);
    CHECK(std::abs(e - t * t * tilde) <= 1e-12 * std::max(1.0, std::abs(e)));

    // Ehat equals Etilde anchored at the minimal-norm pair minus the
    // eps/2 ||x_bar*||^2 shift (zero here since x_bar* = 0).
    const double hat = energy_hat(t, s, refs, params, prob);
    CHECK(std::abs(hat - tilde) <= 1e-12 * std::max(1.0, std::abs(hat)));
  }
}

TEST_CASE("energy hat shift identity with a nonzero minimal-norm point") {
  const QuadraticProblem qp = make_random_qp(4, 8, 21);
  const ReferenceSolution refs = solve_reference_qp(qp);
  SystemParams params;
  params.alpha = 15.0;
  params.rho = 1.0;
  params.schedule = {1.0, 1.0};

  ReferenceSolution anchored = refs;
  anchored.x_star = refs.x_bar_star;
  anchored.lambda_star = refs.lambda_bar_star;

  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const double t = 1.0 + 50.0 * rng.uniform();
    PrimalDualState s;
    s.x = random_vec(rng, 8);
    s.v = random_vec(rng, 8);
    s.lambda = random_vec(rng, 4);
    const double eps = schedule_eval(params.schedule, t).epsilon;
    const double hat = energy_hat(t, s, refs, params, qp.base);
    const double tilde_min = energy_tilde(t, s, anchored, params, qp.base);
    const double shift = 0.5 * eps * refs.x_bar_star.squaredNorm();
    CHECK(std::abs(hat - (tilde_min - shift)) <=
          1e-11 * std::max(1.0, std::abs(hat)));
  }
}

TEST_CASE("tikhonov path point closed forms") {
  SECTION("example1 path is identically zero") {
    const QuadraticProblem qp = example1_as_qp(5, 1, 1);
    const ReferenceSolution refs = example1_refs();
    for (double eps : {1.0, 0.1, 0.003})
      CHECK(tikhonov_path_point(qp, refs, 1.0, eps).norm() <= 1e-12);
  }
  SECTION("one dimensional unconstrained") {
    // minimize 1/2 x^2 - x + eps/2 x^2  ->  x = 1/(1+eps).
    const QuadraticProblem qp = make_quadratic_problem(
        Mat::Identity(1, 1), -Vec::Ones(1), Mat(0, 1), Vec(0));
    ReferenceSolution refs;
    refs.x_star = Vec::Ones(1);
    refs.lambda_star = Vec(0);
    refs.x_bar_star = Vec::Ones(1);
    refs.lambda_bar_star = Vec(0);
    refs.f_star = -0.5;
    for (double eps : {2.0, 0.5, 0.01})
      CHECK(tikhonov_path_point(qp, refs, 3.0, eps)(0) ==
            Catch::Approx(1.0 / (1.0 + eps)).epsilon(1e-12));
    CHECK_THROWS_AS(tikhonov_path_point(qp, refs, 1.0, 0.0),
                    std::invalid_argument);
  }
}

TEST_CASE("tikhonov path norms are monotone and converge to the projection") {
  const QuadraticProblem qp = make_random_qp(20, 40, 1);
  const ReferenceSolution refs = solve_reference_qp(qp);
  const std::vector<double> grid = {1.0, 0.1, 0.01, 0.001};
  std::vector<Vec> path;
  for (double eps : grid) path.push_back(tikhonov_path_point(qp, refs, 1.0, eps));

  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(path[i].norm() <= refs.x_bar_star.norm() + 1e-10);
    if (i > 0) CHECK(path[i - 1].norm() <= path[i].norm() + 1e-10);
  }
  CHECK((path.back() - refs.x_bar_star).norm() <
        (path.front() - refs.x_bar_star).norm());
}

TEST_CASE("metrics row hand values and delegation") {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  const ReferenceSolution refs = example1_refs();
  const SystemParams params = example1_params(3.0, 0.5);
  const PrimalDualState s = ones_state();

  const MetricRow row = metrics_row(1.0, s, refs, params, prob);
  CHECK(row.gap == Catch::Approx(61.5).epsilon(1e-13));
  CHECK(row.obj_err == Catch::Approx(49.0).epsilon(1e-13));
  CHECK(row.feas == Catch::Approx(5.0).epsilon(1e-13));
  CHECK(row.vel_norm == Catch::Approx(std::sqrt(3.0)).epsilon(1e-13));
  CHECK(row.grad_dev ==
        Catch::Approx(std::sqrt(70.0 * 70 + 14 * 14 + 14 * 14)).epsilon(1e-13));
  CHECK(row.dist_min_norm == Catch::Approx(std::sqrt(3.0)).epsilon(1e-13));
  CHECK(row.energy_E == energy_E(1.0, s, refs, params, prob));
  CHECK(row.energy_tilde == energy_tilde(1.0, s, refs, params, prob));
  CHECK(row.energy_hat == energy_hat(1.0, s, refs, params, prob));

  PrimalDualState opt;
  opt.x = refs.x_bar_star;
  opt.v = Vec::Zero(3);
  opt.lambda = refs.lambda_bar_star;
  const MetricRow at_opt = metrics_row(2.0, opt, refs, params, prob);
  CHECK(at_opt.gap == 0.0);
  CHECK(at_opt.obj_err == 0.0);
  CHECK(at_opt.feas == 0.0);
  CHECK(at_opt.vel_norm == 0.0);
  CHECK(at_opt.grad_dev == 0.0);
  CHECK(at_opt.dist_min_norm == 0.0);
}

TEST_CASE("gap dominates the squared gradient deviation") {
  // Convexity with an L-Lipschitz gradient gives
  // ||grad f(x) - grad f(x*)||^2 <= 2 L gap.
  const QuadraticProblem qp = make_random_qp(6, 12, 17);
  const ReferenceSolution refs = solve_reference_qp(qp);
  SystemParams params;
  params.alpha = 13.0;
  params.rho = 1.0;
  params.schedule = {0.0, 1.0};
  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    PrimalDualState s;
    s.x = refs.x_star + random_vec(rng, 12);
    s.v = Vec::Zero(12);
    s.lambda = random_vec(rng, 6);
    const MetricRow row = metrics_row(2.0, s, refs, params, qp.base);
    CHECK(row.gap >= -1e-10);
    CHECK(row.grad_dev * row.grad_dev <=
          2.0 * qp.base.lipschitz * row.gap + 1e-8);
  }
}

TEST_CASE("rate fit recovers exact power laws") {
  std::vector<double> times, quadratic, constant, linear;
  for (int i = 0; i < 60; ++i) {
    const double t = 2.0 + i;
    times.push_back(t);
    quadratic.push_back(1.0 / (t * t));
    constant.push_back(3.5);
    linear.push_back(5.0 / t);
  }
  CHECK(rate_fit(times, quadratic, 2.0, 70.0) == Catch::Approx(-2.0).margin(1e-10));
  CHECK(rate_fit(times, constant, 2.0, 70.0) == Catch::Approx(0.0).margin(1e-10));
  CHECK(rate_fit(times, linear, 2.0, 70.0) == Catch::Approx(-1.0).margin(1e-10));
  CHECK_THROWS_AS(rate_fit(times, linear, 2.0, 5.5), InsufficientDataError);
}

TEST_CASE("tail supremum picks the windowed maximum") {
  const std::vector<double> times = {1.0, 2.0, 4.0, 8.0, 16.0};
  const std::vector<double> values = {100.0, 1.0 / 4.0, 1.0 / 16.0, 1.0 / 64.0,
                                      2.0 / 256.0};
  // t^2 * value is 1 on the window except the last entry, which is 2.
  CHECK(tail_supremum(times, values, 2.0, 2.0, 16.0) == Catch::Approx(2.0));
  CHECK(tail_supremum(times, values, 0.0, 2.0, 16.0) == Catch::Approx(0.25));
}

TEST_CASE("energy bound certificate on a fast run") {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  const SystemParams params = example1_params(1.0, 3.0);
  const StateLayout layout{3, 1, false};
  const Trajectory traj = run_example1(1.0, 3.0, 1e-10, 1e-8);
  const CertificateReport rep = certificate_energy_bound(
      traj, layout, example1_refs(), params, prob, 1e-8);
  INFO("max_violation " << rep.max_violation << " slack " << rep.slack);
  CHECK(rep.holds);

  SystemParams bad = params;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(certificate_energy_bound(traj, layout, example1_refs(), bad,
                                           prob, 1e-8),
                  std::invalid_argument);
}

TEST_CASE("viscosity certificate on a slow run") {
  const SystemParams params = example1_params(3.0, 0.5);
  const StateLayout layout{3, 1, false};
  const Trajectory traj = run_example1(3.0, 0.5, 1e-8, 1e-6);
  const QuadraticProblem qp = example1_as_qp(5, 1, 1);
  const CertificateReport rep =
      certificate_viscosity(traj, layout, qp, example1_refs(), params);
  INFO("max_violation " << rep.max_violation);
  CHECK(rep.holds);

  SystemParams unregularized = params;
  unregularized.schedule = {0.0, 1.0};
  CHECK_THROWS_AS(certificate_viscosity(traj, layout, qp, example1_refs(),
                                        unregularized),
                  std::invalid_argument);
}

TEST_CASE("viscosity inequality at distinguished points") {
  const QuadraticProblem qp = make_random_qp(5, 10, 33);
  const ReferenceSolution refs = solve_reference_qp(qp);
  const double rho = 1.0;
  for (double eps : {1.0, 0.05}) {
    const Vec x_eps = tikhonov_path_point(qp, refs, rho, eps);
    const auto reg = [&](const Vec& y) {
      return augmented_lagrangian(qp.base, y, refs.lambda_bar_star, rho) +
             0.5 * eps * y.squaredNorm();
    };
    // At x = x_eps the left side is nonpositive and bounded by the gap.
    const double lhs_at_path =
        0.5 * eps * (x_eps.squaredNorm() - refs.x_bar_star.squaredNorm());
    CHECK(lhs_at_path <= 1e-12);
    CHECK(lhs_at_path <= reg(x_eps) - reg(refs.x_bar_star) + 1e-9);
    // At x = x_bar* the inequality collapses to x_eps-optimality.
    const double lhs_at_bar =
        0.5 * eps *
        ((refs.x_bar_star - x_eps).squaredNorm() + x_eps.squaredNorm() -
         refs.x_bar_star.squaredNorm());
    CHECK(lhs_at_bar <= 1e-9);
  }
}
