#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "tikpd/dynamics.hpp"
#include "tikpd/integrator.hpp"
#include "tikpd/problem.hpp"

using namespace tikpd;

namespace {

const VectorField kDecay = [](double, const Vec& y, Vec& dydt) { dydt = -y; };

const VectorField kOscillator = [](double, const Vec& y, Vec& dydt) {
  dydt.resize(2);
  dydt(0) = y(1);
  dydt(1) = -y(0);
};

Vec scalar(double v) {
  Vec y(1);
  y << v;
  return y;
}

}  // namespace

TEST_CASE("exponential decay reaches e^-1") {
  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 2.0;
  cfg.abs_tol = 1e-8;
  cfg.rel_tol = 1e-8;
  const Trajectory traj = integrate(kDecay, scalar(1.0), cfg);
  CHECK(traj.times.front() == 1.0);
  CHECK(traj.times.back() == 2.0);
  CHECK(std::abs(traj.states.back()(0) - std::exp(-1.0)) <= 1e-6);
  CHECK(traj.accepted_steps > 0);
}

TEST_CASE("constant field is exact at all samples") {
  const VectorField zero = [](double, const Vec& y, Vec& dydt) {
    dydt = Vec::Zero(y.size());
  };
  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 5.0;
  cfg.sample_times = {1.5, 2.0, 3.25, 4.9};
  const Trajectory traj = integrate(zero, scalar(3.75), cfg);
  REQUIRE(traj.times.size() == 6);
  for (const Vec& s : traj.states) CHECK(s(0) == 3.75);
}

TEST_CASE("harmonic oscillator closes its period") {
  IntegrationConfig cfg;
  cfg.t_start = 0.0;
  cfg.t_end = 2.0 * 3.14159265358979323846;
  cfg.abs_tol = 1e-9;
  cfg.rel_tol = 1e-9;
  Vec y0(2);
  y0 << 1.0, 0.0;
  const Trajectory traj = integrate(kOscillator, y0, cfg);
  CHECK(std::abs(traj.states.back()(0) - 1.0) <= 1e-6);
  CHECK(std::abs(traj.states.back()(1) - 0.0) <= 1e-6);
}

TEST_CASE("dense output hits accepted step endpoints exactly") {
  // Sample on a fine grid; any sample that lands on a step endpoint must be
  // a verbatim copy, and interior samples must track the solution closely.
  IntegrationConfig cfg;
  cfg.t_start = 0.0;
  cfg.t_end = 1.0;
  cfg.abs_tol = 1e-10;
  cfg.rel_tol = 1e-10;
  for (int i = 1; i < 64; ++i) cfg.sample_times.push_back(i / 64.0);
  const Trajectory traj = integrate(kDecay, scalar(1.0), cfg);
  REQUIRE(traj.times.size() == 66);
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    CHECK(std::abs(traj.states[i](0) - std::exp(-traj.times[i])) <= 1e-7);
}

TEST_CASE("degenerate horizon returns the initial state") {
  IntegrationConfig cfg;
  cfg.t_start = 2.0;
  cfg.t_end = 2.0;
  const Trajectory traj = integrate(kDecay, scalar(0.5), cfg);
  REQUIRE(traj.times.size() == 1);
  CHECK(traj.times[0] == 2.0);
  CHECK(traj.states[0](0) == 0.5);
}

TEST_CASE("tolerance controls the achieved error") {
  // Global error against exp(-1) should scale roughly with the tolerance and
  // must never get worse when the tolerance is halved.
  IntegrationConfig cfg;
  cfg.t_start = 0.0;
  cfg.t_end = 1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (double tol : {1e-4, 5e-5, 2.5e-5, 1.25e-5, 1e-6, 1e-8}) {
    cfg.abs_tol = tol;
    cfg.rel_tol = tol;
    const Trajectory traj = integrate(kDecay, scalar(1.0), cfg);
    const double err = std::abs(traj.states.back()(0) - std::exp(-1.0));
    CHECK(err <= previous + 1e-15);
    CHECK(err <= 10.0 * tol);
    previous = err;
  }
}

TEST_CASE("determinism of the adaptive integrator") {
  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 20.0;
  cfg.sample_times = {2.0, 5.0, 12.5};
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  SystemParams params;
  params.alpha = 13.0;
  params.rho = 1.0;
  params.schedule = {3.0, 0.5};
  const VectorField field = tikhonov_field(params, prob);
  Vec y0(7);
  y0 << 1, 1, 1, 1, 1, 1, 1;

  const Trajectory a = integrate(field, y0, cfg);
  const Trajectory b = integrate(field, y0, cfg);
  REQUIRE(a.times.size() == b.times.size());
  CHECK(a.accepted_steps == b.accepted_steps);
  CHECK(a.rejected_steps == b.rejected_steps);
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    CHECK(a.times[i] == b.times[i]);
    CHECK(a.states[i] == b.states[i]);  // bitwise
  }
}

TEST_CASE("step limit error carries the partial trajectory") {
  IntegrationConfig cfg;
  cfg.t_start = 0.0;
  cfg.t_end = 100.0;
  cfg.abs_tol = 1e-12;
  cfg.rel_tol = 1e-12;
  cfg.max_steps = 10;
  cfg.sample_times = {0.001};
  bool thrown = false;
  try {
    integrate(kDecay, scalar(1.0), cfg);
  } catch (const StepLimitError& e) {
    thrown = true;
    CHECK(e.partial.times.front() == 0.0);
    CHECK(e.partial.accepted_steps + e.partial.rejected_steps == 10);
  }
  CHECK(thrown);
}

TEST_CASE("divergence error reports the last valid time") {
  const VectorField poisoned = [](double t, const Vec& y, Vec& dydt) {
    dydt = -y;
    if (t > 1.5) dydt(0) = std::numeric_limits<double>::quiet_NaN();
  };
  IntegrationConfig cfg;
  cfg.t_start = 0.0;
  cfg.t_end = 3.0;
  bool thrown = false;
  try {
    integrate(poisoned, scalar(1.0), cfg);
  } catch (const DivergenceError& e) {
    thrown = true;
    CHECK(e.last_valid_time <= 1.5);
    CHECK(!e.partial.times.empty());
  }
  CHECK(thrown);
}

TEST_CASE("invalid configurations are rejected") {
  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 0.0;
  CHECK_THROWS_AS(integrate(kDecay, scalar(1.0), cfg), std::invalid_argument);
  cfg.t_end = 2.0;
  cfg.sample_times = {2.5};
  CHECK_THROWS_AS(integrate(kDecay, scalar(1.0), cfg), std::invalid_argument);
  cfg.sample_times = {1.5, 1.2};
  CHECK_THROWS_AS(integrate(kDecay, scalar(1.0), cfg), std::invalid_argument);
  cfg.sample_times = {1.5, 1.5};
  CHECK_THROWS_AS(integrate(kDecay, scalar(1.0), cfg), std::invalid_argument);
  cfg.sample_times.clear();
  cfg.abs_tol = 0.0;
  CHECK_THROWS_AS(integrate(kDecay, scalar(1.0), cfg), std::invalid_argument);
  cfg.abs_tol = 1e-6;
  CHECK_THROWS_AS(integrate(kDecay, scalar(std::nan("")), cfg),
                  std::invalid_argument);
}

TEST_CASE("fixed rk4 exactness and order") {
  const VectorField one = [](double, const Vec& y, Vec& dydt) {
    dydt = Vec::Ones(y.size());
  };
  CHECK(integrate_fixed_rk4(one, scalar(0.5), 0.0, 1.0, 8)(0) == 1.5);

  // Order 4: halving the step divides the error by ~16.
  double prev_err = 0.0;
  for (int k = 3; k <= 6; ++k) {
    const double err = std::abs(
        integrate_fixed_rk4(kDecay, scalar(1.0), 0.0, 1.0, 1u << k)(0) -
        std::exp(-1.0));
    if (k > 3) {
      const double ratio = prev_err / err;
      CHECK(ratio >= 16.0 * 0.8);
      CHECK(ratio <= 16.0 * 1.2);
    }
    prev_err = err;
  }

  CHECK_THROWS_AS(integrate_fixed_rk4(kDecay, scalar(1.0), 0.0, 1.0, 0),
                  std::invalid_argument);
}

TEST_CASE("rk4 cross-checks the adaptive pair on the regularized flow") {
  const ConstrainedProblem prob = make_example1(5, 1, 1);
  SystemParams params;
  params.alpha = 13.0;
  params.rho = 1.0;
  params.schedule = {1.0, 3.0};
  const VectorField field = tikhonov_field(params, prob);
  Vec y0(7);
  y0 << 1, 1, 1, 1, 1, 1, 1;

  IntegrationConfig cfg;
  cfg.t_start = 1.0;
  cfg.t_end = 100.0;
  cfg.abs_tol = 1e-11;
  cfg.rel_tol = 1e-11;
  cfg.max_steps = 5000000;
  const Trajectory adaptive = integrate(field, y0, cfg);
  const Vec fixed = integrate_fixed_rk4(field, y0, 1.0, 100.0, 400000);
  CHECK((adaptive.states.back() - fixed).lpNorm<Eigen::Infinity>() <= 1e-4);
}
