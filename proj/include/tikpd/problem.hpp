#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "tikpd/errors.hpp"
#include "tikpd/rng.hpp"

namespace tikpd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Convex objective with gradient oracle under a linear equality constraint
/// A x = b. `lipschitz` bounds the gradient's Lipschitz constant.
struct ConstrainedProblem {
  Eigen::Index dim_primal = 0;
  Eigen::Index dim_dual = 0;
  std::function<double(const Vec&)> objective;
  std::function<Vec(const Vec&)> gradient;
  Mat constraint_matrix;  // dim_dual x dim_primal
  Vec constraint_rhs;     // dim_dual
  double lipschitz = 0.0;
};

/// Quadratic objective (1/2) x^T M x + q^T x with M symmetric PSD, plus the
/// ConstrainedProblem it induces.
struct QuadraticProblem {
  Mat M;
  Vec q;
  ConstrainedProblem base;
};

/// A primal-dual optimal pair, the minimal-norm primal solution with its
/// multiplier, and the optimal value.
struct ReferenceSolution {
  Vec x_star;
  Vec lambda_star;
  Vec x_bar_star;
  Vec lambda_bar_star;
  double f_star = 0.0;
};

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
};

namespace detail {

inline void require_dims(const ConstrainedProblem& p, const Vec& x,
                         const Vec& lambda, const char* where) {
  if (x.size() != p.dim_primal)
    throw std::invalid_argument(std::string(where) + ": x has size " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(p.dim_primal));
  if (lambda.size() != p.dim_dual)
    throw std::invalid_argument(std::string(where) + ": lambda has size " +
                                std::to_string(lambda.size()) + ", expected " +
                                std::to_string(p.dim_dual));
}

}  // namespace detail

/// L(x, lambda) = f(x) + <lambda, Ax - b>.
inline double lagrangian(const ConstrainedProblem& p, const Vec& x,
                         const Vec& lambda) {
  detail::require_dims(p, x, lambda, "lagrangian");
  return p.objective(x) +
         lambda.dot(p.constraint_matrix * x - p.constraint_rhs);
}

/// L_rho(x, lambda) = L(x, lambda) + (rho/2) ||Ax - b||^2.
inline double augmented_lagrangian(const ConstrainedProblem& p, const Vec& x,
                                   const Vec& lambda, double rho) {
  if (rho < 0.0)
    throw std::invalid_argument("augmented_lagrangian: rho must be >= 0");
  return lagrangian(p, x, lambda) +
         0.5 * rho * (p.constraint_matrix * x - p.constraint_rhs).squaredNorm();
}

/// Gradient of L_rho in x: grad f(x) + A^T lambda + rho A^T (Ax - b).
inline Vec grad_x_augmented(const ConstrainedProblem& p, const Vec& x,
                            const Vec& lambda, double rho) {
  if (rho < 0.0)
    throw std::invalid_argument("grad_x_augmented: rho must be >= 0");
  detail::require_dims(p, x, lambda, "grad_x_augmented");
  const Mat& A = p.constraint_matrix;
  return p.gradient(x) + A.transpose() * lambda +
         rho * (A.transpose() * (A * x - p.constraint_rhs));
}

/// (||grad f(x) + A^T lambda||, ||Ax - b||); both vanish exactly at a
/// primal-dual optimal pair.
inline KktResidual kkt_residual(const ConstrainedProblem& p, const Vec& x,
                                const Vec& lambda) {
  detail::require_dims(p, x, lambda, "kkt_residual");
  KktResidual r;
  r.stationarity =
      (p.gradient(x) + p.constraint_matrix.transpose() * lambda).norm();
  r.feasibility = (p.constraint_matrix * x - p.constraint_rhs).norm();
  return r;
}

/// f(x) = (m x1 + n x2 + e x3)^2 subject to m x1 - n x2 + e x3 = 0.
///
/// Convex but not strongly convex; the solution set is the line
/// {(x1, 0, -(m/e) x1)} and the minimal-norm solution is the origin.
inline ConstrainedProblem make_example1(double m, double n, double e) {
  if (m == 0.0 || n == 0.0 || e == 0.0)
    throw std::invalid_argument("make_example1: m, n, e must all be nonzero");
  Vec coeff(3);
  coeff << m, n, e;
  ConstrainedProblem p;
  p.dim_primal = 3;
  p.dim_dual = 1;
  p.objective = [coeff](const Vec& x) {
    const double s = coeff.dot(x);
    return s * s;
  };
  p.gradient = [coeff](const Vec& x) -> Vec {
    return (2.0 * coeff.dot(x)) * coeff;
  };
  p.constraint_matrix = Mat(1, 3);
  p.constraint_matrix << m, -n, e;
  p.constraint_rhs = Vec::Zero(1);
  p.lipschitz = 2.0 * coeff.squaredNorm();
  return p;
}

/// Builds the induced ConstrainedProblem for (M, q, A, b) and validates the
/// symmetry/PSD requirements on M. The Lipschitz constant is ||M||_2.
inline QuadraticProblem make_quadratic_problem(Mat M, Vec q, Mat A, Vec b) {
  const Eigen::Index n = M.rows();
  if (M.cols() != n) throw std::invalid_argument("quadratic problem: M must be square");
  if (q.size() != n) throw std::invalid_argument("quadratic problem: q size mismatch");
  if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n))
    throw std::invalid_argument("quadratic problem: constraint dimensions mismatch");
  const double scale = M.cwiseAbs().maxCoeff() > 0 ? M.cwiseAbs().maxCoeff() : 1.0;
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("quadratic problem: M must be symmetric");

  double lipschitz = 0.0;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(M, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double norm = std::max(std::abs(lo), std::abs(hi));
    if (lo < -1e-8 * norm)
      throw std::invalid_argument("quadratic problem: M must be positive semidefinite");
    lipschitz = norm;
  }

  QuadraticProblem qp;
  qp.M = std::move(M);
  qp.q = std::move(q);
  qp.base.dim_primal = n;
  qp.base.dim_dual = A.rows();
  qp.base.constraint_matrix = std::move(A);
  qp.base.constraint_rhs = std::move(b);
  qp.base.lipschitz = lipschitz;
  const Mat& Mref = qp.M;
  const Vec& qref = qp.q;
  qp.base.objective = [Mref, qref](const Vec& x) {
    return 0.5 * x.dot(Mref * x) + qref.dot(x);
  };
  qp.base.gradient = [Mref, qref](const Vec& x) -> Vec { return Mref * x + qref; };
  return qp;
}

/// The example1 objective written as a quadratic: M = 2 c c^T with
/// c = (m, n, e), q = 0, same constraint row.
inline QuadraticProblem example1_as_qp(double m, double n, double e) {
  if (m == 0.0 || n == 0.0 || e == 0.0)
    throw std::invalid_argument("example1_as_qp: m, n, e must all be nonzero");
  Vec coeff(3);
  coeff << m, n, e;
  Mat M = 2.0 * (coeff * coeff.transpose());
  Mat A(1, 3);
  A << m, -n, e;
  return make_quadratic_problem(std::move(M), Vec::Zero(3), std::move(A),
                                Vec::Zero(1));
}

/// Random equality-constrained QP: M = H^T H with H an n x n standard
/// Gaussian matrix, q and A standard Gaussian, b uniform on [0, 1).
///
/// Draw order is H (row-major), q, A (row-major), b; with a fixed seed the
/// generated data is identical on every call.
inline QuadraticProblem make_random_qp(Eigen::Index m_rows, Eigen::Index n_cols,
                                       std::uint64_t seed) {
  if (m_rows <= 0 || n_cols <= 0)
    throw std::invalid_argument("make_random_qp: dimensions must be positive");
  Rng rng(seed);
  Mat H(n_cols, n_cols);
  for (Eigen::Index i = 0; i < n_cols; ++i)
    for (Eigen::Index j = 0; j < n_cols; ++j) H(i, j) = rng.gaussian();
  // (G + G^T)/2 makes the Gram matrix symmetric to the last bit.
  Mat G = H.transpose() * H;
  Mat M = 0.5 * (G + G.transpose());
  Vec q(n_cols);
  for (Eigen::Index i = 0; i < n_cols; ++i) q(i) = rng.gaussian();
  Mat A(m_rows, n_cols);
  for (Eigen::Index i = 0; i < m_rows; ++i)
    for (Eigen::Index j = 0; j < n_cols; ++j) A(i, j) = rng.gaussian();
  Vec b(m_rows);
  for (Eigen::Index i = 0; i < m_rows; ++i) b(i) = rng.uniform();
  return make_quadratic_problem(std::move(M), std::move(q), std::move(A),
                                std::move(b));
}

namespace detail {

/// Stacked KKT matrix [[M, A^T], [A, 0]] and right-hand side (-q, b).
inline std::pair<Mat, Vec> kkt_system(const QuadraticProblem& qp) {
  const Eigen::Index n = qp.base.dim_primal;
  const Eigen::Index m = qp.base.dim_dual;
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = qp.M;
  if (m > 0) {
    K.topRightCorner(n, m) = qp.base.constraint_matrix.transpose();
    K.bottomLeftCorner(m, n) = qp.base.constraint_matrix;
  }
  Vec rhs(n + m);
  rhs.head(n) = -qp.q;
  rhs.tail(m) = qp.base.constraint_rhs;
  return {std::move(K), std::move(rhs)};
}

inline constexpr double kKktResidualTol = 1e-8;

}  // namespace detail

/// Least-norm primal solution over the KKT solution set, with the
/// minimum-norm least-squares multiplier for A^T lambda = -grad f(x).
///
/// The solution set of M x + q + A^T lambda = 0, A x = b is an affine set;
/// a particular point comes from a rank-revealing least-norm solve and the
/// x-component is then projected to minimal norm along the kernel.
inline std::pair<Vec, Vec> minimal_norm_solution(const QuadraticProblem& qp) {
  const Eigen::Index n = qp.base.dim_primal;
  const Eigen::Index m = qp.base.dim_dual;
  auto [K, rhs] = detail::kkt_system(qp);

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
  Vec z0 = cod.solve(rhs);
  if ((K * z0 - rhs).norm() > 1e-10 * (1.0 + rhs.norm()))
    throw NoSolutionError("minimal_norm_solution: KKT system is inconsistent");

  Vec x_bar = z0.head(n);
  Eigen::FullPivLU<Mat> lu(K);
  if (lu.dimensionOfKernel() > 0) {
    Mat kernel_x = Mat(lu.kernel()).topRows(n);
    // argmin_w ||x0 + kernel_x w|| is a plain least-squares problem.
    Vec w = kernel_x.completeOrthogonalDecomposition().solve(-x_bar);
    x_bar += kernel_x * w;
  }

  Vec grad = qp.M * x_bar + qp.q;
  Vec lambda_bar(0);
  if (m > 0) {
    Mat At = qp.base.constraint_matrix.transpose();
    lambda_bar = At.completeOrthogonalDecomposition().solve(-grad);
  }

  const KktResidual res = kkt_residual(qp.base, x_bar, lambda_bar);
  if (res.stationarity > detail::kKktResidualTol ||
      res.feasibility > detail::kKktResidualTol)
    throw NoSolutionError(
        "minimal_norm_solution: residual exceeds tolerance (stationarity " +
        std::to_string(res.stationarity) + ", feasibility " +
        std::to_string(res.feasibility) + ")");
  return {std::move(x_bar), std::move(lambda_bar)};
}

/// Direct KKT solve for a primal-dual pair, the optimal value, and the
/// minimal-norm pair. Residuals of both pairs are checked against 1e-8.
inline ReferenceSolution solve_reference_qp(const QuadraticProblem& qp) {
  const Eigen::Index n = qp.base.dim_primal;
  const Eigen::Index m = qp.base.dim_dual;
  auto [K, rhs] = detail::kkt_system(qp);

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
  Vec z = cod.solve(rhs);
  if ((K * z - rhs).norm() > 1e-10 * (1.0 + rhs.norm()))
    throw NoSolutionError("solve_reference_qp: KKT system is inconsistent");

  ReferenceSolution ref;
  ref.x_star = z.head(n);
  ref.lambda_star = z.tail(m);
  ref.f_star = qp.base.objective(ref.x_star);
  std::tie(ref.x_bar_star, ref.lambda_bar_star) = minimal_norm_solution(qp);

  const KktResidual res = kkt_residual(qp.base, ref.x_star, ref.lambda_star);
  if (res.stationarity > detail::kKktResidualTol ||
      res.feasibility > detail::kKktResidualTol)
    throw NoSolutionError("solve_reference_qp: residual exceeds tolerance");
  return ref;
}

}  // namespace tikpd
