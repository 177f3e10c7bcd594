#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace tray {

// Convex QP
//   minimize    1/2 x'Px + c'x
//   subject to  A x = b
//               lower <= C x <= upper
//               var_lower <= x <= var_upper
// Infinite bounds are allowed; a variable with equal bounds is fixed.
struct QpProblem {
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> C;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd var_lower;
  Eigen::VectorXd var_upper;

  int num_vars() const { return static_cast<int>(c.size()); }
};

enum class QpStatus { Solved, MaxIterations, NumericalError };

struct QpSettings {
  int max_iterations = 80;
  // Residuals are accepted below tolerance * (1 + size of their terms).
  double tolerance = 1e-9;
  // Duality gap relative to max(1, |x'Px|, |c'x|).
  double gap_tolerance = 1e-9;
  double regularization = 1e-9;  // on the equilibrated KKT system
  int refinement_steps = 2;
  int scaling_passes = 10;
};

struct QpSolution {
  QpStatus status = QpStatus::NumericalError;
  Eigen::VectorXd x;
  int iterations = 0;
  double equality_residual = 0.0;
  double inequality_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
};

// Primal-dual interior point method (Mehrotra predictor-corrector) on the
// sparse quasi-definite KKT system.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

}  // namespace tray
