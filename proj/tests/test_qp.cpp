#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tray/qp.hpp"
#include "tray/trajectory.hpp"

using namespace tray;

namespace {

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

QpProblem empty_rows(int n) {
  QpProblem p;
  p.C.resize(0, n);
  p.lower.resize(0);
  p.upper.resize(0);
  p.A.resize(0, n);
  p.b.resize(0);
  p.var_lower = Eigen::VectorXd::Constant(n, -INFINITY);
  p.var_upper = Eigen::VectorXd::Constant(n, INFINITY);
  return p;
}

}  // namespace

TEST_CASE("equality-constrained QP matches the dense KKT solve") {
  std::mt19937_64 rng(11);
  const int n = 12, m = 4;
  const Eigen::MatrixXd G = test::random_vector(rng, n * n, -1, 1).reshaped(n, n);
  const Eigen::MatrixXd P = G.transpose() * G + Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd A = test::random_vector(rng, m * n, -1, 1).reshaped(m, n);
  const Eigen::VectorXd c = test::random_vector(rng, n, -1, 1), b = test::random_vector(rng, m, -1, 1);

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = P;
  K.topRightCorner(n, m) = A.transpose();
  K.bottomLeftCorner(m, n) = A;
  Eigen::VectorXd rhs(n + m);
  rhs << -c, b;
  const Eigen::VectorXd oracle = K.fullPivLu().solve(rhs).head(n);

  QpProblem p = empty_rows(n);
  p.P = sparse(P);
  p.c = c;
  p.A = sparse(A);
  p.b = b;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Solved);
  CHECK((s.x - oracle).norm() < 1e-7);
}

TEST_CASE("active bounds and inequality rows") {
  // min (x-1)^2 + (y-2)^2  s.t.  x + y = 1, x >= 0.2, x - y <= 0
  QpProblem p = empty_rows(2);
  Eigen::MatrixXd P(2, 2);
  P << 2, 0, 0, 2;
  p.P = sparse(P);
  p.c = Eigen::Vector2d(-2, -4);
  p.A = sparse(Eigen::RowVector2d(1, 1));
  p.b = Eigen::VectorXd::Constant(1, 1.0);
  p.C = sparse(Eigen::RowVector2d(1, -1));
  p.lower = Eigen::VectorXd::Constant(1, -INFINITY);
  p.upper = Eigen::VectorXd::Constant(1, 0.0);
  p.var_lower[0] = 0.2;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Solved);
  CHECK(s.x[0] == doctest::Approx(0.2).epsilon(1e-7));
  CHECK(s.x[1] == doctest::Approx(0.8).epsilon(1e-7));
}

TEST_CASE("fixed variables stay put") {
  QpProblem p = empty_rows(3);
  p.P = sparse(Eigen::MatrixXd::Identity(3, 3));
  p.c = Eigen::Vector3d(-1, -1, -1);
  p.var_lower[1] = p.var_upper[1] = -0.5;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Solved);
  CHECK(s.x[1] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("trajectory rescaling keeps the integration rows") {
  std::mt19937_64 rng(12);
  Trajectory t = Trajectory::constant(test::home(), 10, 0.1);
  for (int i = 0; i < 10; ++i) {
    JointState& a = t.points[i];
    JointState& b = t.points[i + 1];
    a.qdd = test::random_vector(rng, 6, -1, 1);
    b.qd = a.qd + t.t_step * a.qdd;
    b.q = a.q + t.t_step * a.qd + 0.5 * t.t_step * t.t_step * a.qdd;
  }
  CHECK(t.max_integration_error() < 1e-14);
  const Trajectory r = t.rescaled(0.037);
  CHECK(r.max_integration_error() < 1e-13);
  CHECK(r.duration() == doctest::Approx(0.37));
  CHECK((r.points[7].q - t.points[7].q).norm() == 0.0);
  // Held acceleration between waypoints.
  const JointState mid = t.state_at(0.25);
  const JointState& left = t.points[2];
  CHECK((mid.q - (left.q + 0.05 * left.qd + 0.5 * 0.05 * 0.05 * left.qdd)).norm() < 1e-14);
  CHECK((t.state_at(5.0).q - t.points.back().q).norm() == 0.0);
}

TEST_CASE("limit ratio of a resting trajectory is zero") {
  CHECK(Trajectory::constant(test::home(), 4, 0.2).max_limit_ratio(test::ur5e()) < 1.0);
}
