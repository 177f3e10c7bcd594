#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tray/constraints.hpp"
#include "tray/errors.hpp"
#include "tray/io.hpp"
#include "tray/planner.hpp"

using namespace tray;

namespace {

PlanRequest request(const char* friction) {
  nlohmann::json j = io::read_json_file(TRAY_CONFIG_DIR "/plan_request.json");
  j["friction"] = {{"type", friction}, {"mu_s", 0.21}};
  return io::plan_request_from_json(j, TRAY_CONFIG_DIR);
}

// Rest-to-rest minimum-jerk trajectory of one joint from the dense KKT system.
Eigen::VectorXd min_jerk_joint(double q0, double q1, int H, double t) {
  const int N = 3 * (H + 1);
  auto idx = [](int i, int kind) { return 3 * i + kind; };
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < H; ++i) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(N);
    d[idx(i + 1, 2)] = 1.0 / t;
    d[idx(i, 2)] = -1.0 / t;
    P += 2.0 * d * d.transpose();
  }
  std::vector<std::pair<Eigen::VectorXd, double>> rows;
  for (int i = 0; i < H; ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
    r[idx(i + 1, 0)] = 1;
    r[idx(i, 0)] = -1;
    r[idx(i, 1)] = -t;
    r[idx(i, 2)] = -0.5 * t * t;
    rows.push_back({r, 0.0});
    r.setZero();
    r[idx(i + 1, 1)] = 1;
    r[idx(i, 1)] = -1;
    r[idx(i, 2)] = -t;
    rows.push_back({r, 0.0});
  }
  for (int kind = 0; kind < 3; ++kind) {
    for (int end : {0, H}) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
      r[idx(end, kind)] = 1;
      rows.push_back({r, kind == 0 ? (end == 0 ? q0 : q1) : 0.0});
    }
  }
  const int M = static_cast<int>(rows.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N + M, N + M);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N + M);
  K.topLeftCorner(N, N) = P;
  for (int k = 0; k < M; ++k) {
    K.block(N + k, 0, 1, N) = rows[k].first.transpose();
    K.block(0, N + k, N, 1) = rows[k].first;
    rhs[N + k] = rows[k].second;
  }
  return K.fullPivLu().solve(rhs).head(N);
}

}  // namespace

TEST_CASE("unconstrained SQP at fixed step is the minimum-jerk KKT solution") {
  PlanRequest req = request("none");
  req.horizon = 16;
  const Endpoints ends = solve_endpoints(req);
  const double t = 0.3;
  const SqpReport rep = sqp_solve(req, t);
  REQUIRE(rep.success);
  for (int j = 0; j < 6; ++j) {
    const Eigen::VectorXd x = min_jerk_joint(ends.q_start[j], ends.q_goal[j], req.horizon, t);
    for (int i = 0; i <= req.horizon; ++i) {
      CHECK(rep.trajectory.points[i].q[j] == doctest::Approx(x[3 * i]).epsilon(1e-6));
      CHECK(std::abs(rep.trajectory.points[i].qdd[j] - x[3 * i + 2]) < 1e-6);
    }
  }
}

TEST_CASE("linearized rows match finite differences of the margin") {
  PlanRequest req = request("coulomb");
  req.objects.push_back(req.objects.front());
  req.objects.back().centroid_offset = {0.05, 0.01, 0.0};
  Trajectory traj = Trajectory::constant(solve_endpoints(req).q_start, 4, 0.2);
  JointState& s = traj.points[2];
  s.qd.setConstant(0.4);
  s.qdd.setConstant(-0.8);
  const auto rows = linearize_constraint(req, traj, 2);
  REQUIRE(rows.size() == 2);
  const double h = 1e-6;
  for (int k = 0; k < 18; ++k) {
    auto perturbed = [&](double delta) {
      JointState p = s;
      Eigen::VectorXd* part[3] = {&p.q, &p.qd, &p.qdd};
      (*part[k / 6])[k % 6] += delta;
      return margin_for_objects(req.model, p, req.objects, req.friction);
    };
    const Eigen::VectorXd fd = -(perturbed(h) - perturbed(-h)) / (2 * h);
    for (int o = 0; o < 2; ++o) CHECK(rows[o].jacobian[k] == doctest::Approx(fd[o]).epsilon(1e-5).scale(1.0));
  }
  const Eigen::VectorXd m = margin_for_objects(req.model, s, req.objects, req.friction);
  CHECK(rows[0].value == doctest::Approx(-m[0]));
}

TEST_CASE("bisection brackets a mock feasibility boundary") {
  const double boundary = 0.123456789;
  auto solver = [&](double t, const Trajectory*) -> std::optional<Trajectory> {
    if (t < boundary) return std::nullopt;
    return Trajectory::constant(Eigen::VectorXd::Zero(2), 3, t);
  };
  for (double t_init : {0.05, 0.25, 1.0}) {
    const BisectionResult r = bisect_time_step(t_init, 5e-5, 4.0, std::nullopt, solver);
    REQUIRE(r.found);
    CHECK(r.t_ok >= boundary);
    CHECK(r.t_ok - boundary <= 5e-5);
    CHECK(r.t_ok - r.t_fail <= 5e-5);
    CHECK(r.trajectory->t_step == r.t_ok);
  }
  const BisectionResult none = bisect_time_step(0.05, 5e-5, 0.09, std::nullopt, solver);
  CHECK_FALSE(none.found);
  const BisectionResult floor = bisect_time_step(0.25, 5e-5, 4.0, 0.2, solver);
  CHECK(floor.found);
  CHECK(floor.t_ok == 0.2);
  CHECK(floor.solves == 1);
  const BisectionResult low_floor = bisect_time_step(0.25, 5e-5, 4.0, 0.1, solver);
  CHECK(low_floor.t_ok - boundary <= 5e-5);
}

TEST_CASE("unconstrained time-optimal plan respects the joint limits") {
  PlanRequest req = request("none");
  const PlanResult plan = plan_time_optimal(req);
  REQUIRE(plan.status == PlanStatus::Optimal);
  CHECK(plan.trajectory.max_integration_error() < 1e-8);
  CHECK(plan.trajectory.max_limit_ratio(req.model) <= 1.0 + 1e-6);
  CHECK(plan.duration == doctest::Approx(plan.trajectory.duration()));
  // One resolution step shorter must be infeasible for the same solver.
  CHECK_FALSE(sqp_solve(req, plan.trajectory.t_step - 2 * req.t_step_resolution).success);
}

TEST_CASE("request validation") {
  PlanRequest req = request("coulomb");
  req.horizon = 1;
  CHECK_THROWS_AS(req.validate(), InvalidArgument);
}
