#include "tray/planner.hpp"

#include <unsupported/Eigen/AutoDiff>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tray/kinematics.hpp"
#include "tray/qp.hpp"

namespace tray {

namespace {

using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
using ADVec = Eigen::Matrix<AD, Eigen::Dynamic, 1>;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Margin and contact pressure of one object at one sampled state, with
// gradients w.r.t. the owning waypoint's (q, q̇, q̈).
struct SampleRow {
  double margin = 0.0;
  Eigen::VectorXd margin_grad;
  double normal = 0.0;  // a.n
  Eigen::VectorXd normal_grad;
};

// State at time tau after waypoint `p` under the segment's constant
// acceleration, differentiated w.r.t. the waypoint variables.
std::vector<SampleRow> evaluate_sample(const PlanRequest& request, const JointState& p, double tau) {
  const int n = request.model.dof();
  const int nv = 3 * n;
  ADVec q(n), qd(n), qdd(n);
  for (int j = 0; j < n; ++j) {
    q[j] = AD(p.q[j], nv, j);
    qd[j] = AD(p.qd[j], nv, n + j);
    qdd[j] = AD(p.qdd[j], nv, 2 * n + j);
  }
  if (tau != 0.0) {
    const ADVec q_tau = q + qd * AD(tau) + qdd * AD(0.5 * tau * tau);
    const ADVec qd_tau = qd + qdd * AD(tau);
    q = q_tau;
    qd = qd_tau;
  }
  const auto motion = kin::propagate<AD>(request.model, q, qd, qdd);
  const kin::Vec3<AD> normal = motion.rotation.col(2);

  const FrictionSpec& spec = request.friction;
  AD alpha(1.0, Eigen::VectorXd::Zero(nv));
  if (spec.type == FrictionType::Learned) {
    using std::sqrt;
    const AD speed = sqrt(motion.velocity.squaredNorm() + AD(kTangentialEpsilon * kTangentialEpsilon));
    const double raw = spec.alpha_model->value(speed.value());
    if (raw <= spec.alpha_floor) {
      alpha = AD(spec.alpha_floor, Eigen::VectorXd::Zero(nv));
    } else if (raw >= spec.alpha_ceiling) {
      alpha = AD(spec.alpha_ceiling, Eigen::VectorXd::Zero(nv));
    } else {
      alpha = AD(raw, spec.alpha_model->slope(speed.value()) * speed.derivatives());
    }
  }

  std::vector<SampleRow> rows;
  rows.reserve(request.objects.size());
  for (const ObjectSpec& obj : request.objects) {
    const kin::Vec3<AD> a = kin::point_specific_force<AD>(request.model, motion, obj.centroid_offset);
    const AD mu_eff = alpha * AD(spec.coefficient_for(obj));
    const AD margin = detail::friction_margin<AD>(a, normal, mu_eff);
    const AD an = a.dot(normal);
    SampleRow row;
    row.margin = margin.value();
    row.margin_grad = margin.derivatives();
    if (row.margin_grad.size() != nv) row.margin_grad = Eigen::VectorXd::Zero(nv);
    row.normal = an.value();
    row.normal_grad = an.derivatives();
    if (row.normal_grad.size() != nv) row.normal_grad = Eigen::VectorXd::Zero(nv);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Fractions of a segment at which friction rows are imposed.
std::vector<double> segment_fractions(int substeps) {
  std::vector<double> f;
  for (int k = 0; k <= substeps; ++k) f.push_back(static_cast<double>(k) / substeps);
  return f;
}

class TrajectoryQp {
 public:
  TrajectoryQp(const PlanRequest& request, const Endpoints& endpoints, double t_step)
      : request_(request), endpoints_(endpoints), t_(t_step), n_(request.model.dof()),
        horizon_(request.horizon), num_state_vars_(3 * n_ * (horizon_ + 1)) {
    build_static();
  }

  int num_state_vars() const { return num_state_vars_; }
  int index(int waypoint, int kind, int joint) const { return waypoint * 3 * n_ + kind * n_ + joint; }

  Eigen::VectorXd pack(const Trajectory& traj) const {
    Eigen::VectorXd x(num_state_vars_);
    for (int i = 0; i <= horizon_; ++i) {
      x.segment(index(i, 0, 0), n_) = traj.points[i].q;
      x.segment(index(i, 1, 0), n_) = traj.points[i].qd;
      x.segment(index(i, 2, 0), n_) = traj.points[i].qdd;
    }
    return x;
  }

  Trajectory unpack(const Eigen::VectorXd& x) const {
    Trajectory traj;
    traj.t_step = t_;
    for (int i = 0; i <= horizon_; ++i) {
      traj.points.push_back({x.segment(index(i, 0, 0), n_), x.segment(index(i, 1, 0), n_),
                             x.segment(index(i, 2, 0), n_)});
    }
    return traj;
  }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.head(num_state_vars_).dot(P_ * x.head(num_state_vars_));
  }

  // Largest violation of the linear rows (integration, bounds, jerk).
  double linear_violation(const Eigen::VectorXd& x) const {
    double worst = (A_ * x - b_).cwiseAbs().maxCoeff();
    const Eigen::VectorXd cx = jerk_rows_ * x;
    for (Eigen::Index r = 0; r < cx.size(); ++r) {
      worst = std::max({worst, jerk_lower_[r] - cx[r], cx[r] - jerk_upper_[r]});
    }
    for (int k = 0; k < num_state_vars_; ++k) {
      worst = std::max({worst, var_lower_[k] - x[k], x[k] - var_upper_[k]});
    }
    return worst;
  }

  struct FrictionRow {
    int waypoint;
    double tau;
    int object;
    double value;          // margin, or a.n for a contact row
    Eigen::VectorXd grad;  // w.r.t. waypoint variables
    bool contact;
  };

  std::vector<FrictionRow> linearize(const Eigen::VectorXd& x) const {
    std::vector<FrictionRow> rows;
    if (request_.friction.type == FrictionType::None || request_.objects.empty()) return rows;
    const Trajectory traj = unpack(x);
    const auto fractions = segment_fractions(request_.settings.segment_substeps);
    for (int i = 0; i <= horizon_; ++i) {
      for (double f : fractions) {
        if (i == horizon_ && f > 0.0) break;
        const double tau = f * t_;
        const auto samples = evaluate_sample(request_, traj.points[i], tau);
        for (std::size_t k = 0; k < samples.size(); ++k) {
          const SampleRow& s = samples[k];
          const bool contact = !(s.normal > 0.0);
          rows.push_back({i, tau, static_cast<int>(k), contact ? s.normal : s.margin,
                          contact ? s.normal_grad : s.margin_grad, contact});
        }
      }
    }
    return rows;
  }

  // Per-sample margin values (formula value even without contact).
  std::vector<double> sample_margins(const Eigen::VectorXd& x) const {
    std::vector<double> out;
    if (request_.friction.type == FrictionType::None || request_.objects.empty()) return out;
    const Trajectory traj = unpack(x);
    const auto fractions = segment_fractions(request_.settings.segment_substeps);
    for (int i = 0; i <= horizon_; ++i) {
      for (double f : fractions) {
        if (i == horizon_ && f > 0.0) break;
        const JointState p = traj.points[i];
        const double tau = f * t_;
        const JointState s{p.q + tau * p.qd + 0.5 * tau * tau * p.qdd, p.qd + tau * p.qdd, p.qdd};
        const Eigen::VectorXd m =
            margin_for_objects_unchecked(request_.model, s, request_.objects, request_.friction);
        for (Eigen::Index k = 0; k < m.size(); ++k) out.push_back(m[k]);
      }
    }
    return out;
  }

  double violation_sum(const Eigen::VectorXd& x, double backoff) const {
    double sum = 0.0;
    for (double m : sample_margins(x)) sum += std::max(0.0, backoff - m);
    return sum;
  }

  // QP over (state vars, one slack per friction row). A negative trust radius
  // disables the trust region.
  QpProblem build(const Eigen::VectorXd& x_k, const std::vector<FrictionRow>& rows, double penalty,
                  double trust) const {
    const int R = static_cast<int>(rows.size());
    const int nv = num_state_vars_ + R;
    const int block = 3 * n_;
    const double backoff = request_.settings.margin_backoff;
    const double eps_n = request_.settings.contact_epsilon;

    QpProblem qp;
    qp.P.resize(nv, nv);
    {
      std::vector<Triplet> trip;
      for (int k = 0; k < P_.outerSize(); ++k) {
        for (SpMat::InnerIterator it(P_, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
      }
      qp.P.setFromTriplets(trip.begin(), trip.end());
    }
    qp.c = Eigen::VectorXd::Zero(nv);
    qp.c.tail(R).setConstant(penalty);

    qp.A.resize(A_.rows(), nv);
    {
      std::vector<Triplet> trip;
      for (int k = 0; k < A_.outerSize(); ++k) {
        for (SpMat::InnerIterator it(A_, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
      }
      qp.A.setFromTriplets(trip.begin(), trip.end());
    }
    qp.b = b_;

    const int jr = static_cast<int>(jerk_rows_.rows());
    qp.C.resize(jr + R, nv);
    qp.lower.resize(jr + R);
    qp.upper.resize(jr + R);
    {
      std::vector<Triplet> trip;
      for (int k = 0; k < jerk_rows_.outerSize(); ++k) {
        for (SpMat::InnerIterator it(jerk_rows_, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
      }
      qp.lower.head(jr) = jerk_lower_;
      qp.upper.head(jr) = jerk_upper_;
      for (int r = 0; r < R; ++r) {
        const FrictionRow& row = rows[r];
        // Sampled state is linear in the waypoint variables; the row
        // gradient is already w.r.t. those variables.
        const int base = row.waypoint * block;
        double lin = 0.0;
        for (int k = 0; k < block; ++k) {
          if (row.grad[k] != 0.0) trip.emplace_back(jr + r, base + k, row.grad[k]);
          lin += row.grad[k] * x_k[base + k];
        }
        trip.emplace_back(jr + r, num_state_vars_ + r, 1.0);
        const double target = row.contact ? eps_n : backoff;
        // value + grad.(x - x_k) + s >= target
        qp.lower[jr + r] = target - row.value + lin;
        qp.upper[jr + r] = kInf;
      }
      qp.C.setFromTriplets(trip.begin(), trip.end());
    }

    qp.var_lower.resize(nv);
    qp.var_upper.resize(nv);
    qp.var_lower.head(num_state_vars_) = var_lower_;
    qp.var_upper.head(num_state_vars_) = var_upper_;
    qp.var_lower.tail(R).setZero();
    qp.var_upper.tail(R).setConstant(kInf);
    if (trust > 0.0) {
      // Radius in rad on q; q̇ and q̈ get the same fraction of their limits.
      const double scale_q = request_.settings.trust_derivative_scale;
      for (int i = 1; i < horizon_; ++i) {
        for (int j = 0; j < n_; ++j) {
          const JointLimit& lim = request_.model.joint_limits[j];
          const double radius[3] = {trust, scale_q * trust * lim.vel, scale_q * trust * lim.acc};
          for (int kind = 0; kind < 3; ++kind) {
            if (radius[kind] <= 0.0) continue;
            const int k = index(i, kind, j);
            const double lo = std::max(var_lower_[k], x_k[k] - radius[kind]);
            const double hi = std::min(var_upper_[k], x_k[k] + radius[kind]);
            qp.var_lower[k] = std::min(lo, hi);
            qp.var_upper[k] = std::max(lo, hi);
          }
        }
      }
    }
    return qp;
  }

  // Smallest trust radius that contains the step `dx`.
  double trust_norm(const Eigen::VectorXd& dx) const {
    const double scale = request_.settings.trust_derivative_scale;
    double r = 0.0;
    for (int i = 1; i < horizon_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const JointLimit& lim = request_.model.joint_limits[j];
        r = std::max(r, std::abs(dx[index(i, 0, j)]));
        if (scale > 0.0) {
          r = std::max({r, std::abs(dx[index(i, 1, j)]) / (scale * lim.vel),
                        std::abs(dx[index(i, 2, j)]) / (scale * lim.acc)});
        }
      }
    }
    return r;
  }

  // Minimum-jerk QP over the linear rows only.
  QpProblem build_linear() const { return build(Eigen::VectorXd::Zero(num_state_vars_), {}, 0.0, -1.0); }

  // Closest point (in time-scaled units) to `target` satisfying the linear rows.
  QpProblem build_projection(const Eigen::VectorXd& target) const {
    QpProblem qp = build_linear();
    std::vector<Triplet> trip;
    qp.c = Eigen::VectorXd::Zero(num_state_vars_);
    const double scale[3] = {1.0, t_ * t_, t_ * t_ * t_ * t_};
    for (int i = 0; i <= horizon_; ++i) {
      for (int kind = 0; kind < 3; ++kind) {
        for (int j = 0; j < n_; ++j) {
          const int k = index(i, kind, j);
          trip.emplace_back(k, k, scale[kind]);
          qp.c[k] = -scale[kind] * target[k];
        }
      }
    }
    qp.P.setFromTriplets(trip.begin(), trip.end());
    return qp;
  }

 private:
  void build_static() {
    const int N = num_state_vars_;
    const double t = t_;
    // Objective: sum_i |(q̈_{i+1} - q̈_i) / t|^2 = 1/2 x'Px.
    {
      std::vector<Triplet> trip;
      const double w = 2.0 / (t * t);
      for (int i = 0; i < horizon_; ++i) {
        for (int j = 0; j < n_; ++j) {
          const int a = index(i, 2, j);
          const int b = index(i + 1, 2, j);
          trip.emplace_back(a, a, w);
          trip.emplace_back(b, b, w);
          trip.emplace_back(a, b, -w);
          trip.emplace_back(b, a, -w);
        }
      }
      P_.resize(N, N);
      P_.setFromTriplets(trip.begin(), trip.end());
    }
    // Integration rows.
    {
      std::vector<Triplet> trip;
      int row = 0;
      for (int i = 0; i < horizon_; ++i) {
        for (int j = 0; j < n_; ++j) {
          trip.emplace_back(row, index(i + 1, 0, j), 1.0);
          trip.emplace_back(row, index(i, 0, j), -1.0);
          trip.emplace_back(row, index(i, 1, j), -t);
          trip.emplace_back(row, index(i, 2, j), -0.5 * t * t);
          ++row;
          trip.emplace_back(row, index(i + 1, 1, j), 1.0);
          trip.emplace_back(row, index(i, 1, j), -1.0);
          trip.emplace_back(row, index(i, 2, j), -t);
          ++row;
        }
      }
      A_.resize(row, N);
      A_.setFromTriplets(trip.begin(), trip.end());
      b_ = Eigen::VectorXd::Zero(row);
    }
    // Jerk rows.
    {
      std::vector<Triplet> trip;
      jerk_lower_.resize(horizon_ * n_);
      jerk_upper_.resize(horizon_ * n_);
      int row = 0;
      for (int i = 0; i < horizon_; ++i) {
        for (int j = 0; j < n_; ++j) {
          trip.emplace_back(row, index(i + 1, 2, j), 1.0);
          trip.emplace_back(row, index(i, 2, j), -1.0);
          const double lim = request_.model.joint_limits[j].jerk * t;
          jerk_lower_[row] = -lim;
          jerk_upper_[row] = lim;
          ++row;
        }
      }
      jerk_rows_.resize(row, N);
      jerk_rows_.setFromTriplets(trip.begin(), trip.end());
    }
    // Bounds, with rest-to-rest endpoints fixed.
    var_lower_.resize(N);
    var_upper_.resize(N);
    for (int i = 0; i <= horizon_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const JointLimit& l = request_.model.joint_limits[j];
        var_lower_[index(i, 0, j)] = l.pos_min;
        var_upper_[index(i, 0, j)] = l.pos_max;
        var_lower_[index(i, 1, j)] = -l.vel;
        var_upper_[index(i, 1, j)] = l.vel;
        var_lower_[index(i, 2, j)] = -l.acc;
        var_upper_[index(i, 2, j)] = l.acc;
      }
    }
    for (int j = 0; j < n_; ++j) {
      for (int end : {0, horizon_}) {
        const double q = end == 0 ? endpoints_.q_start[j] : endpoints_.q_goal[j];
        var_lower_[index(end, 0, j)] = var_upper_[index(end, 0, j)] = q;
        var_lower_[index(end, 1, j)] = var_upper_[index(end, 1, j)] = 0.0;
        var_lower_[index(end, 2, j)] = var_upper_[index(end, 2, j)] = 0.0;
      }
    }
  }

  const PlanRequest& request_;
  const Endpoints& endpoints_;
  double t_;
  int n_;
  int horizon_;
  int num_state_vars_;
  SpMat P_;
  SpMat A_;
  Eigen::VectorXd b_;
  SpMat jerk_rows_;
  Eigen::VectorXd jerk_lower_;
  Eigen::VectorXd jerk_upper_;
  Eigen::VectorXd var_lower_;
  Eigen::VectorXd var_upper_;
};

SqpReport sqp_solve_impl(const PlanRequest& request, const Endpoints& endpoints, double t_step,
                         const Trajectory* warm_start) {
  if (!(t_step > 0.0)) throw InvalidArgument("t_step must be positive");
  const PlannerSettings& cfg = request.settings;
  TrajectoryQp builder(request, endpoints, t_step);
  const int N = builder.num_state_vars();
  SqpReport report;

  // Starting point satisfying every linear row.
  Eigen::VectorXd x;
  {
    QpProblem qp;
    if (warm_start && warm_start->horizon() == request.horizon && warm_start->dof() == request.model.dof()) {
      const Trajectory warm = std::abs(warm_start->t_step - t_step) > 0.0
                                  ? warm_start->rescaled(t_step)
                                  : *warm_start;
      x = builder.pack(warm);
      if (builder.linear_violation(x) <= 1e-9) {
        qp.c.resize(0);
      } else {
        qp = builder.build_projection(x);
      }
    } else {
      qp = builder.build_linear();
    }
    if (qp.c.size() > 0) {
      const QpSolution sol = solve_qp(qp);
      ++report.iterations;
      if (sol.status != QpStatus::Solved) {
        report.trajectory = builder.unpack(sol.x.head(N));
        return report;
      }
      x = sol.x.head(N);
    }
  }

  double penalty = cfg.penalty_initial;
  double trust = cfg.trust_initial;
  const bool has_friction = request.friction.type != FrictionType::None && !request.objects.empty();

  auto merit = [&](const Eigen::VectorXd& v, double weight) {
    return builder.objective(v) + weight * builder.violation_sum(v, 0.0);
  };
  auto max_violation = [&](const Eigen::VectorXd& v) {
    double worst = 0.0;
    for (double m : builder.sample_margins(v)) worst = std::max(worst, -m);
    return worst;
  };

  if (!has_friction) {
    report.success = true;
    report.trajectory = builder.unpack(x);
    report.objective = builder.objective(x);
    return report;
  }

  double current_merit = merit(x, penalty);
  while (report.iterations < cfg.max_sqp_iterations) {
    const auto rows = builder.linearize(x);
    const QpProblem qp = builder.build(x, rows, penalty, trust);
    const QpSolution sol = solve_qp(qp);
    ++report.iterations;

    bool converged = false;
    if (sol.status != QpStatus::Solved) {
      trust *= cfg.trust_shrink;
      converged = trust < cfg.trust_min;
    } else {
      const Eigen::VectorXd x_new = sol.x.head(N);
      // Linear model of the merit. Rows aim at the backoff; the merit only
      // charges margins below zero.
      double model_violation = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.contact) {
          model_violation += sol.x[N + r];
          continue;
        }
        const int base = row.waypoint * 3 * request.model.dof();
        const double lin = row.value + row.grad.dot(x_new.segment(base, row.grad.size()) - x.segment(base, row.grad.size()));
        model_violation += std::max(0.0, -lin);
      }
      const double model_merit = builder.objective(x_new) + penalty * model_violation;
      const double predicted = current_merit - model_merit;
      const double scale = 1.0 + std::abs(current_merit);
      if (predicted <= cfg.convergence_tolerance * scale) {
        converged = true;
      } else {
        const double new_merit = merit(x_new, penalty);
        const double actual = current_merit - new_merit;
        if (actual > cfg.accept_ratio * predicted) {
          x = x_new;
          current_merit = new_merit;
          report.merit_history.emplace_back(penalty, new_merit);
          trust = std::min(trust * cfg.trust_grow, cfg.trust_max);
          converged = actual <= cfg.convergence_tolerance * scale;
        } else {
          trust = cfg.trust_shrink * std::min(trust, builder.trust_norm(x_new - x));
          converged = trust < cfg.trust_min;
        }
      }
    }

    if (converged) {
      const double viol = max_violation(x);
      if (viol <= cfg.margin_tolerance) {
        report.success = true;
        break;
      }
      if (penalty >= cfg.penalty_max) break;
      penalty = std::min(penalty * cfg.penalty_growth, cfg.penalty_max);
      trust = std::max(trust, cfg.trust_initial);
      current_merit = merit(x, penalty);
    }
  }

  report.trajectory = builder.unpack(x);
  report.max_violation = max_violation(x);
  report.objective = builder.objective(x);
  if (!report.success && report.max_violation <= cfg.margin_tolerance &&
      report.iterations >= cfg.max_sqp_iterations) {
    // Feasible but still improving when the budget ran out.
    report.success = true;
  }
  return report;
}

}  // namespace

void PlanRequest::validate() const {
  model.validate();
  if (horizon < 2) throw InvalidArgument("horizon H must be >= 2");
  if (!(t_step_init > t_step_resolution && t_step_resolution > 0.0)) {
    throw InvalidArgument("need t_step_init > t_step_resolution > 0");
  }
  for (const auto& obj : objects) obj.validate();
  friction.validate();
  if (friction.type != FrictionType::None && objects.empty()) {
    throw InvalidArgument("friction-constrained request has no objects");
  }
  if (settings.segment_substeps < 1) throw InvalidArgument("segment_substeps must be >= 1");
}

const char* plan_status_name(PlanStatus status) {
  return status == PlanStatus::Optimal ? "optimal" : "infeasible";
}

Endpoints solve_endpoints(const PlanRequest& request) {
  const int n = request.model.dof();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  Endpoints e;
  e.q_start = inverse_kinematics(request.model, request.g_start, request.seed_start.value_or(zero));
  e.q_goal = inverse_kinematics(request.model, request.g_goal,
                                request.seed_goal.value_or(request.seed_start.value_or(zero)));
  return e;
}

SqpReport sqp_solve(const PlanRequest& request, double t_step, const Trajectory* warm_start) {
  request.validate();
  const Endpoints endpoints = solve_endpoints(request);
  return sqp_solve_impl(request, endpoints, t_step, warm_start);
}

std::vector<LinearizedRow> linearize_constraint(const PlanRequest& request, const Trajectory& trajectory,
                                                int waypoint) {
  if (waypoint < 0 || waypoint > trajectory.horizon()) throw OutOfRange("waypoint index out of range");
  const JointState& p = trajectory.points[waypoint];
  const int n = request.model.dof();
  Eigen::VectorXd x_i(3 * n);
  x_i << p.q, p.qd, p.qdd;
  std::vector<LinearizedRow> out;
  for (const SampleRow& s : evaluate_sample(request, p, 0.0)) {
    LinearizedRow row;
    row.contact_fallback = !(s.normal > 0.0);
    if (row.contact_fallback) {
      // g = eps_n - a.n <= 0
      row.jacobian = -s.normal_grad;
      row.value = request.settings.contact_epsilon - s.normal;
    } else {
      row.jacobian = -s.margin_grad;
      row.value = -s.margin;
    }
    row.rhs = row.jacobian.dot(x_i) - row.value;
    out.push_back(std::move(row));
  }
  return out;
}

BisectionResult bisect_time_step(double t_init, double resolution, double t_max,
                                 std::optional<double> t_floor, const StepSolver& solve) {
  BisectionResult out;
  double lower = 0.0;
  if (t_floor) {
    lower = *t_floor;
    ++out.solves;
    if (auto traj = solve(*t_floor, nullptr)) {
      out.found = true;
      out.t_ok = *t_floor;
      out.t_fail = *t_floor;
      out.trajectory = std::move(traj);
      return out;
    }
  }
  double t = t_init > lower ? t_init : 2.0 * lower;
  std::optional<Trajectory> best;
  while (true) {
    ++out.solves;
    best = solve(t, nullptr);
    if (best) break;
    lower = t;
    t *= 2.0;
    if (t > t_max) {
      out.t_fail = lower;
      return out;
    }
  }
  double t_ok = t;
  double t_fail = lower;
  while (t_ok - t_fail >= resolution) {
    const double mid = 0.5 * (t_ok + t_fail);
    const Trajectory warm = best->rescaled(mid);
    ++out.solves;
    if (auto traj = solve(mid, &warm)) {
      t_ok = mid;
      best = std::move(traj);
    } else {
      t_fail = mid;
    }
  }
  out.found = true;
  out.t_ok = t_ok;
  out.t_fail = t_fail;
  out.trajectory = std::move(best);
  return out;
}

Eigen::MatrixXd replay_margins(const PlanRequest& request, const Trajectory& trajectory) {
  Eigen::MatrixXd margins(trajectory.points.size(), request.objects.size());
  if (request.objects.empty()) return margins;
  for (std::size_t i = 0; i < trajectory.points.size(); ++i) {
    margins.row(i) =
        margin_for_objects_unchecked(request.model, trajectory.points[i], request.objects, request.friction)
            .transpose();
  }
  return margins;
}

PlanResult plan_time_optimal(const PlanRequest& request) {
  request.validate();
  const Endpoints endpoints = solve_endpoints(request);
  PlanResult result;
  int last_iterations = 0;
  const StepSolver solver = [&](double t, const Trajectory* warm) -> std::optional<Trajectory> {
    SqpReport rep = sqp_solve_impl(request, endpoints, t, warm);
    result.total_sqp_iterations += rep.iterations;
    if (!rep.success) return std::nullopt;
    last_iterations = rep.iterations;
    return std::move(rep.trajectory);
  };
  const BisectionResult search = bisect_time_step(request.t_step_init, request.t_step_resolution,
                                                  request.settings.t_max, request.t_step_floor, solver);
  result.solves = search.solves;
  if (!search.found) {
    result.status = PlanStatus::Infeasible;
    return result;
  }
  result.status = PlanStatus::Optimal;
  result.trajectory = *search.trajectory;
  result.duration = result.trajectory.duration();
  result.margins = replay_margins(request, result.trajectory);
  result.sqp_iterations = last_iterations;
  return result;
}

}  // namespace tray
