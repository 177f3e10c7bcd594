#include "tray/qp.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tray/errors.hpp"

namespace tray {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest step in [0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

struct StandardForm {
  SpMat P;
  Eigen::VectorXd c;
  SpMat A;  // equalities including fixed variables
  Eigen::VectorXd b;
  SpMat G;  // G x <= h
  Eigen::VectorXd h;
};

StandardForm to_standard_form(const QpProblem& qp) {
  const int n = qp.num_vars();
  StandardForm sf;
  sf.P = qp.P;
  sf.c = qp.c;

  std::vector<Triplet> a_trip;
  std::vector<double> b_vals;
  for (int k = 0; k < qp.A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(qp.A, k); it; ++it) a_trip.emplace_back(it.row(), it.col(), it.value());
  }
  int eq_rows = static_cast<int>(qp.A.rows());
  for (int i = 0; i < eq_rows; ++i) b_vals.push_back(qp.b[i]);

  std::vector<Triplet> g_trip;
  std::vector<double> h_vals;
  int g_rows = 0;

  const Eigen::SparseMatrix<double, Eigen::RowMajor> c_rows = qp.C;
  using RowIt = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
  for (int r = 0; r < c_rows.rows(); ++r) {
    const double lo = qp.lower[r];
    const double hi = qp.upper[r];
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 0.0) {
      for (RowIt it(c_rows, r); it; ++it) a_trip.emplace_back(eq_rows, it.col(), it.value());
      b_vals.push_back(0.5 * (lo + hi));
      ++eq_rows;
      continue;
    }
    if (std::isfinite(hi)) {
      for (RowIt it(c_rows, r); it; ++it) g_trip.emplace_back(g_rows, it.col(), it.value());
      h_vals.push_back(hi);
      ++g_rows;
    }
    if (std::isfinite(lo)) {
      for (RowIt it(c_rows, r); it; ++it) g_trip.emplace_back(g_rows, it.col(), -it.value());
      h_vals.push_back(-lo);
      ++g_rows;
    }
  }
  for (int j = 0; j < n; ++j) {
    const double lo = qp.var_lower[j];
    const double hi = qp.var_upper[j];
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 0.0) {
      a_trip.emplace_back(eq_rows, j, 1.0);
      b_vals.push_back(0.5 * (lo + hi));
      ++eq_rows;
      continue;
    }
    if (std::isfinite(hi)) {
      g_trip.emplace_back(g_rows++, j, 1.0);
      h_vals.push_back(hi);
    }
    if (std::isfinite(lo)) {
      g_trip.emplace_back(g_rows++, j, -1.0);
      h_vals.push_back(-lo);
    }
  }

  sf.A.resize(eq_rows, n);
  sf.A.setFromTriplets(a_trip.begin(), a_trip.end());
  sf.b = Eigen::Map<Eigen::VectorXd>(b_vals.data(), static_cast<Eigen::Index>(b_vals.size()));
  sf.G.resize(g_rows, n);
  sf.G.setFromTriplets(g_trip.begin(), g_trip.end());
  sf.h = Eigen::Map<Eigen::VectorXd>(h_vals.data(), static_cast<Eigen::Index>(h_vals.size()));
  return sf;
}

Eigen::VectorXd col_norms(const SpMat& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.cols());
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) out[k] = std::max(out[k], std::abs(it.value()));
  }
  return out;
}

Eigen::VectorXd row_norms(const SpMat& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
  }
  return out;
}

Eigen::VectorXd inv_sqrt_clamped(const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = v[i] < 1e-8 ? 1.0 : 1.0 / std::sqrt(std::min(v[i], 1e8));
  }
  return out;
}

// Ruiz equilibration: x = D x~, scaled rows E_A A D, E_G G D, cost scale k.
struct Scaling {
  Eigen::VectorXd D;
  Eigen::VectorXd EA;
  Eigen::VectorXd EG;
  double cost = 1.0;
};

Scaling equilibrate(StandardForm& sf, int passes) {
  const Eigen::Index n = sf.c.size();
  Scaling sc;
  sc.D = Eigen::VectorXd::Ones(n);
  sc.EA = Eigen::VectorXd::Ones(sf.A.rows());
  sc.EG = Eigen::VectorXd::Ones(sf.G.rows());
  for (int pass = 0; pass < passes; ++pass) {
    const Eigen::VectorXd cn =
        col_norms(sf.P).cwiseMax(col_norms(sf.A)).cwiseMax(col_norms(sf.G));
    const Eigen::VectorXd d = inv_sqrt_clamped(cn);
    const Eigen::VectorXd ea = inv_sqrt_clamped(row_norms(sf.A));
    const Eigen::VectorXd eg = inv_sqrt_clamped(row_norms(sf.G));
    sf.P = d.asDiagonal() * sf.P * d.asDiagonal();
    sf.c = d.cwiseProduct(sf.c);
    sf.A = ea.asDiagonal() * sf.A * d.asDiagonal();
    sf.b = ea.cwiseProduct(sf.b);
    sf.G = eg.asDiagonal() * sf.G * d.asDiagonal();
    sf.h = eg.cwiseProduct(sf.h);
    sc.D = sc.D.cwiseProduct(d);
    sc.EA = sc.EA.cwiseProduct(ea);
    sc.EG = sc.EG.cwiseProduct(eg);
  }
  // Cost scaling so that P and c are O(1).
  const Eigen::VectorXd pn = col_norms(sf.P);
  const double p_mean = n ? pn.mean() : 0.0;
  const double ref = std::max(p_mean, inf_norm(sf.c));
  if (ref > 1e-8) {
    sc.cost = 1.0 / std::min(ref, 1e8);
    sf.P *= sc.cost;
    sf.c *= sc.cost;
  }
  return sc;
}

// Quasi-definite KKT matrix [P + G'WG + reg I, A'; A, -reg I] with a fixed
// sparsity pattern; only the values change between interior-point iterations.
class KktSystem {
 public:
  KktSystem(const SpMat& P, const SpMat& A, const SpMat& G) : P_(P), A_(A), G_rows_(G) {
    n_ = static_cast<int>(P.rows());
    m_ = static_cast<int>(A.rows());
    std::vector<Triplet> trip;
    for (int k = 0; k < P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(P, k); it; ++it) {
        if (it.row() >= it.col()) trip.emplace_back(it.row(), it.col(), 0.0);
      }
    }
    using RowIt = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;
    for (int r = 0; r < G_rows_.rows(); ++r) {
      for (RowIt a(G_rows_, r); a; ++a) {
        for (RowIt b(G_rows_, r); b; ++b) {
          if (b.col() >= a.col()) trip.emplace_back(b.col(), a.col(), 0.0);
        }
      }
    }
    for (int i = 0; i < n_ + m_; ++i) trip.emplace_back(i, i, 0.0);
    for (int k = 0; k < A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A, k); it; ++it) trip.emplace_back(n_ + it.row(), it.col(), 0.0);
    }
    K_.resize(n_ + m_, n_ + m_);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();

    base_.setZero(K_.nonZeros());
    for (int k = 0; k < P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(P, k); it; ++it) {
        if (it.row() >= it.col()) base_[slot(it.row(), it.col())] += it.value();
      }
    }
    for (int k = 0; k < A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A, k); it; ++it) base_[slot(n_ + it.row(), it.col())] += it.value();
    }
    for (int i = 0; i < n_ + m_; ++i) diag_.push_back(slot(i, i));

    row_start_.push_back(0);
    for (int r = 0; r < G_rows_.rows(); ++r) {
      for (RowIt a(G_rows_, r); a; ++a) {
        for (RowIt b(G_rows_, r); b; ++b) {
          if (b.col() >= a.col()) {
            outer_.push_back({slot(b.col(), a.col()), a.value() * b.value()});
          }
        }
      }
      row_start_.push_back(static_cast<int>(outer_.size()));
    }
    solver_.analyzePattern(K_);
  }

  bool factorize(const Eigen::VectorXd& w, double reg) {
    w_ = w;
    double* values = K_.valuePtr();
    std::copy(base_.data(), base_.data() + base_.size(), values);
    for (int r = 0; r + 1 < static_cast<int>(row_start_.size()); ++r) {
      for (int e = row_start_[r]; e < row_start_[r + 1]; ++e) values[outer_[e].slot] += w[r] * outer_[e].coef;
    }
    for (int i = 0; i < n_ + m_; ++i) values[diag_[i]] += i < n_ ? reg : -reg;
    solver_.factorize(K_);
    return solver_.info() == Eigen::Success;
  }

  // Solves the unregularized system with iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, int refinement_steps) const {
    Eigen::VectorXd sol = solver_.solve(rhs);
    for (int k = 0; k < refinement_steps; ++k) {
      const Eigen::VectorXd residual = rhs - apply_exact(sol);
      sol += solver_.solve(residual);
    }
    return sol;
  }

 private:
  struct Entry {
    Eigen::Index slot;
    double coef;
  };

  Eigen::Index slot(Eigen::Index row, Eigen::Index col) const {
    const int* inner = K_.innerIndexPtr();
    const int* begin = inner + K_.outerIndexPtr()[col];
    const int* end = inner + K_.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(begin, end, static_cast<int>(row));
    return it - inner;
  }

  Eigen::VectorXd apply_exact(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(n_ + m_);
    const Eigen::VectorXd x = v.head(n_);
    out.head(n_) = P_ * x + G_rows_.transpose() * w_.cwiseProduct(G_rows_ * x) + A_.transpose() * v.tail(m_);
    out.tail(m_) = A_ * x;
    return out;
  }

  const SpMat& P_;
  const SpMat& A_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> G_rows_;
  int n_ = 0;
  int m_ = 0;
  SpMat K_;
  Eigen::VectorXd base_;
  std::vector<Eigen::Index> diag_;
  std::vector<Entry> outer_;
  std::vector<int> row_start_;
  Eigen::VectorXd w_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> solver_;
};

struct Residuals {
  double eq = 0.0;
  double in = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  bool converged = false;
};

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const QpSettings& settings) {
  const int n = qp.num_vars();
  if (qp.P.rows() != n || qp.P.cols() != n || qp.A.cols() != n || qp.b.size() != qp.A.rows() ||
      qp.C.cols() != n || qp.lower.size() != qp.C.rows() || qp.upper.size() != qp.C.rows() ||
      qp.var_lower.size() != n || qp.var_upper.size() != n) {
    throw DimensionMismatch("inconsistent QP dimensions");
  }

  const StandardForm orig = to_standard_form(qp);
  StandardForm sf = orig;
  const Scaling sc = equilibrate(sf, settings.scaling_passes);

  const SpMat& A = sf.A;
  const SpMat& G = sf.G;
  const Eigen::VectorXd& b = sf.b;
  const Eigen::VectorXd& h = sf.h;
  const int m_eq = static_cast<int>(A.rows());
  const int m_in = static_cast<int>(G.rows());
  const SpMat Gt = G.transpose();
  const SpMat At = A.transpose();
  const SpMat orig_At = orig.A.transpose();
  const SpMat orig_Gt = orig.G.transpose();

  KktSystem kkt(sf.P, A, G);
  QpSolution result;
  double reg = settings.regularization;

  // Residuals of the unscaled problem, relative to the size of their terms.
  auto measure = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& zs,
                     const Eigen::VectorXd& ss) {
    const Eigen::VectorXd x = sc.D.cwiseProduct(xs);
    const Eigen::VectorXd y = sc.EA.cwiseProduct(ys) / sc.cost;
    const Eigen::VectorXd z = sc.EG.cwiseProduct(zs) / sc.cost;
    const Eigen::VectorXd ax = orig.A * x;
    const Eigen::VectorXd gx = orig.G * x;
    const Eigen::VectorXd px = orig.P * x;
    const Eigen::VectorXd aty = orig_At * y;
    const Eigen::VectorXd gtz = orig_Gt * z;
    Residuals r;
    r.eq = inf_norm(ax - orig.b);
    r.in = m_in ? std::max(0.0, (gx - orig.h).maxCoeff()) : 0.0;
    r.dual = inf_norm(px + orig.c + aty + gtz);
    r.gap = m_in ? ss.dot(zs) / sc.cost : 0.0;
    const double eps_abs = settings.tolerance;
    const double eps_rel = settings.tolerance;
    const double dual_ref = std::max({inf_norm(px), inf_norm(orig.c), inf_norm(aty), inf_norm(gtz)});
    const double obj_ref = std::max({1.0, std::abs(x.dot(px)), std::abs(orig.c.dot(x))});
    r.converged = r.eq <= eps_abs + eps_rel * std::max(inf_norm(ax), inf_norm(orig.b)) &&
                  r.in <= eps_abs + eps_rel * std::max(inf_norm(gx), inf_norm(orig.h)) &&
                  r.dual <= eps_abs + eps_rel * dual_ref &&
                  std::abs(r.gap) <= settings.gap_tolerance * obj_ref;
    return r;
  };

  Eigen::VectorXd x(n), y = Eigen::VectorXd::Zero(m_eq), s(m_in), z(m_in);
  {
    bool ok = false;
    for (int attempt = 0; attempt < 6 && !ok; ++attempt, reg *= 100.0) {
      ok = kkt.factorize(Eigen::VectorXd::Ones(m_in), reg);
    }
    if (!ok) return result;
    Eigen::VectorXd rhs(n + m_eq);
    rhs.head(n) = -sf.c + Gt * h;
    rhs.tail(m_eq) = b;
    const Eigen::VectorXd sol = kkt.solve(rhs, settings.refinement_steps);
    x = sol.head(n);
    const Eigen::VectorXd r = h - G * x;
    for (int i = 0; i < m_in; ++i) {
      s[i] = std::max(r[i], 1.0);
      z[i] = 1.0;
    }
  }

  auto record = [&](int iter, const Residuals& r) {
    result.iterations = iter;
    result.equality_residual = r.eq;
    result.inequality_residual = r.in;
    result.dual_residual = r.dual;
    result.complementarity = r.gap;
    result.x = sc.D.cwiseProduct(x);
  };

  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    if (!x.allFinite() || !s.allFinite() || !z.allFinite()) {
      result.status = QpStatus::NumericalError;
      return result;
    }
    const Residuals res = measure(x, y, z, s);
    record(iter, res);
    if (res.converged) {
      result.status = QpStatus::Solved;
      return result;
    }
    if (iter == settings.max_iterations) break;

    const Eigen::VectorXd r_dual = sf.P * x + sf.c + At * y + Gt * z;
    const Eigen::VectorXd r_eq = A * x - b;
    const Eigen::VectorXd r_in = G * x + s - h;
    const double mu = m_in > 0 ? s.dot(z) / m_in : 0.0;

    const Eigen::VectorXd w = z.cwiseQuotient(s);
    bool ok = kkt.factorize(w, reg);
    for (int attempt = 0; !ok && attempt < 6; ++attempt) {
      reg *= 100.0;
      ok = kkt.factorize(w, reg);
    }
    if (!ok) {
      result.status = QpStatus::NumericalError;
      return result;
    }

    auto newton = [&](const Eigen::VectorXd& r_sz, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                      Eigen::VectorXd& dz, Eigen::VectorXd& ds) {
      const Eigen::VectorXd tmp = w.cwiseProduct(r_in - r_sz.cwiseQuotient(z));
      Eigen::VectorXd rhs(n + m_eq);
      rhs.head(n) = -r_dual - Gt * tmp;
      rhs.tail(m_eq) = -r_eq;
      const Eigen::VectorXd sol = kkt.solve(rhs, settings.refinement_steps);
      dx = sol.head(n);
      dy = sol.tail(m_eq);
      const Eigen::VectorXd g_dx = G * dx;
      dz = w.cwiseProduct(g_dx + r_in) - r_sz.cwiseQuotient(s);
      ds = -r_in - g_dx;
    };

    Eigen::VectorXd dx, dy, dz, ds;
    // Predictor (affine scaling).
    const Eigen::VectorXd sz = s.cwiseProduct(z);
    newton(sz, dx, dy, dz, ds);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    double sigma = 0.0;
    if (m_in > 0) {
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / m_in;
      sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
    }
    // Corrector.
    const Eigen::VectorXd r_sz = sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m_in, sigma * mu);
    newton(r_sz, dx, dy, dz, ds);
    const double step = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));

    x += step * dx;
    y += step * dy;
    z += step * dz;
    s += step * ds;
    // Keep the pair strictly interior so w stays finite.
    for (int i = 0; i < m_in; ++i) {
      s[i] = std::max(s[i], 1e-300);
      z[i] = std::max(z[i], 1e-300);
    }
  }
  result.status = QpStatus::MaxIterations;
  return result;
}

}  // namespace tray
