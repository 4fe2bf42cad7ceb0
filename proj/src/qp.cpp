#include <algorithm>
#include <cmath>
#include <limits>

#include "safer/cbf.hpp"
#include "safer/error.hpp"

namespace safer::cbf {

namespace {

struct ActiveSetResult {
  VectorXd z;
  std::vector<int> working;
  VectorXd lambda;  // aligned with `working`
  int iterations = 0;
};

// min 1/2 ||z - target||^2  s.t.  A z + b >= 0, starting from a (nearly)
// feasible z. Identity Hessian, so the equality-constrained subproblem reduces
// to a projection onto the null space of the working rows.
ActiveSetResult primal_active_set(const MatrixXd& A, const VectorXd& b, const VectorXd& target,
                                  VectorXd z, int max_iterations) {
  const Eigen::Index n = z.size();
  const Eigen::Index m = A.rows();
  ActiveSetResult out;
  std::vector<int>& working = out.working;
  const double scale = 1.0 + target.lpNorm<Eigen::Infinity>() + z.lpNorm<Eigen::Infinity>();
  const double step_tol = 1e-13 * scale;
  const double lambda_tol = 1e-11 * scale;

  for (int iter = 0;; ++iter) {
    if (iter >= max_iterations) {
      throw SolverError("active-set iteration cap (" + std::to_string(max_iterations) + ") exceeded");
    }
    out.iterations = iter + 1;
    const VectorXd g = z - target;
    VectorXd p;
    VectorXd lambda;
    if (working.empty()) {
      p = -g;
    } else {
      MatrixXd Aw(working.size(), n);
      for (std::size_t k = 0; k < working.size(); ++k) Aw.row(k) = A.row(working[k]);
      lambda = (Aw * Aw.transpose()).ldlt().solve(Aw * g);
      p = Aw.transpose() * lambda - g;
    }

    if (p.norm() <= step_tol) {
      if (working.empty()) {
        out.z = z;
        return out;
      }
      Eigen::Index drop = 0;
      const double min_lambda = lambda.minCoeff(&drop);
      if (min_lambda >= -lambda_tol) {
        out.z = z;
        out.lambda = lambda;
        return out;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
      const double ap = A.row(i).dot(p);
      if (ap >= -1e-14 * scale) continue;
      const double residual = std::max(0.0, A.row(i).dot(z) + b(i));
      const double t = residual / -ap;
      if (t < alpha) {
        alpha = t;
        blocking = static_cast<int>(i);
      }
    }
    z += alpha * p;
    if (blocking >= 0) working.push_back(blocking);
  }
}

double max_violation(const MatrixXd& A, const VectorXd& b, const VectorXd& u) {
  if (A.rows() == 0) return 0.0;
  return std::max(0.0, -(A * u + b).minCoeff());
}

}  // namespace

void stack_constraints(const QpProblem& p, MatrixXd& A, VectorXd& b) {
  const Eigen::Index n = p.u_nom.size();
  const Eigen::Index m = static_cast<Eigen::Index>(p.rows.size());
  const Eigen::Index box = (p.lower || p.upper) ? 2 * n : 0;
  A = MatrixXd::Zero(m + box, n);
  b = VectorXd::Zero(m + box);
  for (Eigen::Index i = 0; i < m; ++i) {
    A.row(i) = p.rows[i].a.transpose();
    b(i) = p.rows[i].b;
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; box && i < n; ++i) {
    // Infinite sides become the vacuous row 0 . u + 1 >= 0.
    const double lo = p.lower ? (*p.lower)(i) : -inf;
    const double hi = p.upper ? (*p.upper)(i) : inf;
    if (std::isfinite(lo)) {
      A(m + 2 * i, i) = 1.0;
      b(m + 2 * i) = -lo;
    } else {
      b(m + 2 * i) = 1.0;
    }
    if (std::isfinite(hi)) {
      A(m + 2 * i + 1, i) = -1.0;
      b(m + 2 * i + 1) = hi;
    } else {
      b(m + 2 * i + 1) = 1.0;
    }
  }
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& options) {
  const Eigen::Index n = p.u_nom.size();
  if (!p.u_nom.allFinite()) throw DimensionError("nominal control is not finite");
  for (const auto& row : p.rows) {
    if (row.a.size() != n) throw DimensionError("constraint row '" + row.source + "' has the wrong dimension");
    if (!row.a.allFinite() || !std::isfinite(row.b)) {
      throw DimensionError("constraint row '" + row.source + "' is not finite");
    }
  }
  if (p.lower && p.lower->size() != n) throw DimensionError("lower bound has the wrong dimension");
  if (p.upper && p.upper->size() != n) throw DimensionError("upper bound has the wrong dimension");
  if (p.lower && p.upper && ((*p.lower).array() > (*p.upper).array()).any()) {
    throw DimensionError("box lower bound exceeds upper bound");
  }

  MatrixXd A;
  VectorXd b;
  stack_constraints(p, A, b);
  const Eigen::Index m = A.rows();
  const double scale = 1.0 + (m ? b.lpNorm<Eigen::Infinity>() : 0.0) + p.u_nom.lpNorm<Eigen::Infinity>();
  const double feas_tol = 1e-10 * scale;

  QpSolution sol;
  sol.multipliers = VectorXd::Zero(m);
  VectorXd start = p.u_nom;
  int iterations = 0;

  if (max_violation(A, b, p.u_nom) > 0.0) {
    // Phase 1: minimise the common slack s in  A u + b + s >= 0, s >= 0  by
    // proximal-point steps, each an identity-Hessian QP solved by the same
    // active-set routine from the current (feasible) iterate.
    MatrixXd Aa = MatrixXd::Zero(m + 1, n + 1);
    Aa.topLeftCorner(m, n) = A;
    Aa.topRightCorner(m, 1).setOnes();
    Aa(m, n) = 1.0;
    VectorXd ba = VectorXd::Zero(m + 1);
    ba.head(m) = b;
    VectorXd z(n + 1);
    z.head(n) = p.u_nom;
    z(n) = max_violation(A, b, p.u_nom);
    const double pull = 1e3 * scale;
    for (int outer = 0;; ++outer) {
      if (outer >= options.max_iterations) {
        throw SolverError("phase-1 iteration cap (" + std::to_string(options.max_iterations) + ") exceeded");
      }
      VectorXd target = z;
      target(n) -= pull;
      const auto res = primal_active_set(Aa, ba, target, z, options.max_iterations);
      iterations += res.iterations;
      const double progress = z(n) - res.z(n);
      z = res.z;
      if (z(n) <= feas_tol || progress <= 1e-14 * scale) break;
    }
    start = z.head(n);
    if (z(n) > feas_tol) {
      sol.status = QpStatus::Infeasible;
      sol.u_star = start;
      sol.iterations = iterations;
      return sol;
    }
  }

  const auto res = primal_active_set(A, b, p.u_nom, start, options.max_iterations);
  sol.u_star = res.z;
  sol.iterations = iterations + res.iterations;
  sol.active = res.working;
  for (std::size_t k = 0; k < res.working.size(); ++k) sol.multipliers(res.working[k]) = std::max(0.0, res.lambda(k));
  std::sort(sol.active.begin(), sol.active.end());
  return sol;
}

}  // namespace safer::cbf
