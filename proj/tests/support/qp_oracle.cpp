#include "support/qp_oracle.hpp"

#include <cmath>
#include <functional>

namespace safer::testing {

using namespace safer::cbf;

// Exact projection by enumerating candidate active sets of size <= n.
VectorXd enumerate_oracle(const QpProblem& p) {
  MatrixXd A;
  VectorXd b;
  stack_constraints(p, A, b);
  const int n = static_cast<int>(p.u_nom.size());
  const int m = static_cast<int>(A.rows());
  VectorXd best;
  double best_cost = INFINITY;
  std::vector<int> subset;
  std::function<void(int)> visit = [&](int start) {
    VectorXd u = p.u_nom;
    if (!subset.empty()) {
      MatrixXd As(subset.size(), n);
      VectorXd bs(subset.size());
      for (std::size_t k = 0; k < subset.size(); ++k) {
        As.row(k) = A.row(subset[k]);
        bs(k) = b(subset[k]);
      }
      Eigen::FullPivLU<MatrixXd> lu(As * As.transpose());
      if (lu.rank() == static_cast<int>(subset.size())) {
        u = p.u_nom - As.transpose() * lu.solve(As * p.u_nom + bs);
      } else {
        u.resize(0);
      }
    }
    if (u.size() == n && (m == 0 || (A * u + b).minCoeff() >= -1e-9)) {
      const double cost = (u - p.u_nom).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best = u;
      }
    }
    if (static_cast<int>(subset.size()) == n) return;
    for (int i = start; i < m; ++i) {
      subset.push_back(i);
      visit(i + 1);
      subset.pop_back();
    }
  };
  visit(0);
  return best;
}

QpProblem random_feasible(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> rows(0, 5);
  const int n = dim(rng);
  QpProblem p;
  p.u_nom = 3.0 * VectorXd::NullaryExpr(n, [&] { return u(rng); });
  const VectorXd inside = VectorXd::NullaryExpr(n, [&] { return u(rng); });
  const int m = rows(rng);
  for (int i = 0; i < m; ++i) {
    VectorXd a = VectorXd::NullaryExpr(n, [&] { return u(rng); });
    const double slack = (rng() % 4 == 0) ? 0.0 : 0.5 * (u(rng) + 1.0);
    p.rows.push_back({a, -a.dot(inside) + slack, "r" + std::to_string(i)});
  }
  if (rng() % 2) {
    p.lower = inside - VectorXd::NullaryExpr(n, [&] { return 1.0 + u(rng); });
    p.upper = inside + VectorXd::NullaryExpr(n, [&] { return 1.0 + u(rng); });
  }
  return p;
}

double kkt_residual(const QpProblem& p, const QpSolution& s) {
  MatrixXd A;
  VectorXd b;
  stack_constraints(p, A, b);
  VectorXd r = s.u_star - p.u_nom;
  if (A.rows()) r -= A.transpose() * s.multipliers;
  return r.norm();
}

}  // namespace safer::testing
