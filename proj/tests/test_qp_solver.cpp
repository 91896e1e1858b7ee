#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "pfarb/formulations.hpp"
#include "pfarb/qp_solver.hpp"

using namespace pfarb;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::SparseMatrix<double> sparse_from(const Eigen::MatrixXd& dense) {
  Eigen::SparseMatrix<double> out(dense.rows(), dense.cols());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    for (Eigen::Index j = 0; j < dense.cols(); ++j) {
      if (dense(i, j) != 0.0) trips.emplace_back(i, j, dense(i, j));
    }
  }
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// Exhaustive vertex enumeration for bounded LPs with a handful of variables:
/// every vertex is the solution of n active rows; keep the feasible minimum.
struct VertexOracle {
  bool feasible = false;
  double objective = 0.0;
};

VertexOracle lp_vertex_oracle(const Eigen::VectorXd& q, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(A.rows());
  VertexOracle best;
  std::vector<int> pick(n);
  const auto consider = [&](const std::vector<int>& rows) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Eigen::MatrixXd B(n, n);
      Eigen::VectorXd b(n);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        const double side = (mask >> i) & 1 ? u(rows[i]) : l(rows[i]);
        if (!std::isfinite(side)) {
          ok = false;
          break;
        }
        B.row(i) = A.row(rows[i]);
        b(i) = side;
      }
      if (!ok) continue;
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd x = lu.solve(b);
      const Eigen::VectorXd Ax = A * x;
      bool feas = true;
      for (int i = 0; i < m; ++i) {
        if (Ax(i) < l(i) - 1e-7 || Ax(i) > u(i) + 1e-7) {
          feas = false;
          break;
        }
      }
      if (!feas) continue;
      const double obj = q.dot(x);
      if (!best.feasible || obj < best.objective) {
        best.feasible = true;
        best.objective = obj;
      }
    }
  };
  // all n-subsets of rows
  std::vector<int> idx(n);
  const std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      consider(idx);
      return;
    }
    for (int r = start; r < m; ++r) {
      idx[depth] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

Scenario lossless_two_step() {
  Scenario s;
  s.h = 1.0;
  s.load_p = {0.0, 0.0};
  s.load_q = {0.0, 0.0};
  s.pv_p = {0.0, 0.0};
  s.price = {1.0, 2.0};
  return s;
}

BatteryParams lossless_battery() {
  BatteryParams bp;
  bp.eta_ch = bp.eta_dis = 1.0;
  bp.delta_min = -1.0;
  bp.delta_max = 1.0;
  bp.b_min = 0.0;
  bp.b_max = 1.0;
  bp.b0 = 0.0;
  bp.s_max = 1.0;
  return bp;
}

}  // namespace

TEST_CASE("box-clipped scalar quadratic") {
  // min (x-1)^2  s.t.  0 <= x <= 0.5   ->  x = 0.5
  Eigen::MatrixXd P(1, 1), A(1, 1);
  P << 2.0;
  A << 1.0;
  Eigen::VectorXd q(1), l(1), u(1);
  q << -2.0;
  l << 0.0;
  u << 0.5;
  QpSolver solver(sparse_from(P), q, sparse_from(A), l, u);
  const QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.objective + 1.0 == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("simplex-face linear program") {
  // min x1 + x2  s.t.  x1 + x2 >= 1, x >= 0   ->  objective 1
  Eigen::MatrixXd A(3, 2);
  A << 1, 1, 1, 0, 0, 1;
  Eigen::VectorXd q(2), l(3), u(3);
  q << 1.0, 1.0;
  l << 1.0, 0.0, 0.0;
  u << kInf, kInf, kInf;
  QpSolver solver(sparse_from(Eigen::MatrixXd::Zero(2, 2)), q, sparse_from(A), l, u);
  const QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("two-step lossless arbitrage recovers the price spread") {
  const ProblemInstance pi = build_arb(lossless_two_step(), lossless_battery());
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l, u;
  pi.constraint_matrix(A, l, u);
  QpSolver solver(pi.quadratic_matrix(), pi.linear_vector(), A, l, u);
  const QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(-1.0).epsilon(1e-6));  // profit 1
  const Dispatch d = extract_dispatch(pi, sol.x);
  CHECK(d.p_b[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(d.p_b[1] == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("random small LPs match the vertex oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_int_distribution<int> nvars(2, 4);
  int solved = 0;
  for (int it = 0; it < 60; ++it) {
    const int n = nvars(rng);
    const int extra = n;  // coupling rows on top of the per-variable boxes
    Eigen::MatrixXd A(n + extra, n);
    Eigen::VectorXd l(n + extra), u(n + extra), q(n);
    A.setZero();
    for (int i = 0; i < n; ++i) {
      A(i, i) = 1.0;
      const double a = coef(rng), b = coef(rng);
      l(i) = std::min(a, b) - 0.2;
      u(i) = std::max(a, b) + 0.2;
      q(i) = coef(rng);
    }
    for (int r = 0; r < extra; ++r) {
      for (int j = 0; j < n; ++j) A(n + r, j) = coef(rng);
      const double a = coef(rng), b = coef(rng);
      l(n + r) = std::min(a, b) - 0.3;
      u(n + r) = std::max(a, b) + 0.8;
    }
    const VertexOracle oracle = lp_vertex_oracle(q, A, l, u);
    QpSolver solver(sparse_from(Eigen::MatrixXd::Zero(n, n)), q, sparse_from(A), l, u);
    const QpSolution sol = solver.solve();
    if (!oracle.feasible) {
      CHECK(sol.status == QpStatus::primal_infeasible);
      continue;
    }
    REQUIRE(sol.status == QpStatus::optimal);
    CHECK(sol.objective ==
          doctest::Approx(oracle.objective).epsilon(1e-5).scale(1.0 + std::abs(oracle.objective)));
    ++solved;
  }
  CHECK(solved >= 40);  // the fuzz must actually exercise feasible instances
}

TEST_CASE("price scaling leaves the arbitrage dispatch unchanged") {
  Scenario s = lossless_two_step();
  const BatteryParams bp = lossless_battery();
  const ProblemInstance base = build_arb(s, bp);
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l, u;
  base.constraint_matrix(A, l, u);
  QpSolver solver(base.quadratic_matrix(), base.linear_vector(), A, l, u);
  const QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);

  const double c = 7.5;
  for (double& p : s.price) p *= c;
  const ProblemInstance scaled = build_arb(s, bp);
  scaled.constraint_matrix(A, l, u);
  QpSolver solver2(scaled.quadratic_matrix(), scaled.linear_vector(), A, l, u);
  const QpSolution sol2 = solver2.solve();
  REQUIRE(sol2.status == QpStatus::optimal);
  CHECK(sol2.objective == doctest::Approx(c * sol.objective).epsilon(1e-6));
  const Dispatch d1 = extract_dispatch(base, sol.x);
  const Dispatch d2 = extract_dispatch(scaled, sol2.x);
  for (std::size_t i = 0; i < d1.steps(); ++i) {
    CHECK(d2.p_b[i] == doctest::Approx(d1.p_b[i]).epsilon(1e-5));
  }
}

TEST_CASE("primal infeasibility certificate") {
  // x >= 1 and x <= 0 cannot hold together
  Eigen::MatrixXd A(2, 1);
  A << 1, 1;
  Eigen::VectorXd q(1), l(2), u(2);
  q << 0.0;
  l << 1.0, -kInf;
  u << kInf, 0.0;
  QpSolver solver(sparse_from(Eigen::MatrixXd::Zero(1, 1)), q, sparse_from(A), l, u);
  CHECK(solver.solve().status == QpStatus::primal_infeasible);
}

TEST_CASE("dual infeasibility certificate") {
  // min -x  s.t.  x >= 0  is unbounded below
  Eigen::MatrixXd A(1, 1);
  A << 1;
  Eigen::VectorXd q(1), l(1), u(1);
  q << -1.0;
  l << 0.0;
  u << kInf;
  QpSolver solver(sparse_from(Eigen::MatrixXd::Zero(1, 1)), q, sparse_from(A), l, u);
  CHECK(solver.solve().status == QpStatus::dual_infeasible);
}

TEST_CASE("bound updates re-solve in place") {
  // min -x  over  0 <= x <= ub, solved for two different ub without rebuilding
  Eigen::MatrixXd A(1, 1);
  A << 1;
  Eigen::VectorXd q(1), l(1), u(1);
  q << -1.0;
  l << 0.0;
  u << 1.0;
  QpSolver solver(sparse_from(Eigen::MatrixXd::Zero(1, 1)), q, sparse_from(A), l, u);
  QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));

  u << 3.0;
  solver.update_bounds(l, u);
  sol = solver.solve(sol.x, sol.dual);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(3.0).epsilon(1e-6));

  // pin the variable: the range row becomes an equality
  l << 2.0;
  u << 2.0;
  solver.update_bounds(l, u);
  sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("iteration log shows residual convergence") {
  const ProblemInstance pi = build_arb(lossless_two_step(), lossless_battery());
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l, u;
  pi.constraint_matrix(A, l, u);
  std::ostringstream log;
  SolverConfig cfg;
  cfg.log = &log;
  cfg.check_interval = 25;
  QpSolver solver(pi.quadratic_matrix(), pi.linear_vector(), A, l, u, cfg);
  const QpSolution sol = solver.solve();
  REQUIRE(sol.status == QpStatus::optimal);

  // the line-delimited log carries per-check residuals; they must end at or
  // below where they started
  std::istringstream in(log.str());
  std::string line;
  double first_rp = -1.0, last_rp = -1.0;
  while (std::getline(in, line)) {
    const auto pos = line.find("rp=");
    if (pos == std::string::npos) continue;
    const double rp = std::stod(line.substr(pos + 3));
    if (first_rp < 0.0) first_rp = rp;
    last_rp = rp;
  }
  if (first_rp >= 0.0) CHECK(last_rp <= first_rp + 1e-12);
  CHECK(sol.primal_residual <= 1e-6);
  CHECK(sol.dual_residual <= 1e-6);
}

TEST_CASE("dimension mismatches are rejected") {
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  Eigen::VectorXd q(1), l(1), u(1);
  q << 0.0;
  l << 0.0;
  u << 1.0;
  CHECK_THROWS_AS(QpSolver(sparse_from(Eigen::MatrixXd::Zero(2, 2)), q, sparse_from(A), l, u),
                  std::invalid_argument);
}
