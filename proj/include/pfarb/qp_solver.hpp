#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <iosfwd>
#include <string>

namespace pfarb {

enum class QpStatus { optimal, primal_infeasible, dual_infeasible, max_iter };

std::string to_string(QpStatus s);

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd dual;  ///< multipliers for l <= Ax <= u
  double objective = 0.0;
  QpStatus status = QpStatus::max_iter;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

struct SolverConfig {
  double eps_primal = 1e-6;
  double eps_dual = 1e-6;
  double eps_infeasible = 1e-7;
  int max_iterations = 50000;
  double penalty_parameter = 0.1;  ///< initial ADMM step, adapted unless adaptive_rho=false
  double sigma = 1e-6;
  double alpha = 1.6;  ///< over-relaxation
  bool adaptive_rho = true;
  int rho_update_interval = 100;  ///< min iterations between step-size refactorizations
  bool polish = true;
  int check_interval = 25;
  int scaling_iterations = 10;  ///< Ruiz equilibration passes, 0 disables scaling
  std::ostream* log = nullptr;  ///< optional line-delimited iteration log
};

/// Operator-splitting solver for  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.
///
/// The KKT factorization is computed once in setup() and reused across solves,
/// so bound-only updates (branch-and-bound nodes) cost iterations only.
class QpSolver {
 public:
  QpSolver(Eigen::SparseMatrix<double> P, Eigen::VectorXd q,
           Eigen::SparseMatrix<double> A, Eigen::VectorXd l, Eigen::VectorXd u,
           SolverConfig config = {});

  void update_bounds(const Eigen::VectorXd& l, const Eigen::VectorXd& u);
  void update_linear_cost(const Eigen::VectorXd& q);

  const Eigen::VectorXd& lower() const { return l_; }
  const Eigen::VectorXd& upper() const { return u_; }

  QpSolution solve();
  /// Warm-started solve from a previous primal/dual pair.
  QpSolution solve(const Eigen::VectorXd& x0, const Eigen::VectorXd& y0);

 private:
  void equilibrate();
  void build_rho();
  void factorize();
  QpSolution run(Eigen::VectorXd x, Eigen::VectorXd y);
  bool polish(QpSolution& sol) const;
  /// Polish on a copy; commit only if the result meets the configured tolerances.
  bool polish_to_tolerance(QpSolution& sol) const;

  Eigen::Index n_, m_;
  Eigen::SparseMatrix<double> P_;  // unscaled, upper triangle used
  Eigen::VectorXd q_;
  Eigen::SparseMatrix<double> A_;
  Eigen::VectorXd l_, u_;
  SolverConfig cfg_;

  // scaling
  Eigen::VectorXd d_;       // variable scaling
  Eigen::VectorXd e_;       // constraint scaling
  double c_ = 1.0;          // cost scaling
  Eigen::SparseMatrix<double> Ps_, As_;  // scaled data
  Eigen::VectorXd qs_, ls_, us_;

  Eigen::VectorXd rho_, rho_inv_;
  Eigen::SparseMatrix<double> kkt_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt_;
  bool pattern_analyzed_ = false;
};

}  // namespace pfarb
