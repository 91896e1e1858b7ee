#include "pfarb/qp_solver.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace pfarb {

namespace {

constexpr double kDiv = 1e-15;

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::primal_infeasible: return "primal_infeasible";
    case QpStatus::dual_infeasible: return "dual_infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

QpSolver::QpSolver(Eigen::SparseMatrix<double> P, Eigen::VectorXd q,
                   Eigen::SparseMatrix<double> A, Eigen::VectorXd l, Eigen::VectorXd u,
                   SolverConfig config)
    : n_(P.rows()),
      m_(A.rows()),
      P_(std::move(P)),
      q_(std::move(q)),
      A_(std::move(A)),
      l_(std::move(l)),
      u_(std::move(u)),
      cfg_(config) {
  if (P_.cols() != n_ || q_.size() != n_ || A_.cols() != n_ || l_.size() != m_ ||
      u_.size() != m_) {
    throw std::invalid_argument("qp dimensions do not match");
  }
  P_.makeCompressed();
  A_.makeCompressed();
  equilibrate();
  build_rho();
  factorize();
}

void QpSolver::update_bounds(const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
  if (l.size() != m_ || u.size() != m_) {
    throw std::invalid_argument("bound update dimension mismatch");
  }
  // rows switching between equality and range change their step-size class
  bool reclassify = false;
  for (Eigen::Index i = 0; i < m_ && !reclassify; ++i) {
    const bool was_eq = std::isfinite(l_(i)) && l_(i) == u_(i);
    const bool is_eq = std::isfinite(l(i)) && l(i) == u(i);
    reclassify = was_eq != is_eq;
  }
  l_ = l;
  u_ = u;
  ls_ = e_.cwiseProduct(l_);
  us_ = e_.cwiseProduct(u_);
  if (reclassify) {
    build_rho();
    factorize();
  }
}

void QpSolver::update_linear_cost(const Eigen::VectorXd& q) {
  if (q.size() != n_) throw std::invalid_argument("linear cost dimension mismatch");
  q_ = q;
  qs_ = c_ * d_.cwiseProduct(q_);
}

void QpSolver::equilibrate() {
  d_ = Eigen::VectorXd::Ones(n_);
  e_ = Eigen::VectorXd::Ones(m_);
  c_ = 1.0;
  Ps_ = P_;
  As_ = A_;

  for (int pass = 0; pass < cfg_.scaling_iterations; ++pass) {
    Eigen::VectorXd col_norm = Eigen::VectorXd::Zero(n_);
    Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(m_);
    for (int k = 0; k < Ps_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ps_, k); it; ++it) {
        col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
      }
    }
    for (int k = 0; k < As_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(As_, k); it; ++it) {
        col_norm(it.col()) = std::max(col_norm(it.col()), std::abs(it.value()));
        row_norm(it.row()) = std::max(row_norm(it.row()), std::abs(it.value()));
      }
    }
    Eigen::VectorXd dd(n_), de(m_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      dd(i) = col_norm(i) > kDiv ? 1.0 / std::sqrt(col_norm(i)) : 1.0;
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      de(i) = row_norm(i) > kDiv ? 1.0 / std::sqrt(row_norm(i)) : 1.0;
    }
    Ps_ = dd.asDiagonal() * Ps_ * dd.asDiagonal();
    As_ = de.asDiagonal() * As_ * dd.asDiagonal();
    d_ = d_.cwiseProduct(dd);
    e_ = e_.cwiseProduct(de);
  }

  if (cfg_.scaling_iterations > 0) {
    // cost scaling so quadratic and linear parts sit near unit magnitude
    Eigen::VectorXd pcol = Eigen::VectorXd::Zero(n_);
    for (int k = 0; k < Ps_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ps_, k); it; ++it) {
        pcol(it.col()) = std::max(pcol(it.col()), std::abs(it.value()));
      }
    }
    const double q_norm = inf_norm(d_.cwiseProduct(q_));
    const double denom = std::max(pcol.mean(), q_norm);
    if (denom > kDiv) {
      c_ = 1.0 / denom;
      Ps_ *= c_;
    }
  }

  qs_ = c_ * d_.cwiseProduct(q_);
  ls_ = e_.cwiseProduct(l_);
  us_ = e_.cwiseProduct(u_);
}

void QpSolver::build_rho() {
  const double rho0 = std::clamp(cfg_.penalty_parameter, 1e-6, 1e6);
  rho_.resize(m_);
  for (Eigen::Index i = 0; i < m_; ++i) {
    const bool eq = std::isfinite(l_(i)) && std::isfinite(u_(i)) && l_(i) == u_(i);
    rho_(i) = eq ? 1e3 * rho0 : rho0;
  }
  rho_inv_ = rho_.cwiseInverse();
}

void QpSolver::factorize() {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(Ps_.nonZeros() + As_.nonZeros() + n_ + m_);
  for (int k = 0; k < Ps_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(Ps_, k); it; ++it) {
      if (it.row() <= it.col()) trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < n_; ++i) trips.emplace_back(i, i, cfg_.sigma);
  for (int k = 0; k < As_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(As_, k); it; ++it) {
      trips.emplace_back(it.col(), n_ + it.row(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < m_; ++i) trips.emplace_back(n_ + i, n_ + i, -rho_inv_(i));

  kkt_.resize(n_ + m_, n_ + m_);
  kkt_.setFromTriplets(trips.begin(), trips.end());
  kkt_.makeCompressed();
  if (!pattern_analyzed_) {
    ldlt_.analyzePattern(kkt_);
    pattern_analyzed_ = true;
  }
  ldlt_.factorize(kkt_);
  if (ldlt_.info() != Eigen::Success) {
    throw std::runtime_error("qp solver: KKT factorization failed");
  }
}

QpSolution QpSolver::solve() {
  return run(Eigen::VectorXd::Zero(n_), Eigen::VectorXd::Zero(m_));
}

QpSolution QpSolver::solve(const Eigen::VectorXd& x0, const Eigen::VectorXd& y0) {
  // map the unscaled warm start into the scaled iteration space
  Eigen::VectorXd xs = x0.cwiseQuotient(d_);
  Eigen::VectorXd ys = c_ * y0.cwiseQuotient(e_);
  return run(std::move(xs), std::move(ys));
}

QpSolution QpSolver::run(Eigen::VectorXd x, Eigen::VectorXd y) {
  Eigen::VectorXd z = (As_ * x).cwiseMax(ls_).cwiseMin(us_);
  Eigen::VectorXd rhs(n_ + m_), xt(n_), zt(m_), z_pre(m_);
  Eigen::VectorXd x_prev(n_), y_prev(m_);

  QpSolution sol;
  sol.status = QpStatus::max_iter;
  QpSolution rescue;
  rescue.primal_residual = std::numeric_limits<double>::infinity();

  int last_rho_update = 0;
  int next_polish = 0;
  int polish_backoff = 500;
  bool polished_early = false;
  int iter = 0;
  for (; iter < cfg_.max_iterations; ++iter) {
    x_prev = x;
    y_prev = y;

    rhs.head(n_) = cfg_.sigma * x - qs_;
    rhs.tail(m_) = z - rho_inv_.cwiseProduct(y);
    const Eigen::VectorXd kkt_sol = ldlt_.solve(rhs);
    xt = kkt_sol.head(n_);
    zt = z + rho_inv_.cwiseProduct(kkt_sol.tail(m_) - y);

    x = cfg_.alpha * xt + (1.0 - cfg_.alpha) * x;
    z_pre = cfg_.alpha * zt + (1.0 - cfg_.alpha) * z + rho_inv_.cwiseProduct(y);
    z = z_pre.cwiseMax(ls_).cwiseMin(us_);
    y = rho_.cwiseProduct(z_pre - z);

    if ((iter + 1) % cfg_.check_interval != 0 && iter + 1 != cfg_.max_iterations) {
      continue;
    }

    // unscaled iterates and residuals
    const Eigen::VectorXd x_us = d_.cwiseProduct(x);
    const Eigen::VectorXd y_us = y.cwiseProduct(e_) / c_;
    const Eigen::VectorXd z_us = z.cwiseQuotient(e_);
    const Eigen::VectorXd Ax = A_ * x_us;
    const Eigen::VectorXd Px = P_ * x_us;
    const Eigen::VectorXd Aty = A_.transpose() * y_us;

    const double rp = inf_norm(Ax - z_us);
    const double rd = inf_norm(Px + q_ + Aty);
    const double rp_scale = std::max({inf_norm(Ax), inf_norm(z_us), kDiv});
    const double rd_scale = std::max({inf_norm(Px), inf_norm(Aty), inf_norm(q_), kDiv});
    const double eps_p = cfg_.eps_primal * (1.0 + rp_scale);
    const double eps_d = cfg_.eps_dual * (1.0 + rd_scale);

    const double step = std::sqrt((x - x_prev).squaredNorm() + (y - y_prev).squaredNorm());
    if (cfg_.log) {
      *cfg_.log << "iter=" << iter + 1 << " rho=" << cfg_.penalty_parameter << " rp=" << rp << " rd=" << rd << " step=" << step
                << " obj=" << 0.5 * x_us.dot(Px) + q_.dot(x_us) << '\n';
    }

    sol.x = x_us;
    sol.dual = y_us;
    sol.primal_residual = rp;
    sol.dual_residual = rd;
    sol.iterations = iter + 1;
    sol.objective = 0.5 * x_us.dot(Px) + q_.dot(x_us);

    if (rp <= eps_p && rd <= eps_d) {
      sol.status = QpStatus::optimal;
      break;
    }

    // coarse convergence: an early polish often reaches full tolerance at the
    // cost of one factorization, far cheaper than grinding the splitting down
    const bool coarse = rp <= 1e-4 * (1.0 + rp_scale) && rd <= 1e-4 * (1.0 + rd_scale);
    const bool stalled = iter + 1 >= 2000 && rp <= 1e-2 * (1.0 + rp_scale) &&
                         rd <= 1e-2 * (1.0 + rd_scale);
    if (cfg_.polish && iter + 1 >= next_polish && (coarse || stalled)) {
      if (polish_to_tolerance(sol)) {
        sol.status = QpStatus::optimal;
        polished_early = true;
        break;
      }
      // hold on to the best near-feasible candidate a failed polish left in
      // sol before the next check overwrites it with the raw iterate
      if (sol.primal_residual < rescue.primal_residual) rescue = sol;
      next_polish = iter + polish_backoff;
      polish_backoff = std::min(polish_backoff * 2, cfg_.max_iterations);
    }

    // primal infeasibility certificate from the dual update direction
    const Eigen::VectorXd dy = (y - y_prev).cwiseProduct(e_) / c_;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > kDiv) {
      const Eigen::VectorXd t = dy / dy_norm;
      double support = 0.0;
      bool bounded = true;
      for (Eigen::Index i = 0; i < m_; ++i) {
        if (t(i) > cfg_.eps_infeasible) {
          if (!std::isfinite(u_(i))) { bounded = false; break; }
          support += u_(i) * t(i);
        } else if (t(i) < -cfg_.eps_infeasible) {
          if (!std::isfinite(l_(i))) { bounded = false; break; }
          support += l_(i) * t(i);
        }
      }
      if (bounded && inf_norm(A_.transpose() * t) <= cfg_.eps_infeasible &&
          support <= -cfg_.eps_infeasible) {
        sol.status = QpStatus::primal_infeasible;
        break;
      }
    }

    // dual infeasibility certificate from the primal update direction
    const Eigen::VectorXd dx = d_.cwiseProduct(x - x_prev);
    const double dx_norm = inf_norm(dx);
    if (dx_norm > kDiv) {
      const Eigen::VectorXd t = dx / dx_norm;
      const Eigen::VectorXd Pt = P_ * t;
      if (inf_norm(Pt) <= cfg_.eps_infeasible && q_.dot(t) <= -cfg_.eps_infeasible) {
        const Eigen::VectorXd At = A_ * t;
        bool recession = true;
        for (Eigen::Index i = 0; i < m_; ++i) {
          if (std::isfinite(u_(i)) && At(i) > cfg_.eps_infeasible) { recession = false; break; }
          if (std::isfinite(l_(i)) && At(i) < -cfg_.eps_infeasible) { recession = false; break; }
        }
        if (recession) {
          sol.status = QpStatus::dual_infeasible;
          break;
        }
      }
    }

    if (cfg_.adaptive_rho && iter - last_rho_update >= cfg_.rho_update_interval) {
      const double ratio = std::sqrt((rp / (rp_scale)) / std::max(rd / rd_scale, kDiv));
      if (ratio > 5.0 || ratio < 0.2) {
        cfg_.penalty_parameter = std::clamp(cfg_.penalty_parameter * ratio, 1e-6, 1e6);
        build_rho();
        factorize();
        last_rho_update = iter;
      }
    }
  }

  if (sol.iterations == 0) {
    // max_iterations smaller than check interval; report the raw iterate
    sol.x = d_.cwiseProduct(x);
    sol.dual = y.cwiseProduct(e_) / c_;
    sol.iterations = iter;
  }

  if (sol.status == QpStatus::optimal && cfg_.polish && !polished_early) {
    polish(sol);
  } else if (sol.status == QpStatus::max_iter && cfg_.polish && sol.iterations > 0) {
    // near-converged: active-set polish may still land inside tolerance
    if (polish_to_tolerance(sol)) {
      sol.status = QpStatus::optimal;
    } else if (rescue.primal_residual < sol.primal_residual) {
      // no certificate anywhere, but an earlier polish produced a point much
      // closer to feasibility than the final iterate: return that one
      rescue.status = QpStatus::max_iter;
      rescue.iterations = sol.iterations;
      sol = rescue;
    }
  }
  return sol;
}

bool QpSolver::polish_to_tolerance(QpSolution& sol) const {
  QpSolution trial = sol;
  const bool certified = polish(trial);
  const Eigen::VectorXd Ax = A_ * trial.x;
  const Eigen::VectorXd Px = P_ * trial.x;
  const Eigen::VectorXd Aty = A_.transpose() * trial.dual;
  const double eps_p = cfg_.eps_primal * (1.0 + std::max(inf_norm(Ax), kDiv));
  const double eps_d =
      cfg_.eps_dual * (1.0 + std::max({inf_norm(Px), inf_norm(Aty), inf_norm(q_)}));
  if (certified && trial.primal_residual <= eps_p && trial.dual_residual <= eps_d) {
    sol = trial;
    return true;
  }
  // a feasible point without a dual certificate still gives an honest
  // objective evaluation, which incumbent consumers can use as an upper bound
  if (trial.primal_residual <= eps_p && trial.primal_residual < sol.primal_residual) {
    sol = trial;
  }
  return false;
}

bool QpSolver::polish(QpSolution& sol) const {
  constexpr double kActiveTol = 1e-9;
  constexpr double kDelta = 1e-8;
  constexpr int kMaxPasses = 250;
  enum : int { kFree = 0, kLow = 1, kUp = 2, kEq = 3 };

  // initial working set: equality rows, dual-sign actives, and primal-proximity
  // rescue for degenerate rows whose multiplier vanishes (common at LP vertices)
  const Eigen::VectorXd Ax0 = A_ * sol.x;
  const double ptol = std::max({10.0 * sol.primal_residual, cfg_.eps_primal, 1e-7});
  std::vector<int> state(m_, kFree);
  for (Eigen::Index i = 0; i < m_; ++i) {
    const bool fl = std::isfinite(l_(i));
    const bool fu = std::isfinite(u_(i));
    if (fl && fu && l_(i) == u_(i)) {
      state[i] = kEq;
    } else if (fl && (sol.dual(i) < -kActiveTol ||
                      Ax0(i) - l_(i) <= ptol * (1.0 + std::abs(l_(i))))) {
      state[i] = kLow;
    } else if (fu && (sol.dual(i) > kActiveTol ||
                      u_(i) - Ax0(i) <= ptol * (1.0 + std::abs(u_(i))))) {
      state[i] = kUp;
    }
  }

  Eigen::VectorXd x_cur = sol.x;
  Eigen::VectorXd y_cur = sol.dual;
  std::vector<char> locked(m_, 0);    // rows no longer eligible for dropping
  std::vector<char> no_evict(m_, 0);  // rows that re-blocked right after eviction
  std::vector<unsigned char> drop_count(m_, 0);
  Eigen::Index last_dropped = -1;
  Eigen::Index last_evicted = -1;

  for (int pass = 0; pass < kMaxPasses; ++pass) {
    std::vector<Eigen::Index> active;
    std::vector<Eigen::Index> slot_of_row(m_, -1);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (state[i] != kFree) {
        slot_of_row[i] = static_cast<Eigen::Index>(active.size());
        active.push_back(i);
      }
    }
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());

    Eigen::VectorXd h(n_ + na);
    h.head(n_) = -q_;
    for (Eigen::Index s = 0; s < na; ++s) {
      const Eigen::Index i = active[s];
      h(n_ + s) = state[i] == kUp ? u_(i) : l_(i);
    }

    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < P_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(P_, k); it; ++it) {
        trips.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it) {
        const Eigen::Index s = slot_of_row[it.row()];
        if (s >= 0) {
          trips.emplace_back(n_ + s, it.col(), it.value());
          trips.emplace_back(it.col(), n_ + s, it.value());
        }
      }
    }
    Eigen::SparseMatrix<double> H(n_ + na, n_ + na);
    H.setFromTriplets(trips.begin(), trips.end());
    for (Eigen::Index i = 0; i < n_; ++i) trips.emplace_back(i, i, kDelta);
    for (Eigen::Index i = 0; i < na; ++i) trips.emplace_back(n_ + i, n_ + i, -kDelta);
    Eigen::SparseMatrix<double> Hreg(n_ + na, n_ + na);
    Hreg.setFromTriplets(trips.begin(), trips.end());
    Hreg.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(Hreg);
    if (lu.info() != Eigen::Success) {
      if (cfg_.log) *cfg_.log << "polish: factorization failed (na=" << na << ")\n";
      return false;
    }

    // refinement anchored at the current iterate: flat directions of a singular
    // reduced KKT (degenerate LPs) then stay put instead of drifting toward the
    // regularized minimum-norm solution
    Eigen::VectorXd t(n_ + na);
    t.head(n_) = x_cur;
    for (Eigen::Index s = 0; s < na; ++s) t(n_ + s) = y_cur(active[s]);
    // keep the lowest-residual iterate: refinement diverges when the working
    // set holds dependent rows pinned at contradictory values
    Eigen::VectorXd t_best = t;
    double res_best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 8; ++r) {
      const Eigen::VectorXd res = h - H * t;
      const double rn = inf_norm(res);
      if (rn < res_best) {
        res_best = rn;
        t_best = t;
      } else if (rn > 10.0 * res_best) {
        break;
      }
      t += lu.solve(res);
    }
    if (inf_norm(h - H * t) >= res_best) t = t_best;
    if (!t.allFinite()) {
      if (cfg_.log) *cfg_.log << "polish: non-finite subproblem solution\n";
      return false;
    }

    const Eigen::VectorXd x_eqp = t.head(n_);

    // an inconsistent working set (proximity seeding can pin contradictory
    // rows) leaves the subproblem solution off some active row; evict the row
    // it misses worst rather than carrying the violation to a "vertex"
    {
      const Eigen::VectorXd Ae = A_ * x_eqp;
      Eigen::Index bad = -1;
      double bad_viol = 0.0;
      for (Eigen::Index s = 0; s < na; ++s) {
        const Eigen::Index i = active[s];
        if (no_evict[i]) continue;
        if (std::isfinite(l_(i)) && l_(i) == u_(i)) continue;  // equalities stay
        const double target = state[i] == kUp ? u_(i) : l_(i);
        const double viol = std::abs(Ae(i) - target);
        if (viol > bad_viol) {
          bad_viol = viol;
          bad = i;
        }
      }
      if (bad >= 0 && bad_viol > 1e-7 * (1.0 + std::abs(state[bad] == kUp ? u_(bad) : l_(bad)))) {
        state[bad] = kFree;
        y_cur(bad) = 0.0;
        last_evicted = bad;
        if (cfg_.log) {
          *cfg_.log << "polish pass=" << pass << " na=" << na << " evict row " << bad
                    << " (miss=" << bad_viol << ")\n";
        }
        continue;
      }
    }

    // ratio test toward the equality-constrained solution: the step stops at the
    // first inactive row it would cross, which then joins the working set. This
    // also absorbs unbounded subproblem directions after a drop.
    const Eigen::VectorXd dx = x_eqp - x_cur;
    const Eigen::VectorXd Ax = A_ * x_cur;
    const Eigen::VectorXd Adx = A_ * dx;
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    int blocking_side = kFree;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (state[i] != kFree) continue;
      const double di = Adx(i);
      if (di > kActiveTol && std::isfinite(u_(i))) {
        const double room = std::max(0.0, u_(i) - Ax(i));
        if (room < alpha * di) {
          alpha = room / di;
          blocking = i;
          blocking_side = kUp;
        }
      } else if (di < -kActiveTol && std::isfinite(l_(i))) {
        const double room = std::max(0.0, Ax(i) - l_(i));
        if (room < alpha * (-di)) {
          alpha = room / (-di);
          blocking = i;
          blocking_side = kLow;
        }
      }
    }

    if (blocking >= 0) {
      x_cur += alpha * dx;
      state[blocking] = blocking_side;
      if (blocking == last_dropped && alpha < 1e-12) locked[blocking] = 1;
      if (blocking == last_evicted) no_evict[blocking] = 1;
      if (cfg_.log) {
        *cfg_.log << "polish pass=" << pass << " na=" << na << " alpha=" << alpha
                  << " add row " << blocking << "\n";
      }
      continue;
    }

    // full step: re-derive multipliers as the minimum-norm solution on the
    // active rows. Dependent working sets give the reduced KKT huge canceling
    // multiplier pairs; the least-squares duals stay at their natural scale so
    // the sign and complementarity checks below are meaningful.
    x_cur = x_eqp;
    std::vector<Eigen::Triplet<double>> atrips;
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it) {
        const Eigen::Index s = slot_of_row[it.row()];
        if (s >= 0) atrips.emplace_back(s, it.col(), it.value());
      }
    }
    Eigen::SparseMatrix<double> Aact(na, n_);
    Aact.setFromTriplets(atrips.begin(), atrips.end());
    const Eigen::VectorXd Px = P_ * x_cur;
    const Eigen::VectorXd r = -(q_ + Px);
    Eigen::SparseMatrix<double> S = (Aact.transpose() * Aact).pruned();
    for (Eigen::Index i = 0; i < n_; ++i) S.coeffRef(i, i) += 1e-10;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram(S);
    if (gram.info() != Eigen::Success) {
      if (cfg_.log) *cfg_.log << "polish: dual factorization failed\n";
      return false;
    }
    const Eigen::VectorXd y_act = Aact * gram.solve(r);
    y_cur.setZero();
    for (Eigen::Index s = 0; s < na; ++s) y_cur(active[s]) = y_act(s);

    const double rd = inf_norm(Px + q_ + A_.transpose() * y_cur);
    const double dtol = 1e-7 * (1.0 + inf_norm(y_cur));
    Eigen::Index worst_row = -1;
    double worst = dtol;
    for (Eigen::Index s = 0; s < na; ++s) {
      const Eigen::Index i = active[s];
      if (locked[i]) continue;
      const double yi = y_act(s);
      if (state[i] == kLow && yi > worst) {
        worst = yi;
        worst_row = i;
      } else if (state[i] == kUp && -yi > worst) {
        worst = -yi;
        worst_row = i;
      }
    }

    if (worst_row >= 0) {
      state[worst_row] = kFree;
      y_cur(worst_row) = 0.0;
      last_dropped = worst_row;
      // a row dropped twice is cycling (add/drop loops with no net progress);
      // freeze it in the working set once it comes back
      if (++drop_count[worst_row] >= 2) locked[worst_row] = 1;
      if (cfg_.log) {
        *cfg_.log << "polish pass=" << pass << " na=" << na << " drop row "
                  << worst_row << " (y=" << worst << ")\n";
      }
      continue;
    }

    const Eigen::VectorXd Axf = A_ * x_cur;
    double rp = 0.0;
    for (Eigen::Index i = 0; i < m_; ++i) {
      rp = std::max(rp, std::max(Axf(i) - u_(i), l_(i) - Axf(i)));
    }
    rp = std::max(rp, 0.0);

    // certify independently of the working-set path: fit multipliers under
    // their sign constraints (coordinate descent on the stationarity residual)
    // over every row tight at the candidate point. At degenerate vertices the
    // minimum-norm duals on the working set alone can put wrong-signed weight
    // on dependent rows and reject a true optimum.
    {
      const double taut = std::max(1e-7, 10.0 * rp);
      std::vector<Eigen::Index> cand;
      std::vector<int> side;  // -1 lower bound, +1 upper bound, 0 both/equality
      std::vector<Eigen::Index> slot(m_, -1);
      for (Eigen::Index i = 0; i < m_; ++i) {
        const bool nl = std::isfinite(l_(i)) && Axf(i) - l_(i) <= taut * (1.0 + std::abs(l_(i)));
        const bool nu = std::isfinite(u_(i)) && u_(i) - Axf(i) <= taut * (1.0 + std::abs(u_(i)));
        if (!nl && !nu) continue;
        slot[i] = static_cast<Eigen::Index>(cand.size());
        cand.push_back(i);
        side.push_back(nl && nu ? 0 : (nl ? -1 : +1));
      }
      const Eigen::Index nc = static_cast<Eigen::Index>(cand.size());
      std::vector<Eigen::Triplet<double>> ttrips;
      for (int k = 0; k < A_.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it) {
          if (slot[it.row()] >= 0) ttrips.emplace_back(it.col(), slot[it.row()], it.value());
        }
      }
      Eigen::SparseMatrix<double> At(n_, nc);  // column s is constraint row cand[s]
      At.setFromTriplets(ttrips.begin(), ttrips.end());
      Eigen::VectorXd ycd(nc);
      for (Eigen::Index s = 0; s < nc; ++s) {
        double yi = y_cur(cand[s]);
        if (side[s] < 0) yi = std::min(yi, 0.0);
        if (side[s] > 0) yi = std::max(yi, 0.0);
        ycd(s) = yi;
      }
      Eigen::VectorXd resid = At * ycd - r;
      Eigen::VectorXd col_norm2(nc);
      for (Eigen::Index s = 0; s < nc; ++s) {
        double nrm = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(At, s); it; ++it) {
          nrm += it.value() * it.value();
        }
        col_norm2(s) = nrm;
      }
      for (int sweep = 0; sweep < 300; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index s = 0; s < nc; ++s) {
          if (col_norm2(s) <= 0.0) continue;
          double dot = 0.0;
          for (Eigen::SparseMatrix<double>::InnerIterator it(At, s); it; ++it) {
            dot += it.value() * resid(it.row());
          }
          double ynew = ycd(s) - dot / col_norm2(s);
          if (side[s] < 0) ynew = std::min(ynew, 0.0);
          if (side[s] > 0) ynew = std::max(ynew, 0.0);
          const double dy = ynew - ycd(s);
          if (dy != 0.0) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(At, s); it; ++it) {
              resid(it.row()) += dy * it.value();
            }
            ycd(s) = ynew;
            max_change = std::max(max_change, std::abs(dy));
          }
        }
        if (max_change <= 1e-13 * (1.0 + inf_norm(ycd))) break;
      }
      // exact least-squares finish on the support the descent found: descent
      // identifies the right rows quickly but closes the last digits slowly
      Eigen::VectorXd y_best = ycd;
      double res_best = inf_norm(At * ycd - r);
      std::vector<char> in_sup(nc, 0);
      for (Eigen::Index s = 0; s < nc; ++s) {
        in_sup[s] = side[s] == 0 || std::abs(ycd(s)) > 1e-12;
      }
      for (int rep = 0; rep < 10; ++rep) {
        std::vector<Eigen::Triplet<double>> strips;
        for (Eigen::Index s = 0; s < nc; ++s) {
          if (!in_sup[s]) continue;
          for (Eigen::SparseMatrix<double>::InnerIterator it(At, s); it; ++it) {
            strips.emplace_back(s, it.row(), it.value());
          }
        }
        Eigen::SparseMatrix<double> Asub(nc, n_);  // zero rows off the support
        Asub.setFromTriplets(strips.begin(), strips.end());
        Eigen::SparseMatrix<double> G = (Asub.transpose() * Asub).pruned();
        for (Eigen::Index i = 0; i < n_; ++i) G.coeffRef(i, i) += 1e-12;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram2(G);
        if (gram2.info() != Eigen::Success) break;
        Eigen::VectorXd ytry = Asub * gram2.solve(r);
        bool sign_ok = true;
        for (Eigen::Index s = 0; s < nc; ++s) {
          if ((side[s] < 0 && ytry(s) > 1e-12) || (side[s] > 0 && ytry(s) < -1e-12)) {
            in_sup[s] = 0;
            ytry(s) = 0.0;
            sign_ok = false;
          }
        }
        const double res = inf_norm(At * ytry - r);
        if (sign_ok && res < res_best) {
          res_best = res;
          y_best = ytry;
        }
        if (sign_ok) break;
      }
      y_cur.setZero();
      for (Eigen::Index s = 0; s < nc; ++s) y_cur(cand[s]) = y_best(s);
    }
    const double rd_signed = inf_norm(Px + q_ + A_.transpose() * y_cur);
    // complementarity gap: bounds suboptimality directly, so wrong-signed
    // multipliers hiding under a blown-up dtol cannot certify a bad vertex
    const double obj = 0.5 * x_cur.dot(Px) + q_.dot(x_cur);
    double comp = 0.0;
    const double ynoise = 1e-12 * (1.0 + inf_norm(y_cur));
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double yi = y_cur(i);
      if (std::abs(yi) <= ynoise) continue;
      if (yi > 0.0) {
        if (!std::isfinite(u_(i))) {
          comp = std::numeric_limits<double>::infinity();
          break;
        }
        comp += yi * std::max(0.0, std::abs(u_(i) - Axf(i)) - 1e-12 * (1.0 + std::abs(u_(i))));
      } else {
        if (!std::isfinite(l_(i))) {
          comp = std::numeric_limits<double>::infinity();
          break;
        }
        comp += -yi * std::max(0.0, std::abs(Axf(i) - l_(i)) - 1e-12 * (1.0 + std::abs(l_(i))));
      }
    }
    if (comp > 1e-6 * (1.0 + std::abs(obj))) {
      if (cfg_.log) {
        *cfg_.log << "polish: rejected comp=" << comp << " rp=" << rp
                  << " rd=" << rd_signed << " obj=" << obj << "\n";
      }
      if (rp < sol.primal_residual) {
        sol.x = x_cur;
        sol.dual = y_cur;
        sol.primal_residual = rp;
        sol.dual_residual = rd_signed;
        sol.objective = obj;
      }
      return false;
    }
    if (rp <= std::max(sol.primal_residual, cfg_.eps_primal) &&
        rd_signed <= std::max(sol.dual_residual, cfg_.eps_dual)) {
      sol.x = x_cur;
      sol.dual = y_cur;
      sol.primal_residual = rp;
      sol.dual_residual = rd_signed;
      sol.objective = obj;
      return true;
    }
    if (cfg_.log) {
      *cfg_.log << "polish: rejected rp=" << rp << " rd_signed=" << rd_signed << " (na=" << na << ")\n";
    }
    if (rp < sol.primal_residual) {
      sol.x = x_cur;
      sol.dual = y_cur;
      sol.primal_residual = rp;
      sol.dual_residual = rd_signed;
      sol.objective = obj;
    }
    return false;
  }
  if (cfg_.log) *cfg_.log << "polish: working set did not settle\n";
  {
    const Eigen::VectorXd Axf = A_ * x_cur;
    double rp = 0.0;
    for (Eigen::Index i = 0; i < m_; ++i) {
      rp = std::max(rp, std::max(Axf(i) - u_(i), l_(i) - Axf(i)));
    }
    rp = std::max(rp, 0.0);
    if (rp < sol.primal_residual) {
      const Eigen::VectorXd Px = P_ * x_cur;
      sol.x = x_cur;
      sol.dual = y_cur;
      sol.primal_residual = rp;
      sol.dual_residual = inf_norm(Px + q_ + A_.transpose() * y_cur);
      sol.objective = 0.5 * x_cur.dot(Px) + q_.dot(x_cur);
    }
  }
  return false;
}

}  // namespace pfarb
