#include "pfarb/mip.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace pfarb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Node {
  std::vector<std::pair<int, int>> fixings;  ///< (binary var index, 0/1)
  double parent_bound;
  int depth;
};

void apply_fixings(const ProblemInstance& pi, const std::vector<std::pair<int, int>>& fixings,
                   const Eigen::VectorXd& l0, const Eigen::VectorXd& u0, Eigen::VectorXd& l,
                   Eigen::VectorXd& u) {
  l = l0;
  u = u0;
  for (const auto& [var, val] : fixings) {
    const int row = pi.bound_row[var];
    l(row) = val;
    u(row) = val;
  }
}

// a polished point that is primal-feasible gives an honest objective even when
// the dual certificate failed; good enough for incumbents, not for bounds
bool usable_point(const QpSolution& s) {
  return s.status == QpStatus::optimal || s.primal_residual <= 1e-6;
}

}  // namespace

std::string to_string(MipStatus s) {
  switch (s) {
    case MipStatus::optimal: return "optimal";
    case MipStatus::feasible_incumbent: return "feasible_incumbent";
    case MipStatus::infeasible: return "infeasible";
    case MipStatus::node_budget_exhausted: return "node_budget_exhausted";
  }
  return "unknown";
}

std::optional<std::vector<int>> seed_incumbent(const ProblemInstance& instance,
                                               const Scenario& scenario,
                                               const Eigen::VectorXd& relaxation_x) {
  if (instance.binary_indices.empty()) return std::nullopt;
  const Dispatch d = extract_dispatch(instance, relaxation_x);
  std::vector<int> assignment;
  assignment.reserve(instance.binary_indices.size());
  for (int i = instance.first_step; i < instance.first_step + instance.n_steps; ++i) {
    const std::size_t local = static_cast<std::size_t>(i - instance.first_step);
    const double p_t = scenario.net_p(i) + d.p_b[local];
    const double q_t = scenario.net_q(i) + d.q_b[local];
    if (instance.has(VarKind::binary_z, i)) assignment.push_back(p_t >= 0.0 ? 1 : 0);
    if (instance.has(VarKind::binary_z1, i)) assignment.push_back(q_t >= 0.0 ? 1 : 0);
    if (instance.has(VarKind::binary_z2, i)) assignment.push_back(p_t >= 0.0 ? 1 : 0);
  }
  if (assignment.size() != instance.binary_indices.size()) return std::nullopt;
  return assignment;
}

MipSolution solve_mip(const ProblemInstance& instance, const MipConfig& config) {
  return solve_mip(instance, Scenario{}, config);
}

MipSolution solve_mip(const ProblemInstance& instance, const Scenario& scenario,
                      const MipConfig& config) {
  if (config.node_budget < 1) throw std::invalid_argument("node budget must be >= 1");

  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l0, u0;
  instance.constraint_matrix(A, l0, u0);

  // node relaxations run at loose tolerance; the winning assignment is
  // re-solved at the configured tolerance before returning. Binary-free
  // instances are a single tight solve.
  SolverConfig node_cfg = config.qp;
  if (!instance.binary_indices.empty()) {
    node_cfg.eps_primal = std::max(node_cfg.eps_primal, 1e-4);
    node_cfg.eps_dual = std::max(node_cfg.eps_dual, 1e-4);
    node_cfg.max_iterations = std::min(node_cfg.max_iterations, 10000);
  }
  QpSolver solver(instance.quadratic_matrix(), instance.linear_vector(), A, l0, u0, node_cfg);

  MipSolution out;

  // relaxed root
  QpSolution root = solver.solve();
  ++out.nodes_explored;
  if (root.status == QpStatus::primal_infeasible) {
    out.status = MipStatus::infeasible;
    return out;
  }
  if (root.status == QpStatus::dual_infeasible) {
    throw std::runtime_error("mip: relaxation is unbounded");
  }

  if (instance.binary_indices.empty()) {
    if (root.status != QpStatus::optimal) {
      if (usable_point(root)) {
        // stalled without a dual certificate but primal feasible: hand the
        // point back as an incumbent, its objective is an honest value
        out.x = root.x;
        out.objective = root.objective;
        out.status = MipStatus::feasible_incumbent;
        out.gap = kInf;
        return out;
      }
      out.status = MipStatus::node_budget_exhausted;
      out.gap = kInf;
      return out;
    }
    out.x = root.x;
    out.objective = root.objective;
    out.status = MipStatus::optimal;
    out.gap = 0.0;
    return out;
  }

  Eigen::VectorXd l = l0, u = u0;
  Eigen::VectorXd last_x = root.x, last_y = root.dual;

  bool have_incumbent = false;
  double incumbent_obj = kInf;
  Eigen::VectorXd incumbent_x;
  std::vector<int> incumbent_assignment;
  const auto rel_gap = [&](double lb) {
    return (incumbent_obj - lb) / std::max(1.0, std::abs(incumbent_obj));
  };

  // solve with every binary pinned to an integral assignment
  auto try_assignment = [&](const std::vector<int>& assignment) {
    std::vector<std::pair<int, int>> fixings;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      fixings.emplace_back(instance.binary_indices[i], assignment[i]);
    }
    apply_fixings(instance, fixings, l0, u0, l, u);
    solver.update_bounds(l, u);
    const QpSolution sol = solver.solve(last_x, last_y);
    if (usable_point(sol) && sol.objective < incumbent_obj) {
      have_incumbent = true;
      incumbent_obj = sol.objective;
      incumbent_x = sol.x;
      incumbent_assignment = assignment;
    }
  };

  // dedicated cold solve at the configured tolerance rather than the loose
  // node one; used for the seed assignment and for leaves whose warm node
  // relaxation stalled. Returns the certified objective when it has one.
  auto try_assignment_tight = [&](const std::vector<int>& assignment) -> std::optional<double> {
    std::vector<std::pair<int, int>> fixings;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      fixings.emplace_back(instance.binary_indices[i], assignment[i]);
    }
    apply_fixings(instance, fixings, l0, u0, l, u);
    QpSolver tight(instance.quadratic_matrix(), instance.linear_vector(), A, l, u, config.qp);
    const QpSolution sol = tight.solve();
    if (config.log && !usable_point(sol)) {
      *config.log << "pinned solve: " << to_string(sol.status) << " rp=" << sol.primal_residual
                  << " rd=" << sol.dual_residual << '\n';
    }
    if (usable_point(sol) && sol.objective < incumbent_obj) {
      have_incumbent = true;
      incumbent_obj = sol.objective;
      incumbent_x = sol.x;
      incumbent_assignment = assignment;
    }
    if (sol.status == QpStatus::optimal) return sol.objective;
    if (sol.status == QpStatus::primal_infeasible) return kInf;
    return std::nullopt;
  };

  if (config.use_seed_incumbent && scenario.steps() > 0) {
    if (const auto seed = seed_incumbent(instance, scenario, root.x)) {
      try_assignment_tight(*seed);
      if (config.log) {
        if (have_incumbent) *config.log << "seed incumbent obj=" << incumbent_obj << '\n';
        else *config.log << "seed incumbent failed\n";
      }
    }
  }

  std::vector<Node> stack;
  stack.push_back({{}, root.status == QpStatus::optimal ? root.objective : -kInf, 0});
  double closed_lb = kInf;  // min bound over finished subtrees
  bool budget_hit = false;
  const auto start = std::chrono::steady_clock::now();
  const auto out_of_time = [&] {
    if (config.time_budget <= 0.0) return false;
    const std::chrono::duration<double> spent = std::chrono::steady_clock::now() - start;
    return spent.count() >= config.time_budget;
  };

  while (!stack.empty()) {
    if (out.nodes_explored >= config.node_budget || out_of_time()) {
      budget_hit = true;
      break;
    }
    Node node = std::move(stack.back());
    stack.pop_back();

    if (have_incumbent && rel_gap(node.parent_bound) <= config.gap_tol) {
      closed_lb = std::min(closed_lb, node.parent_bound);
      continue;
    }

    apply_fixings(instance, node.fixings, l0, u0, l, u);
    solver.update_bounds(l, u);
    QpSolution sol = solver.solve(last_x, last_y);
    ++out.nodes_explored;

    if (sol.status == QpStatus::primal_infeasible) continue;  // subtree bound = +inf
    if (sol.status == QpStatus::dual_infeasible) {
      throw std::runtime_error("mip: node relaxation is unbounded");
    }
    const bool converged = sol.status == QpStatus::optimal;
    // unconverged relaxations give no usable bound but still guide branching
    const double bound = converged ? std::max(sol.objective, node.parent_bound)
                                   : node.parent_bound;
    last_x = sol.x;
    last_y = sol.dual;

    if (config.log) {
      *config.log << "node=" << out.nodes_explored << " depth=" << node.depth
                  << " bound=" << bound
                  << " incumbent=" << (have_incumbent ? incumbent_obj : kInf) << '\n';
    }

    if (converged && have_incumbent && rel_gap(bound) <= config.gap_tol) {
      closed_lb = std::min(closed_lb, bound);
      continue;
    }

    // most fractional binary among those not already pinned (a stalled node
    // relaxation can report fractional values even for pinned binaries)
    const auto is_fixed = [&](int idx) {
      return std::any_of(node.fixings.begin(), node.fixings.end(),
                         [idx](const auto& f) { return f.first == idx; });
    };
    int branch_var = -1;
    double worst = config.int_tol;
    for (int idx : instance.binary_indices) {
      if (is_fixed(idx)) continue;
      const double v = sol.x(idx);
      const double dist = std::min(std::abs(v), std::abs(1.0 - v));
      if (dist > worst) {
        worst = dist;
        branch_var = idx;
      }
    }
    if (branch_var < 0 && !converged && node.fixings.size() < instance.binary_indices.size()) {
      // integral by accident but uncertified: closing the subtree here would
      // freeze a weak bound, so branch on some still-free binary instead
      for (int idx : instance.binary_indices) {
        if (!is_fixed(idx)) {
          branch_var = idx;
          break;
        }
      }
    }

    if (branch_var < 0) {
      // integral point: re-solve with binaries pinned for a clean incumbent;
      // pinned binaries keep their pinned value, free ones round
      std::vector<int> assignment;
      assignment.reserve(instance.binary_indices.size());
      for (int idx : instance.binary_indices) {
        const auto it = std::find_if(node.fixings.begin(), node.fixings.end(),
                                     [idx](const auto& f) { return f.first == idx; });
        assignment.push_back(it != node.fixings.end() ? it->second
                                                      : (sol.x(idx) > 0.5 ? 1 : 0));
      }
      const double before = incumbent_obj;
      double leaf_bound = bound;
      if (converged) {
        try_assignment(assignment);
      } else {
        // warm node solve stalled: a cold tight solve rescues the incumbent,
        // and when the node has every binary pinned its certified objective
        // is also an honest bound for this finished subtree
        const auto certified = try_assignment_tight(assignment);
        if (certified && node.fixings.size() == instance.binary_indices.size()) {
          leaf_bound = std::max(leaf_bound, *certified);
        }
      }
      if (incumbent_obj >= before && converged && sol.objective < incumbent_obj) {
        // pinned re-solve did not improve; keep the relaxation point
        have_incumbent = true;
        incumbent_obj = sol.objective;
        incumbent_x = sol.x;
        incumbent_assignment = assignment;
      }
      closed_lb = std::min(closed_lb, leaf_bound);
      continue;
    }

    const int prefer = sol.x(branch_var) >= 0.5 ? 1 : 0;
    for (int val : {1 - prefer, prefer}) {  // preferred child on top of the stack
      Node child;
      child.fixings = node.fixings;
      child.fixings.emplace_back(branch_var, val);
      child.parent_bound = bound;
      child.depth = node.depth + 1;
      stack.push_back(std::move(child));
    }
  }

  double open_lb = kInf;
  for (const Node& n : stack) open_lb = std::min(open_lb, n.parent_bound);
  const double global_lb = std::min(closed_lb, open_lb);

  if (!have_incumbent) {
    out.status = budget_hit ? MipStatus::node_budget_exhausted : MipStatus::infeasible;
    out.gap = kInf;
    return out;
  }

  // tight re-solve of the winning assignment at the configured tolerance
  if (!incumbent_assignment.empty()) {
    std::vector<std::pair<int, int>> fixings;
    for (std::size_t i = 0; i < incumbent_assignment.size(); ++i) {
      fixings.emplace_back(instance.binary_indices[i], incumbent_assignment[i]);
    }
    apply_fixings(instance, fixings, l0, u0, l, u);
    QpSolver tight(instance.quadratic_matrix(), instance.linear_vector(), A, l, u, config.qp);
    const QpSolution sol = tight.solve(incumbent_x, Eigen::VectorXd::Zero(A.rows()));
    if (usable_point(sol) && sol.objective < incumbent_obj) {
      incumbent_obj = sol.objective;
      incumbent_x = sol.x;
    }
  }

  out.x = incumbent_x;
  out.objective = incumbent_obj;
  out.gap = std::isfinite(global_lb) ? std::max(0.0, rel_gap(global_lb)) : 0.0;
  if (!budget_hit && out.gap <= config.gap_tol) {
    out.status = MipStatus::optimal;
  } else if (budget_hit) {
    out.status = MipStatus::node_budget_exhausted;
  } else {
    out.status = MipStatus::feasible_incumbent;
  }
  return out;
}

}  // namespace pfarb
