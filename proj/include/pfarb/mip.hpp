#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pfarb/formulations.hpp"
#include "pfarb/qp_solver.hpp"

namespace pfarb {

enum class MipStatus { optimal, feasible_incumbent, infeasible, node_budget_exhausted };

std::string to_string(MipStatus s);

struct MipSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  MipStatus status = MipStatus::infeasible;
  int nodes_explored = 0;
  double gap = 0.0;
};

struct MipConfig {
  double int_tol = 1e-5;
  double gap_tol = 1e-4;
  int node_budget = 20000;
  double time_budget = 0.0;  ///< wall-clock seconds for the search; 0 = unlimited
  bool use_seed_incumbent = true;
  SolverConfig qp;
  std::ostream* log = nullptr;  ///< optional search log (node id, depth, bound, incumbent)
};

/// Heuristic integral assignment for the instance's binaries from a relaxation
/// point: z and z2 follow the sign of total active power, z1 the sign of total
/// reactive power. Values indexed like instance.binary_indices.
std::optional<std::vector<int>> seed_incumbent(const ProblemInstance& instance,
                                               const Scenario& scenario,
                                               const Eigen::VectorXd& relaxation_x);

/// Depth-first branch-and-bound over the instance's binary set, with QP node
/// relaxations. An instance without binaries degenerates to a single QP solve.
MipSolution solve_mip(const ProblemInstance& instance, const MipConfig& config = {});

MipSolution solve_mip(const ProblemInstance& instance, const Scenario& scenario,
                      const MipConfig& config = {});

}  // namespace pfarb
