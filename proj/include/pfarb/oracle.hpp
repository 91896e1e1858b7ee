#pragma once

#include <vector>

#include "pfarb/formulations.hpp"
#include "pfarb/qp_solver.hpp"

namespace pfarb {

struct OracleResult {
  bool feasible = false;
  double objective = 0.0;
  Dispatch dispatch;
  std::vector<int> pattern;  ///< winning binary assignment, instance order
};

/// Exhausts the disjunctive sign patterns of the PF constraint for small N,
/// solving one convex QP per pattern. Exact up to QP tolerance; independent of
/// branch-and-bound. Patterns are scanned in lexicographic order and ties kept
/// on the first (smallest) pattern.
OracleResult oracle_sign_enum(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              FormulationId formulation, double lambda = kDefaultLambda,
                              double beta = kDefaultBeta, const SolverConfig& qp = {});

struct GridDpResult {
  double profit = 0.0;
  double error_bound = 0.0;  ///< discretization error estimate ($)
};

/// Backward value iteration over a uniform charge grid; arbitrage only.
GridDpResult oracle_grid_dp(const Scenario& scenario, const BatteryParams& params,
                            int grid_points);

}  // namespace pfarb
