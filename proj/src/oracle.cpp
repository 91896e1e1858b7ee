#include "pfarb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pfarb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Allowed values for a binary given the sign information in [lo, hi]:
/// the "2y - v >= 0" rows force z to track sign(v), so a sign-definite
/// interval pins the binary.
std::vector<int> allowed_values(double lo, double hi) {
  if (lo > 0.0) return {1};
  if (hi < 0.0) return {0};
  return {0, 1};
}

}  // namespace

OracleResult oracle_sign_enum(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              FormulationId formulation, double lambda, double beta,
                              const SolverConfig& qp) {
  const int n = static_cast<int>(scenario.steps());
  if (n > 10) throw std::invalid_argument("oracle_sign_enum: horizon too large to enumerate");

  ProblemInstance pi;
  switch (formulation) {
    case FormulationId::arb:
      pi = build_arb(scenario, params);
      break;
    case FormulationId::mr:
      pi = build_mccormick(scenario, params, limit, polygon);
      break;
    case FormulationId::plt:
      pi = build_penalty(scenario, params, limit, polygon, lambda, 0.0);
      break;
    case FormulationId::plt_conv:
      pi = build_penalty(scenario, params, limit, polygon, lambda, beta);
      break;
    default:
      throw std::invalid_argument("oracle_sign_enum: unsupported formulation");
  }

  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l0, u0;
  pi.constraint_matrix(A, l0, u0);
  QpSolver solver(pi.quadratic_matrix(), pi.linear_vector(), A, l0, u0, qp);

  OracleResult best;

  if (pi.binary_indices.empty()) {
    const QpSolution sol = solver.solve();
    if (sol.status == QpStatus::optimal) {
      best.feasible = true;
      best.objective = sol.objective;
      best.dispatch = extract_dispatch(pi, sol.x);
    }
    return best;
  }

  // candidate values per binary, pruned by the sign of its McCormick interval
  const auto bounds = compute_bounds(scenario, params);
  std::vector<std::vector<int>> candidates;
  for (int idx : pi.binary_indices) {
    int step = -1;
    VarKind kind{};
    for (const auto& [key, v] : pi.var_map) {
      if (v == idx) { kind = key.first; step = key.second; break; }
    }
    if (kind == VarKind::binary_z1) {
      candidates.push_back(allowed_values(bounds.q_lb[step], bounds.q_ub[step]));
    } else {
      candidates.push_back(allowed_values(bounds.p_lb[step], bounds.p_ub[step]));
    }
  }

  const std::size_t nb = candidates.size();
  std::vector<std::size_t> pos(nb, 0);
  Eigen::VectorXd l = l0, u = u0;
  best.objective = kInf;

  while (true) {
    for (std::size_t i = 0; i < nb; ++i) {
      const int row = pi.bound_row[pi.binary_indices[i]];
      const double v = candidates[i][pos[i]];
      l(row) = v;
      u(row) = v;
    }
    solver.update_bounds(l, u);
    const QpSolution sol = solver.solve();
    if (sol.status == QpStatus::optimal &&
        (!best.feasible || sol.objective < best.objective - 1e-12)) {
      best.feasible = true;
      best.objective = sol.objective;
      best.dispatch = extract_dispatch(pi, sol.x);
      best.pattern.clear();
      for (std::size_t i = 0; i < nb; ++i) best.pattern.push_back(candidates[i][pos[i]]);
    }

    // lexicographic advance
    std::size_t i = nb;
    bool done = true;
    while (i-- > 0) {
      if (++pos[i] < candidates[i].size()) {
        done = false;
        break;
      }
      pos[i] = 0;
    }
    if (done) return best;
  }
}

GridDpResult oracle_grid_dp(const Scenario& scenario, const BatteryParams& params,
                            int grid_points) {
  if (grid_points < 50) throw std::invalid_argument("oracle_grid_dp: need >= 50 grid points");
  scenario.validate();
  params.validate();

  const int n = static_cast<int>(scenario.steps());
  const int g = grid_points;
  const double span = params.b_max - params.b_min;
  const double db = span / (g - 1);
  auto level = [&](int j) { return params.b_min + j * db; };

  // value-to-go: cost of operating steps i..N-1 starting at grid level j
  std::vector<double> next(g, 0.0), cur(g, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    for (int j = 0; j < g; ++j) {
      double bestc = kInf;
      for (int j2 = 0; j2 < g; ++j2) {
        const double x = level(j2) - level(j);
        if (x / scenario.h > params.delta_max + 1e-12) break;  // grid is ordered
        if (x / scenario.h < params.delta_min - 1e-12) continue;
        const double p_b = x > 0.0 ? x / (scenario.h * params.eta_ch)
                                   : x * params.eta_dis / scenario.h;
        bestc = std::min(bestc, scenario.price[i] * p_b * scenario.h + next[j2]);
      }
      cur[j] = bestc;
    }
    next = cur;
  }

  // interpolate the start state: the exact cost-to-go is convex in the charge
  // level, so the chord overestimates cost and the reported profit can never
  // exceed the exact optimum (snapping to the nearest level could gift energy)
  const int j_lo = std::clamp(static_cast<int>((params.b0 - params.b_min) / db), 0, g - 2);
  const double w = std::clamp((params.b0 - level(j_lo)) / db, 0.0, 1.0);
  double price_sum = 0.0, price_max = 0.0;
  for (double p : scenario.price) {
    price_sum += std::abs(p);
    price_max = std::max(price_max, std::abs(p));
  }

  GridDpResult out;
  out.profit = -((1.0 - w) * next[j_lo] + w * next[j_lo + 1]);
  out.error_bound =
      db * (price_sum + price_max) * std::max(1.0 / params.eta_ch, params.eta_dis);
  return out;
}

}  // namespace pfarb
