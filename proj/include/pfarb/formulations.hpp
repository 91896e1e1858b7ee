#pragma once

#include <Eigen/Sparse>

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "pfarb/model.hpp"

namespace pfarb {

enum class FormulationId { arb, mr, rh, plt, plt_conv, solar };

/// Decision quantities; together with a timestep they key the variable map.
enum class VarKind {
  charge_pos,   ///< x+ : battery energy increase over the step (kWh)
  charge_neg,   ///< x- : battery energy decrease over the step (kWh)
  reactive,     ///< q_b (kvar)
  charge,       ///< b : stored energy at end of step (kWh)
  theta,        ///< PF penalty epigraph variable ($)
  bilinear_y,   ///< y  = z  * P_T
  bilinear_y1,  ///< y1 = z1 * Q_T
  bilinear_y2,  ///< y2 = z2 * P_T
  binary_z,
  binary_z1,
  binary_z2,
};

/// Standard-form convex QP:  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u,
/// with a designated set of binary variable indices. Every variable owns one
/// identity bound row so branch-and-bound can tighten boxes in place.
struct ProblemInstance {
  struct Row {
    std::vector<std::pair<int, double>> terms;
    double lower;
    double upper;
  };

  int n_vars = 0;
  std::vector<Eigen::Triplet<double>> quadratic;  ///< full symmetric Hessian entries
  std::vector<double> linear;
  std::vector<Row> rows;
  std::vector<int> binary_indices;
  std::vector<int> bound_row;  ///< per variable, index of its bound row
  std::map<std::pair<VarKind, int>, int> var_map;

  // dispatch-recovery metadata
  int first_step = 0;
  int n_steps = 0;
  double h = 0.0;
  double eta_ch = 1.0;
  double eta_dis = 1.0;

  int add_variable(VarKind kind, int step, double lb, double ub);
  void add_row(std::vector<std::pair<int, double>> terms, double lower, double upper);

  /// Variable index for (kind, step); throws if absent.
  int index(VarKind kind, int step) const;
  bool has(VarKind kind, int step) const;

  Eigen::SparseMatrix<double> quadratic_matrix() const;
  Eigen::VectorXd linear_vector() const;
  void constraint_matrix(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& l,
                         Eigen::VectorXd& u) const;
};

/// Per-step bounds on total active and reactive power used by the envelopes.
struct McCormickBounds {
  std::vector<double> p_lb, p_ub, q_lb, q_ub;
};

/// Inner polygonal approximation of the converter disk |s| <= s_max.
struct DiskPolygon {
  struct Halfspace {
    double a_p;  ///< unit normal, active-power component
    double a_q;  ///< unit normal, reactive-power component
    double rhs;  ///< kVA
  };
  int m = 0;
  std::vector<Halfspace> halfspaces;
};

/// Regular m-gon inscribed in the disk of radius s_max; m even, m >= 4.
DiskPolygon polygon_disk(double s_max, int m);

McCormickBounds compute_bounds(const Scenario& scenario, const BatteryParams& params);

/// Arbitrage-only LP (active power and charge trajectory, no reactive side).
ProblemInstance build_arb(const Scenario& scenario, const BatteryParams& params);

/// Mixed-integer formulation with hard per-step PF constraints via the exact
/// McCormick envelope of z * P_T.
ProblemInstance build_mccormick(const Scenario& scenario, const BatteryParams& params,
                                const PFLimit& limit, const DiskPolygon& polygon);

/// The two sign-restricted sub-problems solved at step j of the receding-horizon
/// scheme: PF is enforced at step j only, arbitrage runs to the end of horizon.
std::pair<ProblemInstance, ProblemInstance> build_rh_subproblems(
    const Scenario& scenario, const BatteryParams& params, const PFLimit& limit,
    const DiskPolygon& polygon, int j, double b_state);

/// Penalty formulation; beta > 0 adds the converter-usage quadratic term.
ProblemInstance build_penalty(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              double lambda, double beta);

/// Recovers the battery dispatch from a solution vector of any instance built here.
Dispatch extract_dispatch(const ProblemInstance& instance, const Eigen::VectorXd& x);

/// Default penalty weights (the formulations expose them as parameters).
inline constexpr double kDefaultLambda = 10.0;   // $/kvarh
inline constexpr double kDefaultBeta = 1e-3;     // $/kVA^2
inline constexpr int kDefaultPolygonSides = 32;
inline constexpr double kSignEpsilonKw = 1e-6;   // strict P_T < 0 encoded as <= -eps

}  // namespace pfarb
