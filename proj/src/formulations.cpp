#include "pfarb/formulations.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace pfarb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Coefficients expressing grid-side active power p_b = cxp*x+ + cxn*x-.
struct PowerSplit {
  double cxp;
  double cxn;
};

PowerSplit power_split(const Scenario& s, const BatteryParams& p) {
  return {1.0 / (s.h * p.eta_ch), -p.eta_dis / s.h};
}

/// Shared battery block: x+/x-/b variables, charge balance, arbitrage cost.
void add_battery_block(ProblemInstance& pi, const Scenario& s, const BatteryParams& p,
                       int first_step, double b_state) {
  const int n = static_cast<int>(s.steps());
  for (int i = first_step; i < n; ++i) {
    const int xp = pi.add_variable(VarKind::charge_pos, i, 0.0, s.h * p.delta_max);
    const int xn = pi.add_variable(VarKind::charge_neg, i, 0.0, -s.h * p.delta_min);
    const int b = pi.add_variable(VarKind::charge, i, p.b_min, p.b_max);
    pi.linear[xp] += s.price[i] / p.eta_ch;
    pi.linear[xn] -= s.price[i] * p.eta_dis;
    if (i == first_step) {
      pi.add_row({{b, 1.0}, {xp, -1.0}, {xn, 1.0}}, b_state, b_state);
    } else {
      const int b_prev = pi.index(VarKind::charge, i - 1);
      pi.add_row({{b, 1.0}, {b_prev, -1.0}, {xp, -1.0}, {xn, 1.0}}, 0.0, 0.0);
    }
  }
}

/// Reactive variable plus the polygonized converter-disk rows for one step.
int add_converter_block(ProblemInstance& pi, const Scenario& s, const BatteryParams& p,
                        const DiskPolygon& polygon, int i) {
  const auto [cxp, cxn] = power_split(s, p);
  const int xp = pi.index(VarKind::charge_pos, i);
  const int xn = pi.index(VarKind::charge_neg, i);
  const int q = pi.add_variable(VarKind::reactive, i, -p.s_max, p.s_max);
  for (const auto& hs : polygon.halfspaces) {
    pi.add_row({{xp, hs.a_p * cxp}, {xn, hs.a_p * cxn}, {q, hs.a_q}}, -kInf, hs.rhs);
  }
  return q;
}

/// Four-row exact McCormick envelope of y = z * v, where v = v_const + v_expr
/// and z is binary with bounds [lo, hi] on v.
void add_mccormick_rows(ProblemInstance& pi, int y, int z,
                        const std::vector<std::pair<int, double>>& v_expr, double v_const,
                        double lo, double hi) {
  pi.add_row({{y, 1.0}, {z, -lo}}, 0.0, kInf);
  pi.add_row({{y, 1.0}, {z, -hi}}, -kInf, 0.0);
  auto row_lo = std::vector<std::pair<int, double>>{{y, 1.0}, {z, -hi}};
  auto row_hi = std::vector<std::pair<int, double>>{{y, 1.0}, {z, -lo}};
  for (const auto& [idx, coef] : v_expr) {
    row_lo.emplace_back(idx, -coef);
    row_hi.emplace_back(idx, -coef);
  }
  pi.add_row(std::move(row_lo), v_const - hi, kInf);
  pi.add_row(std::move(row_hi), -kInf, v_const - lo);
}

}  // namespace

int ProblemInstance::add_variable(VarKind kind, int step, double lb, double ub) {
  const int idx = n_vars++;
  var_map.emplace(std::make_pair(kind, step), idx);
  linear.push_back(0.0);
  bound_row.push_back(static_cast<int>(rows.size()));
  rows.push_back(Row{{{idx, 1.0}}, lb, ub});
  if (kind == VarKind::binary_z || kind == VarKind::binary_z1 || kind == VarKind::binary_z2) {
    binary_indices.push_back(idx);
  }
  return idx;
}

void ProblemInstance::add_row(std::vector<std::pair<int, double>> terms, double lower,
                              double upper) {
  rows.push_back(Row{std::move(terms), lower, upper});
}

int ProblemInstance::index(VarKind kind, int step) const {
  const auto it = var_map.find({kind, step});
  if (it == var_map.end()) throw std::out_of_range("no such variable in instance");
  return it->second;
}

bool ProblemInstance::has(VarKind kind, int step) const {
  return var_map.count({kind, step}) > 0;
}

Eigen::SparseMatrix<double> ProblemInstance::quadratic_matrix() const {
  Eigen::SparseMatrix<double> P(n_vars, n_vars);
  P.setFromTriplets(quadratic.begin(), quadratic.end());
  P.makeCompressed();
  return P;
}

Eigen::VectorXd ProblemInstance::linear_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(linear.data(), static_cast<Eigen::Index>(linear.size()));
}

void ProblemInstance::constraint_matrix(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& l,
                                        Eigen::VectorXd& u) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Triplet<double>> trips;
  l.resize(m);
  u.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (const auto& [idx, coef] : rows[r].terms) trips.emplace_back(r, idx, coef);
    l(r) = rows[r].lower;
    u(r) = rows[r].upper;
  }
  A.resize(m, n_vars);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
}

DiskPolygon polygon_disk(double s_max, int m) {
  if (!(s_max > 0.0)) throw std::invalid_argument("polygon_disk: s_max must be positive");
  if (m < 4 || m % 2 != 0) throw std::invalid_argument("polygon_disk: m must be even and >= 4");
  DiskPolygon poly;
  poly.m = m;
  poly.halfspaces.reserve(m);
  const double rhs = s_max * std::cos(std::numbers::pi / m);
  for (int j = 0; j < m; ++j) {
    const double phi = 2.0 * std::numbers::pi * j / m;
    poly.halfspaces.push_back({std::cos(phi), std::sin(phi), rhs});
  }
  return poly;
}

McCormickBounds compute_bounds(const Scenario& scenario, const BatteryParams& params) {
  McCormickBounds b;
  const std::size_t n = scenario.steps();
  b.p_lb.resize(n);
  b.p_ub.resize(n);
  b.q_lb.resize(n);
  b.q_ub.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.p_lb[i] = scenario.net_p(i) + params.p_b_min();
    b.p_ub[i] = scenario.net_p(i) + params.p_b_max();
    b.q_lb[i] = scenario.net_q(i) - params.s_max;
    b.q_ub[i] = scenario.net_q(i) + params.s_max;
  }
  return b;
}

ProblemInstance build_arb(const Scenario& scenario, const BatteryParams& params) {
  scenario.validate();
  params.validate();
  ProblemInstance pi;
  pi.first_step = 0;
  pi.n_steps = static_cast<int>(scenario.steps());
  pi.h = scenario.h;
  pi.eta_ch = params.eta_ch;
  pi.eta_dis = params.eta_dis;
  add_battery_block(pi, scenario, params, 0, params.b0);
  return pi;
}

ProblemInstance build_mccormick(const Scenario& scenario, const BatteryParams& params,
                                const PFLimit& limit, const DiskPolygon& polygon) {
  ProblemInstance pi = build_arb(scenario, params);
  const auto bounds = compute_bounds(scenario, params);
  const auto [cxp, cxn] = power_split(scenario, params);
  const double k = limit.k;
  const int n = pi.n_steps;

  for (int i = 0; i < n; ++i) {
    const int q = add_converter_block(pi, scenario, params, polygon, i);
    const int xp = pi.index(VarKind::charge_pos, i);
    const int xn = pi.index(VarKind::charge_neg, i);
    const double p_net = scenario.net_p(i);
    const double q_net = scenario.net_q(i);
    const int y = pi.add_variable(VarKind::bilinear_y, i, std::min(0.0, bounds.p_lb[i]),
                                  std::max(0.0, bounds.p_ub[i]));
    const int z = pi.add_variable(VarKind::binary_z, i, 0.0, 1.0);

    // -2ky + k P_T -+ Q_T <= 0
    pi.add_row({{y, -2.0 * k}, {xp, k * cxp}, {xn, k * cxn}, {q, -1.0}}, -kInf,
               q_net - k * p_net);
    pi.add_row({{y, -2.0 * k}, {xp, k * cxp}, {xn, k * cxn}, {q, 1.0}}, -kInf,
               -q_net - k * p_net);
    // 2y - P_T >= 0
    pi.add_row({{y, 2.0}, {xp, -cxp}, {xn, -cxn}}, p_net, kInf);
    add_mccormick_rows(pi, y, z, {{xp, cxp}, {xn, cxn}}, p_net, bounds.p_lb[i],
                       bounds.p_ub[i]);
  }
  return pi;
}

std::pair<ProblemInstance, ProblemInstance> build_rh_subproblems(
    const Scenario& scenario, const BatteryParams& params, const PFLimit& limit,
    const DiskPolygon& polygon, int j, double b_state) {
  scenario.validate();
  params.validate();
  const int n = static_cast<int>(scenario.steps());
  if (j < 0 || j >= n) throw std::out_of_range("rh subproblem step out of range");
  if (b_state < params.b_min - 1e-9 || b_state > params.b_max + 1e-9) {
    throw std::invalid_argument("rh subproblem charge state out of range");
  }

  const auto [cxp, cxn] = power_split(scenario, params);
  const double k = limit.k;
  const double p_net = scenario.net_p(j);
  const double q_net = scenario.net_q(j);

  auto make_base = [&]() {
    ProblemInstance pi;
    pi.first_step = j;
    pi.n_steps = n - j;
    pi.h = scenario.h;
    pi.eta_ch = params.eta_ch;
    pi.eta_dis = params.eta_dis;
    add_battery_block(pi, scenario, params, j, b_state);
    for (int i = j; i < n; ++i) add_converter_block(pi, scenario, params, polygon, i);
    return pi;
  };

  ProblemInstance sub1 = make_base();
  {
    const int xp = sub1.index(VarKind::charge_pos, j);
    const int xn = sub1.index(VarKind::charge_neg, j);
    const int q = sub1.index(VarKind::reactive, j);
    // -k P_T <= Q_T <= k P_T with P_T >= 0
    sub1.add_row({{q, 1.0}, {xp, -k * cxp}, {xn, -k * cxn}}, -kInf, k * p_net - q_net);
    sub1.add_row({{q, 1.0}, {xp, k * cxp}, {xn, k * cxn}}, -k * p_net - q_net, kInf);
    sub1.add_row({{xp, cxp}, {xn, cxn}}, -p_net, kInf);
  }

  ProblemInstance sub2 = make_base();
  {
    const int xp = sub2.index(VarKind::charge_pos, j);
    const int xn = sub2.index(VarKind::charge_neg, j);
    const int q = sub2.index(VarKind::reactive, j);
    // k P_T <= Q_T <= -k P_T with P_T <= -eps (strict negativity, closed form)
    sub2.add_row({{q, 1.0}, {xp, -k * cxp}, {xn, -k * cxn}}, k * p_net - q_net, kInf);
    sub2.add_row({{q, 1.0}, {xp, k * cxp}, {xn, k * cxn}}, -kInf, -k * p_net - q_net);
    sub2.add_row({{xp, cxp}, {xn, cxn}}, -kInf, -p_net - kSignEpsilonKw);
  }
  return {std::move(sub1), std::move(sub2)};
}

ProblemInstance build_penalty(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              double lambda, double beta) {
  if (lambda < 0.0 || beta < 0.0) {
    throw std::invalid_argument("penalty weights must be nonnegative");
  }
  ProblemInstance pi = build_arb(scenario, params);
  const auto bounds = compute_bounds(scenario, params);
  const auto [cxp, cxn] = power_split(scenario, params);
  const double k = limit.k;
  const int n = pi.n_steps;

  for (int i = 0; i < n; ++i) {
    const int q = add_converter_block(pi, scenario, params, polygon, i);
    const int xp = pi.index(VarKind::charge_pos, i);
    const int xn = pi.index(VarKind::charge_neg, i);
    const double p_net = scenario.net_p(i);
    const double q_net = scenario.net_q(i);

    const int theta = pi.add_variable(VarKind::theta, i, 0.0, kInf);
    const int y1 = pi.add_variable(VarKind::bilinear_y1, i, std::min(0.0, bounds.q_lb[i]),
                                   std::max(0.0, bounds.q_ub[i]));
    const int y2 = pi.add_variable(VarKind::bilinear_y2, i, std::min(0.0, bounds.p_lb[i]),
                                   std::max(0.0, bounds.p_ub[i]));
    const int z1 = pi.add_variable(VarKind::binary_z1, i, 0.0, 1.0);
    const int z2 = pi.add_variable(VarKind::binary_z2, i, 0.0, 1.0);

    pi.linear[theta] += 1.0;

    // theta >= lambda * (2 y1 - Q_T - 2k y2 + k P_T)
    pi.add_row({{theta, 1.0},
                {y1, -2.0 * lambda},
                {y2, 2.0 * lambda * k},
                {q, lambda},
                {xp, -lambda * k * cxp},
                {xn, -lambda * k * cxn}},
               lambda * (k * p_net - q_net), kInf);
    // 2 y1 - Q_T >= 0, 2 y2 - P_T >= 0
    pi.add_row({{y1, 2.0}, {q, -1.0}}, q_net, kInf);
    pi.add_row({{y2, 2.0}, {xp, -cxp}, {xn, -cxn}}, p_net, kInf);

    add_mccormick_rows(pi, y1, z1, {{q, 1.0}}, q_net, bounds.q_lb[i], bounds.q_ub[i]);
    add_mccormick_rows(pi, y2, z2, {{xp, cxp}, {xn, cxn}}, p_net, bounds.p_lb[i],
                       bounds.p_ub[i]);

    if (beta > 0.0) {
      pi.quadratic.emplace_back(xp, xp, 2.0 * beta * cxp * cxp);
      pi.quadratic.emplace_back(xn, xn, 2.0 * beta * cxn * cxn);
      pi.quadratic.emplace_back(xp, xn, 2.0 * beta * cxp * cxn);
      pi.quadratic.emplace_back(xn, xp, 2.0 * beta * cxp * cxn);
      pi.quadratic.emplace_back(q, q, 2.0 * beta);
    }
  }
  return pi;
}

Dispatch extract_dispatch(const ProblemInstance& instance, const Eigen::VectorXd& x) {
  if (x.size() != instance.n_vars) {
    throw std::invalid_argument("solution vector does not match instance");
  }
  Dispatch d;
  const double cxp = 1.0 / (instance.h * instance.eta_ch);
  const double cxn = -instance.eta_dis / instance.h;
  for (int i = instance.first_step; i < instance.first_step + instance.n_steps; ++i) {
    const double xp = x(instance.index(VarKind::charge_pos, i));
    const double xn = x(instance.index(VarKind::charge_neg, i));
    d.p_b.push_back(cxp * xp + cxn * xn);
    d.q_b.push_back(instance.has(VarKind::reactive, i) ? x(instance.index(VarKind::reactive, i))
                                                       : 0.0);
    d.b.push_back(x(instance.index(VarKind::charge, i)));
    for (VarKind zk : {VarKind::binary_z, VarKind::binary_z1, VarKind::binary_z2}) {
      if (instance.has(zk, i)) d.z.push_back(x(instance.index(zk, i)));
    }
  }
  return d;
}

}  // namespace pfarb
