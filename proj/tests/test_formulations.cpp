#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "pfarb/formulations.hpp"
#include "pfarb/mip.hpp"
#include "pfarb/qp_solver.hpp"

using namespace pfarb;

namespace {

bool polygon_contains(const DiskPolygon& poly, double p, double q) {
  for (const auto& hs : poly.halfspaces) {
    if (hs.a_p * p + hs.a_q * q > hs.rhs + 1e-12) return false;
  }
  return true;
}

Scenario flat_scenario(int n, double load_p, double load_q, double price) {
  Scenario s;
  s.h = 1.0;
  s.load_p.assign(n, load_p);
  s.load_q.assign(n, load_q);
  s.pv_p.assign(n, 0.0);
  s.price.assign(n, price);
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

QpSolution solve_instance(const ProblemInstance& pi) {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l, u;
  pi.constraint_matrix(A, l, u);
  QpSolver solver(pi.quadratic_matrix(), pi.linear_vector(), A, l, u);
  return solver.solve();
}

}  // namespace

TEST_CASE("converter disk polygon membership") {
  const DiskPolygon p4 = polygon_disk(1.0, 4);
  CHECK(p4.m == 4);
  CHECK(polygon_contains(p4, 0.5, 0.4));
  CHECK(!polygon_contains(p4, 0.8, 0.8));

  const DiskPolygon p64 = polygon_disk(1.0, 64);
  CHECK(polygon_contains(p64, 0.99, 0.0));
  CHECK(!polygon_contains(p64, 0.0, 1.0));

  // the point (s_max cos(pi/m), 0) sits on the boundary of some halfspace
  for (int m : {4, 8, 32}) {
    const DiskPolygon poly = polygon_disk(2.0, m);
    const double px = 2.0 * std::cos(M_PI / m);
    CHECK(polygon_contains(poly, px, 0.0));
    double closest = 1e9;
    for (const auto& hs : poly.halfspaces) {
      closest = std::min(closest, hs.rhs - hs.a_p * px);
    }
    CHECK(closest == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("polygon is inscribed in the disk") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  for (int m : {4, 8, 16, 32, 64}) {
    const DiskPolygon poly = polygon_disk(1.5, m);
    CHECK(static_cast<int>(poly.halfspaces.size()) == m);
    // all polygon vertices lie on the circle and satisfy every halfspace
    for (int j = 0; j < m; ++j) {
      const double phi = 2.0 * M_PI * (j + 0.5) / m;
      const double vp = 1.5 * std::cos(phi), vq = 1.5 * std::sin(phi);
      CHECK(polygon_contains(poly, vp, vq));
    }
    // membership implies disk membership (inner approximation)
    for (int it = 0; it < 200; ++it) {
      const double a = ang(rng);
      const double r = 1.5 * (1.0 + 1e-9);
      CHECK(!polygon_contains(poly, 1.001 * r * std::cos(a), 1.001 * r * std::sin(a)));
    }
  }
  CHECK_THROWS_AS(polygon_disk(1.0, 7), std::invalid_argument);
  CHECK_THROWS_AS(polygon_disk(1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(polygon_disk(0.0, 8), std::invalid_argument);
}

TEST_CASE("per-step power bounds") {
  {
    const Scenario s = flat_scenario(2, 0.0, 0.0, 1.0);
    const McCormickBounds b = compute_bounds(s, lossless_battery());
    CHECK(b.p_lb[0] == doctest::Approx(-1.0));
    CHECK(b.p_ub[0] == doctest::Approx(1.0));
  }
  {
    Scenario s = flat_scenario(1, 0.0, 2.0, 1.0);
    BatteryParams bp = lossless_battery();
    const McCormickBounds b = compute_bounds(s, bp);
    CHECK(b.q_lb[0] == doctest::Approx(1.0));
    CHECK(b.q_ub[0] == doctest::Approx(3.0));
  }
  {
    Scenario s = flat_scenario(1, 5.0, 0.0, 1.0);
    BatteryParams bp;  // 0.25C-style ramp at eta 0.95
    bp.delta_min = -0.5;
    bp.delta_max = 0.5;
    const McCormickBounds b = compute_bounds(s, bp);
    CHECK(b.p_lb[0] == doctest::Approx(5.0 - 0.475).epsilon(1e-9));
    CHECK(b.p_ub[0] == doctest::Approx(5.0 + 0.5 / 0.95).epsilon(1e-9));
  }
}

TEST_CASE("arbitrage instance structure") {
  const Scenario s = flat_scenario(1, 0.0, 0.0, 1.0);
  const ProblemInstance pi = build_arb(s, lossless_battery());
  CHECK(pi.n_vars == 3);  // charge split pair plus the stored-energy state
  CHECK(pi.binary_indices.empty());
  CHECK(pi.has(VarKind::charge_pos, 0));
  CHECK(pi.has(VarKind::charge_neg, 0));
  CHECK(pi.has(VarKind::charge, 0));
  CHECK(!pi.has(VarKind::reactive, 0));
}

TEST_CASE("arbitrage under constant price never pays") {
  Scenario s = flat_scenario(6, 0.5, 0.0, 0.7);
  BatteryParams bp;  // lossy defaults; start empty so no stored energy is sellable
  bp.b0 = bp.b_min;
  const QpSolution sol = solve_instance(build_arb(s, bp));
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-9));  // idle is optimal
}

TEST_CASE("charge split complementarity at positive prices") {
  Scenario s = flat_scenario(8, 1.0, 0.0, 0.2);
  s.price = {0.2, 0.9, 0.1, 0.7, 0.4, 0.8, 0.05, 0.6};
  BatteryParams bp;
  const ProblemInstance pi = build_arb(s, bp);
  const QpSolution sol = solve_instance(pi);
  REQUIRE(sol.status == QpStatus::optimal);
  for (int i = 0; i < 8; ++i) {
    const double xp = sol.x(pi.index(VarKind::charge_pos, i));
    const double xn = sol.x(pi.index(VarKind::charge_neg, i));
    CHECK(std::min(xp, xn) <= 1e-6);
  }
}

TEST_CASE("hard power-factor instance holds the limit") {
  // net load (1 kW, 1 kvar) violates pf 0.9; reactive support restores it
  Scenario s = flat_scenario(1, 1.0, 1.0, 0.0);
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 32);
  const ProblemInstance pi = build_mccormick(s, bp, limit, poly);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  const Dispatch d = extract_dispatch(pi, sol.x);
  const auto [pt, qt] = total_power(s, d, 0);
  CHECK(pf_margin(pt, qt, limit) >= -1e-6);
  CHECK(qt <= limit.k * pt + 1e-6);  // q_b pushed at least to -0.5157
}

TEST_CASE("bilinear proxy is exact at integral switches") {
  Scenario s = flat_scenario(3, 1.0, 0.8, 0.0);
  s.load_p = {1.0, -0.5, 0.8};
  s.load_q = {0.8, 0.4, -0.6};
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance pi = build_mccormick(s, bp, limit, poly);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  const Dispatch d = extract_dispatch(pi, sol.x);
  for (int i = 0; i < 3; ++i) {
    const double z = sol.x(pi.index(VarKind::binary_z, i));
    CHECK(std::abs(z - std::round(z)) <= 1e-5);
    const auto [pt, qt] = total_power(s, d, i);
    const double y = sol.x(pi.index(VarKind::bilinear_y, i));
    CHECK(y == doctest::Approx(std::round(z) * pt).epsilon(1e-5).scale(1.0 + std::abs(pt)));
  }
}

TEST_CASE("relaxed binaries bound the integral optimum from below") {
  Scenario s = flat_scenario(3, 1.0, 1.0, 0.3);
  s.price = {0.3, 0.8, 0.1};
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance pi = build_mccormick(s, bp, limit, poly);
  const QpSolution relax = solve_instance(pi);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(relax.status == QpStatus::optimal);
  REQUIRE(sol.status == MipStatus::optimal);
  CHECK(relax.objective <= sol.objective + 1e-6);
}

TEST_CASE("per-step subproblems cover the remaining horizon") {
  Scenario s = flat_scenario(5, 0.0, 0.0, 1.0);
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);

  auto [last1, last2] = build_rh_subproblems(s, bp, limit, poly, 4, 0.5);
  CHECK(last1.n_steps == 1);
  CHECK(last2.n_steps == 1);
  CHECK(last1.first_step == 4);

  // idle step is feasible for the import-side subproblem
  const QpSolution s1 = solve_instance(last1);
  CHECK(s1.status == QpStatus::optimal);
}

TEST_CASE("export-side subproblem infeasible under heavy import") {
  // 5 kW of net load, battery can discharge at most ~1 kW: exports impossible
  Scenario s = flat_scenario(2, 5.0, 0.0, 1.0);
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  auto [sub1, sub2] = build_rh_subproblems(s, bp, limit, poly, 0, 0.5);
  CHECK(solve_instance(sub1).status == QpStatus::optimal);
  CHECK(solve_instance(sub2).status == QpStatus::primal_infeasible);
}

TEST_CASE("penalty objective reduces to arbitrage when both weights vanish") {
  Scenario s = flat_scenario(4, 1.0, 0.5, 0.2);
  s.price = {0.2, 0.9, 0.4, 0.6};
  BatteryParams bp;
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance plain = build_arb(s, bp);
  const ProblemInstance pen = build_penalty(s, bp, limit, poly, 0.0, 0.0);
  const QpSolution a = solve_instance(plain);
  const MipSolution b = solve_mip(pen, s);
  REQUIRE(a.status == QpStatus::optimal);
  REQUIRE(b.status == MipStatus::optimal);
  CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-6));
}

TEST_CASE("penalty is idle when the load already meets the limit") {
  Scenario s = flat_scenario(1, 1.0, 0.1, 0.0);  // pf 0.995
  BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance pi = build_penalty(s, bp, limit, poly, 100.0, 0.0);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  CHECK(sol.x(pi.index(VarKind::theta, 0)) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("penalty stays positive when the violation is unavoidable") {
  Scenario s = flat_scenario(1, 0.1, 5.0, 0.0);
  BatteryParams bp = lossless_battery();
  bp.s_max = 0.1;  // tiny converter cannot compensate 5 kvar
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance pi = build_penalty(s, bp, limit, poly, 10.0, 0.0);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  CHECK(sol.x(pi.index(VarKind::theta, 0)) > 1.0);
}

TEST_CASE("penalty epigraph is tight at the optimum") {
  Scenario s = flat_scenario(3, 1.0, 1.2, 0.5);
  s.load_q = {1.2, -0.9, 0.3};
  BatteryParams bp;
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const double lambda = 10.0;
  const ProblemInstance pi = build_penalty(s, bp, limit, poly, lambda, 0.0);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  const Dispatch d = extract_dispatch(pi, sol.x);
  for (int i = 0; i < 3; ++i) {
    const auto [pt, qt] = total_power(s, d, i);
    const double want = lambda * std::max(0.0, std::abs(qt) - limit.k * std::abs(pt));
    const double theta = sol.x(pi.index(VarKind::theta, i));
    CHECK(theta == doctest::Approx(want).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("quadratic usage term discourages converter throughput") {
  Scenario s = flat_scenario(3, 1.0, 1.0, 0.4);
  BatteryParams bp;
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance p0 = build_penalty(s, bp, limit, poly, 10.0, 0.0);
  const ProblemInstance pb = build_penalty(s, bp, limit, poly, 10.0, 1e-3);
  CHECK(p0.quadratic.empty());
  CHECK(!pb.quadratic.empty());
  const MipSolution s0 = solve_mip(p0, s);
  const MipSolution sb = solve_mip(pb, s);
  REQUIRE(s0.status == MipStatus::optimal);
  REQUIRE(sb.status == MipStatus::optimal);
  double use0 = 0.0, useb = 0.0;
  const Dispatch d0 = extract_dispatch(p0, s0.x);
  const Dispatch db = extract_dispatch(pb, sb.x);
  for (int i = 0; i < 3; ++i) {
    use0 += d0.p_b[i] * d0.p_b[i] + d0.q_b[i] * d0.q_b[i];
    useb += db.p_b[i] * db.p_b[i] + db.q_b[i] * db.q_b[i];
  }
  CHECK(useb <= use0 + 1e-6);
}

TEST_CASE("extracted dispatch respects the converter polygon") {
  Scenario s = flat_scenario(4, 1.0, 1.0, 0.3);
  s.price = {0.3, 0.9, 0.2, 0.7};
  BatteryParams bp;
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const ProblemInstance pi = build_penalty(s, bp, limit, poly, 10.0, 0.0);
  const MipSolution sol = solve_mip(pi, s);
  REQUIRE(sol.status == MipStatus::optimal);
  const Dispatch d = extract_dispatch(pi, sol.x);
  for (int i = 0; i < 4; ++i) {
    CHECK(polygon_contains(poly, d.p_b[i], d.q_b[i]));
    CHECK(std::hypot(d.p_b[i], d.q_b[i]) <= bp.s_max + 1e-9);
    CHECK(d.b[i] >= bp.b_min - 1e-9);
    CHECK(d.b[i] <= bp.b_max + 1e-9);
  }
}
