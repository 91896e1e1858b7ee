#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "pfarb/mip.hpp"
#include "pfarb/oracle.hpp"
#include "pfarb/qp_solver.hpp"

using namespace pfarb;

namespace {

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

QpSolution solve_instance(const ProblemInstance& pi) {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd l, u;
  pi.constraint_matrix(A, l, u);
  QpSolver solver(pi.quadratic_matrix(), pi.linear_vector(), A, l, u);
  return solver.solve();
}

Scenario random_scenario(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> load(-1.5, 2.0);
  std::uniform_real_distribution<double> q(-1.0, 1.0);
  std::uniform_real_distribution<double> price(0.05, 1.0);
  Scenario s;
  s.h = 0.5;
  for (int i = 0; i < n; ++i) {
    s.load_p.push_back(load(rng));
    s.load_q.push_back(q(rng));
    s.pv_p.push_back(0.0);
    s.price.push_back(price(rng));
  }
  return s;
}

}  // namespace

TEST_CASE("enumeration with a vacuous power-factor limit matches pure arbitrage") {
  Scenario s = lossless_two_step();
  const BatteryParams bp = lossless_battery();
  // pf_min close to 0 makes k huge: the sign disjunction never binds
  const PFLimit loose = PFLimit::from_pf_min(0.01);
  const DiskPolygon poly = polygon_disk(4.0, 16);  // converter never binds
  const OracleResult r = oracle_sign_enum(s, bp, loose, poly, FormulationId::mr);
  REQUIRE(r.feasible);
  const QpSolution arb = solve_instance(build_arb(s, bp));
  REQUIRE(arb.status == QpStatus::optimal);
  CHECK(r.objective == doctest::Approx(arb.objective).epsilon(1e-5));
}

TEST_CASE("enumeration recovers the lossless two-step profit") {
  const Scenario s = lossless_two_step();
  const BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(4.0, 16);  // converter never binds
  const OracleResult r = oracle_sign_enum(s, bp, limit, poly, FormulationId::mr);
  REQUIRE(r.feasible);
  CHECK(r.objective == doctest::Approx(-1.0).epsilon(1e-5));  // profit 1
}

TEST_CASE("enumeration and search agree on infeasibility") {
  Scenario s;
  s.h = 1.0;
  s.load_p = {0.2};
  s.load_q = {5.0};
  s.pv_p = {0.0};
  s.price = {1.0};
  const BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  const OracleResult r = oracle_sign_enum(s, bp, limit, poly, FormulationId::mr);
  CHECK(!r.feasible);
  const MipSolution m = solve_mip(build_mccormick(s, bp, limit, poly), s);
  CHECK(m.status == MipStatus::infeasible);
}

TEST_CASE("enumeration rejects horizons it cannot exhaust") {
  Scenario s = lossless_two_step();
  for (int i = 0; i < 10; ++i) {
    s.load_p.push_back(0.0);
    s.load_q.push_back(0.0);
    s.pv_p.push_back(0.0);
    s.price.push_back(1.0);
  }
  const BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 16);
  CHECK_THROWS_AS(oracle_sign_enum(s, bp, limit, poly, FormulationId::mr),
                  std::invalid_argument);
}

TEST_CASE("enumeration matches branch-and-bound on fuzzed instances") {
  std::mt19937_64 rng(41);
  const BatteryParams bp = lossless_battery();
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 8);
  std::uniform_int_distribution<int> len(1, 4);
  int feasible_seen = 0;
  for (int it = 0; it < 25; ++it) {
    const Scenario s = random_scenario(rng, len(rng));
    for (FormulationId id : {FormulationId::mr, FormulationId::plt}) {
      const OracleResult r = oracle_sign_enum(s, bp, limit, poly, id, 10.0, 0.0);
      const ProblemInstance pi = id == FormulationId::mr
                                     ? build_mccormick(s, bp, limit, poly)
                                     : build_penalty(s, bp, limit, poly, 10.0, 0.0);
      const MipSolution m = solve_mip(pi, s);
      // "feasible incumbent" = complete search, point in hand, bound not
      // proven tight; it still must agree with the enumeration
      const bool mip_feasible =
          m.status == MipStatus::optimal || m.status == MipStatus::feasible_incumbent;
      CAPTURE(it);
      CAPTURE(to_string(m.status));
      CAPTURE(r.objective);
      CHECK(r.feasible == mip_feasible);
      if (r.feasible && mip_feasible) {
        ++feasible_seen;
        CHECK(m.objective ==
              doctest::Approx(r.objective).epsilon(1e-4).scale(1.0 + std::abs(r.objective)));
      }
    }
  }
  CHECK(feasible_seen >= 25);
}

TEST_CASE("grid value iteration finds no profit at constant price") {
  Scenario s = lossless_two_step();
  s.price = {1.0, 1.0};
  const GridDpResult r = oracle_grid_dp(s, lossless_battery(), 101);
  CHECK(r.profit == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("grid value iteration approximates the two-step profit") {
  const GridDpResult r = oracle_grid_dp(lossless_two_step(), lossless_battery(), 101);
  CHECK(r.profit == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r.error_bound > 0.0);
}

TEST_CASE("grid value iteration never beats the exact program") {
  std::mt19937_64 rng(17);
  BatteryParams bp;  // lossy defaults
  for (int it = 0; it < 10; ++it) {
    const Scenario s = random_scenario(rng, 6);
    const QpSolution lp = solve_instance(build_arb(s, bp));
    REQUIRE(lp.status == QpStatus::optimal);
    const double lp_profit = -lp.objective;
    const GridDpResult dp = oracle_grid_dp(s, bp, 201);
    CHECK(dp.profit <= lp_profit + 1e-9);
  }
}

TEST_CASE("grid refinement converges toward the exact program") {
  const Scenario s = lossless_two_step();
  const BatteryParams bp = lossless_battery();
  const QpSolution lp = solve_instance(build_arb(s, bp));
  REQUIRE(lp.status == QpStatus::optimal);
  const double lp_profit = -lp.objective;
  double prev_gap = 1e18;
  for (int g : {51, 101, 201, 401}) {
    const double gap = lp_profit - oracle_grid_dp(s, bp, g).profit;
    CHECK(gap >= -1e-9);
    CHECK(gap <= prev_gap + 1e-3);
    prev_gap = gap;
  }
  CHECK(prev_gap <= 0.01);
  CHECK_THROWS_AS(oracle_grid_dp(s, bp, 10), std::invalid_argument);
}
