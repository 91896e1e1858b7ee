#include <iostream>
#include <chrono>
#include <cstdio>

#include "pfarb/iocli.hpp"
#include "pfarb/mip.hpp"

using namespace pfarb;

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 8;
  Scenario s = synth_scenario(1, SynthProfile::residential_pv);
  s.load_p.resize(n);
  s.load_q.resize(n);
  s.pv_p.resize(n);
  s.price.resize(n);
  const BatteryParams bp = battery_preset("1C", "matched");
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 32);

  auto t0 = std::chrono::steady_clock::now();
  ProblemInstance pi = build_penalty(s, bp, limit, poly, 10.0, 0.0);
  MipConfig cfg;
  cfg.log = &std::cerr;
  MipSolution sol = solve_mip(pi, s, cfg);
  auto t1 = std::chrono::steady_clock::now();
  std::printf("plt n=%d status=%s obj=%.6f nodes=%d gap=%.3g time=%.2fs\n", n,
              to_string(sol.status).c_str(), sol.objective, sol.nodes_explored, sol.gap,
              std::chrono::duration<double>(t1 - t0).count());

  t0 = std::chrono::steady_clock::now();
  ProblemInstance pim = build_mccormick(s, bp, limit, poly);
  MipSolution solm = solve_mip(pim, s, cfg);
  t1 = std::chrono::steady_clock::now();
  std::printf("mr  n=%d status=%s obj=%.6f nodes=%d gap=%.3g time=%.2fs\n", n,
              to_string(solm.status).c_str(), solm.objective, solm.nodes_explored, solm.gap,
              std::chrono::duration<double>(t1 - t0).count());
  return 0;
}
