#include "pfarb/solar_pfc.hpp"

#include <algorithm>
#include <cmath>

namespace pfarb {

double solar_pfc_step(const SolarStep& step) {
  const double m = std::abs(step.p_h - step.p_r);
  if (m > step.s_max) return 0.0;  // no headroom for reactive power
  const double slack = std::sqrt(step.s_max * step.s_max - m * m);
  const double js = std::abs(step.q_h) - step.k * m;
  if (js <= 0.0) return 0.0;
  // move Q toward the nearer cone edge, clamped by the rating
  if (step.q_h > 0.0) return std::max(-step.q_h + step.k * m, -slack);
  return std::min(-step.q_h - step.k * m, slack);
}

SolarPfcRun run_solar_pfc(const Scenario& scenario, const PFLimit& limit, double s_max) {
  scenario.validate();
  const std::size_t n = scenario.steps();

  SolarPfcRun run;
  Dispatch d;
  for (std::size_t i = 0; i < n; ++i) {
    SolarStep step{scenario.load_p[i], scenario.load_q[i], scenario.pv_p[i], s_max, limit.k};
    if (std::abs(step.p_h - step.p_r) > s_max) ++run.rating_exceeded_steps;
    const double q_r = solar_pfc_step(step);
    run.q_r.push_back(q_r);
    d.p_b.push_back(0.0);
    d.q_b.push_back(q_r);
    d.b.push_back(0.0);
  }
  run.metrics = evaluate_metrics(scenario, d, limit, s_max);
  return run;
}

}  // namespace pfarb
