#pragma once

#include <vector>

#include "pfarb/model.hpp"

namespace pfarb {

/// One time step of the inverter-only power-factor controller.
struct SolarStep {
  double p_h;    ///< household active power (kW)
  double q_h;    ///< household reactive power (kvar)
  double p_r;    ///< solar active power (kW), >= 0
  double s_max;  ///< inverter apparent-power rating (kVA)
  double k;      ///< reactive/active slope of the PF limit
};

/// Myopic reactive setpoint that minimizes the PF-shortfall penalty subject to
/// the inverter rating. Total function: an out-of-rating active flow
/// (|p_h - p_r| > s_max) yields q_r = 0.
double solar_pfc_step(const SolarStep& step);

struct SolarPfcRun {
  std::vector<double> q_r;
  Metrics metrics;
  int rating_exceeded_steps = 0;  ///< steps where |p_h - p_r| > s_max left no slack
};

/// Applies solar_pfc_step over the scenario; metrics use Q = q_h + q_r.
SolarPfcRun run_solar_pfc(const Scenario& scenario, const PFLimit& limit, double s_max);

}  // namespace pfarb
