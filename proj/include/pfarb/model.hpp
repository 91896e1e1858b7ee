#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfarb {

/// Tolerance below which a power-factor shortfall is not counted as a violation.
inline constexpr double kPfViolationTol = 1e-9;

/// Battery + converter parameters. Canonical units: kW, kvar, kWh, hours.
struct BatteryParams {
  double eta_ch  = 0.95;  ///< charging efficiency, (0,1]
  double eta_dis = 0.95;  ///< discharging efficiency, (0,1]
  double delta_min = -2.0;  ///< min ramp rate (kW), <= 0
  double delta_max = 2.0;   ///< max ramp rate (kW), >= 0
  double b_min = 0.2;  ///< min stored energy (kWh)
  double b_max = 2.0;  ///< max stored energy (kWh)
  double b0 = 1.0;     ///< initial stored energy (kWh)
  double s_max = 2.0;  ///< converter apparent-power rating (kVA)

  /// Min grid-side active power (discharging at max ramp).
  double p_b_min() const { return delta_min * eta_dis; }
  /// Max grid-side active power (charging at max ramp).
  double p_b_max() const { return delta_max / eta_ch; }

  void validate() const;
};

/// Time-indexed net-load and price data with uniform step length h (hours).
struct Scenario {
  double h = 0.25;
  std::vector<double> load_p;   ///< inelastic load active power (kW)
  std::vector<double> load_q;   ///< inelastic load reactive power (kvar)
  std::vector<double> pv_p;     ///< solar active power (kW), >= 0
  std::vector<double> price;    ///< electricity price ($/kWh)

  std::size_t steps() const { return price.size(); }
  /// Net active power seen by the grid without storage (solar at unity PF).
  double net_p(std::size_t i) const { return load_p[i] - pv_p[i]; }
  double net_q(std::size_t i) const { return load_q[i]; }

  void validate() const;
};

/// Per-step battery/converter setpoints. p_b > 0 means grid import (charging).
struct Dispatch {
  std::vector<double> p_b;  ///< active power (kW)
  std::vector<double> q_b;  ///< reactive power (kvar)
  std::vector<double> b;    ///< stored energy after each step (kWh)
  std::vector<double> z;    ///< auxiliary binaries, empty when formulation has none

  std::size_t steps() const { return p_b.size(); }
};

struct Metrics {
  double profit = 0.0;     ///< arbitrage profit ($), negation of the cost objective
  int pf_violations = 0;
  double mean_pf = 1.0;
  double min_pf = 1.0;
  double cuf = 0.0;        ///< converter usage factor
};

/// Power-factor floor together with the reactive/active slope k = tan(acos(pf_min)).
struct PFLimit {
  double pf_min;
  double k;

  static PFLimit from_pf_min(double pf_min);
};

/// Thrown when a charge update would leave [b_min, b_max].
class CapacityError : public std::runtime_error {
 public:
  CapacityError(double overflow_kwh, const std::string& what)
      : std::runtime_error(what), overflow_kwh_(overflow_kwh) {}
  /// Signed overshoot: positive above b_max, negative below b_min.
  double overflow_kwh() const { return overflow_kwh_; }

 private:
  double overflow_kwh_;
};

/// |p| / sqrt(p^2 + q^2), symmetric in the sign of p. Defined as 1 at (0,0).
double power_factor(double p_kw, double q_kvar);

/// Total (P, Q) seen by the grid at step i.
std::pair<double, double> total_power(const Scenario& scenario, const Dispatch& dispatch,
                                      std::size_t i);

/// Advances the charge level by one step of grid-side power p_b over h hours.
/// Throws CapacityError if the result leaves [b_min, b_max].
double battery_step(double b_prev, double p_b, double h, const BatteryParams& params);

/// k*|p| - |q|; nonnegative iff the power factor is within the limit.
double pf_margin(double p_t, double q_t, const PFLimit& limit);

/// Profit, PF statistics and converter usage over a full dispatch.
Metrics evaluate_metrics(const Scenario& scenario, const Dispatch& dispatch,
                         const PFLimit& limit, double s_max);

}  // namespace pfarb
