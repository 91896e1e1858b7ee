#include "pfarb/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pfarb {

void BatteryParams::validate() const {
  if (!(eta_ch > 0.0 && eta_ch <= 1.0) || !(eta_dis > 0.0 && eta_dis <= 1.0)) {
    throw std::invalid_argument("battery efficiencies must lie in (0, 1]");
  }
  if (delta_min > 0.0 || delta_max < 0.0) {
    throw std::invalid_argument("ramp limits must satisfy delta_min <= 0 <= delta_max");
  }
  if (!(b_min <= b0 && b0 <= b_max)) {
    throw std::invalid_argument("initial charge must lie in [b_min, b_max]");
  }
  if (!(s_max > 0.0)) {
    throw std::invalid_argument("converter rating must be positive");
  }
}

void Scenario::validate() const {
  const std::size_t n = price.size();
  if (load_p.size() != n || load_q.size() != n || pv_p.size() != n) {
    throw std::invalid_argument("scenario series must have equal length");
  }
  if (!(h > 0.0)) {
    throw std::invalid_argument("step length must be positive");
  }
  for (double p : pv_p) {
    if (p < 0.0) throw std::invalid_argument("pv output must be nonnegative");
  }
}

PFLimit PFLimit::from_pf_min(double pf_min) {
  if (!(pf_min > 0.0 && pf_min < 1.0)) {
    throw std::invalid_argument("pf_min must lie in (0, 1)");
  }
  return PFLimit{pf_min, std::sqrt(1.0 - pf_min * pf_min) / pf_min};
}

double power_factor(double p_kw, double q_kvar) {
  const double s2 = p_kw * p_kw + q_kvar * q_kvar;
  if (s2 == 0.0) return 1.0;  // no power exchanged, nothing to violate
  return std::abs(p_kw) / std::sqrt(s2);
}

std::pair<double, double> total_power(const Scenario& scenario, const Dispatch& dispatch,
                                      std::size_t i) {
  if (i >= scenario.steps() || i >= dispatch.steps()) {
    throw std::out_of_range("total_power: step index out of range");
  }
  return {scenario.net_p(i) + dispatch.p_b[i], scenario.net_q(i) + dispatch.q_b[i]};
}

double battery_step(double b_prev, double p_b, double h, const BatteryParams& params) {
  const double charge = std::max(p_b, 0.0);
  const double discharge = std::max(-p_b, 0.0);
  const double b = b_prev + h * (charge * params.eta_ch - discharge / params.eta_dis);
  const double tol = 1e-9 * std::max(1.0, params.b_max);
  if (b > params.b_max + tol) {
    throw CapacityError(b - params.b_max, "battery charge above b_max");
  }
  if (b < params.b_min - tol) {
    throw CapacityError(b - params.b_min, "battery charge below b_min");
  }
  return std::clamp(b, params.b_min, params.b_max);
}

double pf_margin(double p_t, double q_t, const PFLimit& limit) {
  return limit.k * std::abs(p_t) - std::abs(q_t);
}

Metrics evaluate_metrics(const Scenario& scenario, const Dispatch& dispatch,
                         const PFLimit& limit, double s_max) {
  const std::size_t n = scenario.steps();
  if (dispatch.steps() != n || dispatch.q_b.size() != n) {
    throw std::invalid_argument("dispatch length does not match scenario");
  }
  Metrics m;
  if (n == 0) return m;

  double cost = 0.0;
  double pf_sum = 0.0;
  double pf_min = std::numeric_limits<double>::infinity();
  double usage = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cost += scenario.price[i] * dispatch.p_b[i] * scenario.h;
    const auto [pt, qt] = total_power(scenario, dispatch, i);
    const double pf = power_factor(pt, qt);
    pf_sum += pf;
    pf_min = std::min(pf_min, pf);
    if (pf < limit.pf_min - kPfViolationTol) ++m.pf_violations;
    usage += std::hypot(dispatch.p_b[i], dispatch.q_b[i]) / s_max;
  }
  m.profit = -cost;
  m.mean_pf = pf_sum / static_cast<double>(n);
  m.min_pf = pf_min;
  m.cuf = usage / static_cast<double>(n);
  return m;
}

}  // namespace pfarb
