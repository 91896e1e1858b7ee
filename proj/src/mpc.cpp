#include "pfarb/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace pfarb {

namespace {

/// Clamps a committed action so the charge update stays within capacity;
/// tolerates solver-sized overshoot only.
std::pair<double, double> commit_step(double b, double p_b, const Scenario& s,
                                      const BatteryParams& params) {
  p_b = std::clamp(p_b, params.p_b_min(), params.p_b_max());
  const double raw = b + s.h * (std::max(p_b, 0.0) * params.eta_ch -
                                std::max(-p_b, 0.0) / params.eta_dis);
  const double b_next = std::clamp(raw, params.b_min, params.b_max);
  if (std::abs(b_next - raw) > 1e-5 * std::max(1.0, params.b_max)) {
    throw CapacityError(raw - b_next, "committed action violates battery capacity");
  }
  if (b_next != raw) {
    // shave the action to land exactly on the bound
    const double x = b_next - b;
    p_b = x > 0.0 ? x / (s.h * params.eta_ch) : x * params.eta_dis / s.h;
  }
  return {p_b, b_next};
}

Scenario make_tail(const Scenario& full, int first, const std::vector<double>& net_p,
                   const std::vector<double>& net_q, const std::vector<double>& price) {
  // net load is carried in load_p/load_q with pv folded in
  Scenario tail;
  tail.h = full.h;
  const int n = static_cast<int>(full.steps());
  for (int i = first; i < n; ++i) {
    tail.load_p.push_back(net_p[i - first]);
    tail.load_q.push_back(net_q[i - first]);
    tail.pv_p.push_back(0.0);
    tail.price.push_back(price[i - first]);
  }
  return tail;
}

double variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / v.size();
}

}  // namespace

MpcRun run_mpc(const Scenario& realized, const ForecastHistory& history,
               const BatteryParams& params, const PFLimit& limit, const MpcConfig& config) {
  realized.validate();
  params.validate();
  const int n = static_cast<int>(realized.steps());
  const DiskPolygon polygon = polygon_disk(params.s_max, config.polygon_m);

  // load models are fit once per day; the price model is refit each step so its
  // level anchor tracks the metered prices
  ArmaModel model_p, model_q;
  if (!config.perfect_forecast) {
    model_p = arma_fit(history.net_p, config.arma_lags, config.arma_deviation_terms,
                       config.arma_past_days, n, config.l1_weight_factor * variance(history.net_p));
    model_q = arma_fit(history.net_q, config.arma_lags, config.arma_deviation_terms,
                       config.arma_past_days, n, config.l1_weight_factor * variance(history.net_q));
  }

  MpcRun run;
  std::vector<double> seen_p, seen_q, seen_price;  // realized prefix
  double b = params.b0;

  for (int i = 0; i < n; ++i) {
    const int horizon = n - i;
    std::vector<double> fp, fq, fprice;
    if (config.perfect_forecast) {
      for (int t = i; t < n; ++t) {
        fp.push_back(realized.net_p(t));
        fq.push_back(realized.net_q(t));
        fprice.push_back(realized.price[t]);
      }
    } else {
      auto hist_p = history.net_p;
      hist_p.insert(hist_p.end(), seen_p.begin(), seen_p.end());
      auto hist_q = history.net_q;
      hist_q.insert(hist_q.end(), seen_q.begin(), seen_q.end());
      auto hist_price = history.price;
      hist_price.insert(hist_price.end(), seen_price.begin(), seen_price.end());
      fp = arma_predict(model_p, hist_p, horizon);
      fq = arma_predict(model_q, hist_q, horizon);
      fprice = arima_predict(arima_fit(hist_price), horizon);
      fprice[0] = realized.price[i];  // current price is metered
    }
    for (int t = 1; t < horizon; ++t) fprice[t] *= config.price_forecast_scale;

    BatteryParams tail_params = params;
    tail_params.b0 = b;
    const Scenario tail = make_tail(realized, i, fp, fq, fprice);

    auto solve_formulation = [&](FormulationId id) -> std::pair<MipStatus, Dispatch> {
      ProblemInstance pi;
      switch (id) {
        case FormulationId::arb: pi = build_arb(tail, tail_params); break;
        case FormulationId::mr: pi = build_mccormick(tail, tail_params, limit, polygon); break;
        case FormulationId::plt:
          pi = build_penalty(tail, tail_params, limit, polygon, config.lambda, 0.0);
          break;
        case FormulationId::plt_conv:
          pi = build_penalty(tail, tail_params, limit, polygon, config.lambda, config.beta);
          break;
        default:
          throw std::invalid_argument("run_mpc: unsupported formulation");
      }
      const MipSolution sol = solve_mip(pi, tail, config.mip);
      if (sol.status == MipStatus::infeasible ||
          (sol.status == MipStatus::node_budget_exhausted && sol.x.size() == 0)) {
        return {sol.status, Dispatch{}};
      }
      return {sol.status, extract_dispatch(pi, sol.x)};
    };

    auto [status, dispatch] = solve_formulation(config.formulation);
    if (dispatch.steps() == 0 && config.formulation != FormulationId::plt) {
      // hard-constrained formulation infeasible at this state: penalty fallback
      ++run.fallback_events;
      std::tie(status, dispatch) = solve_formulation(FormulationId::plt);
    }
    if (dispatch.steps() == 0) {
      throw std::runtime_error("run_mpc: penalty fallback did not produce a dispatch");
    }

    const auto [p_b, b_next] = commit_step(b, dispatch.p_b[0], realized, params);
    run.committed.p_b.push_back(p_b);
    run.committed.q_b.push_back(dispatch.q_b[0]);
    run.committed.b.push_back(b_next);
    run.per_step_solve_status.push_back(to_string(status));
    if (config.event_log) {
      *config.event_log << "step=" << i << " status=" << to_string(status)
                        << " p_b=" << p_b << " q_b=" << dispatch.q_b[0] << " b=" << b_next
                        << '\n';
    }
    b = b_next;
    seen_p.push_back(realized.net_p(i));
    seen_q.push_back(realized.net_q(i));
    seen_price.push_back(realized.price[i]);
  }

  run.realized_metrics = evaluate_metrics(realized, run.committed, limit, params.s_max);
  return run;
}

RhResult run_receding_horizon(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              const SolverConfig& qp, std::ostream* event_log) {
  scenario.validate();
  params.validate();
  const int n = static_cast<int>(scenario.steps());

  RhResult out;
  double b = params.b0;
  MipConfig mip_cfg;
  mip_cfg.qp = qp;

  for (int j = 0; j < n; ++j) {
    auto [sub1, sub2] = build_rh_subproblems(scenario, params, limit, polygon, j, b);
    const MipSolution s1 = solve_mip(sub1, mip_cfg);
    const MipSolution s2 = solve_mip(sub2, mip_cfg);

    // a feasible incumbent is enough to commit one step: the dispatch it
    // yields is checked against the hard constraints, only its optimality
    // certificate is missing
    const auto ok = [](const MipSolution& s) {
      return s.status == MipStatus::optimal || s.status == MipStatus::feasible_incumbent;
    };
    const bool ok1 = ok(s1);
    const bool ok2 = ok(s2);
    if (!ok1 && !ok2) {
      out.feasible = false;
      out.infeasible_step = j;
      if (event_log) *event_log << "step=" << j << " status=N.F.\n";
      return out;
    }
    const bool pick1 = ok1 && (!ok2 || s1.objective <= s2.objective);
    const ProblemInstance& pi = pick1 ? sub1 : sub2;
    const MipSolution& sol = pick1 ? s1 : s2;
    const Dispatch d = extract_dispatch(pi, sol.x);

    const auto [p_b, b_next] = commit_step(b, d.p_b[0], scenario, params);
    out.dispatch.p_b.push_back(p_b);
    out.dispatch.q_b.push_back(d.q_b[0]);
    out.dispatch.b.push_back(b_next);
    out.chosen_sub.push_back(pick1 ? 1 : 2);
    if (event_log) {
      *event_log << "step=" << j << " sub=" << (pick1 ? 1 : 2) << " p_b=" << p_b
                 << " q_b=" << d.q_b[0] << '\n';
    }
    b = b_next;
  }
  out.feasible = true;
  return out;
}

}  // namespace pfarb
