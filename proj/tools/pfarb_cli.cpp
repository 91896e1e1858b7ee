#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "pfarb/iocli.hpp"
#include "pfarb/mip.hpp"
#include "pfarb/mpc.hpp"
#include "pfarb/oracle.hpp"
#include "pfarb/solar_pfc.hpp"

namespace {

using namespace pfarb;

constexpr int kExitSolved = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitBudget = 3;

struct CommonOpts {
  std::string scenario_path;
  std::string profile = "residential_pv";
  std::uint64_t seed = 1;
  std::string preset = "1C";
  std::string converter = "matched";
  double pf_min = 0.9;
  int polygon_m = kDefaultPolygonSides;
  double lambda = kDefaultLambda;
  double beta = kDefaultBeta;
  int node_budget = 20000;
  double time_budget = 100.0;
  double gap_tol = 1e-4;
  std::string price_unit = "kwh";
  std::string report_path;
  std::string dispatch_path;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--scenario", o.scenario_path, "scenario CSV (default: synthesize)");
  cmd->add_option("--profile", o.profile, "synthetic profile when no CSV given")
      ->check(CLI::IsMember({"residential_pv", "flat", "adversarial"}));
  cmd->add_option("--seed", o.seed, "synthesis / fuzzing seed");
  cmd->add_option("--preset", o.preset, "battery ramp preset")
      ->check(CLI::IsMember({"0.25C", "1C", "2C"}));
  cmd->add_option("--converter", o.converter, "converter sizing")
      ->check(CLI::IsMember({"matched", "undersized", "oversized"}));
  cmd->add_option("--pf-min", o.pf_min, "power-factor floor")->check(CLI::Range(0.01, 0.9999));
  cmd->add_option("--polygon-m", o.polygon_m, "sides of the converter-disk polygon");
  cmd->add_option("--lambda", o.lambda, "PF-shortfall penalty weight ($/kvarh)");
  cmd->add_option("--beta", o.beta, "converter-usage penalty weight ($/kVA^2)");
  cmd->add_option("--node-budget", o.node_budget, "branch-and-bound node limit");
  cmd->add_option("--time-budget", o.time_budget,
                  "branch-and-bound wall-clock limit in seconds (0 = unlimited)");
  cmd->add_option("--gap-tol", o.gap_tol, "branch-and-bound relative gap tolerance");
  cmd->add_option("--price-unit", o.price_unit, "price column unit of the input CSV")
      ->check(CLI::IsMember({"kwh", "mwh"}));
  cmd->add_option("--out", o.report_path, "JSON report path");
  cmd->add_option("--dispatch-csv", o.dispatch_path, "per-step dispatch CSV path");
}

Scenario make_scenario(const CommonOpts& o) {
  Scenario s = o.scenario_path.empty()
                   ? synth_scenario(o.seed, profile_from_string(o.profile))
                   : load_scenario(o.scenario_path);
  if (o.price_unit == "mwh") {
    for (double& p : s.price) p /= 1000.0;
  }
  return s;
}

RunConfig make_config(const CommonOpts& o, FormulationId id) {
  RunConfig c;
  c.formulation = id;
  c.preset = o.preset;
  c.converter = o.converter;
  c.battery = battery_preset(o.preset, o.converter);
  c.pf_min = o.pf_min;
  c.polygon_m = o.polygon_m;
  c.lambda = o.lambda;
  c.beta = o.beta;
  c.mip.node_budget = o.node_budget;
  c.mip.time_budget = o.time_budget;
  c.mip.gap_tol = o.gap_tol;
  c.seed = o.seed;
  return c;
}

RunRecord run_one(const RunConfig& config, const Scenario& scenario) {
  RunRecord rec;
  rec.config = config;
  const PFLimit limit = PFLimit::from_pf_min(config.pf_min);
  const DiskPolygon polygon = polygon_disk(config.battery.s_max, config.polygon_m);

  if (config.formulation == FormulationId::rh) {
    const RhResult rh =
        run_receding_horizon(scenario, config.battery, limit, polygon, config.mip.qp);
    rec.feasible = rh.feasible;
    rec.status = rh.feasible ? "optimal"
                             : "N.F. at step " + std::to_string(rh.infeasible_step);
    if (rh.feasible) {
      rec.dispatch = rh.dispatch;
      rec.metrics = evaluate_metrics(scenario, rh.dispatch, limit, config.battery.s_max);
    }
    return rec;
  }

  ProblemInstance pi;
  switch (config.formulation) {
    case FormulationId::arb:
      pi = build_arb(scenario, config.battery);
      break;
    case FormulationId::mr:
      pi = build_mccormick(scenario, config.battery, limit, polygon);
      break;
    case FormulationId::plt:
      pi = build_penalty(scenario, config.battery, limit, polygon, config.lambda, 0.0);
      break;
    case FormulationId::plt_conv:
      pi = build_penalty(scenario, config.battery, limit, polygon, config.lambda, config.beta);
      break;
    default:
      throw std::invalid_argument("run_one: unsupported formulation");
  }
  const MipSolution sol = solve_mip(pi, scenario, config.mip);
  rec.status = to_string(sol.status);
  rec.feasible = sol.status == MipStatus::optimal ||
                 sol.status == MipStatus::feasible_incumbent ||
                 (sol.status == MipStatus::node_budget_exhausted && sol.x.size() > 0);
  if (rec.feasible) {
    rec.dispatch = extract_dispatch(pi, sol.x);
    rec.metrics = evaluate_metrics(scenario, rec.dispatch, limit, config.battery.s_max);
  }
  return rec;
}

int exit_code(const RunRecord& rec) {
  if (!rec.feasible) return kExitInfeasible;
  if (rec.status == "node_budget_exhausted" || rec.status == "feasible_incumbent") {
    return kExitBudget;
  }
  return kExitSolved;
}

void print_record(const RunRecord& rec) {
  std::cout << rec.config.key() << ": " << rec.status;
  if (rec.feasible) {
    std::printf("  profit=%.6f  violations=%d  min_pf=%.4f  mean_pf=%.4f  cuf=%.4f",
                rec.metrics.profit, rec.metrics.pf_violations, rec.metrics.min_pf,
                rec.metrics.mean_pf, rec.metrics.cuf);
  }
  std::cout << '\n';
}

void maybe_write(const CommonOpts& o, const Scenario& scenario,
                 const std::vector<RunRecord>& records) {
  if (!o.report_path.empty()) emit_results(records, o.report_path);
  if (!o.dispatch_path.empty() && !records.empty() && records.front().feasible) {
    write_dispatch_csv(scenario, records.front().dispatch, o.dispatch_path);
  }
}

int cmd_solve(const CommonOpts& o, const std::string& formulation) {
  const Scenario scenario = make_scenario(o);
  const RunRecord rec = run_one(make_config(o, formulation_from_string(formulation)), scenario);
  print_record(rec);
  maybe_write(o, scenario, {rec});
  return exit_code(rec);
}

int cmd_sweep(const CommonOpts& o, const std::vector<double>& pf_limits,
              const std::string& formulation) {
  const Scenario scenario = make_scenario(o);
  std::vector<RunRecord> records;

  if (!pf_limits.empty()) {
    // profit-vs-PF-limit curve for one preset / formulation
    for (double pf : pf_limits) {
      CommonOpts cell = o;
      cell.pf_min = pf;
      records.push_back(run_one(make_config(cell, formulation_from_string(formulation)),
                                scenario));
      std::printf("pf_min=%.4f  profit=%s\n", pf,
                  records.back().feasible
                      ? std::to_string(records.back().metrics.profit).c_str()
                      : "N.F.");
    }
  } else {
    std::vector<RunConfig> cells;
    for (const char* conv : {"matched", "undersized", "oversized"}) {
      for (const char* preset : {"0.25C", "1C", "2C"}) {
        for (FormulationId id : {FormulationId::arb, FormulationId::mr, FormulationId::rh,
                                 FormulationId::plt, FormulationId::plt_conv}) {
          CommonOpts cell = o;
          cell.preset = preset;
          cell.converter = conv;
          cells.push_back(make_config(cell, id));
        }
      }
    }
    std::vector<std::future<RunRecord>> futures;
    futures.reserve(cells.size());
    for (const RunConfig& c : cells) {
      futures.push_back(std::async(std::launch::async,
                                   [&scenario, c] { return run_one(c, scenario); }));
    }
    for (auto& f : futures) records.push_back(f.get());
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) {
                return a.config.key() < b.config.key();
              });
    for (const RunRecord& rec : records) print_record(rec);
  }
  maybe_write(o, scenario, records);
  return kExitSolved;
}

int cmd_mpc(const CommonOpts& o, const std::string& formulation, bool perfect,
            double price_scale, int history_days, bool verbose) {
  const Scenario realized = make_scenario(o);
  const int n = static_cast<int>(realized.steps());

  // history: preceding days drawn from the same generator with shifted seeds
  ForecastHistory history;
  for (int d = 0; d < history_days; ++d) {
    const Scenario day = synth_scenario(o.seed + 1000 + d, profile_from_string(o.profile));
    for (std::size_t i = 0; i < day.steps(); ++i) {
      history.net_p.push_back(day.net_p(i));
      history.net_q.push_back(day.net_q(i));
      history.price.push_back(day.price[i]);
    }
  }

  MpcConfig config;
  config.formulation = formulation_from_string(formulation);
  config.lambda = o.lambda;
  config.beta = o.beta;
  config.polygon_m = o.polygon_m;
  config.mip.node_budget = o.node_budget;
  config.mip.time_budget = o.time_budget;
  config.mip.gap_tol = o.gap_tol;
  config.perfect_forecast = perfect;
  config.price_forecast_scale = price_scale;
  if (verbose) config.event_log = &std::cerr;

  const BatteryParams battery = battery_preset(o.preset, o.converter);
  const PFLimit limit = PFLimit::from_pf_min(o.pf_min);
  const MpcRun run = run_mpc(realized, history, battery, limit, config);

  std::printf("mpc %s/%s/%s: steps=%d fallbacks=%d profit=%.6f violations=%d min_pf=%.4f\n",
              o.preset.c_str(), o.converter.c_str(), formulation.c_str(), n,
              run.fallback_events, run.realized_metrics.profit,
              run.realized_metrics.pf_violations, run.realized_metrics.min_pf);

  RunRecord rec;
  rec.config = make_config(o, config.formulation);
  rec.status = "optimal";
  rec.feasible = true;
  rec.metrics = run.realized_metrics;
  rec.dispatch = run.committed;
  maybe_write(o, realized, {rec});
  return kExitSolved;
}

int cmd_forecast(const CommonOpts& o, int past_days, int lags, int deviation_terms) {
  // train on synthetic history days, score one held-out day
  ForecastHistory history;
  const int train_days = past_days + 3;
  for (int d = 0; d < train_days; ++d) {
    const Scenario day = synth_scenario(o.seed + 1000 + d, profile_from_string(o.profile));
    for (std::size_t i = 0; i < day.steps(); ++i) {
      history.net_p.push_back(day.net_p(i));
      history.net_q.push_back(day.net_q(i));
      history.price.push_back(day.price[i]);
    }
  }
  const Scenario target = make_scenario(o);
  const int n = static_cast<int>(target.steps());

  auto score = [&](const std::vector<double>& hist, auto truth, const char* name) {
    const ArmaModel model = arma_fit(hist, lags, deviation_terms, past_days, n, 1e-4);
    const std::vector<double> pred = arma_predict(model, hist, n);
    double se = 0.0, ae = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = pred[i] - truth(i);
      se += e * e;
      ae += std::abs(e);
    }
    std::printf("%s: rmse=%.4f mae=%.4f\n", name, std::sqrt(se / n), ae / n);
  };
  score(history.net_p, [&](int i) { return target.net_p(i); }, "net_p");
  score(history.net_q, [&](int i) { return target.net_q(i); }, "net_q");

  const ArimaModel pm = arima_fit(history.price);
  const std::vector<double> pp = arima_predict(pm, n);
  double se = 0.0;
  for (int i = 0; i < n; ++i) se += (pp[i] - target.price[i]) * (pp[i] - target.price[i]);
  std::printf("price: rmse=%.4f%s\n", std::sqrt(se / n),
              pm.ridge_fallback ? " (ridge fallback)" : "");
  return kExitSolved;
}

int cmd_solar(const CommonOpts& o, double s_max) {
  const Scenario scenario = make_scenario(o);
  const PFLimit limit = PFLimit::from_pf_min(o.pf_min);

  Dispatch none;
  none.p_b.assign(scenario.steps(), 0.0);
  none.q_b.assign(scenario.steps(), 0.0);
  none.b.assign(scenario.steps(), 0.0);
  const Metrics before = evaluate_metrics(scenario, none, limit, s_max);

  const SolarPfcRun run = run_solar_pfc(scenario, limit, s_max);
  std::printf("solar-pfc: violations %d -> %d, min_pf %.4f -> %.4f, rating_exceeded=%d\n",
              before.pf_violations, run.metrics.pf_violations, before.min_pf,
              run.metrics.min_pf, run.rating_exceeded_steps);

  RunRecord rec;
  rec.config = make_config(o, FormulationId::solar);
  rec.config.battery.s_max = s_max;
  rec.status = "optimal";
  rec.feasible = true;
  rec.metrics = run.metrics;
  rec.dispatch.p_b.assign(scenario.steps(), 0.0);
  rec.dispatch.q_b = run.q_r;
  rec.dispatch.b.assign(scenario.steps(), 0.0);
  maybe_write(o, scenario, {rec});
  return kExitSolved;
}

int cmd_oracle(const CommonOpts& o, const std::string& formulation, int n_steps) {
  Scenario scenario = make_scenario(o);
  scenario.load_p.resize(n_steps);
  scenario.load_q.resize(n_steps);
  scenario.pv_p.resize(n_steps);
  scenario.price.resize(n_steps);

  const RunConfig config = make_config(o, formulation_from_string(formulation));
  const PFLimit limit = PFLimit::from_pf_min(config.pf_min);
  const DiskPolygon polygon = polygon_disk(config.battery.s_max, config.polygon_m);

  const OracleResult oracle = oracle_sign_enum(scenario, config.battery, limit, polygon,
                                               config.formulation, config.lambda, config.beta);
  const RunRecord rec = run_one(config, scenario);

  if (!oracle.feasible) {
    std::printf("oracle: N.F.; solver: %s\n", rec.status.c_str());
    return rec.feasible ? 1 : kExitInfeasible;
  }
  const double solver_obj = rec.feasible ? -rec.metrics.profit : 0.0;
  std::printf("oracle objective=%.8f solver objective=%.8f (%s)\n", oracle.objective,
              solver_obj, rec.status.c_str());
  if (!rec.feasible ||
      std::abs(oracle.objective - solver_obj) >
          1e-4 * std::max(1.0, std::abs(oracle.objective))) {
    std::printf("MISMATCH\n");
    return 1;
  }
  std::printf("match\n");
  return kExitSolved;
}

int cmd_synth(const CommonOpts& o, const std::string& out_path) {
  const Scenario s = synth_scenario(o.seed, profile_from_string(o.profile));
  save_scenario(s, out_path);
  std::printf("wrote %zu steps (h=%.4g h) to %s\n", s.steps(), s.h, out_path.c_str());
  return kExitSolved;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery arbitrage + power-factor correction toolkit"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string formulation = "plt";
  std::vector<double> pf_limits;
  bool perfect = false;
  double price_scale = 1.0;
  int history_days = 10;
  bool verbose = false;
  int past_days = 7;
  int lags = 4;
  int deviation_terms = 3;
  double solar_s_max = 2.0;
  int oracle_steps = 6;
  std::string synth_out = "scenario.csv";

  auto* solve = app.add_subcommand("solve", "deterministic run of one formulation");
  add_common(solve, o);
  solve->add_option("--formulation", formulation)
      ->check(CLI::IsMember({"arb", "mr", "rh", "plt", "plt_conv"}));

  auto* sweep = app.add_subcommand("sweep", "preset x converter x formulation grid");
  add_common(sweep, o);
  sweep->add_option("--pf-limits", pf_limits,
                    "instead: sweep pf_min for one preset/formulation");
  sweep->add_option("--formulation", formulation, "formulation for --pf-limits mode");

  auto* mpc = app.add_subcommand("mpc", "online run with forecasts");
  add_common(mpc, o);
  mpc->add_option("--formulation", formulation)
      ->check(CLI::IsMember({"arb", "mr", "plt", "plt_conv"}));
  mpc->add_flag("--perfect-forecast", perfect);
  mpc->add_option("--price-scale", price_scale, "corrupt future price forecasts by this factor");
  mpc->add_option("--history-days", history_days);
  mpc->add_flag("-v,--verbose", verbose);

  auto* forecast = app.add_subcommand("forecast", "fit models, report held-out error");
  add_common(forecast, o);
  forecast->add_option("--past-days", past_days);
  forecast->add_option("--lags", lags);
  forecast->add_option("--deviation-terms", deviation_terms);

  auto* solar = app.add_subcommand("solar-pfc", "inverter-only PF correction");
  add_common(solar, o);
  solar->add_option("--s-max", solar_s_max, "inverter rating (kVA)");

  auto* oracle = app.add_subcommand("oracle", "small-horizon exact cross-check");
  add_common(oracle, o);
  oracle->add_option("--formulation", formulation)
      ->check(CLI::IsMember({"arb", "mr", "plt", "plt_conv"}));
  oracle->add_option("--steps", oracle_steps)->check(CLI::Range(1, 10));

  auto* synth = app.add_subcommand("synth", "generate a scenario CSV");
  add_common(synth, o);
  synth->add_option("--out-csv", synth_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(o, formulation);
    if (sweep->parsed()) return cmd_sweep(o, pf_limits, formulation);
    if (mpc->parsed()) return cmd_mpc(o, formulation, perfect, price_scale, history_days, verbose);
    if (forecast->parsed()) return cmd_forecast(o, past_days, lags, deviation_terms);
    if (solar->parsed()) return cmd_solar(o, solar_s_max);
    if (oracle->parsed()) return cmd_oracle(o, formulation, oracle_steps);
    if (synth->parsed()) return cmd_synth(o, synth_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
