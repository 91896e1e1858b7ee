#include "pfarb/iocli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pfarb {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, int line_no, const char* column) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": cannot parse " + column +
                             " value '" + s + "'");
  }
}

/// Timestamp in hours: plain number, or an ISO date-time.
double parse_timestamp(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  std::tm tm{};
  int y, mo, d, hh, mi;
  int sec = 0;
  char sep;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &hh, &mi, &sec) >= 6) {
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = hh;
    tm.tm_min = mi;
    tm.tm_sec = sec;
    return static_cast<double>(timegm(&tm)) / 3600.0;
  }
  throw std::runtime_error("line " + std::to_string(line_no) + ": cannot parse timestamp '" +
                           s + "'");
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double bell(double t, double center, double width) {
  const double z = (t - center) / width;
  return std::exp(-0.5 * z * z);
}

json metrics_json(const Metrics& m) {
  return {{"profit", m.profit},
          {"pf_violations", m.pf_violations},
          {"mean_pf", m.mean_pf},
          {"min_pf", m.min_pf},
          {"cuf", m.cuf}};
}

json config_json(const RunConfig& c) {
  return {{"formulation", to_string(c.formulation)},
          {"preset", c.preset},
          {"converter", c.converter},
          {"battery",
           {{"eta_ch", c.battery.eta_ch},
            {"eta_dis", c.battery.eta_dis},
            {"delta_min", c.battery.delta_min},
            {"delta_max", c.battery.delta_max},
            {"b_min", c.battery.b_min},
            {"b_max", c.battery.b_max},
            {"b0", c.battery.b0},
            {"s_max", c.battery.s_max}}},
          {"pf_min", c.pf_min},
          {"polygon_m", c.polygon_m},
          {"lambda", c.lambda},
          {"beta", c.beta},
          {"mip",
           {{"int_tol", c.mip.int_tol},
            {"gap_tol", c.mip.gap_tol},
            {"node_budget", c.mip.node_budget}}},
          {"seed", c.seed}};
}

}  // namespace

std::string RunConfig::key() const {
  return preset + "/" + converter + "/" + to_string(formulation);
}

std::string to_string(FormulationId id) {
  switch (id) {
    case FormulationId::arb: return "arb";
    case FormulationId::mr: return "mr";
    case FormulationId::rh: return "rh";
    case FormulationId::plt: return "plt";
    case FormulationId::plt_conv: return "plt_conv";
    case FormulationId::solar: return "solar";
  }
  return "?";
}

FormulationId formulation_from_string(const std::string& name) {
  if (name == "arb") return FormulationId::arb;
  if (name == "mr") return FormulationId::mr;
  if (name == "rh") return FormulationId::rh;
  if (name == "plt") return FormulationId::plt;
  if (name == "plt_conv") return FormulationId::plt_conv;
  if (name == "solar") return FormulationId::solar;
  throw std::invalid_argument("unknown formulation '" + name + "'");
}

BatteryParams battery_preset(const std::string& preset, const std::string& converter) {
  BatteryParams p;
  p.eta_ch = p.eta_dis = 0.95;
  p.b_min = 0.2;
  p.b_max = 2.0;
  p.b0 = 1.0;
  if (preset == "0.25C") {
    p.delta_max = 0.5;
  } else if (preset == "1C") {
    p.delta_max = 2.0;
  } else if (preset == "2C") {
    p.delta_max = 4.0;
  } else {
    throw std::invalid_argument("unknown battery preset '" + preset + "'");
  }
  p.delta_min = -p.delta_max;
  double factor;
  if (converter == "matched") {
    factor = 1.0;
  } else if (converter == "undersized") {
    factor = 0.9;
  } else if (converter == "oversized") {
    factor = 1.25;
  } else {
    throw std::invalid_argument("unknown converter sizing '" + converter + "'");
  }
  p.s_max = factor * p.p_b_max();
  return p;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty scenario file '" + path + "'");
  const auto header = split_csv(line);
  const bool has_pv = header.size() >= 5;
  if (header.size() < 4 || header[0] != "timestamp" || header[1] != "load_p_kw" ||
      header[2] != "load_q_kvar" ||
      (has_pv ? (header[3] != "pv_p_kw" || header[4] != "price_per_kwh")
              : header[3] != "price_per_kwh")) {
    throw std::runtime_error(
        "line 1: expected header timestamp,load_p_kw,load_q_kvar[,pv_p_kw],price_per_kwh");
  }

  Scenario s;
  std::vector<double> stamps;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(f.size()));
    }
    stamps.push_back(parse_timestamp(f[0], line_no));
    s.load_p.push_back(parse_number(f[1], line_no, "load_p_kw"));
    s.load_q.push_back(parse_number(f[2], line_no, "load_q_kvar"));
    const double pv = has_pv ? parse_number(f[3], line_no, "pv_p_kw") : 0.0;
    if (pv < 0.0) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": negative pv_p_kw");
    }
    s.pv_p.push_back(pv);
    s.price.push_back(parse_number(f[has_pv ? 4 : 3], line_no, "price_per_kwh"));
  }
  if (stamps.size() < 2) throw std::runtime_error("scenario needs at least 2 rows");

  s.h = stamps[1] - stamps[0];
  if (s.h <= 0.0) throw std::runtime_error("line 3: timestamps not strictly increasing");
  for (std::size_t i = 2; i < stamps.size(); ++i) {
    const double dt = stamps[i] - stamps[i - 1];
    if (std::abs(dt - s.h) > 1e-6 * std::max(1.0, s.h)) {
      throw std::runtime_error("line " + std::to_string(i + 2) + ": non-uniform spacing (" +
                               fmt9(dt) + " h vs " + fmt9(s.h) + " h)");
    }
  }
  s.validate();
  return s;
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file '" + path + "'");
  out << "timestamp,load_p_kw,load_q_kvar,pv_p_kw,price_per_kwh\n";
  for (std::size_t i = 0; i < scenario.steps(); ++i) {
    out << fmt9(i * scenario.h) << ',' << fmt9(scenario.load_p[i]) << ','
        << fmt9(scenario.load_q[i]) << ',' << fmt9(scenario.pv_p[i]) << ','
        << fmt9(scenario.price[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

SynthProfile profile_from_string(const std::string& name) {
  if (name == "residential_pv") return SynthProfile::residential_pv;
  if (name == "flat") return SynthProfile::flat;
  if (name == "adversarial") return SynthProfile::adversarial;
  throw std::invalid_argument("unknown profile '" + name + "'");
}

Scenario synth_scenario(std::uint64_t seed, SynthProfile profile) {
  constexpr int kSteps = 96;
  Scenario s;
  s.h = 0.25;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  switch (profile) {
    case SynthProfile::flat:
      for (int i = 0; i < kSteps; ++i) {
        s.load_p.push_back(1.0);
        s.load_q.push_back(0.0);
        s.pv_p.push_back(0.0);
        s.price.push_back(0.10);
      }
      break;

    case SynthProfile::residential_pv:
      for (int i = 0; i < kSteps; ++i) {
        const double t = i * s.h;  // hours since midnight
        double load = 0.35 + 0.9 * bell(t, 7.5, 1.4) + 1.2 * bell(t, 19.0, 2.0) +
                      0.03 * unit(rng);
        double pv = 1.6 * bell(t, 12.5, 2.4);
        if (t < 6.0 || t > 19.0) pv = 0.0;
        pv = std::max(0.0, pv * (1.0 + 0.02 * unit(rng)));
        // reactive load: mild baseline plus a short strong midday burst that a
        // slow battery's converter cannot absorb
        double q = 0.40 + 0.10 * bell(t, 19.0, 2.5) + 0.01 * unit(rng);
        if (t >= 12.0 && t < 13.0) q += 0.95;
        double price = 0.08 + 0.16 * bell(t, 8.0, 1.6) + 0.20 * bell(t, 19.0, 1.8) +
                       0.002 * unit(rng);
        s.load_p.push_back(load);
        s.load_q.push_back(q);
        s.pv_p.push_back(pv);
        s.price.push_back(price);
      }
      break;

    case SynthProfile::adversarial:
      for (int i = 0; i < kSteps; ++i) {
        const double sign = (i / 4) % 2 == 0 ? 1.0 : -1.0;
        s.load_p.push_back(sign * (0.2 + 0.8 * std::abs(unit(rng))));
        s.load_q.push_back(1.2 * unit(rng));
        s.pv_p.push_back(0.5 * std::abs(unit(rng)));
        s.price.push_back(0.05 + 0.3 * std::abs(unit(rng)));
      }
      break;
  }
  return s;
}

void emit_results(const std::vector<RunRecord>& records, const std::string& path) {
  std::vector<const RunRecord*> ordered;
  for (const auto& r : records) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RunRecord* a, const RunRecord* b) {
                     return a->config.key() < b->config.key();
                   });

  json out;
  out["schema_version"] = 1;
  out["records"] = json::array();
  for (const RunRecord* r : ordered) {
    json rec;
    rec["key"] = r->config.key();
    rec["config"] = config_json(r->config);
    rec["status"] = r->feasible ? r->status : "N.F.";
    rec["feasible"] = r->feasible;
    if (r->feasible) {
      rec["metrics"] = metrics_json(r->metrics);
      rec["dispatch"] = {{"p_b_kw", r->dispatch.p_b},
                         {"q_b_kvar", r->dispatch.q_b},
                         {"b_kwh", r->dispatch.b}};
    } else {
      rec["metrics"] = nullptr;
    }
    out["records"].push_back(std::move(rec));
  }

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report '" + path + "'");
  f << out.dump(2) << '\n';
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void write_dispatch_csv(const Scenario& scenario, const Dispatch& dispatch,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dispatch file '" + path + "'");
  out << "timestamp,p_b_kw,q_b_kvar,b_kwh,p_t_kw,q_t_kvar,pf\n";
  for (std::size_t i = 0; i < dispatch.steps(); ++i) {
    const auto [pt, qt] = total_power(scenario, dispatch, i);
    out << fmt9(i * scenario.h) << ',' << fmt9(dispatch.p_b[i]) << ','
        << fmt9(dispatch.q_b[i]) << ',' << fmt9(dispatch.b[i]) << ',' << fmt9(pt) << ','
        << fmt9(qt) << ',' << fmt9(power_factor(pt, qt)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace pfarb
