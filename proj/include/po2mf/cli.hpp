#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "po2mf/bounds.hpp"
#include "po2mf/exactchain.hpp"
#include "po2mf/meanfield.hpp"
#include "po2mf/params.hpp"
#include "po2mf/simulator.hpp"
#include "po2mf/verify.hpp"

namespace po2mf::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitVerification = 2;

struct RunRecord {
  std::string command;
  Json params = Json::object();
  Json results = Json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> warnings;
  int exit_code = kExitOk;
};

inline RunRecord make_record(std::string command, Json params = Json::object()) {
  RunRecord rec;
  rec.command = std::move(command);
  rec.params = std::move(params);
  return rec;
}

struct ModelOptions {
  double gamma = 0.1;
  double alpha = 0.05;
  std::int64_t n = 10;
  std::optional<int> buffer;  // empty: auto
  double xi = 0.01;

  SystemParams system(std::int64_t n_override = 0) const {
    SystemParams p{n_override > 0 ? n_override : n, gamma, alpha, buffer, xi};
    p.validate();
    return p;
  }
};

struct SimOptions {
  std::uint64_t steps = 1'000'000;
  int replicas = 10;
  std::uint64_t seed = 1;
  double warmup = 0.1;
  std::string scheme = "uniformization";
  std::optional<int> tail_r;
  std::optional<double> tail_eps;
  unsigned threads = 0;

  sim::SimConfig config() const {
    sim::SimConfig c{steps, warmup, replicas, seed, sim::parse_scheme(scheme), threads};
    c.validate();
    return c;
  }

  std::optional<sim::TailConfig> tail() const {
    if (tail_r.has_value() != tail_eps.has_value()) {
      throw std::invalid_argument("--tail-r and --tail-eps must be given together");
    }
    if (!tail_r) return std::nullopt;
    if (*tail_r < 1 || !(*tail_eps > 0.0)) throw std::invalid_argument("--tail-r and --tail-eps must be positive");
    return sim::TailConfig{*tail_r, *tail_eps};
  }
};

inline Json params_json(const SystemParams& p) {
  Json j;
  j["n"] = p.n_servers;
  j["gamma"] = p.gamma;
  j["alpha"] = p.alpha;
  j["buffer"] = p.resolved_buffer();
  j["buffer_rule"] = p.buffer ? "fixed" : "auto";
  j["xi"] = p.xi;
  j["lambda"] = p.lambda();
  return j;
}

inline Json sim_json(const SimOptions& o) {
  Json j;
  j["steps"] = o.steps;
  j["replicas"] = o.replicas;
  j["warmup"] = o.warmup;
  j["scheme"] = o.scheme;
  if (o.tail_r) {
    j["tail_r"] = *o.tail_r;
    j["tail_eps"] = *o.tail_eps;
  }
  return j;
}

// ---- commands ---------------------------------------------------------------

inline RunRecord cmd_bound(const ModelOptions& opt) {
  const auto p = opt.system();
  const auto rep = bounds::dominant_term(p);
  auto rec = make_record("bound", params_json(p));
  rec.results["buffer_used"] = rep.buffer_used;
  rec.results["dominant_term"] = rep.dominant_term;
  rec.results["scaled_asymptotic"] = rep.scaled_asymptotic;
  rec.results["scaled_upper"] = rep.scaled_upper;
  rec.results["alpha_valid"] = rep.alpha_valid;
  rec.warnings = rep.warnings;
  return rec;
}

struct TableOptions {
  ModelOptions model;
  std::vector<std::int64_t> n_list;
  bool simulate = false;
  SimOptions sim;
};

inline RunRecord cmd_table(const TableOptions& opt) {
  if (opt.n_list.empty()) throw std::invalid_argument("--n-list must name at least one N");
  auto rec = make_record("table");
  const auto first = opt.model.system(opt.n_list.front());
  rec.params = params_json(first);
  rec.params["n"] = opt.n_list;
  rec.params.erase("buffer");
  rec.params.erase("lambda");
  if (opt.simulate) {
    rec.params["simulation"] = sim_json(opt.sim);
    rec.seed = opt.sim.seed;
  }
  Json rows = Json::array();
  for (auto n : opt.n_list) {
    const auto p = opt.model.system(n);
    const auto rep = bounds::dominant_term(p);
    Json row;
    row["n"] = n;
    row["lambda"] = rep.lambda;
    row["buffer"] = rep.buffer_used;
    if (opt.simulate) {
      const auto stats = sim::run(p, opt.sim.config(), opt.sim.tail());
      row["simulation"] = stats.scaled_mse;
      row["simulation_std_error"] = static_cast<double>(n) * stats.std_error;
    }
    row["asymptotic_bound"] = rep.scaled_asymptotic;
    row["upper_bound"] = rep.scaled_upper;
    rows.push_back(row);
    for (const auto& w : rep.warnings) {
      if (std::find(rec.warnings.begin(), rec.warnings.end(), w) == rec.warnings.end()) rec.warnings.push_back(w);
    }
  }
  rec.results["rows"] = rows;
  return rec;
}

inline RunRecord cmd_simulate(const ModelOptions& model, const SimOptions& opt) {
  const auto p = model.system();
  const auto stats = sim::run(p, opt.config(), opt.tail());
  auto rec = make_record("simulate", params_json(p));
  rec.params["simulation"] = sim_json(opt);
  rec.seed = opt.seed;
  rec.results["mse_mean"] = stats.mse_mean;
  rec.results["scaled_mse"] = stats.scaled_mse;
  rec.results["std_error"] = stats.std_error;
  rec.results["scaled_std_error"] = static_cast<double>(p.n_servers) * stats.std_error;
  rec.results["replica_values"] = stats.replica_values;
  if (stats.tail_prob) rec.results["tail_prob"] = *stats.tail_prob;
  rec.results["occupancy_mean"] = stats.occupancy_mean;
  return rec;
}

inline RunRecord cmd_equilibrium(const ModelOptions& model, double tol = 1e-12) {
  const auto p = model.system();
  const auto eq = meanfield::equilibrium(p, tol);
  auto rec = make_record("equilibrium", params_json(p));
  rec.results["residual"] = eq.residual;
  rec.results["s_star"] = eq.s_star;
  return rec;
}

inline RunRecord cmd_exact(const ModelOptions& model) {
  const auto p = model.system();
  const auto eq = meanfield::equilibrium(p);
  const auto gen = exact::build_generator(p);
  const auto pi = exact::stationary(gen);
  const double mse = exact::exact_mse(gen, pi, eq.s_star);
  auto rec = make_record("exact", params_json(p));
  rec.results["states"] = gen.size();
  rec.results["stationary_residual"] = pi.residual;
  rec.results["exact_mse"] = mse;
  rec.results["scaled_exact_mse"] = static_cast<double>(p.n_servers) * mse;
  const auto rep = bounds::dominant_term(p);
  rec.results["scaled_asymptotic"] = rep.scaled_asymptotic;
  rec.results["scaled_upper"] = rep.scaled_upper;
  rec.results["below_upper_bound"] = static_cast<double>(p.n_servers) * mse <= rep.scaled_upper;
  return rec;
}

inline Json check_json(const verify::CheckResult& c) {
  Json j;
  j["name"] = c.name;
  j["passed"] = c.passed;
  j["asserted"] = c.asserted;
  j["measured"] = c.measured;
  j["threshold"] = c.threshold;
  if (!c.detail.empty()) j["detail"] = c.detail;
  return j;
}

inline RunRecord cmd_verify(const verify::VerifyOptions& opt) {
  const auto battery = verify::run_battery(opt);
  auto rec = make_record("verify");
  rec.params["gamma"] = opt.gammas;
  rec.params["alpha"] = opt.alphas;
  rec.params["n"] = opt.ns;
  rec.params["xi"] = opt.xi;
  rec.seed = opt.seed;
  Json instances = Json::array();
  for (const auto& inst : battery.instances) {
    Json j;
    j["params"] = params_json(inst.params);
    j["passed"] = inst.passed();
    Json checks = Json::array();
    for (const auto& c : inst.checks) checks.push_back(check_json(c));
    j["checks"] = checks;
    instances.push_back(j);
  }
  Json global = Json::array();
  for (const auto& c : battery.global) global.push_back(check_json(c));
  rec.results["passed"] = battery.passed();
  rec.results["instances"] = instances;
  rec.results["global"] = global;
  rec.exit_code = battery.passed() ? kExitOk : kExitVerification;
  return rec;
}

// ---- serialization ----------------------------------------------------------

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline Json to_json(const RunRecord& rec, std::optional<std::string> timestamp = std::nullopt) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = rec.command;
  j["params"] = rec.params;
  j["results"] = rec.results;
  j["seed"] = rec.seed ? Json(*rec.seed) : Json(nullptr);
  j["version"] = kToolVersion;
  if (!rec.warnings.empty()) j["warnings"] = rec.warnings;
  j["timestamp"] = timestamp ? *timestamp : utc_timestamp();
  return j;
}

// 6 significant digits.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline std::string format_scalar(const Json& v) {
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct MetricRow {
  std::string n;
  std::string metric;
  std::string value;
};

inline void flatten(const Json& v, const std::string& path, const std::string& n, std::vector<MetricRow>& out) {
  if (v.is_object()) {
    for (const auto& [key, child] : v.items()) flatten(child, path.empty() ? key : path + "." + key, n, out);
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) flatten(v[i], path + "[" + std::to_string(i) + "]", n, out);
  } else {
    out.push_back({n, path, format_scalar(v)});
  }
}

// Long format: one row per (N, metric).
inline std::vector<MetricRow> metric_rows(const RunRecord& rec) {
  std::vector<MetricRow> rows;
  if (rec.command == "table") {
    for (const auto& row : rec.results.at("rows")) {
      const std::string n = row.at("n").dump();
      for (const auto& [key, v] : row.items()) {
        if (key != "n") flatten(v, key, n, rows);
      }
    }
  } else if (rec.command == "verify") {
    for (const auto& inst : rec.results.at("instances")) {
      const std::string n = inst.at("params").at("n").dump();
      const std::string prefix = "gamma=" + format_scalar(inst.at("params").at("gamma")) + ".";
      for (const auto& c : inst.at("checks")) {
        rows.push_back({n, prefix + c.at("name").get<std::string>() + ".measured", format_scalar(c.at("measured"))});
        rows.push_back({n, prefix + c.at("name").get<std::string>() + ".passed", c.at("passed").dump()});
      }
    }
    for (const auto& c : rec.results.at("global")) {
      rows.push_back({"", c.at("name").get<std::string>() + ".measured", format_scalar(c.at("measured"))});
      rows.push_back({"", c.at("name").get<std::string>() + ".passed", c.at("passed").dump()});
    }
    rows.push_back({"", "passed", rec.results.at("passed").dump()});
  } else {
    flatten(rec.results, "", rec.params.contains("n") ? rec.params.at("n").dump() : "", rows);
  }
  return rows;
}

inline std::string to_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << "command,n,metric,value\r\n";
  for (const auto& r : metric_rows(rec)) {
    os << csv_field(rec.command) << ',' << csv_field(r.n) << ',' << csv_field(r.metric) << ','
       << csv_field(r.value) << "\r\n";
  }
  return os.str();
}

inline std::string to_text(const RunRecord& rec) {
  std::ostringstream os;
  os << rec.command << "\n";
  for (const auto& [key, v] : rec.params.items()) os << "  " << key << " = " << format_scalar(v) << "\n";
  if (rec.command == "table") {
    os << "  " << std::left << std::setw(8) << "N" << std::setw(10) << "lambda";
    const bool sim = !rec.results.at("rows").empty() && rec.results.at("rows")[0].contains("simulation");
    if (sim) os << std::setw(14) << "simulation";
    os << std::setw(14) << "asymptotic" << "upper\n";
    for (const auto& row : rec.results.at("rows")) {
      os << "  " << std::setw(8) << row.at("n").dump() << std::setw(10) << format_number(row.at("lambda"));
      if (sim) os << std::setw(14) << format_number(row.at("simulation"));
      os << std::setw(14) << format_number(row.at("asymptotic_bound")) << format_number(row.at("upper_bound"))
         << "\n";
    }
    return os.str();
  }
  if (rec.command == "verify") {
    for (const auto& inst : rec.results.at("instances")) {
      const auto& p = inst.at("params");
      os << "  gamma=" << format_scalar(p.at("gamma")) << " alpha=" << format_scalar(p.at("alpha"))
         << " N=" << p.at("n").dump() << " b=" << p.at("buffer").dump() << "\n";
      for (const auto& c : inst.at("checks")) {
        const bool asserted = c.at("asserted").get<bool>();
        const char* tag = !asserted ? "info" : (c.at("passed").get<bool>() ? "PASS" : "FAIL");
        os << "    [" << tag << "] " << std::left << std::setw(30) << c.at("name").get<std::string>()
           << format_scalar(c.at("measured")) << " vs " << format_scalar(c.at("threshold"));
        if (c.contains("detail")) os << "  (" << c.at("detail").get<std::string>() << ")";
        os << "\n";
      }
    }
    for (const auto& c : rec.results.at("global")) {
      os << "  [" << (c.at("passed").get<bool>() ? "PASS" : "FAIL") << "] " << c.at("name").get<std::string>();
      if (c.contains("detail")) os << "  " << c.at("detail").get<std::string>();
      os << "\n";
    }
    os << "  verdict: " << (rec.results.at("passed").get<bool>() ? "PASS" : "FAIL") << "\n";
    return os.str();
  }
  std::vector<MetricRow> rows;
  flatten(rec.results, "", "", rows);
  for (const auto& r : rows) os << "  " << r.metric << " = " << r.value << "\n";
  return os.str();
}

}  // namespace po2mf::cli
