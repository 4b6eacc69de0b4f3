// po2mf: mean-field error bounds and CTMC simulation for the power-of-two-choices
// supermarket model.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "po2mf/cli.hpp"

namespace {

using namespace po2mf;

struct Output {
  std::string format = "text";
  std::string path;
};

// Accepts "auto" or a positive integer.
std::optional<int> parse_buffer(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t pos = 0;
  const int b = std::stoi(s, &pos);
  if (pos != s.size() || b < 1) throw std::invalid_argument("--buffer must be 'auto' or a positive integer");
  return b;
}

// Integer counts may be written as 1e7.
std::uint64_t parse_count(const std::string& s, const char* flag) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size() || !(v >= 1.0) || v != std::floor(v) || v > 1e18) {
    throw std::invalid_argument(std::string(flag) + " must be a positive integer");
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<std::int64_t> parse_n_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::int64_t>(parse_count(item, "--n-list")));
  }
  if (out.empty()) throw std::invalid_argument("--n-list must name at least one N");
  return out;
}

void add_model_flags(CLI::App* cmd, cli::ModelOptions& m, std::string& buffer, bool need_n) {
  cmd->add_option("--gamma", m.gamma, "heavy-traffic coefficient in (0,1]")->required();
  cmd->add_option("--alpha", m.alpha, "heavy-traffic exponent >= 0")->required();
  if (need_n) cmd->add_option("--n", m.n, "number of servers")->required();
  cmd->add_option("--buffer", buffer, "buffer size or 'auto'")->default_val("auto");
  cmd->add_option("--xi", m.xi, "slack exponent > 0")->default_val(0.01);
}

void add_output_flags(CLI::App* cmd, Output& out) {
  cmd->add_option("--format", out.format, "text | json | csv")
      ->check(CLI::IsMember({"text", "json", "csv"}))
      ->default_val("text");
  cmd->add_option("--output", out.path, "write to PATH instead of stdout");
}

struct SimFlags {
  std::string steps = "1e6";
  std::string scheme = "uniformization";
  std::optional<int> tail_r;
  std::optional<double> tail_eps;
};

void add_sim_flags(CLI::App* cmd, cli::SimOptions& s, SimFlags& f) {
  cmd->add_option("--steps", f.steps, "uniformized steps (or events) per replica")->default_val("1e6");
  cmd->add_option("--replicas", s.replicas, "independent replicas")->default_val(10);
  cmd->add_option("--seed", s.seed, "base seed")->envname("PO2_SEED")->default_val(1);
  cmd->add_option("--warmup", s.warmup, "fraction of steps discarded")->default_val(0.1);
  cmd->add_option("--scheme", f.scheme, "uniformization | gillespie")
      ->check(CLI::IsMember({"uniformization", "gillespie"}))
      ->default_val("uniformization");
  cmd->add_option("--tail-r", f.tail_r, "moment order r for the tail estimate");
  cmd->add_option("--tail-eps", f.tail_eps, "radius exponent epsilon for the tail estimate");
  cmd->add_option("--threads", s.threads, "worker threads (0: hardware)")->default_val(0);
}

void finish_sim(cli::SimOptions& s, const SimFlags& f) {
  s.steps = parse_count(f.steps, "--steps");
  s.scheme = f.scheme;
  s.tail_r = f.tail_r;
  s.tail_eps = f.tail_eps;
}

int emit(const cli::RunRecord& rec, const Output& out) {
  for (const auto& w : rec.warnings) std::cerr << "warning: " << w << "\n";
  std::string body;
  if (out.format == "json") {
    body = cli::to_json(rec).dump(2) + "\n";
  } else if (out.format == "csv") {
    body = cli::to_csv(rec);
  } else {
    body = cli::to_text(rec);
  }
  if (out.path.empty()) {
    std::cout << body;
  } else {
    std::ofstream f(out.path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + out.path);
    f << body;
  }
  return rec.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field error bounds and simulation for power-of-two-choices load balancing"};
  app.require_subcommand(1);
  Output out;
  cli::ModelOptions model;
  std::string buffer = "auto";
  cli::SimOptions sim;
  SimFlags sim_flags;

  auto* bound = app.add_subcommand("bound", "asymptotic and upper bound for one system size");
  add_model_flags(bound, model, buffer, true);
  add_output_flags(bound, out);

  std::string n_list;
  bool simulate = false;
  auto* table = app.add_subcommand("table", "bound table over a list of system sizes");
  add_model_flags(table, model, buffer, false);
  table->add_option("--n-list", n_list, "comma-separated system sizes")->required();
  table->add_flag("--simulate", simulate, "add a simulation column");
  add_sim_flags(table, sim, sim_flags);
  add_output_flags(table, out);

  auto* simulate_cmd = app.add_subcommand("simulate", "steady-state MSE by CTMC simulation");
  add_model_flags(simulate_cmd, model, buffer, true);
  add_sim_flags(simulate_cmd, sim, sim_flags);
  add_output_flags(simulate_cmd, out);

  double tol = 1e-12;
  auto* equilibrium = app.add_subcommand("equilibrium", "mean-field fixed point");
  add_model_flags(equilibrium, model, buffer, true);
  equilibrium->add_option("--tol", tol, "residual tolerance")->default_val(1e-12);
  add_output_flags(equilibrium, out);

  auto* exact_cmd = app.add_subcommand("exact", "exact stationary MSE for small N and b");
  add_model_flags(exact_cmd, model, buffer, true);
  add_output_flags(exact_cmd, out);

  verify::VerifyOptions vopt;
  auto* verify_cmd = app.add_subcommand("verify", "numerical checks of the structural properties");
  verify_cmd->add_option("--gamma", vopt.gammas, "gamma grid")->delimiter(',')->default_str("0.1,0.01");
  verify_cmd->add_option("--alpha", vopt.alphas, "alpha grid")->delimiter(',')->default_str("0.05");
  verify_cmd->add_option("--n", vopt.ns, "N grid")->delimiter(',')->default_str("10,100,1000");
  verify_cmd->add_option("--xi", vopt.xi, "slack exponent")->default_val(0.01);
  verify_cmd->add_option("--seed", vopt.seed, "seed for random vectors")->envname("PO2_SEED")->default_val(1);
  verify_cmd->add_option("--trajectories", vopt.trajectories, "random ODE trajectories")->default_val(20);
  add_output_flags(verify_cmd, out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitValidation;
  }

  try {
    model.buffer = parse_buffer(buffer);
    if (*bound) return emit(cli::cmd_bound(model), out);
    if (*table) {
      finish_sim(sim, sim_flags);
      return emit(cli::cmd_table({model, parse_n_list(n_list), simulate, sim}), out);
    }
    if (*simulate_cmd) {
      finish_sim(sim, sim_flags);
      return emit(cli::cmd_simulate(model, sim), out);
    }
    if (*equilibrium) return emit(cli::cmd_equilibrium(model, tol), out);
    if (*exact_cmd) return emit(cli::cmd_exact(model), out);
    if (*verify_cmd) return emit(cli::cmd_verify(vopt), out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitValidation;
  }
  return cli::kExitValidation;
}
