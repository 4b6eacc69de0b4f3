// Acceptance gate. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any selected criterion fails. `--criterion K` runs only K.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "po2mf/bounds.hpp"
#include "po2mf/exactchain.hpp"
#include "po2mf/meanfield.hpp"
#include "po2mf/simulator.hpp"
#include "po2mf/verify.hpp"

using namespace po2mf;

namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << " !" << what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool within_rel(double got, double want, double tol) { return std::abs(got - want) <= tol * std::abs(want); }

constexpr std::array<std::int64_t, 4> kSizes{10, 100, 1000, 10000};

void bound_columns(Outcome& o, double gamma, const std::array<double, 4>& asym, const std::array<double, 4>& upper) {
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < kSizes.size(); ++i) {
    const auto rep = bounds::dominant_term({kSizes[i], gamma, 0.05, std::nullopt, 0.01});
    o.detail << " N=" << kSizes[i] << ":" << rep.scaled_asymptotic << "/" << rep.scaled_upper;
    o.require(within_rel(rep.scaled_asymptotic, asym[i], 0.01), "asymptotic N=" + std::to_string(kSizes[i]));
    o.require(within_rel(rep.scaled_upper, upper[i], 0.01), "upper N=" + std::to_string(kSizes[i]));
  }
  const double dt = seconds_since(t0);
  o.detail << " time=" << dt << "s";
  o.require(dt < 1.0, "runtime");
}

Outcome c1() {
  Outcome o;
  bound_columns(o, 0.1, {3.2773, 3.6411, 4.0455, 4.4955}, {13.1092, 14.5644, 16.1820, 17.9820});
  return o;
}

Outcome c2() {
  Outcome o;
  bound_columns(o, 0.01, {28.2972, 31.6293, 35.3629, 39.5457},
                {4 * 28.2972, 4 * 31.6293, 4 * 35.3629, 4 * 39.5457});
  return o;
}

Outcome c3() {
  Outcome o;
  const std::array<double, 4> tenth{0.9109, 0.9206, 0.9292, 0.9369};
  const std::array<double, 4> hundredth{0.9911, 0.9921, 0.9929, 0.9937};
  for (std::size_t i = 0; i < kSizes.size(); ++i) {
    for (auto [gamma, want] : {std::pair{0.1, tenth[i]}, std::pair{0.01, hundredth[i]}}) {
      const double lam = SystemParams{kSizes[i], gamma, 0.05, std::nullopt, 0.01}.lambda();
      const double rounded = std::round(lam * 1e4) / 1e4;
      o.detail << " " << rounded;
      o.require(std::abs(rounded - want) < 1e-12, "lambda gamma=" + std::to_string(gamma) + " N=" + std::to_string(kSizes[i]));
    }
  }
  return o;
}

Outcome c4() {
  Outcome o;
  for (std::int64_t n : {10, 15}) {
    const SystemParams p{n, 0.1, 0.05, 2, 0.01};
    const auto g = exact::build_generator(p);
    const auto eq = meanfield::equilibrium(p);
    const double exact = static_cast<double>(n) * exact::exact_mse(g, exact::stationary(g), eq.s_star);
    sim::SimConfig c;
    c.steps = 10'000'000;
    c.replicas = 10;
    c.seed = 1;
    const auto s = sim::run(p, c);
    const double se = static_cast<double>(n) * s.std_error;
    const double z = std::abs(s.scaled_mse - exact) / se;
    o.detail << " N=" << n << ": sim=" << s.scaled_mse << " exact=" << exact << " se=" << se << " z=" << z;
    o.require(z <= 3.0, "N=" + std::to_string(n));
  }
  return o;
}

Outcome c5() {
  Outcome o;
  const SystemParams p{100, 0.1, 0.05, std::nullopt, 0.01};
  sim::SimConfig c;
  c.steps = 100'000'000;
  c.replicas = 10;
  c.seed = 1;
  const auto t0 = Clock::now();
  const auto s = sim::run(p, c);
  o.detail << " scaled_mse=" << s.scaled_mse << " se=" << 100.0 * s.std_error << " target=3.6884"
           << " time=" << seconds_since(t0) << "s";
  o.require(within_rel(s.scaled_mse, 3.6884, 0.10), "outside 10%");
  return o;
}

Outcome c6() {
  Outcome o;
  const auto battery = verify::run_battery(verify::VerifyOptions{});
  std::size_t asserted = 0;
  for (const auto& inst : battery.instances) {
    for (const auto& c : inst.checks) {
      if (!c.asserted) continue;
      ++asserted;
      if (!c.passed) {
        o.passed = false;
        o.detail << " !" << c.name << "(gamma=" << inst.params.gamma << ",N=" << inst.params.n_servers
                 << ",measured=" << c.measured << ")";
      }
    }
  }
  for (const auto& c : battery.global) {
    ++asserted;
    o.require(c.passed, c.name);
  }
  o.detail << " instances=" << battery.instances.size() << " asserted_checks=" << asserted;
  return o;
}

Outcome c7() {
  Outcome o;
  int points = 0;
  double worst_residual = 0.0;
  for (double gamma : {0.9, 0.5, 0.1, 0.01, 0.001}) {
    for (double alpha : {0.0, 0.05, 0.1, 0.2, 0.5}) {
      for (std::int64_t n : {10, 10000}) {
        const SystemParams p{n, gamma, alpha, std::nullopt, 0.01};
        if (!(p.lambda() > 0.0)) continue;
        ++points;
        const auto eq = meanfield::equilibrium(p);
        const double lam = p.lambda();
        worst_residual = std::max(worst_residual, eq.residual);
        const std::string tag = " gamma=" + std::to_string(gamma) + " alpha=" + std::to_string(alpha) + " N=" + std::to_string(n);
        o.require(eq.residual <= 1e-12, "residual" + tag);
        o.require(in_state_space(eq.s_star), "monotone" + tag);
        const auto cap = meanfield::tail_cap(lam, eq.s_star.size());
        for (std::size_t k = 0; k < eq.s_star.size(); ++k) {
          if (k > 0 && eq.s_star[k] > 0.0) o.require(eq.s_star[k] < eq.s_star[k - 1], "strict" + tag);
          o.require(eq.s_star[k] <= cap[k], "tail" + tag);
        }
      }
    }
  }
  double worst_closed = 0.0;
  for (double lam : {0.1, 0.5, 0.9, 0.99, 0.9999}) {
    const auto eq = meanfield::equilibrium({10, 1.0 - lam, 0.0, 1, 0.01});
    const double root = (-1.0 + std::sqrt(1.0 + 4.0 * lam * lam)) / (2.0 * lam);
    worst_closed = std::max(worst_closed, std::abs(eq.s_star[0] - root));
  }
  o.require(points == 50, "sweep size " + std::to_string(points));
  o.require(worst_closed <= 1e-12, "closed form");
  o.detail << " points=" << points << " max_residual=" << worst_residual << " b=1_error=" << worst_closed;
  return o;
}

Outcome c8() {
  Outcome o;
  const auto f = bounds::ssc_feasibility(0.05, 0.0);
  o.detail << " r_min=" << f.r_min << " interval=(" << f.eps_low << ", " << f.eps_high << ")";
  o.require(f.r_min == 32, "r_min");
  o.require(f.eps_low < 24.54 && 24.54 < f.eps_high, "24.54 outside interval");
  return o;
}

nlohmann::json run_tool(const std::string& args, int& status) {
  const std::string cmd = std::string(PO2MF_CLI_PATH) + " " + args + " --format json 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  if (pipe != nullptr) {
    std::array<char, 4096> buf{};
    while (const auto got = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), got);
    const int raw = pclose(pipe);
    status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  } else {
    status = -1;
  }
  return nlohmann::json::parse(out, nullptr, false);
}

Outcome c9() {
  Outcome o;
  const std::vector<std::string> commands{
      "bound --gamma 0.1 --alpha 0.05 --n 100",
      "table --gamma 0.01 --alpha 0.05 --n-list 10,100 --simulate --steps 2e5 --replicas 4 --seed 3",
      "simulate --gamma 0.1 --alpha 0.05 --n 50 --steps 2e5 --replicas 4 --seed 11 --tail-r 2 --tail-eps 1",
      "simulate --gamma 0.1 --alpha 0.05 --n 50 --steps 2e5 --replicas 4 --seed 11 --scheme gillespie",
      "equilibrium --gamma 0.1 --alpha 0.05 --n 1000",
      "exact --gamma 0.1 --alpha 0.05 --n 10 --buffer 2",
      "verify --trajectories 2",
  };
  for (const auto& args : commands) {
    int s1 = 0;
    int s2 = 0;
    const auto a = run_tool(args, s1);
    const auto b = run_tool(args, s2);
    const std::string name = args.substr(0, args.find(' '));
    const bool ok = !a.is_discarded() && !b.is_discarded() && a.contains("results") && s1 == s2 &&
                    a.at("results") == b.at("results") && a.at("params") == b.at("params") && a.at("seed") == b.at("seed");
    o.detail << " " << name << (ok ? ":same" : ":DIFF");
    o.require(ok, name);
  }
  return o;
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"bound columns, gamma=0.1", c1},
      {"bound columns, gamma=0.01", c2},
      {"arrival rates to 4 decimals", c3},
      {"simulator vs exact chain (N=10,15; b=2)", c4},
      {"simulation spot-check N=100 (slow)", c5},
      {"structural check battery (default grid)", c6},
      {"equilibrium quality sweep", c7},
      {"concentration parameter feasibility", c8},
      {"CLI determinism", c9},
  };
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "unknown criterion " << only << "\n";
    return 2;
  }

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail << " exception: " << e.what();
    }
    failed += o.passed ? 0 : 1;
    std::cout << (o.passed ? "[PASS]" : "[FAIL]") << " C" << i + 1 << " " << criteria[i].title << " |"
              << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
