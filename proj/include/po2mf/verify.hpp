#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "po2mf/bounds.hpp"
#include "po2mf/meanfield.hpp"
#include "po2mf/params.hpp"
#include "po2mf/rng.hpp"
#include "po2mf/tridiag.hpp"

namespace po2mf::verify {

struct CheckResult {
  std::string name;
  bool passed = true;
  bool asserted = true;  // false: measured and reported, not part of the verdict
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct InstanceReport {
  SystemParams params;
  std::vector<CheckResult> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed || !c.asserted; });
  }
};

struct VerifyOptions {
  std::vector<double> gammas{0.1, 0.01};
  std::vector<double> alphas{0.05};
  std::vector<std::int64_t> ns{10, 100, 1000};
  double xi = 0.01;
  std::uint64_t seed = 1;
  int stein_vectors = 100;
  int trajectories = 20;
  double dt = 0.01;
  double t_end = 100.0;
  int taylor_samples = 20;
  // Below this N the inverse-entry bound is reported, not asserted.
  std::int64_t entry_bound_min_n = 100;
};

struct BatteryReport {
  std::vector<InstanceReport> instances;
  std::vector<CheckResult> global;

  bool passed() const {
    return std::all_of(instances.begin(), instances.end(), [](const InstanceReport& r) { return r.passed(); }) &&
           std::all_of(global.begin(), global.end(), [](const CheckResult& c) { return c.passed || !c.asserted; });
  }
};

// Uniform random point of S: b sorted uniforms.
inline StateVector random_state(RandomStream& rng, std::size_t b) {
  StateVector s(b);
  for (auto& v : s) v = rng.uniform();
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

inline double relative_difference(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline InstanceReport check_instance(const SystemParams& params, const VerifyOptions& opt, std::uint64_t stream) {
  InstanceReport rep{params, {}};
  auto add = [&](CheckResult c) { rep.checks.push_back(std::move(c)); };
  RandomStream rng = RandomStream::derive(opt.seed, stream);
  const double lambda = params.lambda();
  const double nd = static_cast<double>(params.n_servers);

  const auto eq = meanfield::equilibrium(params);
  const auto& s = eq.s_star;
  const std::size_t b = s.size();

  {
    const auto cap = meanfield::tail_cap(lambda, b);
    double worst_tail = 0.0;  // max_k s*_k / lambda^(2^k - 1)
    for (std::size_t k = 0; k < b; ++k) {
      if (s[k] > 0.0) worst_tail = std::max(worst_tail, cap[k] > 0.0 ? s[k] / cap[k] : HUGE_VAL);
    }
    add({"equilibrium_residual", eq.residual <= 1e-12, true, eq.residual, 1e-12, ""});
    add({"equilibrium_monotone", in_state_space(s), true, 0.0, 0.0, ""});
    add({"equilibrium_tail_bound", worst_tail <= 1.0, true, worst_tail, 1.0, "max s*_k / lambda^(2^k-1)"});
  }

  const auto jac = tridiag::jacobian(s, params);
  {
    const auto det = tridiag::determinants(jac);
    const auto short_form = tridiag::jacobian_determinants_short_form(s, lambda);
    double min_signed = HUGE_VAL;
    double worst_rel = 0.0;
    for (std::size_t i = 1; i < det.p.size(); ++i) {
      const double sign = i % 2 == 0 ? 1.0 : -1.0;
      min_signed = std::min(min_signed, sign * det.p[i]);
      worst_rel = std::max(worst_rel, relative_difference(det.p[i], short_form.p[i]));
    }
    // |P_i| >= 1 holds exactly; allow rounding in the three-term recursion.
    add({"determinant_sign_alternation", min_signed >= 1.0 - 1e-12, true, min_signed, 1.0, "min (-1)^i P_i"});
    add({"determinant_short_form", worst_rel <= 1e-9, true, worst_rel, 1e-9, "general vs short recursion"});
  }
  {
    const auto cv = tridiag::convergents(jac);
    const double max_c = *std::max_element(cv.c.begin(), cv.c.end());
    add({"convergents_negative", max_c < 0.0, true, max_c, 0.0, "max C_k"});
  }

  const auto inv_diag = tridiag::inverse_diagonal(jac);
  const auto cols = tridiag::inverse_columns(jac);
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < b; ++i) worst = std::max(worst, relative_difference(inv_diag[i], cols[i][i]));
    add({"inverse_diagonal_oracle", worst <= 1e-10, true, worst, 1e-10, "continued fraction vs solve"});
    const double max_diag = *std::max_element(inv_diag.begin(), inv_diag.end());
    add({"inverse_diagonal_negative", max_diag < 0.0, true, max_diag, 0.0, "max (J^-1)_ii"});
    add({"inverse_first_diagonal", std::abs(inv_diag[0]) >= 1.0 / 3.0, true, std::abs(inv_diag[0]), 1.0 / 3.0,
         "|(J^-1)_11|"});
  }
  {
    double max_entry = 0.0;
    for (const auto& col : cols) {
      for (double v : col) max_entry = std::max(max_entry, std::abs(v));
    }
    const double cap = 12.0 / params.gamma * std::pow(nd, 2.0 * params.alpha + 2.0 * params.xi);
    const bool asserted = params.n_servers >= opt.entry_bound_min_n;
    add({"inverse_entry_bound", max_entry <= cap, asserted, max_entry, cap,
         asserted ? "max |(J^-1)_ij|" : "max |(J^-1)_ij| (reported only, N below assertion range)"});
  }
  {
    // ([J^T]^{-1} x) . (J x) = |x|^2
    const auto jt = jac.transposed();
    double worst = 0.0;
    for (int t = 0; t < opt.stein_vectors; ++t) {
      std::vector<double> x(b);
      for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
      const auto gx = tridiag::solve(jt, x);
      const auto jx = jac.apply(x);
      double lhs = 0.0;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        lhs += gx[i] * jx[i];
        norm2 += x[i] * x[i];
      }
      worst = std::max(worst, std::abs(lhs - norm2) / norm2);
    }
    add({"stein_identity", worst <= 1e-10, true, worst, 1e-10, "max relative deviation"});
  }

  const bool lyapunov_feasible = lambda > 0.75;
  meanfield::LyapunovWeights lw;
  if (lyapunov_feasible) lw = meanfield::lyapunov_weights(params);
  {
    const auto eig = tridiag::spectrum(jac);
    add({"spectrum_hurwitz", eig.max_eig < 0.0, true, eig.max_eig, 0.0, "max eigenvalue"});
    if (lyapunov_feasible) {
      add({"spectrum_below_delta0", eig.max_eig <= -lw.delta0, true, eig.max_eig, -lw.delta0,
           "max eigenvalue vs -delta0"});
    }
  }
  if (lyapunov_feasible) {
    const double floor = params.gamma / (12.0 * std::pow(nd, 2.0 * params.alpha + 2.0 * params.xi));
    add({"delta0_lower_bound", lw.delta0 >= floor, true, lw.delta0, floor, ""});
    const double w_max = *std::max_element(lw.w.begin(), lw.w.end());
    const double w_min = *std::min_element(lw.w.begin(), lw.w.end());
    // The w_k <= 3 bound needs b below N^(alpha + xi).
    const bool premise = static_cast<double>(b) <= std::pow(nd, params.alpha + params.xi);
    add({"lyapunov_weights_bounded", w_min >= 1.0 && w_max <= 3.0, premise, w_max, 3.0,
         premise ? "max w_k" : "max w_k (reported only, b exceeds N^(alpha+xi))"});

    double worst = 0.0;
    bool dominated = true;
    for (int t = 0; t < opt.trajectories; ++t) {
      const auto s0 = random_state(rng, b);
      const auto traj = meanfield::integrate(s0, opt.t_end, opt.dt, params);
      const auto r = meanfield::check_lyapunov_decay(traj, lw, s);
      worst = std::max(worst, r.max_violation);
      dominated = dominated && r.norm_dominated;
    }
    add({"lyapunov_decay", worst <= 1e-6, true, worst, 1e-6, "max multiplicative violation"});
    add({"lyapunov_dominates_norm", dominated, true, 0.0, 0.0, "||x|| <= V(x)"});
  } else {
    add({"lyapunov_feasibility", false, false, lambda, 0.75, "lambda <= 0.75, Lyapunov checks skipped"});
  }
  {
    double worst = 0.0;
    for (int t = 0; t < opt.taylor_samples; ++t) {
      worst = std::max(worst, meanfield::taylor_check(random_state(rng, b), s, params));
    }
    add({"taylor_exactness", worst <= 1e-12, true, worst, 1e-12, "max residual"});
  }
  return rep;
}

// Global check on the near-equilibrium parameter choice, in the xi -> 0+ limit.
inline CheckResult check_ssc(double alpha) {
  CheckResult c{"ssc_feasibility", false, true, 0.0, 0.0, ""};
  try {
    const auto f = bounds::ssc_feasibility(alpha, 0.0);
    c.passed = f.feasible;
    c.measured = f.r_min;
    c.threshold = f.r_bound;
    c.detail = "r_min=" + std::to_string(f.r_min) + " eps in (" + std::to_string(f.eps_low) + ", " +
               std::to_string(f.eps_high) + ") xi_max=" + std::to_string(f.xi_max);
  } catch (const std::domain_error& e) {
    c.detail = e.what();
  }
  return c;
}

inline BatteryReport run_battery(const VerifyOptions& opt) {
  BatteryReport out;
  std::uint64_t stream = 0;
  for (double gamma : opt.gammas) {
    for (double alpha : opt.alphas) {
      for (auto n : opt.ns) {
        SystemParams p{n, gamma, alpha, std::nullopt, opt.xi};
        p.validate();
        out.instances.push_back(check_instance(p, opt, stream++));
      }
    }
  }
  for (double alpha : opt.alphas) out.global.push_back(check_ssc(alpha));
  return out;
}

}  // namespace po2mf::verify
