#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "po2mf/params.hpp"

namespace po2mf {

// s_k = fraction of servers with at least k jobs, k = 1..b. The boundary
// values s_0 = 1 and s_{b+1} = 0 are implicit.
using StateVector = std::vector<double>;

// True when 1 >= s_1 >= ... >= s_b >= 0, up to `slack`.
inline bool in_state_space(std::span<const double> s, double slack = 0.0) {
  double prev = 1.0;
  for (double v : s) {
    if (!std::isfinite(v) || v < -slack || v > prev + slack) return false;
    prev = v;
  }
  return true;
}

namespace meanfield {

inline void check_dimension(std::span<const double> s, const SystemParams& params) {
  if (s.size() != static_cast<std::size_t>(params.resolved_buffer())) {
    throw std::invalid_argument("state dimension " + std::to_string(s.size()) +
                                " does not match buffer " +
                                std::to_string(params.resolved_buffer()));
  }
}

namespace detail {

// Drift with lambda given directly; no dimension check.
inline StateVector drift(std::span<const double> s, double lambda) {
  const std::size_t b = s.size();
  StateVector f(b);
  for (std::size_t k = 0; k < b; ++k) {
    const double prev = k == 0 ? 1.0 : s[k - 1];
    const double next = k + 1 < b ? s[k + 1] : 0.0;
    f[k] = lambda * (prev * prev - s[k] * s[k]) - (s[k] - next);
  }
  return f;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

// Mean-field vector field f(s).
inline StateVector drift(std::span<const double> s, const SystemParams& params) {
  check_dimension(s, params);
  return detail::drift(s, params.lambda());
}

struct Equilibrium {
  StateVector s_star;
  double residual = 0.0;  // max_k |f_k(s*)|
};

inline constexpr int kEquilibriumMaxIterations = 200;

// Fixed point of the mean-field ODE. Summing the equilibrium equations from
// k to b gives s_k = lambda (s_{k-1}^2 - s_b^2), so the whole vector is a
// function of v = s_b and we bisect on s_b(v) - v over [0, lambda].
inline Equilibrium equilibrium(const SystemParams& params, double tol = 1e-12) {
  if (!(tol > 0.0)) throw std::invalid_argument("equilibrium tolerance must be positive");
  params.validate();
  const double lambda = params.lambda();
  const int b = params.resolved_buffer();

  StateVector s(static_cast<std::size_t>(b));
  auto forward = [&](double v) {
    double prev = 1.0;
    for (auto& x : s) {
      x = lambda * (prev * prev - v * v);
      prev = x;
    }
    return s.back() - v;
  };

  double lo = 0.0;
  double hi = lambda;
  const double r_lo = forward(lo);
  const double r_hi = forward(hi);
  if (r_lo < 0.0 || r_hi > 0.0) {
    throw std::runtime_error("equilibrium: residual does not change sign on [0, lambda]");
  }
  double v = r_lo == 0.0 ? lo : hi;
  if (r_lo != 0.0 && r_hi != 0.0) {
    bool converged = false;
    for (int it = 0; it < kEquilibriumMaxIterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) {
        converged = true;
        break;
      }
      const double r = forward(mid);
      if (r == 0.0) {
        lo = hi = mid;
        converged = true;
        break;
      }
      (r > 0.0 ? lo : hi) = mid;
    }
    if (!converged) throw std::runtime_error("equilibrium: bisection did not converge");
    // Pick the bracket end with the smaller residual.
    const double r_a = std::abs(forward(lo));
    const double r_b = std::abs(forward(hi));
    v = r_a <= r_b ? lo : hi;
  }
  forward(v);

  for (auto& x : s) x = std::clamp(x, 0.0, 1.0);
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k] > s[k - 1]) throw std::runtime_error("equilibrium: solution is not monotone");
  }

  Equilibrium eq{s, detail::max_abs(detail::drift(s, lambda))};
  if (!(eq.residual <= tol)) {
    throw std::runtime_error("equilibrium: residual " + std::to_string(eq.residual) +
                             " exceeds tolerance");
  }
  return eq;
}

// c_k = lambda^(2^k - 1), k = 1..b, evaluated as c_k = lambda c_{k-1}^2 so it
// rounds the same way as the equilibrium recursion. Rounding is monotone, so
// s*_k <= c_k then holds exactly in floating point.
inline StateVector tail_cap(double lambda, std::size_t b) {
  StateVector c(b);
  double prev = 1.0;
  for (auto& x : c) {
    x = lambda * (prev * prev);
    prev = x;
  }
  return c;
}

// f~_i(s) =(lambda (s_{i-1}^2 - s_i^2) + (s_i - s_{i+1})) / 2, the per-level
// average of arrival and departure rates (scaled by 1/N).
inline StateVector f_tilde(std::span<const double> s, const SystemParams& params) {
  check_dimension(s, params);
  const double lambda = params.lambda();
  const std::size_t b = s.size();
  StateVector out(b);
  for (std::size_t k = 0; k < b; ++k) {
    const double prev = k == 0 ? 1.0 : s[k - 1];
    const double next = k + 1 < b ? s[k + 1] : 0.0;
    out[k] = 0.5 * (lambda * (prev * prev - s[k] * s[k]) + (s[k] - next));
  }
  return out;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
};

// Fixed-step RK4 for s' = f(s). Each sample is clamped to [0, 1]; the last
// step is shortened to land on t_end.
inline Trajectory integrate(std::span<const double> s0, double t_end, double dt,
                            const SystemParams& params) {
  check_dimension(s0, params);
  if (!(dt > 0.0) || !(t_end > 0.0)) throw std::invalid_argument("integrate: dt and t_end must be positive");
  if (!in_state_space(s0, 1e-9)) throw std::invalid_argument("integrate: initial state outside S");
  const double lambda = params.lambda();
  const std::size_t b = s0.size();

  Trajectory traj;
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);

  StateVector s(s0.begin(), s0.end());
  StateVector tmp(b);
  double t = 0.0;
  traj.times.push_back(t);
  traj.states.push_back(s);
  for (std::size_t n = 0; n < steps; ++n) {
    const double h = std::min(dt, t_end - t);
    const StateVector k1 = detail::drift(s, lambda);
    for (std::size_t i = 0; i < b; ++i) tmp[i] = s[i] + 0.5 * h * k1[i];
    const StateVector k2 = detail::drift(tmp, lambda);
    for (std::size_t i = 0; i < b; ++i) tmp[i] = s[i] + 0.5 * h * k2[i];
    const StateVector k3 = detail::drift(tmp, lambda);
    for (std::size_t i = 0; i < b; ++i) tmp[i] = s[i] + h * k3[i];
    const StateVector k4 = detail::drift(tmp, lambda);
    for (std::size_t i = 0; i < b; ++i) {
      s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(s[i])) throw std::runtime_error("integrate: non-finite state, dt too large");
      s[i] = std::clamp(s[i], 0.0, 1.0);
    }
    t = n + 1 == steps ? t_end : t + h;
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

// Weights of the weighted-l1 Lyapunov function V(x) = sum_k w_k |x_k| and its
// guaranteed decay rate delta0.
struct LyapunovWeights {
  double epsilon = 0.0;  // weight-growth parameter, midpoint of (eps_low, eps_high)
  double eps_low = 0.0;
  double eps_high = 0.0;
  double k_tilde = 0.0;  // (alpha + xi) log2 N
  int regime_switch = 1;  // ceil(k_tilde), at least 1
  std::vector<double> w;
  double delta0 = 0.0;
};

inline LyapunovWeights lyapunov_weights(const SystemParams& params) {
  params.validate();
  const double lambda = params.lambda();
  if (!(lambda > 0.75)) {
    throw std::domain_error("lyapunov_weights: requires lambda > 0.75, got " + std::to_string(lambda));
  }
  const double a = params.alpha;
  const double xi = params.xi;
  LyapunovWeights lw;
  lw.eps_low = 2.0 - 2.0 * lambda;
  lw.eps_high = std::min(0.5, std::pow(2.0, (a + 2.0 * xi) / (a + xi)) - 2.0 * lambda);
  if (!(lw.eps_low < lw.eps_high)) {
    throw std::domain_error("lyapunov_weights: empty epsilon interval");
  }
  lw.epsilon = 0.5 * (lw.eps_low + lw.eps_high);
  lw.k_tilde = (a + xi) * std::log2(static_cast<double>(params.n_servers));
  lw.regime_switch = std::max(1, static_cast<int>(std::ceil(lw.k_tilde)));

  const double q = 2.0 * lambda + lw.epsilon;
  const double linear_step = 0.5 / std::pow(q, lw.k_tilde);
  const int b = params.resolved_buffer();
  lw.w.resize(static_cast<std::size_t>(b));
  // Geometric increments w_{k+1} - w_k = 1 / (2 q^k) up to the switch, then
  // constant increments 1 / (2 q^k_tilde).
  double w = 1.0;
  for (int k = 1; k <= b; ++k) {
    lw.w[static_cast<std::size_t>(k - 1)] = w;
    w += k < lw.regime_switch ? 0.5 / std::pow(q, k) : linear_step;
  }
  lw.delta0 = (1.0 - std::sqrt(lambda)) / (6.0 * std::pow(q, lw.k_tilde));
  return lw;
}

inline double lyapunov_value(std::span<const double> w, std::span<const double> x) {
  double v = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) v += w[k] * std::abs(x[k]);
  return v;
}

struct LyapunovDecayReport {
  // max over sampled i < j of V_j / (V_i e^{-delta0 (t_j - t_i)}) - 1, or 0
  double max_violation = 0.0;
  std::size_t samples_violating = 0;  // samples j whose worst ratio exceeds tolerance
  double max_violation_time = 0.0;
  bool norm_dominated = true;  // ||x(t)||_2 <= V(x(t)) at every sample
};

// Samples with V below this are treated as having reached s*.
inline constexpr double kLyapunovNoiseFloor = 1e-12;

inline LyapunovDecayReport check_lyapunov_decay(const Trajectory& traj, const LyapunovWeights& weights,
                                                std::span<const double> s_star,
                                                double tolerance = 1e-6) {
  LyapunovDecayReport report;
  // With U_i = V_i e^{delta0 t_i}, the worst pair ending at j is U_j / min_{i<j} U_i.
  // Times are shifted so the exponent stays small.
  const double t0 = traj.times.empty() ? 0.0 : traj.times.front();
  double min_u = std::numeric_limits<double>::infinity();
  StateVector x(s_star.size());
  for (std::size_t j = 0; j < traj.states.size(); ++j) {
    const auto& s = traj.states[j];
    double norm2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = s[k] - s_star[k];
      norm2 += x[k] * x[k];
    }
    const double v = lyapunov_value(weights.w, x);
    if (std::sqrt(norm2) > v * (1.0 + 1e-12) + 1e-300) report.norm_dominated = false;
    const double u = v * std::exp(weights.delta0 * (traj.times[j] - t0));
    if (j > 0 && v >= kLyapunovNoiseFloor && min_u < std::numeric_limits<double>::infinity()) {
      const double ratio = min_u > 0.0 ? u / min_u - 1.0 : std::numeric_limits<double>::infinity();
      if (ratio > report.max_violation) {
        report.max_violation = ratio;
        report.max_violation_time = traj.times[j];
      }
      if (ratio > tolerance) ++report.samples_violating;
    }
    min_u = std::min(min_u, u);
  }
  return report;
}

// One nonzero of the drift Hessian: d^2 f_row / (d s_col)^2.
struct HessianEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

// Hessian of f_i (0-based i): -2 lambda at (i, i), +2 lambda at (i-1, i-1).
inline std::vector<HessianEntry> drift_hessian(std::size_t i, double lambda) {
  std::vector<HessianEntry> out;
  if (i > 0) out.push_back({i - 1, i - 1, 2.0 * lambda});
  out.push_back({i, i, -2.0 * lambda});
  return out;
}

// || f(s) - [J(s*)(s - s*) + 1/2 <s - s*, H(s - s*)>] ||_2. f is quadratic, so
// the expansion about the true equilibrium is exact.
inline double taylor_check(std::span<const double> s, std::span<const double> s_star,
                           const SystemParams& params) {
  check_dimension(s, params);
  check_dimension(s_star, params);
  const double lambda = params.lambda();
  const std::size_t b = s.size();
  const StateVector f = detail::drift(s, lambda);
  double sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double x_i = s[i] - s_star[i];
    const double x_prev = i > 0 ? s[i - 1] - s_star[i - 1] : 0.0;
    const double x_next = i + 1 < b ? s[i + 1] - s_star[i + 1] : 0.0;
    const double s_prev = i > 0 ? s_star[i - 1] : 1.0;
    // Jacobian row i: 2 lambda s*_{i-1} x_{i-1} - (2 lambda s*_i + 1) x_i + x_{i+1}
    const double linear = (i > 0 ? 2.0 * lambda * s_prev * x_prev : 0.0) -
                           (2.0 * lambda * s_star[i] + 1.0) * x_i + x_next;
    double quadratic = 0.0;
    for (const auto& h : drift_hessian(i, lambda)) {
      const double xh = s[h.col] - s_star[h.col];
      quadratic += 0.5 * h.value * xh * xh;
    }
    const double r = f[i] - (linear + quadratic);
    sum += r * r;
  }
  return std::sqrt(sum);
}

}  // namespace meanfield
}  // namespace po2mf
