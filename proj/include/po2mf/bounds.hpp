#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "po2mf/meanfield.hpp"
#include "po2mf/params.hpp"
#include "po2mf/tridiag.hpp"

namespace po2mf::bounds {

inline constexpr double kAlphaValidUpper = 1.0 / 18.0;

struct BoundReport {
  double dominant_term = 0.0;       // absolute MSE scale, O(1/N)
  double scaled_asymptotic = 0.0;   // N * dominant_term
  double scaled_upper = 0.0;        // 4 * scaled_asymptotic
  double lambda = 0.0;
  int buffer_used = 0;
  bool alpha_valid = false;         // alpha in (0, 1/18)
  std::vector<std::string> warnings;
};

inline bool alpha_in_valid_range(double alpha) { return alpha > 0.0 && alpha < kAlphaValidUpper; }

// Leading term of E||S - s*||^2:  -(1/N) sum_i [J^T(s*)]^{-1}_ii f~_i(s*).
// Transposition does not change the diagonal of the inverse.
inline BoundReport dominant_term(const SystemParams& params) {
  params.validate();
  const auto eq = meanfield::equilibrium(params);
  const auto jac = tridiag::jacobian(eq.s_star, params);
  const auto inv_diag = tridiag::inverse_diagonal(jac.transposed());
  const auto ft = meanfield::f_tilde(eq.s_star, params);

  double sum = 0.0;
  for (std::size_t i = 0; i < ft.size(); ++i) sum += inv_diag[i] * ft[i];

  BoundReport rep;
  rep.scaled_asymptotic = -sum;
  rep.dominant_term = rep.scaled_asymptotic / static_cast<double>(params.n_servers);
  rep.scaled_upper = 4.0 * rep.scaled_asymptotic;
  rep.lambda = params.lambda();
  rep.buffer_used = params.resolved_buffer();
  rep.alpha_valid = alpha_in_valid_range(params.alpha);
  if (!rep.alpha_valid) {
    rep.warnings.emplace_back("alpha outside (0,1/18): bound formula not guaranteed");
  }
  rep.warnings.emplace_back("upper bound holds for sufficiently large N only");
  if (!(rep.dominant_term > 0.0)) {
    throw std::runtime_error("dominant term is not positive; inverse diagonal is inconsistent");
  }
  return rep;
}

// Absolute upper bound -(4/N) sum_i [J^{-1}(s*)]_ii f~_i(s*).
inline double upper_bound(const SystemParams& params) { return 4.0 * dominant_term(params).dominant_term; }

// Exponent e with E||S - s*||^2 <= N^{-e} for large N. The two regimes meet
// at alpha = 1/12, which belongs to the second.
inline double order_wise_exponent(double alpha, double xi) {
  if (!(alpha > 0.0 && alpha < 0.25)) throw std::domain_error("order_wise_exponent: alpha must lie in (0, 1/4)");
  if (!(xi > 0.0)) throw std::domain_error("order_wise_exponent: xi must be positive");
  return alpha < 1.0 / 12.0 ? 1.0 - 2.0 * alpha - 4.0 * xi : 1.0 - 4.0 * alpha - 7.0 * xi;
}

// Moment order r and concentration exponent epsilon for the near-equilibrium
// region: r > 3(1+a+xi)/(1-18a-27xi) and
// 2r(1+3a+3xi)/3 < epsilon < r(1-4a-7xi) - 1 - a - xi.
struct SscFeasibility {
  int r_min = 0;
  double r_bound = 0.0;
  double eps_low = 0.0;
  double eps_high = 0.0;
  bool feasible = false;
  double xi_max = 0.0;  // largest xi keeping the r denominator positive
};

inline constexpr int kSscSearchLimit = 1'000'000;

// xi = 0 evaluates the xi -> 0+ limit.
inline SscFeasibility ssc_feasibility(double alpha, double xi) {
  if (!(alpha > 0.0 && alpha < kAlphaValidUpper)) {
    throw std::domain_error("ssc_feasibility: alpha must lie in (0, 1/18)");
  }
  if (!(xi >= 0.0)) throw std::domain_error("ssc_feasibility: xi must be >= 0");
  const double denom = 1.0 - 18.0 * alpha - 27.0 * xi;
  if (!(denom > 0.0)) throw std::domain_error("ssc_feasibility: 1 - 18 alpha - 27 xi must be positive");

  SscFeasibility out;
  out.xi_max = (1.0 - 18.0 * alpha) / 27.0;
  out.r_bound = 3.0 * (1.0 + alpha + xi) / denom;
  auto interval = [&](int r) {
    out.eps_low = 2.0 * r * (1.0 + 3.0 * alpha + 3.0 * xi) / 3.0;
    out.eps_high = r * (1.0 - 4.0 * alpha - 7.0 * xi) - 1.0 - alpha - xi;
    return out.eps_low < out.eps_high;
  };
  int r = static_cast<int>(std::floor(out.r_bound)) + 1;
  for (int tries = 0; tries < kSscSearchLimit; ++tries, ++r) {
    if (interval(r)) {
      out.r_min = r;
      out.feasible = true;
      return out;
    }
  }
  return out;
}

}  // namespace po2mf::bounds
