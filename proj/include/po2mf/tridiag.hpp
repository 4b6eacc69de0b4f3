#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "po2mf/meanfield.hpp"
#include "po2mf/params.hpp"

namespace po2mf::tridiag {

// Square tridiagonal matrix. Row i holds sub[i-1], diag[i], super[i].
struct Tridiagonal {
  std::vector<double> sub;    // z_1..z_{n-1}, below the diagonal
  std::vector<double> diag;   // x_1..x_n
  std::vector<double> super;  // y_1..y_{n-1}, above the diagonal

  std::size_t size() const { return diag.size(); }

  bool well_formed() const {
    return !diag.empty() && sub.size() + 1 == diag.size() && super.size() + 1 == diag.size();
  }

  Tridiagonal transposed() const { return {super, diag, sub}; }

  std::vector<double> apply(std::span<const double> v) const {
    const std::size_t n = size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = diag[i] * v[i];
      if (i > 0) acc += sub[i - 1] * v[i - 1];
      if (i + 1 < n) acc += super[i] * v[i + 1];
      out[i] = acc;
    }
    return out;
  }
};

inline void require_well_formed(const Tridiagonal& t) {
  if (!t.well_formed()) throw std::invalid_argument("tridiagonal: inconsistent diagonal lengths");
}

// J(s): diag -2 lambda s_i - 1, super 1, sub 2 lambda s_i (row i+1 uses s_i).
inline Tridiagonal jacobian(std::span<const double> s, const SystemParams& params) {
  meanfield::check_dimension(s, params);
  const double lambda = params.lambda();
  const std::size_t n = s.size();
  Tridiagonal t;
  t.diag.resize(n);
  t.sub.resize(n - 1);
  t.super.assign(n - 1, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    t.diag[i] = -2.0 * lambda * s[i] - 1.0;
    if (i + 1 < n) t.sub[i] = 2.0 * lambda * s[i];
  }
  return t;
}

// Leading principal minors P_0 = 1, P_1, ..., P_n.
struct DeterminantSequence {
  std::vector<double> p;
};

inline DeterminantSequence determinants(const Tridiagonal& t) {
  require_well_formed(t);
  const std::size_t n = t.size();
  DeterminantSequence d;
  d.p.resize(n + 1);
  d.p[0] = 1.0;
  double prev2 = 0.0;  // P_{-1}
  for (std::size_t i = 1; i <= n; ++i) {
    const double coupling = i >= 2 ? t.super[i - 2] * t.sub[i - 2] : 0.0;
    d.p[i] = t.diag[i - 1] * d.p[i - 1] - coupling * prev2;
    prev2 = d.p[i - 1];
  }
  return d;
}

// Jacobian-only identity P_i = (-1)^i - 2 lambda s_i P_{i-1}.
inline DeterminantSequence jacobian_determinants_short_form(std::span<const double> s, double lambda) {
  DeterminantSequence d;
  d.p.resize(s.size() + 1);
  d.p[0] = 1.0;
  double sign = 1.0;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    sign = -sign;
    d.p[i] = sign - 2.0 * lambda * s[i - 1] * d.p[i - 1];
  }
  return d;
}

// Backward continued-fraction convergents C_k = P_k / P_{k-1}, computed by
// C_1 = x_1, C_k = x_k - y_{k-1} z_{k-1} / C_{k-1}.
struct Convergents {
  std::vector<double> c;
};

inline Convergents convergents(const Tridiagonal& t) {
  require_well_formed(t);
  Convergents out;
  out.c.resize(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (k == 0) {
      out.c[0] = t.diag[0];
    } else {
      if (out.c[k - 1] == 0.0) {
        throw std::domain_error("convergents: zero leading minor at index " + std::to_string(k));
      }
      out.c[k] = t.diag[k] - t.super[k - 1] * t.sub[k - 1] / out.c[k - 1];
    }
  }
  if (t.size() > 0 && out.c.back() == 0.0) throw std::domain_error("convergents: singular matrix");
  return out;
}

inline constexpr double kProductUnderflow = 1e-30;

// Diagonal of T^{-1} from the convergents:
//   (T^{-1})_ii = 1/C_i + sum_{k>i} (1/C_k) prod_{t=i}^{k-1} y_t z_t / C_t^2.
// The running product stops once it falls below kProductUnderflow.
inline std::vector<double> inverse_diagonal(const Tridiagonal& t) {
  const Convergents cv = convergents(t);
  const std::size_t n = t.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double value = 1.0 / cv.c[i];
    double product = 1.0;
    for (std::size_t k = i + 1; k < n; ++k) {
      product *= t.super[k - 1] * t.sub[k - 1] / (cv.c[k - 1] * cv.c[k - 1]);
      if (std::abs(product) < kProductUnderflow) break;
      value += product / cv.c[k];
    }
    w[i] = value;
  }
  return w;
}

// Thomas elimination without pivoting.
inline std::vector<double> solve(const Tridiagonal& t, std::span<const double> rhs) {
  require_well_formed(t);
  const std::size_t n = t.size();
  if (rhs.size() != n) throw std::invalid_argument("solve: rhs dimension mismatch");
  std::vector<double> c_prime(n), d_prime(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double coupling = i > 0 ? t.sub[i - 1] * c_prime[i - 1] : 0.0;
    const double pivot = t.diag[i] - coupling;
    const double scale = std::abs(t.diag[i]) + std::abs(coupling);
    if (!(std::abs(pivot) > std::numeric_limits<double>::epsilon() * scale) || !std::isfinite(pivot)) {
      throw std::domain_error("solve: pivot breakdown at row " + std::to_string(i));
    }
    c_prime[i] = i + 1 < n ? t.super[i] / pivot : 0.0;
    d_prime[i] = (rhs[i] - (i > 0 ? t.sub[i - 1] * d_prime[i - 1] : 0.0)) / pivot;
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    x[i] = d_prime[i] - (i + 1 < n ? c_prime[i] * x[i + 1] : 0.0);
  }
  return x;
}

// (T^{-1})_{ij}, 0-based.
inline double inverse_entry(const Tridiagonal& t, std::size_t i, std::size_t j) {
  if (i >= t.size() || j >= t.size()) throw std::out_of_range("inverse_entry: index out of range");
  std::vector<double> e(t.size(), 0.0);
  e[j] = 1.0;
  return solve(t, e)[i];
}

// Dense inverse by column solves; column j is T^{-1} e_j.
inline std::vector<std::vector<double>> inverse_columns(const Tridiagonal& t) {
  std::vector<std::vector<double>> cols(t.size());
  std::vector<double> e(t.size(), 0.0);
  for (std::size_t j = 0; j < t.size(); ++j) {
    e[j] = 1.0;
    cols[j] = solve(t, e);
    e[j] = 0.0;
  }
  return cols;
}

struct SpectrumReport {
  std::vector<double> eigenvalues;  // ascending
  double max_eig = 0.0;
};

inline constexpr double kEigenTolerance = 1e-10;

namespace detail {

// Number of eigenvalues of the symmetric tridiagonal (d, e) strictly below x.
inline std::size_t sturm_count(std::span<const double> d, std::span<const double> e2, double x) {
  std::size_t count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    q = d[i] - x - (i > 0 ? e2[i - 1] / q : 0.0);
    if (q == 0.0) q = -std::numeric_limits<double>::min();
    if (q < 0.0) ++count;
  }
  return count;
}

}  // namespace detail

// Real spectrum of a tridiagonal matrix with y_i z_i >= 0. It is similar to
// the symmetric tridiagonal with off-diagonals sqrt(y_i z_i); each eigenvalue
// is isolated by Sturm-count bisection.
inline SpectrumReport spectrum(const Tridiagonal& t) {
  require_well_formed(t);
  const std::size_t n = t.size();
  std::vector<double> e2(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    e2[i] = t.super[i] * t.sub[i];
    if (e2[i] < 0.0) throw std::domain_error("spectrum: y_i z_i < 0, eigenvalues may be complex");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::sqrt(e2[i - 1]) : 0.0) + (i + 1 < n ? std::sqrt(e2[i]) : 0.0);
    lo = std::min(lo, t.diag[i] - r);
    hi = std::max(hi, t.diag[i] + r);
  }
  lo -= 1.0;
  hi += 1.0;

  SpectrumReport rep;
  rep.eigenvalues.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k-th smallest: the smallest x with more than k eigenvalues below it.
    double a = lo;
    double b = hi;
    while (b - a > kEigenTolerance) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (detail::sturm_count(t.diag, e2, mid) > k) {
        b = mid;
      } else {
        a = mid;
      }
    }
    rep.eigenvalues[k] = 0.5 * (a + b);
  }
  rep.max_eig = rep.eigenvalues.back();
  return rep;
}

}  // namespace po2mf::tridiag
