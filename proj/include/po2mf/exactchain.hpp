#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "po2mf/params.hpp"

namespace po2mf::exact {

inline constexpr std::size_t kMaxStates = 200'000;
inline constexpr std::size_t kDenseLimit = 5'000;

// C(N + b, b), the number of nonincreasing vectors N >= m_1 >= ... >= m_b >= 0.
// Saturates at kMaxStates + 1.
inline std::size_t lattice_size(std::int64_t n, int b) {
  double c = 1.0;
  for (int i = 1; i <= b; ++i) {
    c = c * static_cast<double>(n + i) / i;
    if (c > static_cast<double>(kMaxStates)) return kMaxStates + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

using LatticeState = std::vector<std::int64_t>;

// All occupancy vectors in lexicographic order, with the reverse index.
class LatticeStateSpace {
 public:
  LatticeStateSpace(std::int64_t n, int b) : n_(n) {
    if (n < 1 || b < 1) throw std::invalid_argument("lattice: n and b must be positive");
    if (lattice_size(n, b) > kMaxStates) {
      throw std::length_error("lattice: state space exceeds " + std::to_string(kMaxStates) + " states");
    }
    LatticeState cur(static_cast<std::size_t>(b));
    enumerate(cur, 0, n);
    for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], i);
  }

  std::size_t size() const { return states_.size(); }
  std::int64_t n() const { return n_; }
  const LatticeState& state(std::size_t i) const { return states_[i]; }
  const std::vector<LatticeState>& states() const { return states_; }

  std::size_t index_of(const LatticeState& s) const {
    const auto it = index_.find(s);
    if (it == index_.end()) throw std::out_of_range("lattice: state not in space");
    return it->second;
  }

 private:
  void enumerate(LatticeState& cur, std::size_t level, std::int64_t upper) {
    if (level == cur.size()) {
      states_.push_back(cur);
      return;
    }
    for (std::int64_t v = 0; v <= upper; ++v) {
      cur[level] = v;
      enumerate(cur, level + 1, v);
    }
  }

  std::int64_t n_;
  std::vector<LatticeState> states_;
  std::map<LatticeState, std::size_t> index_;
};

// Sparse CTMC generator, off-diagonal rates in CSR layout.
struct GeneratorMatrix {
  LatticeStateSpace space;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<double> rate;
  std::vector<double> diag;  // minus the exit rate

  std::size_t size() const { return diag.size(); }
  double exit_rate(std::size_t i) const { return -diag[i]; }
};

// Up-moves at level k with rate lambda N ((m_{k-1}/N)^2 - (m_k/N)^2), m_0 = N;
// down-moves at level k with rate m_k - m_{k+1}, m_{b+1} = 0.
inline GeneratorMatrix build_generator(const SystemParams& params) {
  params.validate();
  const int b = params.resolved_buffer();
  const std::int64_t n = params.n_servers;
  const double lambda = params.lambda();
  const double nd = static_cast<double>(n);

  GeneratorMatrix g{LatticeStateSpace(n, b), {}, {}, {}, {}};
  const auto& space = g.space;
  g.row_ptr.reserve(space.size() + 1);
  g.diag.resize(space.size());
  g.row_ptr.push_back(0);
  LatticeState next;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& m = space.state(i);
    double out = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const std::int64_t above = k == 0 ? n : m[k - 1];
      if (m[k] < above) {
        const double hi = static_cast<double>(above) / nd;
        const double lo = static_cast<double>(m[k]) / nd;
        const double r = lambda * nd * (hi * hi - lo * lo);
        next = m;
        ++next[k];
        g.col.push_back(space.index_of(next));
        g.rate.push_back(r);
        out += r;
      }
      const std::int64_t below = k + 1 < m.size() ? m[k + 1] : 0;
      if (m[k] > below) {
        const auto r = static_cast<double>(m[k] - below);
        next = m;
        --next[k];
        g.col.push_back(space.index_of(next));
        g.rate.push_back(r);
        out += r;
      }
    }
    g.diag[i] = -out;
    g.row_ptr.push_back(g.col.size());
  }
  return g;
}

struct StationaryDistribution {
  std::vector<double> pi;
  double residual = 0.0;  // ||pi Q||_inf
};

// ||pi Q||_inf
inline double stationarity_residual(const GeneratorMatrix& g, std::span<const double> pi) {
  std::vector<double> r(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    r[i] += pi[i] * g.diag[i];
    for (std::size_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) r[g.col[e]] += pi[i] * g.rate[e];
  }
  double m = 0.0;
  for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

inline constexpr double kStationaryTolerance = 1e-10;
inline constexpr std::size_t kPowerIterationCap = 20'000'000;

namespace detail {

inline void normalize(std::vector<double>& pi) {
  double sum = 0.0;
  for (auto& v : pi) {
    v = std::max(v, 0.0);
    sum += v;
  }
  for (auto& v : pi) v /= sum;
}

inline std::vector<double> dense_solve(const GeneratorMatrix& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  // Q^T pi = 0 with the last equation replaced by sum(pi) = 1.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    a(ii, ii) = g.diag[i];
    for (std::size_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
      a(static_cast<Eigen::Index>(g.col[e]), ii) += g.rate[e];
    }
  }
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd x = a.partialPivLu().solve(rhs);
  return {x.data(), x.data() + n};
}

// pi <- pi (I + Q / Lambda), Lambda = max exit rate + 1.
inline std::vector<double> power_iteration(const GeneratorMatrix& g) {
  double unif = 0.0;
  for (double d : g.diag) unif = std::max(unif, -d);
  unif += 1.0;
  std::vector<double> pi(g.size(), 1.0 / static_cast<double>(g.size()));
  std::vector<double> next(g.size());
  for (std::size_t it = 0; it < kPowerIterationCap; ++it) {
    for (std::size_t i = 0; i < g.size(); ++i) next[i] = pi[i] * (1.0 + g.diag[i] / unif);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) next[g.col[e]] += pi[i] * g.rate[e] / unif;
    }
    pi.swap(next);
    if (it % 256 == 255) {
      normalize(pi);
      if (stationarity_residual(g, pi) <= 0.5 * kStationaryTolerance) return pi;
    }
  }
  throw std::runtime_error("stationary: power iteration did not converge");
}

}  // namespace detail

inline StationaryDistribution stationary(const GeneratorMatrix& g) {
  StationaryDistribution out;
  out.pi = g.size() <= kDenseLimit ? detail::dense_solve(g) : detail::power_iteration(g);
  detail::normalize(out.pi);
  out.residual = stationarity_residual(g, out.pi);
  if (!(out.residual <= kStationaryTolerance)) {
    throw std::runtime_error("stationary: residual " + std::to_string(out.residual) + " above tolerance");
  }
  return out;
}

// sum_m pi(m) ||m/N - s*||^2
inline double exact_mse(const GeneratorMatrix& g, const StationaryDistribution& pi, std::span<const double> s_star) {
  const auto& space = g.space;
  if (pi.pi.size() != space.size()) throw std::invalid_argument("exact_mse: distribution size mismatch");
  if (!space.states().empty() && space.state(0).size() != s_star.size()) {
    throw std::invalid_argument("exact_mse: s* dimension mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(space.n());
  double total = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    double e = 0.0;
    const auto& m = space.state(i);
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double d = static_cast<double>(m[k]) * inv_n - s_star[k];
      e += d * d;
    }
    total += pi.pi[i] * e;
  }
  return total;
}

}  // namespace po2mf::exact
