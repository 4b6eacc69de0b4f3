#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "po2mf/meanfield.hpp"
#include "po2mf/params.hpp"
#include "po2mf/rng.hpp"

namespace po2mf::sim {

// m[k-1] = number of servers with at least k jobs, k = 1..b.
struct AggregateState {
  std::vector<std::int64_t> m;
  std::int64_t n = 0;

  bool valid() const {
    std::int64_t prev = n;
    for (auto v : m) {
      if (v < 0 || v > prev) return false;
      prev = v;
    }
    return true;
  }

  std::size_t buffer() const { return m.size(); }
};

// Discretized equilibrium round(N s*_k), repaired to be nonincreasing.
inline AggregateState initial_state(std::span<const double> s_star, std::int64_t n) {
  AggregateState st{std::vector<std::int64_t>(s_star.size()), n};
  std::int64_t prev = n;
  for (std::size_t k = 0; k < s_star.size(); ++k) {
    const auto v = static_cast<std::int64_t>(std::llround(static_cast<double>(n) * s_star[k]));
    prev = std::clamp<std::int64_t>(v, 0, prev);
    st.m[k] = prev;
  }
  return st;
}

// Queue length of the server with rank u in {0..N-1}: servers are ordered by
// decreasing queue length, so the server has at least k jobs iff u < m_k.
inline std::size_t queue_length(const AggregateState& st, std::uint64_t u) {
  std::size_t q = 0;
  const auto uu = static_cast<std::int64_t>(u);
  while (q < st.m.size() && uu < st.m[q]) ++q;
  return q;
}

enum class Event { arrival, dropped, departure, idle };

// Arrival routed to the shorter of the two sampled queues. Sampling is with
// replacement, which is what produces the s_{k-1}^2 - s_k^2 rates.
inline Event apply_arrival(AggregateState& st, std::uint64_t u1, std::uint64_t u2) {
  const std::size_t q = std::min(queue_length(st, u1), queue_length(st, u2));
  if (q >= st.m.size()) return Event::dropped;
  ++st.m[q];
  return Event::arrival;
}

inline Event apply_departure(AggregateState& st, std::uint64_t u) {
  const std::size_t q = queue_length(st, u);
  if (q == 0) return Event::idle;
  --st.m[q - 1];
  return Event::departure;
}

// One step of the chain uniformized at rate N(1 + lambda).
template <class Rng>
Event step_uniformized(AggregateState& st, Rng& rng, double lambda) {
  const auto n = static_cast<std::uint64_t>(st.n);
  if (rng.uniform() * (1.0 + lambda) < lambda) {
    const auto u1 = rng.index(n);
    const auto u2 = rng.index(n);
    return apply_arrival(st, u1, u2);
  }
  return apply_departure(st, rng.index(n));
}

// Total event rate lambda N + m_1; blocked arrivals are self-loops.
inline double total_rate(const AggregateState& st, double lambda) {
  return lambda * static_cast<double>(st.n) + static_cast<double>(st.m.empty() ? 0 : st.m[0]);
}

struct GillespieStep {
  Event event;
  double holding_time;  // time spent in the pre-jump state
};

template <class Rng>
GillespieStep step_gillespie(AggregateState& st, Rng& rng, double lambda) {
  const double arrival_rate = lambda * static_cast<double>(st.n);
  const double rate = total_rate(st, lambda);
  const double tau = rng.exponential(rate);
  if (rng.uniform() * rate < arrival_rate) {
    const auto n = static_cast<std::uint64_t>(st.n);
    const auto u1 = rng.index(n);
    const auto u2 = rng.index(n);
    return {apply_arrival(st, u1, u2), tau};
  }
  // Departure from a uniformly chosen busy server.
  return {apply_departure(st, rng.index(static_cast<std::uint64_t>(st.m[0]))), tau};
}

enum class Scheme { uniformization, gillespie };

inline std::string to_string(Scheme s) { return s == Scheme::uniformization ? "uniformization" : "gillespie"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "uniformization") return Scheme::uniformization;
  if (s == "gillespie") return Scheme::gillespie;
  throw std::invalid_argument("unknown scheme: " + s);
}

struct SimConfig {
  std::uint64_t steps = 1'000'000;
  double warmup_fraction = 0.1;
  int replicas = 10;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::uniformization;
  unsigned threads = 0;  // 0: one per hardware thread

  void validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw std::invalid_argument("warmup must lie in [0, 1)");
    if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  }
};

// Tail event ||S - s*||^{2r} >= N^{-epsilon}.
struct TailConfig {
  int r = 1;
  double epsilon = 1.0;
};

struct SimStats {
  double mse_mean = 0.0;
  double scaled_mse = 0.0;
  std::vector<double> replica_values;
  double std_error = 0.0;
  std::optional<double> tail_prob;
  std::vector<double> occupancy_mean;  // mean of m_k / N
  int buffer = 0;
};

namespace detail {

struct ReplicaResult {
  double mse = 0.0;
  double tail = 0.0;
  std::vector<double> occupancy;
};

inline double squared_error(const AggregateState& st, std::span<const double> s_star, double inv_n) {
  double e = 0.0;
  for (std::size_t k = 0; k < s_star.size(); ++k) {
    const double d = static_cast<double>(st.m[k]) * inv_n - s_star[k];
    e += d * d;
  }
  return e;
}

inline ReplicaResult run_replica(const SystemParams& params, std::span<const double> s_star,
                                 const SimConfig& config, const std::optional<TailConfig>& tail,
                                 std::uint64_t replica) {
  const double lambda = params.lambda();
  const double inv_n = 1.0 / static_cast<double>(params.n_servers);
  // ||x||^{2r} >= N^{-eps}  <=>  ||x||^2 >= N^{-eps/r}
  const double tail_threshold =
      tail ? std::pow(static_cast<double>(params.n_servers), -tail->epsilon / tail->r) : 0.0;
  const auto warmup = static_cast<std::uint64_t>(std::floor(config.warmup_fraction * static_cast<double>(config.steps)));
  const std::size_t b = s_star.size();

  RandomStream rng = RandomStream::derive(config.seed, replica);
  AggregateState st = initial_state(s_star, params.n_servers);
  std::vector<double> occ(b, 0.0);
  double err_sum = 0.0;
  double tail_sum = 0.0;
  double weight_sum = 0.0;

  if (config.scheme == Scheme::uniformization) {
    for (std::uint64_t step = 0; step < config.steps; ++step) {
      step_uniformized(st, rng, lambda);
      if (step < warmup) continue;
      const double e = squared_error(st, s_star, inv_n);
      err_sum += e;
      if (tail && e >= tail_threshold) tail_sum += 1.0;
      for (std::size_t k = 0; k < b; ++k) occ[k] += static_cast<double>(st.m[k]);
      weight_sum += 1.0;
    }
  } else {
    // Time-weighted: the pre-jump state is held for the sampled holding time.
    std::vector<std::int64_t> before(b);
    for (std::uint64_t step = 0; step < config.steps; ++step) {
      const double e = squared_error(st, s_star, inv_n);
      std::copy(st.m.begin(), st.m.end(), before.begin());
      const double tau = step_gillespie(st, rng, lambda).holding_time;
      if (step < warmup) continue;
      err_sum += e * tau;
      if (tail && e >= tail_threshold) tail_sum += tau;
      for (std::size_t k = 0; k < b; ++k) occ[k] += static_cast<double>(before[k]) * tau;
      weight_sum += tau;
    }
  }

  ReplicaResult res;
  res.mse = err_sum / weight_sum;
  res.tail = tail_sum / weight_sum;
  for (auto& v : occ) v = v * inv_n / weight_sum;
  res.occupancy = std::move(occ);
  return res;
}

}  // namespace detail

// Steady-state estimate of E||S - s*||^2 from independent replicas started at
// the discretized equilibrium. Replica i uses stream (seed, i); results are
// merged in replica order, so the thread count does not affect the output.
inline SimStats run(const SystemParams& params, const SimConfig& config,
                    const std::optional<TailConfig>& tail = std::nullopt) {
  params.validate();
  config.validate();
  if (tail && (tail->r < 1 || !(tail->epsilon > 0.0))) throw std::invalid_argument("tail r and epsilon must be positive");
  const auto eq = meanfield::equilibrium(params);
  const std::span<const double> s_star = eq.s_star;

  const auto replicas = static_cast<std::size_t>(config.replicas);
  std::vector<detail::ReplicaResult> results(replicas);
  unsigned threads = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, replicas));
  if (threads <= 1) {
    for (std::size_t r = 0; r < replicas; ++r) results[r] = detail::run_replica(params, s_star, config, tail, r);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t r = t; r < replicas; r += threads) {
          results[r] = detail::run_replica(params, s_star, config, tail, r);
        }
      });
    }
  }

  SimStats stats;
  stats.buffer = static_cast<int>(s_star.size());
  stats.occupancy_mean.assign(s_star.size(), 0.0);
  double tail_mean = 0.0;
  for (const auto& r : results) {
    stats.replica_values.push_back(r.mse);
    stats.mse_mean += r.mse;
    tail_mean += r.tail;
    for (std::size_t k = 0; k < s_star.size(); ++k) stats.occupancy_mean[k] += r.occupancy[k];
  }
  const double count = static_cast<double>(replicas);
  stats.mse_mean /= count;
  tail_mean /= count;
  for (auto& v : stats.occupancy_mean) v /= count;
  if (replicas > 1) {
    double ss = 0.0;
    for (double v : stats.replica_values) ss += (v - stats.mse_mean) * (v - stats.mse_mean);
    stats.std_error = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  }
  stats.scaled_mse = static_cast<double>(params.n_servers) * stats.mse_mean;
  if (tail) stats.tail_prob = tail_mean;
  return stats;
}

}  // namespace po2mf::sim
