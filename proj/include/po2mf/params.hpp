#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace po2mf {

// Largest buffer the auto rule will pick.
inline constexpr int kMaxAutoBuffer = 64;

// Tail level the auto rule drives lambda^(2^b - 1) below.
inline constexpr double kAutoBufferTail = 1e-10;

// Parameters of the heavy-traffic supermarket model with N servers,
// arrival rate lambda = 1 - gamma / N^alpha per server and buffer b.
struct SystemParams {
  std::int64_t n_servers = 1;
  double gamma = 0.1;
  double alpha = 0.05;
  // Empty means "auto": smallest b with lambda^(2^b - 1) < kAutoBufferTail.
  std::optional<int> buffer;
  double xi = 0.01;

  double lambda() const {
    return 1.0 - gamma / std::pow(static_cast<double>(n_servers), alpha);
  }

  int resolved_buffer() const {
    if (buffer) return *buffer;
    const double log_lambda = std::log(lambda());
    for (int b = 1; b < kMaxAutoBuffer; ++b) {
      // log of lambda^(2^b - 1)
      if (std::ldexp(1.0, b) - 1.0 > std::log(kAutoBufferTail) / log_lambda) return b;
    }
    return kMaxAutoBuffer;
  }

  void validate() const {
    if (n_servers < 1) throw std::invalid_argument("n must be a positive integer");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be >= 0");
    if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("xi must be > 0");
    if (buffer && *buffer < 1) throw std::invalid_argument("buffer must be >= 1");
    const double lam = lambda();
    if (!(lam > 0.0 && lam < 1.0)) {
      throw std::invalid_argument("arrival rate lambda = " + std::to_string(lam) +
                                  " must lie in (0, 1)");
    }
  }
};

inline double arrival_rate(const SystemParams& params) { return params.lambda(); }

}  // namespace po2mf
