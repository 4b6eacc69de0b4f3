#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "po2mf/tridiag.hpp"
#include "po2mf/verify.hpp"

using namespace po2mf;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SystemParams at_lambda(double lambda, int b) { return SystemParams{10, 1.0 - lambda, 0.0, b, 0.01}; }

Eigen::MatrixXd dense(const tridiag::Tridiagonal& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = t.diag[static_cast<std::size_t>(i)];
    if (i + 1 < n) {
      m(i, i + 1) = t.super[static_cast<std::size_t>(i)];
      m(i + 1, i) = t.sub[static_cast<std::size_t>(i)];
    }
  }
  return m;
}

struct Instance {
  SystemParams params;
  std::vector<double> s_star;
  tridiag::Tridiagonal jac;
};

std::vector<Instance> heavy_traffic_instances() {
  std::vector<Instance> out;
  for (double gamma : {0.1, 0.01}) {
    for (std::int64_t n : {10, 100, 1000, 10000}) {
      SystemParams p{n, gamma, 0.05, std::nullopt, 0.01};
      auto eq = meanfield::equilibrium(p);
      auto jac = tridiag::jacobian(eq.s_star, p);
      out.push_back({p, std::move(eq.s_star), std::move(jac)});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("scalar Jacobian", "[jacobian]") {
  const auto p = at_lambda(0.5, 1);
  const auto t = tridiag::jacobian(std::vector<double>{0.4142136}, p);
  REQUIRE(t.size() == 1);
  CHECK(t.sub.empty());
  CHECK_THAT(t.diag[0], WithinAbs(-1.4142136, 1e-12));
  CHECK_THAT(tridiag::determinants(t).p[1], WithinAbs(-1.4142136, 1e-12));
  CHECK_THAT(tridiag::inverse_diagonal(t)[0], WithinAbs(-0.7071, 1e-4));
  const auto eig = tridiag::spectrum(t);
  CHECK_THAT(eig.max_eig, WithinAbs(-1.4142136, 1e-10));
}

TEST_CASE("Jacobian matches finite differences of the drift", "[jacobian]") {
  const SystemParams p{100, 0.1, 0.05, 6, 0.01};
  const std::vector<double> s{0.9, 0.7, 0.5, 0.3, 0.1, 0.05};
  const auto t = tridiag::jacobian(s, p);
  const Eigen::MatrixXd j = dense(t);
  const double h = 1e-6;
  for (std::size_t c = 0; c < s.size(); ++c) {
    auto up = s;
    auto dn = s;
    up[c] += h;
    dn[c] -= h;
    const auto fu = meanfield::drift(up, p);
    const auto fd = meanfield::drift(dn, p);
    for (std::size_t r = 0; r < s.size(); ++r) {
      CHECK_THAT((fu[r] - fd[r]) / (2 * h), WithinAbs(j(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 1e-8));
    }
  }
}

TEST_CASE("Jacobian column sums", "[jacobian]") {
  const double lambda = 0.8;
  const std::vector<double> s{0.9, 0.6, 0.4, 0.2, 0.1};
  const auto t = tridiag::jacobian(s, at_lambda(lambda, 5));
  const Eigen::VectorXd sums = dense(t).colwise().sum();
  CHECK_THAT(sums(0), WithinAbs(-1.0, 1e-15));
  for (Eigen::Index c = 1; c < 4; ++c) CHECK_THAT(sums(c), WithinAbs(0.0, 1e-15));
  CHECK_THAT(sums(4), WithinAbs(-2.0 * lambda * s[4], 1e-15));
  const auto zero = t.apply(std::vector<double>(5, 0.0));
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("hand-worked determinants and convergents", "[determinants]") {
  const double lambda = 0.5;
  const std::vector<double> s{0.8, 0.3};
  const auto t = tridiag::jacobian(s, at_lambda(lambda, 2));
  const auto det = tridiag::determinants(t);
  CHECK(det.p[0] == 1.0);
  CHECK_THAT(det.p[1], WithinAbs(-1.8, 1e-15));
  CHECK_THAT(det.p[2], WithinAbs(1.54, 1e-14));
  const auto cv = tridiag::convergents(t);
  CHECK(cv.c[0] == t.diag[0]);
  CHECK_THAT(cv.c[0], WithinAbs(-1.8, 1e-15));
  CHECK_THAT(cv.c[1], WithinAbs(-0.855556, 1e-6));
  CHECK_THAT(cv.c[1], WithinAbs(-2.0 * lambda * s[1] - 1.0 / (2.0 * lambda * s[0] + 1.0), 1e-15));
}

TEST_CASE("determinant recursions agree on two-level Jacobians", "[determinants][property]") {
  auto rng = RandomStream::derive(21, 0);
  for (int t = 0; t < 200; ++t) {
    const double lambda = 0.05 + 0.9 * rng.uniform();
    const auto s = verify::random_state(rng, 2);
    const auto jac = tridiag::jacobian(s, at_lambda(lambda, 2));
    const auto a = tridiag::determinants(jac);
    const auto b = tridiag::jacobian_determinants_short_form(s, lambda);
    for (std::size_t i = 0; i < 3; ++i) CHECK(verify::relative_difference(a.p[i], b.p[i]) <= 1e-9);
  }
}

TEST_CASE("determinants against dense leading minors", "[determinants]") {
  const std::vector<double> s{0.95, 0.8, 0.5, 0.2, 0.03};
  const auto t = tridiag::jacobian(s, at_lambda(0.9, 5));
  const auto det = tridiag::determinants(t);
  const Eigen::MatrixXd m = dense(t);
  for (Eigen::Index k = 1; k <= 5; ++k) {
    CHECK_THAT(det.p[static_cast<std::size_t>(k)], WithinRel(m.topLeftCorner(k, k).determinant(), 1e-12));
  }
}

TEST_CASE("convergents reject a zero leading minor", "[convergents]") {
  const tridiag::Tridiagonal t{{1.0}, {0.0, 1.0}, {1.0}};
  CHECK_THROWS_AS(tridiag::convergents(t), std::domain_error);
  CHECK_THROWS_AS(tridiag::inverse_diagonal(t), std::domain_error);
}

TEST_CASE("sign structure at heavy-traffic equilibria", "[property]") {
  for (const auto& inst : heavy_traffic_instances()) {
    INFO("gamma=" << inst.params.gamma << " n=" << inst.params.n_servers);
    const auto& t = inst.jac;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      CHECK(t.super[i] == 1.0);
      CHECK(t.sub[i] >= 0.0);
    }
    for (double x : t.diag) CHECK(x < 0.0);

    const auto det = tridiag::determinants(t);
    const auto short_form = tridiag::jacobian_determinants_short_form(inst.s_star, inst.params.lambda());
    for (std::size_t i = 1; i < det.p.size(); ++i) {
      const double signed_p = (i % 2 == 0 ? 1.0 : -1.0) * det.p[i];
      CHECK(signed_p > 0.0);
      CHECK(signed_p >= 1.0 - 1e-12);
      CHECK(verify::relative_difference(det.p[i], short_form.p[i]) <= 1e-9);
    }
    for (double c : tridiag::convergents(t).c) CHECK(c < 0.0);

    const auto w = tridiag::inverse_diagonal(t);
    for (double v : w) CHECK(v < 0.0);
    CHECK(std::abs(w[0]) >= 1.0 / 3.0);
  }
}

TEST_CASE("continued-fraction inverse diagonal matches dense inverse", "[inverse]") {
  for (const auto& inst : heavy_traffic_instances()) {
    const Eigen::MatrixXd inv = dense(inst.jac).inverse();
    const auto w = tridiag::inverse_diagonal(inst.jac);
    const auto cols = tridiag::inverse_columns(inst.jac);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      CHECK(verify::relative_difference(w[i], inv(ii, ii)) <= 1e-10);
      CHECK(verify::relative_difference(w[i], cols[i][i]) <= 1e-10);
    }
  }
  // A general (non-Jacobian) tridiagonal too.
  const tridiag::Tridiagonal g{{0.3, -0.2, 0.5}, {4.0, -3.0, 5.0, 2.5}, {1.0, 0.7, -0.4}};
  const Eigen::MatrixXd inv = dense(g).inverse();
  const auto w = tridiag::inverse_diagonal(g);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK_THAT(w[static_cast<std::size_t>(i)], WithinRel(inv(i, i), 1e-12));
}

TEST_CASE("tridiagonal solve", "[solve]") {
  const auto inst = heavy_traffic_instances()[5];
  const auto& t = inst.jac;
  const std::vector<double> zero(t.size(), 0.0);
  for (double v : tridiag::solve(t, zero)) CHECK(v == 0.0);

  auto rng = RandomStream::derive(4, 0);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> v(t.size());
    for (auto& x : v) x = 2.0 * rng.uniform() - 1.0;
    const auto back = tridiag::solve(t, t.apply(v));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK_THAT(back[i], WithinAbs(v[i], 1e-10));
  }
  CHECK_THROWS_AS(tridiag::solve(t, std::vector<double>(t.size() + 1, 0.0)), std::invalid_argument);
  const tridiag::Tridiagonal singular{{1.0}, {1.0, 1.0}, {1.0}};
  CHECK_THROWS_AS(tridiag::solve(singular, std::vector<double>{1.0, 1.0}), std::domain_error);
}

TEST_CASE("inverse entries reproduce the identity", "[inverse]") {
  const auto inst = heavy_traffic_instances()[1];
  const auto& t = inst.jac;
  const Eigen::MatrixXd m = dense(t);
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd inv(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      inv(i, j) = tridiag::inverse_entry(t, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  const Eigen::MatrixXd id = inv * m;
  CHECK((id - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(tridiag::inverse_entry(t, t.size(), 0), std::out_of_range);
}

TEST_CASE("inverse entries stay below the growth bound for N >= 100", "[inverse][property]") {
  for (const auto& inst : heavy_traffic_instances()) {
    if (inst.params.n_servers < 100) continue;
    const double nd = static_cast<double>(inst.params.n_servers);
    const double cap = 12.0 / inst.params.gamma * std::pow(nd, 2.0 * 0.05 + 2.0 * 0.01);
    double worst = 0.0;
    for (const auto& col : tridiag::inverse_columns(inst.jac)) {
      for (double v : col) worst = std::max(worst, std::abs(v));
    }
    INFO("gamma=" << inst.params.gamma << " n=" << inst.params.n_servers);
    CHECK(worst <= cap);
  }
}

TEST_CASE("spectrum matches a dense eigensolver and is Hurwitz", "[spectrum]") {
  for (const auto& inst : heavy_traffic_instances()) {
    const auto rep = tridiag::spectrum(inst.jac);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dense(inst.jac));
    std::vector<double> ref;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      CHECK(std::abs(es.eigenvalues()(i).imag()) <= 1e-8);
      ref.push_back(es.eigenvalues()(i).real());
    }
    std::sort(ref.begin(), ref.end());
    REQUIRE(ref.size() == rep.eigenvalues.size());
    CHECK(std::is_sorted(rep.eigenvalues.begin(), rep.eigenvalues.end()));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK_THAT(rep.eigenvalues[i], WithinAbs(ref[i], 1e-8));
    CHECK(rep.max_eig < 0.0);
    CHECK(rep.max_eig <= -meanfield::lyapunov_weights(inst.params).delta0);
  }
}

TEST_CASE("spectrum refuses complex-spectrum inputs", "[spectrum]") {
  const tridiag::Tridiagonal t{{-1.0}, {0.0, 0.0}, {1.0}};
  CHECK_THROWS_AS(tridiag::spectrum(t), std::domain_error);
}

TEST_CASE("Stein identity on random vectors", "[inverse]") {
  for (const auto& inst : heavy_traffic_instances()) {
    const auto jt = inst.jac.transposed();
    auto rng = RandomStream::derive(8, static_cast<std::uint64_t>(inst.params.n_servers));
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(inst.jac.size());
      for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
      const auto g = tridiag::solve(jt, x);
      const auto jx = inst.jac.apply(x);
      double lhs = 0.0;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        lhs += g[i] * jx[i];
        norm2 += x[i] * x[i];
      }
      CHECK(std::abs(lhs - norm2) <= 1e-10 * norm2);
    }
  }
}
