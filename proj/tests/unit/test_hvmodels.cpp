#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "neqlab/hvmodels.hpp"

using namespace neqlab;
using namespace neqlab::hvmodels;

namespace {

// rho doubled on the l1 >= 1/2 half relative to the other half.
HvDistribution right_heavy() { return HvDistribution(2, 1, {1.0, 2.0}); }

// Exact correlation by brute-force midpoint integration of omega over a fine grid.
double correlation_by_grid(const HvModel& m, const HvDistribution& rho, const Setting& a, const Setting& b) {
  const int n = 1000;
  double s = 0, z = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Lambda l{(i + 0.5) / n, (j + 0.5) / n};
      const auto o = m.omega(a, b, l);
      s += rho.density(l) * o.a * o.b;
      z += rho.density(l);
    }
  return s / z;
}

}  // namespace

TEST_CASE("builtin singlet model outcomes") {
  const auto m = builtin_singlet_model();
  const auto z = axis_at(0.0);
  SUBCASE("parallel settings anticorrelate perfectly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const Lambda l{u(rng), u(rng)};
      const auto o = m.omega(z, z, l);
      CHECK(o.a == -o.b);
      CHECK(m.omega(z, z, l) == o);
    }
  }
  CHECK(same_sign_threshold(z, axis_at(kPi / 2)) == doctest::Approx(0.5));
  CHECK(same_sign_threshold(z, axis_at(kPi)) == doctest::Approx(1.0));
  CHECK(m.omega(z, z, {0.2, 0.9}).b == -1);
  CHECK(m.omega(z, z, {0.7, 0.9}).b == 1);
}

TEST_CASE("equilibrium statistics reproduce the singlet correlation") {
  const auto m = builtin_singlet_model();
  const auto rho = HvDistribution::uniform();
  for (double deg : {0.0, 30.0, 60.0, 90.0, 180.0}) {
    const double th = deg * kPi / 180.0;
    const auto s = ensemble_statistics(m, rho, axis_at(0.0), axis_at(th), 100000, 17);
    CAPTURE(deg);
    CHECK(std::abs(s.correlation.value + std::cos(th)) <= 3 * s.correlation.sigma + 1e-12);
    CHECK(std::abs(s.p_a_plus.value - 0.5) <= 3 * s.p_a_plus.sigma);
    CHECK(std::abs(s.p_b_plus.value - 0.5) <= 3 * s.p_b_plus.sigma);
    const auto e = exact_statistics(rho, axis_at(0.0), axis_at(th));
    CHECK(e.correlation == doctest::Approx(-std::cos(th)).epsilon(1e-12));
    CHECK(e.p_a_plus == doctest::Approx(0.5));
  }
  SUBCASE("worker count does not change the result") {
    const auto a = ensemble_statistics(m, rho, axis_at(0.0), axis_at(1.0), 20000, 3, 1);
    const auto b = ensemble_statistics(m, rho, axis_at(0.0), axis_at(1.0), 20000, 3, 4);
    CHECK(a.correlation.value == b.correlation.value);
  }
}

TEST_CASE("nonequilibrium ensembles") {
  const auto m = builtin_singlet_model();
  SUBCASE("support on l1 < 1/2 fixes sigma_B = -1") {
    HvDistribution left(2, 1, {1.0, 0.0});
    const auto s = ensemble_statistics(m, left, axis_at(0.0), axis_at(0.7), 5000, 2);
    CHECK(s.p_b_plus.value == 0.0);
  }
  SUBCASE("doubling on l2 < 1/2 breaks the singlet correlation") {
    HvDistribution low(1, 2, {1.0, 0.0});
    const auto a = axis_at(0.0), b = axis_at(kPi / 3);  // q = 1/4
    const auto e = exact_statistics(low, a, b);
    // all weight on l2 < 1/2: P(same) = 1/4 / (1/2)
    CHECK(e.correlation == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.correlation != doctest::Approx(-0.5));
    CHECK(e.correlation == doctest::Approx(correlation_by_grid(m, low, a, b)).epsilon(1e-6));
    const auto s = ensemble_statistics(m, low, a, b, 100000, 8);
    CHECK(std::abs(s.correlation.value - e.correlation) <= 3 * s.correlation.sigma);
  }
  CHECK_THROWS_AS(HvDistribution(2, 2, {1.0}), ValidationError);
  CHECK_THROWS_AS(HvDistribution(1, 2, {1.0, -1.0}), ValidationError);
  CHECK_THROWS_AS(ensemble_statistics(m, HvDistribution::uniform(), {1, 1, 0}, axis_at(0), 10, 1), ValidationError);
}

TEST_CASE("transition sets") {
  const auto m = builtin_singlet_model();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, kPi);
  SUBCASE("detailed balance holds exactly for random settings") {
    for (int i = 0; i < 200; ++i) {
      const auto r = transition_sets(m, axis_at(u(rng)), axis_at(u(rng)), axis_at(u(rng)), right_heavy());
      CHECK(r.exact);
      CHECK(r.mu_qt_minus_to_plus == r.mu_qt_plus_to_minus);
    }
  }
  SUBCASE("unchanged setting gives empty sets") {
    const auto r = transition_sets(m, axis_at(0.3), axis_at(1.0), axis_at(1.0), HvDistribution::uniform());
    CHECK(r.minus_to_plus.empty());
    CHECK(r.plus_to_minus.empty());
  }
  SUBCASE("regions do not depend on rho") {
    const auto a = transition_sets(m, axis_at(0.0), axis_at(0.4), axis_at(1.4), HvDistribution::uniform());
    const auto b = transition_sets(m, axis_at(0.0), axis_at(0.4), axis_at(1.4), right_heavy());
    REQUIRE(a.minus_to_plus.size() == b.minus_to_plus.size());
    CHECK(a.minus_to_plus[0].y0 == b.minus_to_plus[0].y0);
    CHECK(a.minus_to_plus[0].y1 == b.minus_to_plus[0].y1);
    CHECK(a.minus_to_plus[0].x0 == b.minus_to_plus[0].x0);
  }
  SUBCASE("right-heavy rho shifts the A marginal by the measure difference") {
    const auto a = axis_at(0.0), b = axis_at(0.0), b2 = axis_at(kPi / 2);
    const auto r = transition_sets(m, a, b, b2, right_heavy());
    const double dq = 0.5;
    CHECK(r.mu_qt_minus_to_plus == doctest::Approx(dq / 2));
    CHECK(r.mu_rho_minus_to_plus == doctest::Approx(2 * r.mu_rho_plus_to_minus));
    const auto before = exact_statistics(right_heavy(), a, b);
    const auto after = exact_statistics(right_heavy(), a, b2);
    CHECK(after.p_a_plus - before.p_a_plus == doctest::Approx(r.marginal_shift_a()).epsilon(1e-12));
    // Monte Carlo cross-check of the shift with common samples
    const auto s0 = ensemble_statistics(m, right_heavy(), a, b, 100000, 5);
    const auto s1 = ensemble_statistics(m, right_heavy(), a, b2, 100000, 5);
    CHECK(std::abs((s1.p_a_plus.value - s0.p_a_plus.value) - r.marginal_shift_a()) <=
          3 * std::hypot(s0.p_a_plus.sigma, s1.p_a_plus.sigma));
  }
  SUBCASE("a custom model is scanned") {
    HvModel custom = m;
    custom.threshold_model = false;
    const auto exact = transition_sets(m, axis_at(0.0), axis_at(0.0), axis_at(kPi / 2), right_heavy());
    const auto scan = transition_sets(custom, axis_at(0.0), axis_at(0.0), axis_at(kPi / 2), right_heavy(), 64);
    CHECK_FALSE(scan.exact);
    CHECK(scan.mu_rho_minus_to_plus == doctest::Approx(exact.mu_rho_minus_to_plus).epsilon(1e-12));
  }
  const auto json = transition_report_json(transition_sets(m, axis_at(0), axis_at(0), axis_at(1), right_heavy()));
  CHECK(json.find("marginal_shift_a") != std::string::npos);
}

TEST_CASE("two-state transmission") {
  std::vector<double> theta;
  for (int k = 0; k <= 36; ++k) theta.push_back(k * kPi / 36);
  SUBCASE("uniform rho reproduces the cosine law") {
    const auto c = two_state_transmission(Density1D::uniform(), theta, 1.0);
    CHECK(c.p_plus[0] == 1.0);
    CHECK(c.max_quantum_deviation == 0.0);
    CHECK(c.max_residual < 1e-12);
    CHECK(c.fit_p == doctest::Approx(1.0));
    CHECK(std::abs(c.additivity_defect) < 1e-12);
    CHECK_FALSE(c.nonquantum_signature);
  }
  SUBCASE("rho = 2 lambda squares the quantum curve") {
    const auto c = two_state_transmission(Density1D::power(1.0), theta, 1.0);
    for (std::size_t k = 0; k < theta.size(); ++k)
      CHECK(c.p_plus[k] == doctest::Approx(std::pow(quantum_transmission(theta[k], 1.0), 2)).epsilon(1e-14));
    // p_QT^2 carries a cos 4 theta term of amplitude 1/8 that no cosine in 2 theta absorbs
    CHECK(c.max_residual > 0.01);
    CHECK(c.nonquantum_signature);
    CHECK(std::abs(c.additivity_defect) > 0.01);
  }
  SUBCASE("sampled curve agrees with the exact one") {
    const auto exact = two_state_transmission(Density1D::power(1.0), theta, 0.8);
    const auto mc = two_state_transmission(Density1D::power(1.0), theta, 0.8, 0.01, 20000, 4);
    for (std::size_t k = 0; k < theta.size(); ++k)
      CHECK(std::abs(mc.p_plus[k] - exact.p_plus[k]) <= 4 * mc.sigma[k] + 1e-12);
    CHECK(transmission_table(mc).rows() == theta.size());
  }
  SUBCASE("piecewise density") {
    const auto d = Density1D::piecewise({1.0, 3.0});
    CHECK(d.cdf(0.5) == doctest::Approx(0.25));
    CHECK(d.cdf(0.75) == doctest::Approx(0.625));
    CHECK(d.density(0.9) == doctest::Approx(1.5));
  }
  CHECK_THROWS_AS(two_state_transmission(Density1D::uniform(), theta, 1.5), ValidationError);
  CHECK_THROWS_AS(Density1D::power(-2.0), ValidationError);
}
