#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "neqlab/relaxation.hpp"

using namespace neqlab;
using namespace neqlab::relaxation;
using pilotwave::DistributionSpec;

namespace {

// Exact coarse-grained H for P = |phi_11|^2 against |psi|^2, both integrated
// per cell with a 12-point midpoint rule (independent of the library's
// Gauss-Legendre path).
double exact_coarse_h(const wavefield::EigenmodeWaveFunction& wf, int cells) {
  const int q = 12;
  const double h = 1.0 / cells;
  std::vector<double> p(cells * cells), s(cells * cells);
  double ps = 0, ss = 0;
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      double a = 0, b = 0;
      for (int u = 0; u < q; ++u)
        for (int v = 0; v < q; ++v) {
          const double x = (i + (u + 0.5) / q) * h, y = (j + (v + 0.5) / q) * h;
          a += 4 * std::pow(std::sin(kPi * x) * std::sin(kPi * y), 2);
          b += std::norm(wf.sample({x, y}, 0.0).psi);
        }
      p[i * cells + j] = a;
      s[i * cells + j] = b;
      ps += a;
      ss += b;
    }
  double hsum = 0;
  for (std::size_t k = 0; k < p.size(); ++k) hsum += p[k] / ps * std::log((p[k] / ps) / (s[k] / ss));
  return hsum;
}

}  // namespace

TEST_CASE("h_function hand values") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(h_function(std::vector<double>{0.5, 0.5}, half) == 0.0);
  CHECK(h_function(std::vector<double>{0.8, 0.2}, half) ==
        doctest::Approx(0.8 * std::log(1.6) + 0.2 * std::log(0.4)));
  CHECK(h_function(std::vector<double>{0.8, 0.2}, half) == doctest::Approx(0.1927).epsilon(1e-3));
  CHECK(h_function(std::vector<double>{1.0, 0.0}, half) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(h_function(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(h_function(std::vector<double>{1.0}, half), ValidationError);
}

TEST_CASE("Gibbs inequality and refinement monotonicity on random histograms") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(16), q(16);
    double sp = 0, sq = 0;
    for (int i = 0; i < 16; ++i) {
      p[i] = u(rng) < 0.2 ? 0.0 : u(rng);
      q[i] = 0.01 + u(rng);
      sp += p[i];
      sq += q[i];
    }
    if (sp == 0) continue;
    for (int i = 0; i < 16; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double fine = h_function(p, q);
    CHECK(fine >= -1e-15);
    // merge neighbouring pairs: the coarser layout never has larger H
    std::vector<double> p2(8), q2(8);
    for (int i = 0; i < 8; ++i) {
      p2[i] = p[2 * i] + p[2 * i + 1];
      q2[i] = q[2 * i] + q[2 * i + 1];
    }
    CHECK(h_function(p2, q2) <= fine + 1e-15);
  }
}

TEST_CASE("coarse graining") {
  auto wf = wavefield::equal_weight_box_superposition(2, 4, 1);
  const auto g = CoarseGraining::over(wf, {8, 8});
  CHECK(g.cell_count() == 64);
  CHECK(g.epsilon() == doctest::Approx(0.125));
  CHECK(g.cell_of({0.99, 0.01}) == 7 * 8 + 0);
  CHECK(g.cell_of({1.5, 0.5}) == -1);

  SUBCASE("one sample per cell gives a uniform histogram") {
    pilotwave::Ensemble ens;
    ens.dims = 2;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) ens.samples.push_back({(i + 0.5) / 8, (j + 0.5) / 8});
    ens.weights.assign(64, 1.0 / 64);
    const auto hist = coarse_grain(ens, wf, g);
    for (double p : hist.p_bar) CHECK(p == doctest::Approx(1.0 / 64));
    double total = 0;
    for (double s : hist.psi_bar) total += s;
    CHECK(total == doctest::Approx(1.0));
  }
  SUBCASE("equilibrium ensemble sits at the estimator bias") {
    auto ens = pilotwave::sample_ensemble(DistributionSpec::equilibrium(), wf, 20000, 4);
    const auto est = h_estimate(coarse_grain(ens, wf, g));
    CHECK(est.h >= 0.0);
    CHECK(std::abs(est.h - est.bias) < 4 * est.bias);
  }
  SUBCASE("golden initial H for the ground-mode start on 32x32 cells") {
    const auto g32 = CoarseGraining::over(wf, {32, 32});
    auto ens = pilotwave::sample_ensemble(DistributionSpec::box_mode({1, 1}), wf, 100000, 2024);
    const auto est = h_estimate(coarse_grain(ens, wf, g32));
    const double exact = exact_coarse_h(wf, 32);
    CHECK(exact > 0.5);
    // the plug-in estimate is the exact value plus its leading bias, within noise
    CHECK(std::abs(est.h - exact - est.bias) < 4 * est.sigma);
    CHECK(est.h == doctest::Approx(0.6572397580).epsilon(1e-9));
  }
}

TEST_CASE("tau estimate") {
  CHECK(tau_estimate(1.0, 1.0, 1.0) == 1.0);
  CHECK(tau_estimate(4.0, 1.0, 1.0) == doctest::Approx(1.0 / 8.0));
  CHECK(tau_estimate(1.0, 4.0, 0.5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(tau_estimate(0.0, 1.0, 1.0), ValidationError);
}

TEST_CASE("exponential fit") {
  std::vector<double> t, h;
  for (int i = 0; i <= 30; ++i) {
    t.push_back(0.1 * i);
    h.push_back(0.7 * std::exp(-t.back() / 0.4));
  }
  const auto fit = fit_exponential(t, h);
  REQUIRE(fit.valid);
  CHECK(fit.t_c == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(fit.amplitude == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(fit.r2 == doctest::Approx(1.0));
  // window stops before the first value under 5% of h0: exp(-t/0.4) < 0.05 at t > 1.198
  CHECK(fit.points_used == 12);
  std::vector<double> zero(t.size(), 0.0);
  CHECK_FALSE(fit_exponential(t, zero).valid);
}

TEST_CASE("relaxation experiment edge cases") {
  RelaxationConfig cfg;
  cfg.cells = {8, 8};
  cfg.n_samples = 2000;
  cfg.times = {0.0, 0.3, 0.6};
  SUBCASE("single-mode field never relaxes") {
    std::vector<wavefield::BoxMode> modes{{{1, 1}, 1.0}};
    auto wf = wavefield::build_box_superposition(2, modes);
    auto r = relaxation_experiment(wf, DistributionSpec::histogram({2, 1}, {1.0, 3.0}), cfg);
    CHECK(r.h[0] > 0.1);
    for (double v : r.h) CHECK(v == doctest::Approx(r.h[0]).epsilon(1e-12));
  }
  SUBCASE("equilibrium start stays near zero") {
    auto wf = wavefield::equal_weight_box_superposition(2, 2, 9);
    auto r = relaxation_experiment(wf, DistributionSpec::equilibrium(), cfg);
    for (std::size_t k = 0; k < r.h.size(); ++k) CHECK(r.h[k] < r.bias + 4 * r.sigma[k] + 0.01);
    CHECK(r.monotone_within_noise);
  }
  SUBCASE("probe times must start at zero") {
    auto wf = wavefield::equal_weight_box_superposition(2, 2, 9);
    cfg.times = {0.1, 0.2};
    CHECK_THROWS_AS(relaxation_experiment(wf, DistributionSpec::equilibrium(), cfg), ValidationError);
  }
}
