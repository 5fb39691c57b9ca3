#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "neqlab/wavefield.hpp"

using namespace neqlab;
using namespace neqlab::wavefield;

namespace {

// Independent |psi|^2 quadrature: midpoint rule on a fine grid, exact for the
// trigonometric polynomials that box superpositions produce.
double midpoint_norm(const GuidingField& wf, double t, int n) {
  const double L = wf.upper()[0] - wf.lower()[0];
  const double h = L / n;
  double s = 0.0;
  if (wf.dims() == 1) {
    for (int i = 0; i < n; ++i) s += std::norm(wf.sample({(i + 0.5) * h, 0.0}, t).psi);
    return s * h;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += std::norm(wf.sample({(i + 0.5) * h, (j + 0.5) * h}, t).psi);
  return s * h * h;
}

std::vector<Complex> gaussian_values(const std::vector<GridAxis>& axes, double sigma, double k0, double x0) {
  std::vector<Complex> v(axes[0].n);
  for (int i = 0; i < axes[0].n; ++i) {
    const double x = axes[0].coordinate(i, Boundary::Periodic);
    v[i] = std::exp(-(x - x0) * (x - x0) / (4 * sigma * sigma)) * std::polar(1.0, k0 * x);
  }
  return v;
}

double position_variance(const GridWaveFunction& wf) {
  double m0 = 0, m1 = 0, m2 = 0;
  for (std::size_t i = 0; i < wf.size(); ++i) {
    const double x = wf.node(i)[0];
    const double p = std::norm(wf.values()[i]);
    m0 += p;
    m1 += p * x;
    m2 += p * x * x;
  }
  m1 /= m0;
  return m2 / m0 - m1 * m1;
}

double l2_distance(const GridWaveFunction& a, const GridWaveFunction& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a.values()[i] - b.values()[i]);
  return std::sqrt(s * a.cell_volume());
}

}  // namespace

TEST_CASE("box superposition construction") {
  SUBCASE("ground state") {
    std::vector<BoxMode> modes{{{1, 1}, 1.0}};
    auto wf = build_box_superposition(2, modes);
    CHECK(midpoint_norm(wf, 0.0, 64) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wf.spectrum().energy_spread == 0.0);
    CHECK(wf.spectrum().mean_energy == doctest::Approx(kPi * kPi));
  }
  SUBCASE("sixteen seeded modes are distinct and normalized") {
    auto wf = equal_weight_box_superposition(2, 4, 7);
    CHECK(wf.modes().size() == 16);
    std::set<std::array<int, 2>> idx;
    for (const auto& m : wf.modes()) idx.insert(m.n);
    CHECK(idx.size() == 16);
    CHECK(midpoint_norm(wf, 0.3, 96) == doctest::Approx(1.0).epsilon(1e-12));
    auto again = equal_weight_box_superposition(2, 4, 7);
    for (std::size_t i = 0; i < 16; ++i) CHECK(again.modes()[i].amplitude == wf.modes()[i].amplitude);
    auto other = equal_weight_box_superposition(2, 4, 8);
    CHECK(other.modes()[0].amplitude != wf.modes()[0].amplitude);
  }
  SUBCASE("already normalized amplitudes are stored unchanged") {
    std::vector<BoxMode> modes{{{1, 0}, 0.6}, {{2, 0}, Complex(0.0, 0.8)}};
    auto wf = build_box_superposition(1, modes);
    CHECK(wf.modes()[0].amplitude == Complex(0.6, 0.0));
    CHECK(wf.modes()[1].amplitude == Complex(0.0, 0.8));
    CHECK(midpoint_norm(wf, 0.0, 64) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("errors") {
    std::vector<BoxMode> none;
    CHECK_THROWS_AS(build_box_superposition(2, none), ValidationError);
    std::vector<BoxMode> dup{{{1, 2}, 1.0}, {{1, 2}, 1.0}};
    CHECK_THROWS_AS(build_box_superposition(2, dup), ValidationError);
    std::vector<BoxMode> zero{{{1, 1}, 0.0}};
    CHECK_THROWS_AS(build_box_superposition(2, zero), ValidationError);
    std::vector<BoxMode> bad{{{0, 1}, 1.0}};
    CHECK_THROWS_AS(build_box_superposition(2, bad), ValidationError);
    std::vector<BoxMode> unnormalized{{{1, 1}, 2.0}};
    CHECK_THROWS_AS(EigenmodeWaveFunction(2, 1.0, unnormalized), ValidationError);
  }
}

TEST_CASE("analytic evolution") {
  SUBCASE("single eigenmode is stationary") {
    std::vector<BoxMode> modes{{{2, 3}, 1.0}};
    auto wf = build_box_superposition(2, modes);
    for (double t : {0.0, 0.37, 5.0, 123.4}) {
      for (double x : {0.1, 0.45, 0.77}) {
        const double y = 1.0 - x * 0.9;
        CHECK(std::abs(std::norm(wf.sample({x, y}, t).psi) - std::norm(wf.sample({x, y}, 0.0).psi)) < 1e-12);
      }
    }
  }
  SUBCASE("zero time is the identity") {
    auto wf = equal_weight_box_superposition(2, 3, 11);
    auto same = evolve_analytic(wf, 0.0);
    for (std::size_t i = 0; i < wf.modes().size(); ++i)
      CHECK(std::abs(same.modes()[i].amplitude - wf.modes()[i].amplitude) < 1e-15);
  }
  SUBCASE("two-mode half period") {
    std::vector<BoxMode> modes{{{1, 0}, std::sqrt(0.5)}, {{2, 0}, std::sqrt(0.5)}};
    auto wf = build_box_superposition(1, modes);
    const double e1 = kPi * kPi / 2, e2 = 2 * kPi * kPi;
    const double t = 0.5 * 2 * kPi / (e2 - e1);
    auto out = evolve_analytic(wf, t);
    CHECK(std::abs(out.modes()[0].amplitude - std::sqrt(0.5) * std::polar(1.0, -e1 * t)) < 1e-14);
    CHECK(std::abs(out.modes()[1].amplitude - std::sqrt(0.5) * std::polar(1.0, -e2 * t)) < 1e-14);
    // relative phase flipped by pi
    const Complex rel = out.modes()[1].amplitude / out.modes()[0].amplitude;
    CHECK(rel.real() == doctest::Approx(-1.0).epsilon(1e-12));
    // the evolved object evaluated at its own reference time agrees with the original at t
    for (double x : {0.2, 0.5, 0.9})
      CHECK(std::abs(out.sample({x, 0}, t).psi - wf.sample({x, 0}, t).psi) < 1e-13);
    CHECK(midpoint_norm(out, t, 64) == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("eigenmode sample satisfies the Schrodinger equation") {
    auto wf = equal_weight_box_superposition(2, 3, 5);
    const Config x{0.31, 0.62};
    const double t = 0.4, h = 1e-5;
    const Complex dpsi = (wf.sample(x, t + h).psi - wf.sample(x, t - h).psi) / (2 * h);
    const auto s = wf.sample(x, t);
    const Complex hpsi = -0.5 * (s.second[0] + s.second[1]);
    CHECK(std::abs(kI * dpsi - hpsi) < 1e-5 * std::abs(hpsi) + 1e-8);
  }
}

TEST_CASE("gaussian packets solve the free equation") {
  GaussianSuperposition g({{-1.0, 0.7, 1.5, 1.0}, {2.0, 0.4, -0.5, Complex(0.0, 0.5)}}, 1.3);
  for (double t : {0.0, 0.5, 2.0}) {
    for (double x : {-2.0, 0.1, 1.7}) {
      const double h = 1e-5;
      const Complex dt = (g.sample({x, 0}, t + h).psi - g.sample({x, 0}, t - h).psi) / (2 * h);
      const auto s = g.sample({x, 0}, t);
      const Complex d2 = (g.sample({x + h, 0}, t).psi - 2.0 * s.psi + g.sample({x - h, 0}, t).psi) / (h * h);
      CHECK(std::abs(s.second[0] - d2) < 1e-4 * (std::abs(d2) + 1.0));
      CHECK(std::abs(kI * dt + s.second[0] / (2 * 1.3)) < 1e-6 * (std::abs(dt) + 1.0));
    }
  }
}

TEST_CASE("split-step evolution") {
  std::vector<GridAxis> axes{{-20.0, 20.0, 512}};
  GridWaveFunction wf(axes, Boundary::Periodic, gaussian_values(axes, 1.0, 0.5, -3.0));
  wf.normalize();

  SUBCASE("free packet variance law") {
    const double t = 4.0;
    auto out = evolve_splitstep(wf, {}, 0.05, 80);
    const double tau = t / 2.0;
    CHECK(position_variance(out) == doctest::Approx(1.0 + tau * tau).epsilon(1e-3));
    CHECK(std::abs(out.norm() - 1.0) < 1e-9);
    CHECK(out.time() == doctest::Approx(t));
  }
  SUBCASE("zero steps is the identity") {
    auto out = evolve_splitstep(wf, {}, 0.1, 0);
    for (std::size_t i = 0; i < wf.size(); ++i) CHECK(out.values()[i] == wf.values()[i]);
  }
  SUBCASE("second-order convergence in dt") {
    std::vector<GridAxis> ax{{-10.0, 10.0, 256}};
    GridWaveFunction g(ax, Boundary::Periodic, gaussian_values(ax, 0.8, 1.0, 1.0));
    g.normalize();
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * g.node(i)[0] * g.node(i)[0];
    const double T = 1.0;
    auto a = evolve_splitstep(g, v, 0.02, static_cast<int>(T / 0.02 + 0.5));
    auto b = evolve_splitstep(g, v, 0.01, static_cast<int>(T / 0.01 + 0.5));
    auto c = evolve_splitstep(g, v, 0.005, static_cast<int>(T / 0.005 + 0.5));
    const double order = std::log2(l2_distance(a, b) / l2_distance(b, c));
    CHECK(order == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::abs(c.norm() - 1.0) < 1e-9);
  }
  SUBCASE("errors") {
    std::vector<double> v(wf.size(), 0.0);
    v[3] = 100.0;
    CHECK_THROWS_AS(evolve_splitstep(wf, v, 0.1, 1), ValidationError);
    CHECK_THROWS_AS(evolve_splitstep(wf, {}, -0.1, 1), ValidationError);
    std::vector<double> short_v(3, 0.0);
    CHECK_THROWS_AS(evolve_splitstep(wf, short_v, 0.1, 1), ValidationError);
    // a kink-like state is not band-limited on this grid
    std::vector<Complex> rough(wf.size());
    for (std::size_t i = 0; i < rough.size(); ++i) rough[i] = (i % 2) ? 1.0 : -1.0;
    GridWaveFunction r(axes, Boundary::Periodic, rough);
    CHECK_FALSE(r.resolved());
    CHECK_THROWS_AS(evolve_splitstep(r, {}, 0.1, 1), ValidationError);
  }
}

TEST_CASE("hard-wall grid reproduces box eigenmode evolution") {
  std::vector<BoxMode> modes{{{1, 2}, 0.6}, {{3, 1}, Complex(0.0, 0.8)}};
  auto field = build_box_superposition(2, modes);
  std::vector<GridAxis> axes{{0.0, 1.0, 31}, {0.0, 1.0, 31}};
  auto g = GridWaveFunction::from_field(field, axes, Boundary::HardWall, 0.0);
  CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-12));
  auto out = evolve_splitstep(g, {}, 0.01, 25);
  auto exact = GridWaveFunction::from_field(field, axes, Boundary::HardWall, 0.25);
  CHECK(l2_distance(out, exact) < 1e-11);
  const Config p{0.234, 0.681};
  const auto s = out.interpolate(p);
  const auto e = field.sample(p, 0.25);
  CHECK(std::abs(s.psi - e.psi) < 1e-11);
  CHECK(std::abs(s.grad[0] - e.grad[0]) < 1e-9);
  CHECK(std::abs(s.grad[1] - e.grad[1]) < 1e-9);
  CHECK(std::abs(s.second[1] - e.second[1]) < 1e-8);
}

TEST_CASE("density, phase gradient and current") {
  SUBCASE("real ground state has no phase gradient") {
    std::vector<BoxMode> modes{{{1, 1}, 1.0}};
    auto wf = build_box_superposition(2, modes);
    auto f = density_phase_current(wf, {0.3, 0.8}, 2.0);
    CHECK_FALSE(f.at_node());
    CHECK(std::abs(f.phase_gradient()[0]) < 1e-14);
    CHECK(std::abs(f.phase_gradient()[1]) < 1e-14);
  }
  SUBCASE("plane wave on a periodic grid") {
    const double k = 2 * kPi * 3;
    std::vector<GridAxis> axes{{0.0, 1.0, 32}};
    std::vector<Complex> v(32);
    for (int i = 0; i < 32; ++i) v[i] = std::polar(1.0, k * axes[0].coordinate(i, Boundary::Periodic));
    GridWaveFunction g(axes, Boundary::Periodic, v, 0.0, {2.0, 1.0});
    auto f = density_phase_current(g, {0.4137, 0.0});
    CHECK(f.velocity()[0] == doctest::Approx(k / 2.0).epsilon(1e-12));
    CHECK(f.current()[0] == doctest::Approx(k / 2.0).epsilon(1e-12));
    const auto j = g.current_at_nodes();
    for (double ji : j[0]) CHECK(ji == doctest::Approx(k / 2.0).epsilon(1e-10));
  }
  SUBCASE("two-mode phase gradient matches a finite difference of the unwrapped phase") {
    std::vector<BoxMode> modes{{{1, 0}, 0.6}, {{2, 0}, Complex(0.0, 0.8)}};
    auto wf = build_box_superposition(1, modes);
    const double t = 0.13, x = 0.37, h = 1e-6;
    // unwrap with the phase relative to the centre point
    const Complex c = wf.sample({x, 0}, t).psi;
    const double sp = std::arg(wf.sample({x + h, 0}, t).psi / c);
    const double sm = std::arg(wf.sample({x - h, 0}, t).psi / c);
    const double fd = (sp - sm) / (2 * h);
    auto f = density_phase_current(wf, {x, 0}, t);
    CHECK(std::abs(f.phase_gradient()[0] - fd) < 1e-6);
    CHECK(f.current()[0] == doctest::Approx(f.density() * f.velocity()[0]));
  }
  SUBCASE("node is flagged") {
    std::vector<BoxMode> modes{{{2, 0}, 1.0}};
    auto wf = build_box_superposition(1, modes);
    auto f = density_phase_current(wf, {0.5, 0}, 0.3);
    CHECK(f.at_node());
    CHECK_THROWS_AS(f.velocity(), NodeError);
    CHECK_THROWS_AS(f.current(), NodeError);
    CHECK_THROWS_AS(guidance_velocity(wf.sample({0.5, 0}, 0.3), wf.masses(), 1, wf.reference_density()), NodeError);
    CHECK_THROWS_AS(density_phase_current(wf, {1.5, 0}, 0.3), ValidationError);
  }
  SUBCASE("velocity divergence matches finite differences") {
    auto wf = equal_weight_box_superposition(2, 3, 21);
    const Config x{0.41, 0.27};
    const double t = 0.2, h = 1e-6;
    double div = 0;
    for (int a = 0; a < 2; ++a) {
      Config xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      div += (guidance_velocity(wf.sample(xp, t), wf.masses(), 2, 1.0)[a] -
              guidance_velocity(wf.sample(xm, t), wf.masses(), 2, 1.0)[a]) /
             (2 * h);
    }
    CHECK(velocity_divergence(wf.sample(x, t), wf.masses(), 2) == doctest::Approx(div).epsilon(1e-5));
  }
}

TEST_CASE("grid continuity equation") {
  std::vector<BoxMode> modes{{{1, 0}, 0.6}, {{2, 0}, 0.64}, {{3, 0}, Complex(0.0, 0.48)}};
  auto field = build_box_superposition(1, modes);
  std::vector<GridAxis> axes{{0.0, 1.0, 63}};
  auto g = GridWaveFunction::from_field(field, axes, Boundary::HardWall, 0.0);
  const double d = 1e-5;
  auto plus = evolve_splitstep(g, {}, d, 1);
  // backward step from the analytic state at -d
  auto minus = GridWaveFunction::from_field(field, axes, Boundary::HardWall, -d);
  const auto div = g.divergence(g.current_at_nodes());
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double drho = (std::norm(plus.values()[i]) - std::norm(minus.values()[i])) / (2 * d);
    worst = std::max(worst, std::abs(drho + div[i]));
    scale = std::max(scale, std::abs(div[i]));
  }
  CHECK(worst < 1e-6 * scale);
}
