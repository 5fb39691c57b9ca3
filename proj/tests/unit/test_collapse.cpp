#include <cmath>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "doctest.h"
#include "neqlab/collapse.hpp"
#include "neqlab/rng.hpp"

using namespace neqlab;
using namespace neqlab::collapse;

namespace {

CMatrix diag2(double a, double b) {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

CVector qubit(double p0) {
  CVector v(2);
  v << std::sqrt(p0), std::sqrt(1.0 - p0);
  return v;
}

// Normalized oscillator eigenfunction in units of the oscillator length, by the stable recurrence.
double hermite_function(int n, double u) {
  double h0 = std::pow(kPi, -0.25) * std::exp(-0.5 * u * u);
  if (n == 0) return h0;
  double h1 = std::sqrt(2.0) * u * h0;
  for (int k = 2; k <= n; ++k) {
    const double h2 = std::sqrt(2.0 / k) * u * h1 - std::sqrt((k - 1.0) / k) * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

// Off-diagonal decay rate between two far-apart packets, relative to a run without collapse.
double grid_decay_rate(double lambda, double coupling, double t) {
  const LineGrid g{128, 32.0};
  const auto rho0 = gaussian_packets_density(g, {-8.0, 8.0}, 0.7, {Complex(1, 0), Complex(1, 0)});
  MasterParams p;
  p.lambda = lambda;
  p.coupling = coupling;
  p.mass = 5.0;
  const int steps = 50;
  const auto on = particle_master_equation(rho0, p, t / steps, steps);
  p.lambda = 0.0;
  const auto off = particle_master_equation(rho0, p, t / steps, steps);
  const double c_on = block_coherence(on, 0, 64, 64, 128), c_off = block_coherence(off, 0, 64, 64, 128);
  return -std::log(c_on / c_off) / t;
}

}  // namespace

TEST_CASE("gambler's ruin is a fair game") {
  const auto r = gambler_ruin(0.3, 0.1, 20000, 5);
  CHECK(std::abs(r.win_frequency - 0.3) <= 3 * r.win_sigma);
  CHECK(r.max_abs_z < 3.5);
  CHECK(r.mean_fraction.front() == doctest::Approx(0.3));
  // expected absorption time k (K - k) = 21 tosses
  CHECK(r.mean_absorption_steps == doctest::Approx(21.0).epsilon(0.05));
  CHECK_THROWS_AS(gambler_ruin(0.25, 0.1, 10, 1), ValidationError);
  CHECK_THROWS_AS(gambler_ruin(1.5, 0.1, 10, 1), ValidationError);
}

TEST_CASE("operator set joint eigenbasis") {
  SUBCASE("degenerate operators split into sectors") {
    CMatrix a = CMatrix::Zero(3, 3), b = CMatrix::Zero(3, 3);
    a.diagonal() << 1, 1, 0;
    b.diagonal() << 0, 2, 2;
    CollapseOperatorSet ops({a, b});
    CHECK(ops.sectors() == 3);
    CollapseOperatorSet single({a});
    CHECK(single.sectors() == 2);
    CHECK(single.spectral_range() == doctest::Approx(1.0));
  }
  SUBCASE("non-diagonal commuting operators") {
    CMatrix x(2, 2);
    x << 0, 1, 1, 0;
    CollapseOperatorSet ops({x});
    for (int n = 0; n < 2; ++n) {
      const CVector v = ops.basis().col(n);
      CHECK((x * v - ops.eigenvalues()(0, n) * v).norm() < 1e-12);
    }
  }
  CMatrix x(2, 2), z = diag2(1, -1);
  x << 0, 1, 1, 0;
  CHECK_THROWS_AS(CollapseOperatorSet({x, z}), ValidationError);
  CMatrix nh(2, 2);
  nh << 0, 1, 0, 0;
  CHECK_THROWS_AS(CollapseOperatorSet({nh}), ValidationError);
  CHECK_THROWS_AS(CollapseOperatorSet({}), ValidationError);
}

TEST_CASE("single path obeys the closed-form amplitude law") {
  const CollapseOperatorSet ops({diag2(-0.5, 0.5)});
  CslOptions opt;
  opt.t_end = 2.0;
  opt.keep_noise = true;
  const CVector psi = qubit(0.4);
  for (auto scheme : {NoiseScheme::Cooked, NoiseScheme::Raw}) {
    opt.scheme = scheme;
    const auto run = simulate_csl(ops, psi, opt, 9);
    // x_n(t) proportional to |alpha_n|^2 exp(-(dt / 2 lambda) sum_j (w_j - 2 lambda a_n)^2)
    std::vector<double> logx(2);
    for (int n = 0; n < 2; ++n) {
      const double a = ops.eigenvalues()(0, n);
      double s = 0.0;
      for (const auto& w : run.noise) s += (w[0] - 2.0 * opt.lambda * a) * (w[0] - 2.0 * opt.lambda * a);
      logx[n] = std::log(std::norm((ops.basis().adjoint() * psi)(n))) - run.dt / (2.0 * opt.lambda) * s;
    }
    const double m = std::max(logx[0], logx[1]);
    const double z = std::exp(logx[0] - m) + std::exp(logx[1] - m);
    for (int n = 0; n < 2; ++n) CHECK(run.x.back()[n] == doctest::Approx(std::exp(logx[n] - m) / z).epsilon(1e-9));
    CHECK(run.norms.back() == doctest::Approx(1.0));
  }
  SUBCASE("an eigenstate stays put and the noise mean is 2 lambda a") {
    opt.scheme = NoiseScheme::Cooked;
    opt.t_end = 20.0;
    const auto run = simulate_csl(ops, qubit(1.0), opt, 3);
    const double a = ops.eigenvalues()(0, 0) * 1.0;
    double mean = 0.0;
    for (const auto& w : run.noise) mean += w[0];
    mean /= static_cast<double>(run.noise.size());
    const double sigma = std::sqrt(opt.lambda / run.dt / run.noise.size());
    const int n = std::abs(run.x.back()[0] - 1.0) < 1e-12 ? 0 : 1;
    CHECK(std::abs(mean - 2.0 * opt.lambda * ops.eigenvalues()(0, n)) < 4 * sigma);
    (void)a;
  }
  SUBCASE("the same seed reproduces the path") {
    const auto a = simulate_csl(ops, psi, opt, 77), b = simulate_csl(ops, psi, opt, 77);
    CHECK(a.x.back() == b.x.back());
  }
  CHECK_THROWS_AS(simulate_csl(ops, CVector::Ones(2), opt, 1), ValidationError);
  opt.dt = 1.0;
  CHECK_THROWS_AS(simulate_csl(ops, psi, opt, 1), ValidationError);
}

TEST_CASE("two-level ensemble statistics") {
  const CollapseOperatorSet ops({diag2(-0.5, 0.5)});
  const CVector psi = qubit(0.3);
  const double p0 = std::norm((ops.basis().adjoint() * psi)(0));
  CslOptions opt;
  opt.t_end = 8.0;
  opt.record_every = 100;
  const auto cooked = csl_ensemble(ops, psi, opt, 2000, 41);
  const auto f = outcome_frequencies(cooked);
  CHECK(std::abs(f[0].value - p0) <= 3 * f[0].sigma);
  CHECK(effective_sample_size(cooked) == doctest::Approx(2000.0));

  const auto mg = martingale_diagnostics(cooked);
  CHECK(mg.sums_to_one);
  CHECK(mg.drift_ok);
  CHECK(mg.collapsed_fraction > 0.8);

  SUBCASE("off-diagonal average decays at lambda (a1 - a2)^2 / 2") {
    const CMatrix rho0 = ops.basis().adjoint() * psi * psi.adjoint() * ops.basis();
    for (std::size_t k = 1; k < cooked.runs.front().times.size(); k += 2) {
      const double t = cooked.runs.front().times[k];
      const auto d = ensemble_density(cooked, k);
      const double expect = std::abs(rho0(0, 1)) * std::exp(-0.5 * opt.lambda * t);
      CAPTURE(t);
      CHECK(std::abs(std::abs(d.rho(0, 1)) - expect) <= 3 * std::hypot(d.sigma_re(0, 1), d.sigma_im(0, 1)) + 1e-12);
      const auto exact = density_matrix_csl(psi * psi.adjoint(), ops, opt.lambda, t);
      CHECK(std::abs(CMatrix(ops.basis().adjoint() * exact.rho * ops.basis())(0, 1)) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("raw weights reproduce the cooked frequencies") {
    // weight log-variance grows like lambda t, so compare before the raw sample degenerates
    opt.t_end = 2.0;
    const auto fc = outcome_frequencies(csl_ensemble(ops, psi, opt, 2000, 42));
    opt.scheme = NoiseScheme::Raw;
    const auto raw = csl_ensemble(ops, psi, opt, 2000, 43);
    const auto fr = outcome_frequencies(raw);
    CHECK(std::abs(fr[0].value - fc[0].value) <= 3 * std::hypot(fr[0].sigma, fc[0].sigma));
    CHECK(effective_sample_size(raw) > 200);
    CHECK(effective_sample_size(raw) < 2000);
    CHECK(martingale_diagnostics(raw).drift_ok);
  }
  SUBCASE("a biased noise source breaks the martingale") {
    opt.noise_bias = 0.5;
    const auto bad = csl_ensemble(ops, psi, opt, 2000, 41);
    CHECK_FALSE(martingale_diagnostics(bad).drift_ok);
  }
  SUBCASE("worker count does not change the ensemble") {
    opt.t_end = 1.0;
    const auto a = csl_ensemble(ops, psi, opt, 50, 5, 1), b = csl_ensemble(ops, psi, opt, 50, 5, 3);
    for (std::size_t i = 0; i < 50; ++i) CHECK(a.runs[i].x.back() == b.runs[i].x.back());
  }
  CHECK(collapse_run_table(cooked.runs.front()).rows() == cooked.runs.front().times.size());
}

TEST_CASE("cooked scheme with a Hamiltonian keeps Born statistics") {
  CMatrix h(2, 2);
  h << 0, 0.3, 0.3, 0;
  const CollapseOperatorSet ops({diag2(-0.5, 0.5)}, h);
  const CVector psi = qubit(0.5);
  CslOptions opt;
  opt.t_end = 2.0;
  opt.record_every = 50;
  const auto ens = csl_ensemble(ops, psi, opt, 2000, 8);
  const auto exact = density_matrix_csl(psi * psi.adjoint(), ops, opt.lambda, opt.t_end);
  CHECK_FALSE(exact.closed_form);
  const CMatrix rb = ops.basis().adjoint() * exact.rho * ops.basis();
  const auto d = ensemble_density(ens, ens.runs.front().times.size() - 1);
  CHECK(std::abs(d.rho(0, 0).real() - rb(0, 0).real()) <= 3 * d.sigma_re(0, 0));
}

TEST_CASE("density matrix evolution") {
  CMatrix h(2, 2);
  h << 0.2, 0.5, 0.5, -0.2;
  const CollapseOperatorSet with_h({diag2(-0.5, 0.5)}, h);
  const CollapseOperatorSet no_h({diag2(-0.5, 0.5)});
  const CVector psi = qubit(0.3);
  const CMatrix rho0 = psi * psi.adjoint();
  SUBCASE("closed form satisfies the Lindblad equation") {
    const double t = 0.7, step = 1e-4;
    const CMatrix fd = (density_matrix_csl(rho0, no_h, 1.3, t + step).rho - density_matrix_csl(rho0, no_h, 1.3, t - step).rho) /
                       (2 * step);
    const CMatrix rhs = lindblad_rhs(no_h, density_matrix_csl(rho0, no_h, 1.3, t).rho, 1.3);
    CHECK((fd - rhs).cwiseAbs().maxCoeff() < 1e-7);
  }
  SUBCASE("Runge-Kutta converges and preserves trace and positivity") {
    const auto coarse = density_matrix_csl(rho0, with_h, 1.0, 3.0, 0.01);
    const auto fine = density_matrix_csl(rho0, with_h, 1.0, 3.0, 0.001);
    CHECK((coarse.rho - fine.rho).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fine.trace_error < 1e-12);
    CHECK(fine.positive);
  }
  SUBCASE("ensemble derivative matches the Lindblad right-hand side") {
    CslOptions opt;
    opt.t_end = 0.5;
    opt.record_every = 5;
    const auto ens = csl_ensemble(no_h, psi, opt, 4000, 12);
    const auto& times = ens.runs.front().times;
    const std::size_t k = 5;
    const auto lo = ensemble_density(ens, k - 1), hi = ensemble_density(ens, k + 1);
    const double span = times[k + 1] - times[k - 1];
    const Complex fd = (hi.rho(0, 1) - lo.rho(0, 1)) / span;
    const CMatrix exact = no_h.basis().adjoint() * density_matrix_csl(rho0, no_h, 1.0, times[k]).rho * no_h.basis();
    const CMatrix rhs = no_h.basis().adjoint() * lindblad_rhs(no_h, no_h.basis() * exact * no_h.basis().adjoint(), 1.0) * no_h.basis();
    const double mc = std::hypot(hi.sigma_re(0, 1), lo.sigma_re(0, 1)) / span;
    CHECK(std::abs(fd.real() - rhs(0, 1).real()) <= 3 * mc + 1e-3);
  }
  CHECK_THROWS_AS(density_matrix_csl(2.0 * rho0, no_h, 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(density_matrix_csl(CMatrix::Identity(3, 3) / 3.0, no_h, 1.0, 1.0), ValidationError);
}

TEST_CASE("position master equation") {
  SUBCASE("far-apart packets decohere at lambda g^2") {
    const double rate = grid_decay_rate(0.2, 1.0, 1.0);
    CHECK(rate == doctest::Approx(0.2).epsilon(0.01));
  }
  SUBCASE("coupling N gives a lambda N^2 slope") {
    std::vector<double> lx, ly;
    for (double n : {1.0, 2.0, 4.0, 8.0}) {
      lx.push_back(std::log(n));
      ly.push_back(std::log(grid_decay_rate(0.01, n, 1.0)));
    }
    const double mx = (lx[0] + lx[1] + lx[2] + lx[3]) / 4, my = (ly[0] + ly[1] + ly[2] + ly[3]) / 4;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 4; ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    CHECK(sxy / sxx == doctest::Approx(2.0).epsilon(0.02));
  }
  SUBCASE("energy grows at lambda g^2 hbar^2 / (4 m a^2) per axis") {
    const LineGrid g{128, 32.0};
    const auto rho0 = gaussian_packets_density(g, {0.0}, 1.0, {Complex(1, 0)});
    MasterParams p;
    p.lambda = 0.1;
    const auto rho1 = particle_master_equation(rho0, p, 0.01, 100);
    const double slope = (line_energy(rho1, p) - line_energy(rho0, p)) / 1.0;
    CHECK(slope == doctest::Approx(energy_gain_rate_1d(p.mass, p.coupling, p.lambda, p.a)).epsilon(0.05));
    CHECK(line_trace(rho1) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("a free packet keeps its kinetic energy without collapse") {
    const LineGrid g{128, 32.0};
    const auto rho0 = gaussian_packets_density(g, {0.0}, 1.0, {Complex(1, 0)});
    MasterParams p;
    p.lambda = 0.0;
    const auto rho1 = particle_master_equation(rho0, p, 0.05, 20);
    // |psi|^2 std 1 gives <p^2> = 1/4
    CHECK(line_energy(rho0, p) == doctest::Approx(0.125).epsilon(1e-6));
    CHECK(line_energy(rho1, p) == doctest::Approx(line_energy(rho0, p)).epsilon(1e-10));
  }
  MasterParams p;
  p.a = 0.1;
  CHECK_THROWS_AS(particle_master_equation(gaussian_packets_density({}, {0.0}, 1.0, {Complex(1, 0)}), p, 0.01, 1),
                  ValidationError);
}

TEST_CASE("SI consequences") {
  const CslParams p;
  SUBCASE("energy gain per nucleon") {
    const double ev_per_s = energy_gain_rate({Constants::proton_mass}, p) / Constants::electron_volt;
    CHECK(ev_per_s == doctest::Approx(3.1e-25).epsilon(0.05));
    CHECK(energy_gain_rate({Constants::proton_mass, Constants::proton_mass}, p) == doctest::Approx(2 * ev_per_s * Constants::electron_volt));
    // an electron couples with g = m_e / m_p
    const double ratio = energy_gain_rate({Constants::electron_mass}, p) / energy_gain_rate({Constants::proton_mass}, p);
    CHECK(ratio == doctest::Approx(Constants::electron_mass / Constants::proton_mass));
  }
  SUBCASE("clump random walk") {
    const double n = sphere_nucleons(1e-7, 1000.0);
    CHECK(n == doctest::Approx(2.504e9).epsilon(1e-3));
    const auto w = random_walk_predictions(n, p, 86400.0);
    CHECK(w.size == doctest::Approx(4.48e-9).epsilon(0.01));
    CHECK(w.settle_time == doctest::Approx(0.79).epsilon(0.02));
    CHECK(w.rms_scaling == doctest::Approx(0.1601).epsilon(0.01));
    CHECK(w.rms_per_axis == doctest::Approx(w.rms_scaling / std::sqrt(6.0)));
    CHECK(w.within_validity);
    CHECK_FALSE(random_walk_predictions(n, p, 1.0, 1e-6).within_validity);
  }
  SUBCASE("interference verdicts") {
    const auto mercury = interference_criterion(1e8, 0.01, Constants::reference_lambda);
    CHECK(mercury.ratio == doctest::Approx(1.0));
    CHECK(mercury.verdict == InterferenceVerdict::Testable);
    CHECK(interference_criterion(1e3, 1.0, Constants::reference_lambda).verdict == InterferenceVerdict::Agrees);
    CHECK(interference_criterion(1e10, 1.0, Constants::reference_lambda).verdict == InterferenceVerdict::Excluded);
    CHECK(to_string(InterferenceVerdict::Testable) == "testable");
    CHECK(mercury.decay_factor == doctest::Approx(std::exp(-0.01)));
  }
  SUBCASE("unit system round trips") {
    const UnitSystem u;
    for (double v : {1e-3, 1.0, 7.5e4}) {
      CHECK(u.length_from_si(u.length_to_si(v)) == doctest::Approx(v).epsilon(1e-12));
      CHECK(u.time_from_si(u.time_to_si(v)) == doctest::Approx(v).epsilon(1e-12));
      CHECK(u.energy_from_si(u.energy_to_si(v)) == doctest::Approx(v).epsilon(1e-12));
      CHECK(u.rate_from_si(u.rate_to_si(v)) == doctest::Approx(v).epsilon(1e-12));
    }
    // hbar = 1: energy times time is hbar in SI
    CHECK(u.energy_j() * u.time_s() == doctest::Approx(Constants::hbar));
  }
  SUBCASE("constants file mirrors the code") {
    std::ifstream in(std::string(NEQLAB_DATA_DIR) + "/csl_constants.json");
    REQUIRE(in.good());
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("hbar_J_s").get<double>() == Constants::hbar);
    CHECK(j.at("proton_mass_kg").get<double>() == Constants::proton_mass);
    CHECK(j.at("neutron_mass_kg").get<double>() == Constants::neutron_mass);
    CHECK(j.at("electron_mass_kg").get<double>() == Constants::electron_mass);
    CHECK(j.at("electron_volt_J").get<double>() == Constants::electron_volt);
    CHECK(j.at("reference_lambda_per_s").get<double>() == Constants::reference_lambda);
    CHECK(j.at("reference_a_m").get<double>() == Constants::reference_a);
  }
  CHECK_THROWS_AS(random_walk_predictions(-1.0, p, 1.0), ValidationError);
  CHECK_THROWS_AS(energy_gain_rate({1.0}, CslParams{1.0, -1.0, 1.0}), ValidationError);
}

TEST_CASE("internal excitation") {
  SUBCASE("couplings proportional to mass cancel the dipole term") {
    const HarmonicPair sys{1.7, 0.3, 2.0, 0, 1, 1.0};
    const auto r = excitation_rate(sys, 1.0, 1.0, 1.0);
    CHECK(std::abs(r.dipole_element) <= 1e-12);
    CHECK(r.gamma <= 1e-24);
    CHECK(r.quadrupole_estimate > 0.0);
  }
  SUBCASE("unequal couplings match quadrature") {
    for (int n0 : {0, 1, 3}) {
      for (int n : {n0 + 1, n0 - 1}) {
        if (n < 0) continue;
        const HarmonicPair sys{1.0, 2.0, 1.5, n0, n, 1.0};
        const std::array<double, 2> g{1.0, -0.5};
        const auto r = excitation_rate(sys, 0.8, 0.6, 1.0, g);
        // x1 - <X> = (m2/M) r, x2 = -(m1/M) r, so sum g_i x_i = (g1 m2 - g2 m1)/M r
        const double ell = sys.size();
        const int m = 40001;
        const double span = 14.0, h = 2 * span / (m - 1);
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
          const double u = -span + i * h;
          const double wgt = (i == 0 || i == m - 1) ? 0.5 : 1.0;
          s += wgt * hermite_function(n, u) * u * hermite_function(n0, u);
        }
        const double element = s * h * ell * (g[0] * sys.m2 - g[1] * sys.m1) / (sys.m1 + sys.m2);
        CAPTURE(n0);
        CAPTURE(n);
        CHECK(r.dipole_element == doctest::Approx(element).epsilon(1e-6));
        CHECK(std::abs(r.dipole_element) > 0.1);
        CHECK(r.gamma == doctest::Approx(0.8 / (2 * 0.36) * element * element).epsilon(1e-6));
      }
    }
  }
  CHECK_THROWS_AS(excitation_rate(HarmonicPair{1, 1, 1, 2, 2, 1}, 1, 1), ValidationError);
  CHECK_THROWS_AS(excitation_rate(HarmonicPair{-1, 1, 1, 0, 1, 1}, 1, 1), ValidationError);
}

TEST_CASE("discrete hits") {
  const LineGrid g{512, 32.0};
  SUBCASE("kernel squared integrates to one") {
    double s = 0.0;
    for (int i = 0; i < 4000; ++i) {
      const double u = -10 + (i + 0.5) * 0.005;
      s += hit_kernel(u, 1.3) * hit_kernel(u, 1.3) * 0.005;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("a packet much narrower than a is barely disturbed") {
    const auto psi = gaussian_packets_state(g, {1.0}, 0.1, {Complex(1, 0)});
    const auto run = sl_hit_process(psi, 1.0, 1.0, 10.0, 4, 1);
    REQUIRE(run.hits.size() == 1);
    Complex overlap{};
    for (int i = 0; i < g.n; ++i) overlap += std::conj(psi.psi[i]) * run.state.psi[i] * g.dx();
    CHECK(std::norm(overlap) > 0.99);
    CHECK(run.state.norm() == doctest::Approx(1.0));
  }
  SUBCASE("two-location superposition gives Born frequencies") {
    const auto psi = gaussian_packets_state(g, {-5.0, 5.0}, 0.2, {Complex(std::sqrt(0.3), 0), Complex(std::sqrt(0.7), 0)});
    const int runs = 2000;
    int left = 0;
    for (int r = 0; r < runs; ++r) {
      const auto run = sl_hit_process(psi, 1.0, 1.0, 5.0, stream_seed(17, r));
      double w = 0.0;
      for (int i = 0; i < g.n / 2; ++i) w += std::norm(run.state.psi[i]) * g.dx();
      if (w > 0.5) ++left;
    }
    const double f = static_cast<double>(left) / runs;
    CHECK(std::abs(f - 0.3) <= 3 * std::sqrt(0.3 * 0.7 / runs));
  }
  SUBCASE("rate zero leaves the state alone") {
    const auto psi = gaussian_packets_state(g, {0.0}, 1.0, {Complex(1, 0)});
    CHECK(sl_hit_process(psi, 0.0, 1.0, 100.0, 1).hits.empty());
  }
}

TEST_CASE("clump coherence decays at lambda N") {
  for (int n : {1, 4}) {
    ClumpConfig cfg;
    cfg.particles = n;
    std::vector<double> times;
    for (int k = 1; k <= 10; ++k) times.push_back(0.1 * k / n);
    const auto c = sl_clump_collapse(cfg, times, 4000, 31);
    CAPTURE(n);
    CHECK(c.fitted_rate == doctest::Approx(cfg.rate * n).epsilon(0.1));
    CHECK(c.runs.size() == 4000);
  }
  ClumpConfig bad;
  bad.amplitudes = {Complex(1, 0), Complex(0, 0)};
  CHECK_THROWS_AS(sl_clump_collapse(bad, {1.0}, 10, 1), ValidationError);
}
