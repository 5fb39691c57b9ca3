#include "neqlab/wavefield.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "neqlab/rng.hpp"

namespace neqlab::wavefield {

bool GuidingField::contains(const Config& x, double slack) const {
  const Config lo = lower();
  const Config hi = upper();
  for (int a = 0; a < dims(); ++a) {
    if (x[a] < lo[a] - slack || x[a] > hi[a] + slack) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// LocalFlow

LocalFlow::LocalFlow(double density, bool at_node, std::array<double, 2> phase_gradient, std::array<double, 2> masses)
    : density_(density), at_node_(at_node), phase_gradient_(phase_gradient), masses_(masses) {}

std::array<double, 2> LocalFlow::phase_gradient() const {
  if (at_node_) throw NodeError();
  return phase_gradient_;
}

std::array<double, 2> LocalFlow::velocity() const {
  const auto g = phase_gradient();
  return {g[0] / masses_[0], g[1] / masses_[1]};
}

std::array<double, 2> LocalFlow::current() const {
  const auto v = velocity();
  return {density_ * v[0], density_ * v[1]};
}

namespace {

LocalFlow flow_from_sample(const FieldSample& s, int dims, std::array<double, 2> masses, double node_density) {
  const double rho = std::norm(s.psi);
  const bool node = !(rho >= kNodeThreshold * node_density);
  std::array<double, 2> grad_s{0.0, 0.0};
  if (!node) {
    for (int a = 0; a < dims; ++a) grad_s[a] = std::imag(s.grad[a] * std::conj(s.psi)) / rho;
  }
  return LocalFlow(rho, node, grad_s, masses);
}

}  // namespace

LocalFlow density_phase_current(const GuidingField& wf, const Config& x, double t) {
  if (!wf.contains(x)) throw ValidationError("density_phase_current: point outside the domain");
  return flow_from_sample(wf.sample(x, t), wf.dims(), wf.masses(), wf.reference_density());
}

std::array<double, 2> guidance_velocity(const FieldSample& s, std::array<double, 2> masses, int dims,
                                        double node_density) {
  const double rho = std::norm(s.psi);
  if (!(rho >= kNodeThreshold * node_density)) throw NodeError();
  std::array<double, 2> v{0.0, 0.0};
  for (int a = 0; a < dims; ++a) v[a] = std::imag(s.grad[a] * std::conj(s.psi)) / (rho * masses[a]);
  return v;
}

double velocity_divergence(const FieldSample& s, std::array<double, 2> masses, int dims) {
  double div = 0.0;
  for (int a = 0; a < dims; ++a) {
    const Complex g = s.grad[a] / s.psi;
    div += std::imag(s.second[a] / s.psi - g * g) / masses[a];
  }
  return div;
}

// ---------------------------------------------------------------------------
// EigenmodeWaveFunction

namespace {

constexpr int kMaxModeIndex = 64;
constexpr int kMaxPhaseLevel = 256;

double norm_squared(std::span<const BoxMode> modes) {
  double s = 0.0;
  for (const auto& m : modes) s += std::norm(m.amplitude);
  return s;
}

std::array<int, 2> canonical_index(const std::array<int, 2>& n, int dims) {
  return dims == 1 ? std::array<int, 2>{n[0], 0} : n;
}

void check_modes(int dims, std::span<const BoxMode> modes) {
  if (modes.empty()) throw ValidationError("box superposition: empty mode list");
  std::set<std::array<int, 2>> seen;
  for (const auto& m : modes) {
    const auto idx = canonical_index(m.n, dims);
    for (int a = 0; a < dims; ++a) {
      if (idx[a] < 1) throw ValidationError("box superposition: mode indices must be >= 1");
      if (idx[a] > kMaxModeIndex) throw ValidationError("box superposition: mode index above 64");
    }
    if (!seen.insert(idx).second) throw ValidationError("box superposition: duplicate mode");
  }
}

}  // namespace

EigenmodeWaveFunction::EigenmodeWaveFunction(int dims, double box_side, std::vector<BoxMode> modes, double t0,
                                             std::array<double, 2> masses)
    : dims_(dims), box_side_(box_side), modes_(std::move(modes)), t0_(t0), masses_(masses) {
  if (dims_ != 1 && dims_ != 2) throw ValidationError("box superposition: dims must be 1 or 2");
  if (!(box_side_ > 0.0)) throw ValidationError("box superposition: box side must be positive");
  if (!(masses_[0] > 0.0) || (dims_ == 2 && !(masses_[1] > 0.0)))
    throw ValidationError("box superposition: masses must be positive");
  check_modes(dims_, modes_);
  for (auto& m : modes_) m.n = canonical_index(m.n, dims_);
  if (std::abs(norm_squared(modes_) - 1.0) > 1e-12)
    throw ValidationError("box superposition: amplitudes are not normalized");
  energies_.reserve(modes_.size());
  for (const auto& m : modes_) {
    energies_.push_back(energy(m.n));
    max_index_ = std::max({max_index_, m.n[0], m.n[1]});
  }
  if (dims_ == 1 || masses_[0] == masses_[1]) {
    int top = 0;
    for (const auto& m : modes_) top = std::max(top, m.n[0] * m.n[0] + m.n[1] * m.n[1]);
    if (top <= kMaxPhaseLevel) {
      energy_quantum_ = kPi * kPi / (2.0 * masses_[0] * box_side_ * box_side_);
      for (const auto& m : modes_) levels_.push_back(m.n[0] * m.n[0] + m.n[1] * m.n[1]);
      max_level_ = top;
    }
  }
}

double EigenmodeWaveFunction::energy(const std::array<int, 2>& n) const {
  double e = 0.0;
  for (int a = 0; a < dims_; ++a) {
    const double k = kPi * n[a] / box_side_;
    e += k * k / (2.0 * masses_[a]);
  }
  return e;
}

double EigenmodeWaveFunction::reference_density() const { return 1.0 / std::pow(box_side_, dims_); }

double EigenmodeWaveFunction::density_bound() const {
  double s = 0.0;
  for (const auto& m : modes_) s += std::abs(m.amplitude);
  return s * s * std::pow(2.0 / box_side_, dims_);
}

SpectrumStats EigenmodeWaveFunction::spectrum() const {
  double mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    const double w = std::norm(modes_[i].amplitude);
    mean += w * energies_[i];
    second += w * energies_[i] * energies_[i];
  }
  return {mean, std::sqrt(std::max(0.0, second - mean * mean))};
}

EigenmodeWaveFunction EigenmodeWaveFunction::with_masses(std::array<double, 2> masses) const {
  return EigenmodeWaveFunction(dims_, box_side_, modes_, t0_, masses);
}

FieldSample EigenmodeWaveFunction::sample(const Config& x, double t) const {
  // sin(n theta), cos(n theta) by angle addition, one table per axis
  std::array<std::array<double, kMaxModeIndex + 1>, 2> sn{}, cn{};
  const double k0 = kPi / box_side_;
  for (int a = 0; a < dims_; ++a) {
    const double s1 = std::sin(k0 * x[a]);
    const double c1 = std::cos(k0 * x[a]);
    sn[a][0] = 0.0;
    cn[a][0] = 1.0;
    for (int n = 1; n <= max_index_; ++n) {
      sn[a][n] = sn[a][n - 1] * c1 + cn[a][n - 1] * s1;
      cn[a][n] = cn[a][n - 1] * c1 - sn[a][n - 1] * s1;
    }
  }
  const double scale = std::pow(2.0 / box_side_, 0.5 * dims_);
  const double tau = t - t0_;
  double phase_re[kMaxPhaseLevel + 1], phase_im[kMaxPhaseLevel + 1];
  if (!levels_.empty()) {
    const double br = std::cos(energy_quantum_ * tau), bi = -std::sin(energy_quantum_ * tau);
    phase_re[0] = 1.0;
    phase_im[0] = 0.0;
    for (int k = 1; k <= max_level_; ++k) {
      phase_re[k] = phase_re[k - 1] * br - phase_im[k - 1] * bi;
      phase_im[k] = phase_re[k - 1] * bi + phase_im[k - 1] * br;
    }
  }
  FieldSample s;
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    const auto& n = modes_[i].n;
    const Complex rot = levels_.empty() ? std::polar(1.0, -energies_[i] * tau)
                                        : Complex(phase_re[levels_[i]], phase_im[levels_[i]]);
    const Complex c = scale * modes_[i].amplitude * rot;
    if (dims_ == 1) {
      const double kx = k0 * n[0];
      s.psi += c * sn[0][n[0]];
      s.grad[0] += c * (kx * cn[0][n[0]]);
      s.second[0] -= c * (kx * kx * sn[0][n[0]]);
    } else {
      const double kx = k0 * n[0];
      const double ky = k0 * n[1];
      const double phi = sn[0][n[0]] * sn[1][n[1]];
      s.psi += c * phi;
      s.grad[0] += c * (kx * cn[0][n[0]] * sn[1][n[1]]);
      s.grad[1] += c * (ky * sn[0][n[0]] * cn[1][n[1]]);
      s.second[0] -= c * (kx * kx * phi);
      s.second[1] -= c * (ky * ky * phi);
    }
  }
  return s;
}

EigenmodeWaveFunction build_box_superposition(int dims, std::span<const BoxMode> modes, double box_side,
                                              std::optional<std::uint64_t> phase_seed,
                                              std::array<double, 2> masses) {
  if (dims != 1 && dims != 2) throw ValidationError("box superposition: dims must be 1 or 2");
  check_modes(dims, modes);
  const double total = norm_squared(modes);
  if (!(total > 0.0)) throw ValidationError("box superposition: amplitudes are all zero");
  std::vector<BoxMode> out(modes.begin(), modes.end());
  if (phase_seed) {
    Rng rng(*phase_seed);
    for (auto& m : out) m.amplitude = std::polar(std::abs(m.amplitude), 2.0 * kPi * uniform01(rng));
  }
  const double scale = 1.0 / std::sqrt(total);
  for (auto& m : out) m.amplitude *= scale;
  return EigenmodeWaveFunction(dims, box_side, std::move(out), 0.0, masses);
}

EigenmodeWaveFunction equal_weight_box_superposition(int dims, int n_max, std::uint64_t phase_seed, double box_side) {
  if (n_max < 1) throw ValidationError("box superposition: n_max must be >= 1");
  std::vector<BoxMode> modes;
  for (int i = 1; i <= n_max; ++i) {
    if (dims == 1) {
      modes.push_back({{i, 0}, 1.0});
      continue;
    }
    for (int j = 1; j <= n_max; ++j) modes.push_back({{i, j}, 1.0});
  }
  return build_box_superposition(dims, modes, box_side, phase_seed);
}

EigenmodeWaveFunction evolve_analytic(const EigenmodeWaveFunction& wf, double dt) {
  if (!std::isfinite(dt)) throw ValidationError("evolve_analytic: time must be finite");
  std::vector<BoxMode> modes = wf.modes();
  for (auto& m : modes) m.amplitude *= std::polar(1.0, -wf.energy(m.n) * dt);
  // |polar| rounds to 1 within an ulp; renormalize so the invariant holds exactly
  double total = 0.0;
  for (const auto& m : modes) total += std::norm(m.amplitude);
  for (auto& m : modes) m.amplitude /= std::sqrt(total);
  return EigenmodeWaveFunction(wf.dims(), wf.box_side(), std::move(modes), wf.t0() + dt, wf.masses());
}

// ---------------------------------------------------------------------------
// GaussianSuperposition

namespace {

struct PacketValue {
  Complex psi, d1, d2;
};

PacketValue packet_value(const GaussianPacket& p, double mass, double x, double t) {
  const double s2 = p.width * p.width;
  const Complex q(1.0, t / (2.0 * mass * s2));
  const double u = x - p.center;
  const Complex exponent = (Complex(-u * u / (4.0 * s2), p.wavenumber * u - p.wavenumber * p.wavenumber * t / (2.0 * mass))) / q;
  const double norm = std::pow(2.0 * kPi * s2, -0.25);
  const Complex psi = norm / std::sqrt(q) * std::exp(exponent) * std::polar(1.0, p.wavenumber * p.center);
  const Complex e1 = Complex(-u / (2.0 * s2), p.wavenumber) / q;
  const Complex e2 = -1.0 / (2.0 * s2 * q);
  return {psi, psi * e1, psi * (e1 * e1 + e2)};
}

}  // namespace

GaussianSuperposition::GaussianSuperposition(std::vector<GaussianPacket> packets, double mass)
    : packets_(std::move(packets)), mass_(mass) {
  if (packets_.empty()) throw ValidationError("gaussian superposition: no packets");
  if (!(mass_ > 0.0)) throw ValidationError("gaussian superposition: mass must be positive");
  double sigma_max = 0.0;
  lo_ = packets_.front().center;
  hi_ = lo_;
  for (const auto& p : packets_) {
    if (!(p.width > 0.0)) throw ValidationError("gaussian superposition: widths must be positive");
    sigma_max = std::max(sigma_max, p.width);
    lo_ = std::min(lo_, p.center - 12.0 * p.width);
    hi_ = std::max(hi_, p.center + 12.0 * p.width);
  }
  // normalize by trapezoid quadrature of |psi(x, 0)|^2; spectrally accurate for Gaussians
  const int n = 20001;
  const double h = (hi_ - lo_) / (n - 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo_ + i * h;
    Complex psi = 0.0;
    for (const auto& p : packets_) psi += p.amplitude * packet_value(p, mass_, x, 0.0).psi;
    total += std::norm(psi) * ((i == 0 || i == n - 1) ? 0.5 * h : h);
  }
  if (!(total > 0.0)) throw ValidationError("gaussian superposition: amplitudes are all zero");
  for (auto& p : packets_) p.amplitude /= std::sqrt(total);
  reference_density_ = 1.0 / (std::sqrt(2.0 * kPi) * sigma_max);
}

double GaussianSuperposition::density_bound() const {
  // each packet's modulus peaks at t = 0
  double s = 0.0;
  for (const auto& p : packets_) s += std::abs(p.amplitude) * std::pow(2.0 * kPi * p.width * p.width, -0.25);
  return s * s;
}

FieldSample GaussianSuperposition::sample(const Config& x, double t) const {
  FieldSample s;
  for (const auto& p : packets_) {
    const auto v = packet_value(p, mass_, x[0], t);
    s.psi += p.amplitude * v.psi;
    s.grad[0] += p.amplitude * v.d1;
    s.second[0] += p.amplitude * v.d2;
  }
  return s;
}

}  // namespace neqlab::wavefield
