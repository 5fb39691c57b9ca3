#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "neqlab/wavefield.hpp"

namespace neqlab::wavefield {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// In-place transform of row-major nodal data. Periodic axes use the complex
/// DFT; hard-wall axes use the type-I sine transform applied to the real and
/// imaginary parts. Both directions are unnormalized.
class Transform {
 public:
  Transform(const std::vector<GridAxis>& axes, Boundary b, std::vector<Complex>& data) : boundary_(b) {
    std::lock_guard lock(fftw_planner_mutex());
    int n[2];
    const int rank = static_cast<int>(axes.size());
    for (int a = 0; a < rank; ++a) n[a] = axes[a].n;
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (b == Boundary::Periodic) {
      fwd_ = fftw_plan_dft(rank, n, p, p, FFTW_FORWARD, flags);
      bwd_ = fftw_plan_dft(rank, n, p, p, FFTW_BACKWARD, flags);
    } else {
      fftw_r2r_kind kinds[2] = {FFTW_RODFT00, FFTW_RODFT00};
      auto* r = reinterpret_cast<double*>(data.data());
      fwd_ = fftw_plan_many_r2r(rank, n, 2, r, nullptr, 2, 1, r, nullptr, 2, 1, kinds, flags);
      bwd_ = nullptr;
    }
    if (!fwd_ || (b == Boundary::Periodic && !bwd_)) throw NumericalError("fftw planning failed");
    scale_ = 1.0;
    for (int a = 0; a < rank; ++a) scale_ *= (b == Boundary::Periodic) ? n[a] : 2.0 * (n[a] + 1);
  }
  Transform(const Transform&) = delete;
  Transform& operator=(const Transform&) = delete;
  ~Transform() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  void forward(std::vector<Complex>& data) const { execute(fwd_, data); }
  void backward(std::vector<Complex>& data) const { execute(bwd_ ? bwd_ : fwd_, data); }
  /// forward followed by backward multiplies by this factor.
  double round_trip_scale() const { return scale_; }

 private:
  void execute(fftw_plan plan, std::vector<Complex>& data) const {
    if (boundary_ == Boundary::Periodic) {
      auto* p = reinterpret_cast<fftw_complex*>(data.data());
      fftw_execute_dft(plan, p, p);
    } else {
      auto* r = reinterpret_cast<double*>(data.data());
      fftw_execute_r2r(plan, r, r);
    }
  }

  Boundary boundary_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
  double scale_ = 1.0;
};

/// Physical wavenumber of spectral slot j on an axis.
double wavenumber(const GridAxis& ax, Boundary b, int j) {
  const double L = ax.hi - ax.lo;
  if (b == Boundary::HardWall) return kPi * (j + 1) / L;
  const int s = (2 * j < ax.n) ? j : j - ax.n;
  return 2.0 * kPi * s / L;
}

bool is_tail(const GridAxis& ax, Boundary b, int j) {
  if (b == Boundary::HardWall) return 8 * (j + 1) > 7 * ax.n;
  const int s = (2 * j < ax.n) ? j : ax.n - j;
  return 8 * s >= 3 * ax.n;
}

struct AxisBasis {
  std::vector<Complex> b, d1, d2;
};

/// Interpolating basis functions (and derivatives) of one axis evaluated at x,
/// paired with coefficients that already include the inverse-transform scale.
AxisBasis axis_basis(const GridAxis& ax, Boundary b, double x) {
  AxisBasis out;
  out.b.resize(ax.n);
  out.d1.resize(ax.n);
  out.d2.resize(ax.n);
  const double u = x - ax.lo;
  for (int j = 0; j < ax.n; ++j) {
    const double k = wavenumber(ax, b, j);
    if (b == Boundary::HardWall) {
      const double s = std::sin(k * u), c = std::cos(k * u);
      out.b[j] = s;
      out.d1[j] = k * c;
      out.d2[j] = -k * k * s;
    } else if (2 * j == ax.n) {
      // Nyquist slot: symmetric real interpolant
      const double s = std::sin(k * u), c = std::cos(k * u);
      out.b[j] = c;
      out.d1[j] = -k * s;
      out.d2[j] = -k * k * c;
    } else {
      const Complex e = std::polar(1.0, k * u);
      out.b[j] = e;
      out.d1[j] = kI * k * e;
      out.d2[j] = -k * k * e;
    }
  }
  return out;
}

/// Dense first-derivative matrix of one axis acting on nodal values.
std::vector<Complex> derivative_matrix(const GridAxis& ax, Boundary b) {
  const int n = ax.n;
  std::vector<Complex> fwd(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    const double kk = wavenumber(ax, b, k);
    for (int j = 0; j < n; ++j) {
      const double u = ax.coordinate(j, b) - ax.lo;
      fwd[k * n + j] = (b == Boundary::HardWall) ? Complex(2.0 / (n + 1) * std::sin(kk * u), 0.0)
                                                 : std::polar(1.0 / n, -kk * u);
    }
  }
  std::vector<Complex> d(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const auto basis = axis_basis(ax, b, ax.coordinate(i, b));
    for (int j = 0; j < n; ++j) {
      Complex acc = 0.0;
      for (int k = 0; k < n; ++k) acc += basis.d1[k] * fwd[k * n + j];
      d[i * n + j] = acc;
    }
  }
  return d;
}

/// Applies an axis matrix along axis `a` of row-major data.
std::vector<Complex> apply_along(const std::vector<GridAxis>& axes, int a, const std::vector<Complex>& m,
                                 const std::vector<Complex>& data) {
  const int n = axes[a].n;
  const std::size_t stride = (axes.size() == 2 && a == 0) ? static_cast<std::size_t>(axes[1].n) : 1;
  const std::size_t lines = data.size() / n;
  std::vector<Complex> out(data.size());
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t base = (stride == 1) ? line * n : line;
    for (int i = 0; i < n; ++i) {
      Complex acc = 0.0;
      for (int j = 0; j < n; ++j) acc += m[i * n + j] * data[base + j * stride];
      out[base + i * stride] = acc;
    }
  }
  return out;
}

}  // namespace

double GridAxis::spacing(Boundary b) const {
  return b == Boundary::Periodic ? (hi - lo) / n : (hi - lo) / (n + 1);
}

double GridAxis::coordinate(int i, Boundary b) const {
  return b == Boundary::Periodic ? lo + i * spacing(b) : lo + (i + 1) * spacing(b);
}

GridWaveFunction::GridWaveFunction(std::vector<GridAxis> axes, Boundary boundary, std::vector<Complex> values,
                                   double t, std::array<double, 2> masses)
    : axes_(std::move(axes)), boundary_(boundary), values_(std::move(values)), t_(t), masses_(masses) {
  if (axes_.empty() || axes_.size() > 2) throw ValidationError("grid wave function: 1 or 2 axes required");
  std::size_t total = 1;
  for (const auto& ax : axes_) {
    if (ax.n < 2) throw ValidationError("grid wave function: each axis needs at least 2 nodes");
    if (!(ax.hi > ax.lo)) throw ValidationError("grid wave function: axis bounds must satisfy lo < hi");
    total *= static_cast<std::size_t>(ax.n);
  }
  if (values_.size() != total) throw ValidationError("grid wave function: value count does not match the grid");
  for (int a = 0; a < dims(); ++a)
    if (!(masses_[a] > 0.0)) throw ValidationError("grid wave function: masses must be positive");
}

GridWaveFunction GridWaveFunction::from_field(const GuidingField& field, std::vector<GridAxis> axes,
                                              Boundary boundary, double t) {
  if (static_cast<int>(axes.size()) != field.dims())
    throw ValidationError("grid wave function: axis count does not match the field");
  std::size_t total = 1;
  for (const auto& ax : axes) total *= static_cast<std::size_t>(std::max(ax.n, 0));
  GridWaveFunction out(axes, boundary, std::vector<Complex>(total), t, field.masses());
  for (std::size_t i = 0; i < total; ++i) out.values_[i] = field.sample(out.node(i), t).psi;
  return out;
}

double GridWaveFunction::cell_volume() const {
  double v = 1.0;
  for (const auto& ax : axes_) v *= ax.spacing(boundary_);
  return v;
}

Config GridWaveFunction::node(std::size_t flat) const {
  if (dims() == 1) return {axes_[0].coordinate(static_cast<int>(flat), boundary_), 0.0};
  const auto n1 = static_cast<std::size_t>(axes_[1].n);
  return {axes_[0].coordinate(static_cast<int>(flat / n1), boundary_),
          axes_[1].coordinate(static_cast<int>(flat % n1), boundary_)};
}

double GridWaveFunction::norm() const {
  double s = 0.0;
  for (const auto& v : values_) s += std::norm(v);
  return s * cell_volume();
}

void GridWaveFunction::normalize() {
  const double n = norm();
  if (!(n > 0.0)) throw ValidationError("grid wave function: cannot normalize a zero state");
  const double s = 1.0 / std::sqrt(n);
  for (auto& v : values_) v *= s;
}

double GridWaveFunction::spectral_tail_fraction() const {
  std::vector<Complex> work = values_;
  Transform tr(axes_, boundary_, work);
  tr.forward(work);
  double total = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double p = std::norm(work[i]);
    total += p;
    bool in_tail;
    if (dims() == 1) {
      in_tail = is_tail(axes_[0], boundary_, static_cast<int>(i));
    } else {
      const auto n1 = static_cast<std::size_t>(axes_[1].n);
      in_tail = is_tail(axes_[0], boundary_, static_cast<int>(i / n1)) ||
                is_tail(axes_[1], boundary_, static_cast<int>(i % n1));
    }
    if (in_tail) tail += p;
  }
  return total > 0.0 ? tail / total : 0.0;
}

FieldSample GridWaveFunction::interpolate(const Config& x) const {
  for (int a = 0; a < dims(); ++a) {
    if (x[a] < axes_[a].lo || x[a] > axes_[a].hi) throw ValidationError("interpolate: point outside the grid");
  }
  std::vector<Complex> c = values_;
  Transform tr(axes_, boundary_, c);
  tr.forward(c);
  // coefficient normalization: 1/n per periodic axis, 1/(n+1) per hard-wall axis
  double inv = 1.0;
  for (const auto& ax : axes_) inv /= (boundary_ == Boundary::Periodic) ? ax.n : (ax.n + 1);
  FieldSample s;
  if (dims() == 1) {
    const auto b = axis_basis(axes_[0], boundary_, x[0]);
    for (int j = 0; j < axes_[0].n; ++j) {
      const Complex cj = c[j] * inv;
      s.psi += cj * b.b[j];
      s.grad[0] += cj * b.d1[j];
      s.second[0] += cj * b.d2[j];
    }
    return s;
  }
  const auto b0 = axis_basis(axes_[0], boundary_, x[0]);
  const auto b1 = axis_basis(axes_[1], boundary_, x[1]);
  const int n0 = axes_[0].n, n1 = axes_[1].n;
  for (int i = 0; i < n0; ++i) {
    Complex row = 0.0, row_d1 = 0.0, row_d2 = 0.0;
    for (int j = 0; j < n1; ++j) {
      const Complex cij = c[static_cast<std::size_t>(i) * n1 + j];
      row += cij * b1.b[j];
      row_d1 += cij * b1.d1[j];
      row_d2 += cij * b1.d2[j];
    }
    s.psi += inv * b0.b[i] * row;
    s.grad[0] += inv * b0.d1[i] * row;
    s.second[0] += inv * b0.d2[i] * row;
    s.grad[1] += inv * b0.b[i] * row_d1;
    s.second[1] += inv * b0.b[i] * row_d2;
  }
  return s;
}

std::array<std::vector<double>, 2> GridWaveFunction::current_at_nodes() const {
  std::array<std::vector<double>, 2> j;
  for (int a = 0; a < dims(); ++a) {
    const auto d = apply_along(axes_, a, derivative_matrix(axes_[a], boundary_), values_);
    j[a].resize(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) j[a][i] = std::imag(std::conj(values_[i]) * d[i]) / masses_[a];
  }
  return j;
}

std::vector<double> GridWaveFunction::divergence(const std::array<std::vector<double>, 2>& field) const {
  std::vector<double> out(values_.size(), 0.0);
  for (int a = 0; a < dims(); ++a) {
    if (field[a].size() != values_.size()) throw ValidationError("divergence: field size does not match the grid");
    std::vector<Complex> f(field[a].begin(), field[a].end());
    const auto d = apply_along(axes_, a, derivative_matrix(axes_[a], boundary_), f);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i].real();
  }
  return out;
}

GridWaveFunction evolve_splitstep(const GridWaveFunction& wf, std::span<const double> potential, double dt,
                                  int n_steps) {
  if (n_steps < 0) throw ValidationError("evolve_splitstep: n_steps must be non-negative");
  if (!std::isfinite(dt) || !(dt > 0.0)) throw ValidationError("evolve_splitstep: dt must be positive");
  if (!potential.empty() && potential.size() != wf.size())
    throw ValidationError("evolve_splitstep: potential size does not match the grid");
  if (!potential.empty()) {
    const auto [mn, mx] = std::minmax_element(potential.begin(), potential.end());
    if (dt * (*mx - *mn) > kPi / 2.0)
      throw ValidationError("evolve_splitstep: dt too large for the potential range (dt * dV > pi/2)");
  }
  if (!wf.resolved()) throw ValidationError("evolve_splitstep: wave function not resolved by the grid");

  GridWaveFunction out = wf;
  if (n_steps == 0) return out;

  const auto& axes = out.axes_;
  const auto masses = out.masses_;
  std::vector<Complex> kinetic(out.size());
  for (std::size_t i = 0; i < kinetic.size(); ++i) {
    double e = 0.0;
    if (out.dims() == 1) {
      const double k = wavenumber(axes[0], out.boundary_, static_cast<int>(i));
      e = k * k / (2.0 * masses[0]);
    } else {
      const auto n1 = static_cast<std::size_t>(axes[1].n);
      const double k0 = wavenumber(axes[0], out.boundary_, static_cast<int>(i / n1));
      const double k1 = wavenumber(axes[1], out.boundary_, static_cast<int>(i % n1));
      e = k0 * k0 / (2.0 * masses[0]) + k1 * k1 / (2.0 * masses[1]);
    }
    kinetic[i] = std::polar(1.0, -e * dt);
  }
  std::vector<Complex> half_kick;
  if (!potential.empty()) {
    half_kick.resize(out.size());
    for (std::size_t i = 0; i < half_kick.size(); ++i) half_kick[i] = std::polar(1.0, -0.5 * dt * potential[i]);
  }

  auto& psi = out.values_;
  Transform tr(axes, out.boundary_, psi);
  const double inv = 1.0 / tr.round_trip_scale();
  for (int step = 0; step < n_steps; ++step) {
    if (!half_kick.empty())
      for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_kick[i];
    tr.forward(psi);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= kinetic[i] * inv;
    tr.backward(psi);
    if (!half_kick.empty())
      for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_kick[i];
  }
  out.t_ += dt * n_steps;
  return out;
}

LocalFlow density_phase_current(const GridWaveFunction& wf, const Config& x) {
  const auto s = wf.interpolate(x);
  const double rho = std::norm(s.psi);
  double ref = 1.0;
  for (const auto& ax : wf.axes()) ref /= (ax.hi - ax.lo);
  const bool node = !(rho >= kNodeThreshold * ref);
  std::array<double, 2> g{0.0, 0.0};
  if (!node)
    for (int a = 0; a < wf.dims(); ++a) g[a] = std::imag(s.grad[a] * std::conj(s.psi)) / rho;
  return LocalFlow(rho, node, g, wf.masses());
}

}  // namespace neqlab::wavefield
