#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "neqlab/common.hpp"

/// Wave functions for the pilot-wave experiments: exact box-eigenmode
/// superpositions, free Gaussian packets, and a split-operator grid solver.
/// Units are natural throughout (hbar = 1); masses are per axis.
namespace neqlab::wavefield {

/// Value and derivatives of a wave function at one configuration.
/// `second` holds the diagonal second derivatives d^2 psi / dx_i^2.
struct FieldSample {
  Complex psi{};
  std::array<Complex, 2> grad{};
  std::array<Complex, 2> second{};
};

/// Anything that can guide de Broglie trajectories.
class GuidingField {
 public:
  virtual ~GuidingField() = default;

  virtual int dims() const = 0;
  virtual FieldSample sample(const Config& x, double t) const = 0;
  virtual std::array<double, 2> masses() const = 0;

  /// Axis-aligned region of configuration space. For bounded fields these
  /// are hard walls; for unbounded ones the region holds all but a
  /// negligible tail of |psi|^2 at the field's reference time.
  virtual Config lower() const = 0;
  virtual Config upper() const = 0;
  virtual bool bounded() const = 0;

  /// Density scale against which nodes are detected.
  virtual double reference_density() const = 0;

  /// Upper bound on |psi|^2 over the domain, valid for every t.
  virtual double density_bound() const = 0;

  bool contains(const Config& x, double slack = 0.0) const;
};

/// |psi|^2 below this fraction of the reference density counts as a node.
inline constexpr double kNodeThreshold = 1e-12;

/// Density, phase gradient and current at a point. Near a node only the
/// density is meaningful; asking for the others throws NodeError.
class LocalFlow {
 public:
  LocalFlow(double density, bool at_node, std::array<double, 2> phase_gradient, std::array<double, 2> masses);

  double density() const { return density_; }
  bool at_node() const { return at_node_; }
  /// grad S (hbar = 1), i.e. Im(grad psi / psi).
  std::array<double, 2> phase_gradient() const;
  /// Guidance velocity grad S / m.
  std::array<double, 2> velocity() const;
  /// Probability current J = |psi|^2 grad S / m.
  std::array<double, 2> current() const;

 private:
  double density_;
  bool at_node_;
  std::array<double, 2> phase_gradient_;
  std::array<double, 2> masses_;
};

LocalFlow density_phase_current(const GuidingField& wf, const Config& x, double t);

/// Guidance velocity from an already evaluated sample; throws NodeError at nodes.
std::array<double, 2> guidance_velocity(const FieldSample& s, std::array<double, 2> masses, int dims, double node_density);

/// Divergence of the guidance velocity field, sum_i Im(psi_ii/psi - (psi_i/psi)^2) / m_i.
double velocity_divergence(const FieldSample& s, std::array<double, 2> masses, int dims);

// ---------------------------------------------------------------------------
// Box eigenmodes
// ---------------------------------------------------------------------------

struct BoxMode {
  std::array<int, 2> n{1, 1};
  Complex amplitude{1.0, 0.0};
};

struct SpectrumStats {
  double mean_energy = 0.0;
  double energy_spread = 0.0;
};

/// Superposition of hard-wall box eigenmodes on [0, L]^dims,
/// phi_n(x) = sqrt(2/L) sin(n pi x / L) per axis. Amplitudes refer to the
/// reference time t0 and evolve as exp(-i E (t - t0)).
class EigenmodeWaveFunction final : public GuidingField {
 public:
  EigenmodeWaveFunction(int dims, double box_side, std::vector<BoxMode> modes, double t0 = 0.0,
                        std::array<double, 2> masses = {1.0, 1.0});

  int dims() const override { return dims_; }
  FieldSample sample(const Config& x, double t) const override;
  std::array<double, 2> masses() const override { return masses_; }
  Config lower() const override { return {0.0, 0.0}; }
  Config upper() const override { return {box_side_, dims_ == 2 ? box_side_ : 0.0}; }
  bool bounded() const override { return true; }
  double reference_density() const override;
  double density_bound() const override;

  double box_side() const { return box_side_; }
  double t0() const { return t0_; }
  const std::vector<BoxMode>& modes() const { return modes_; }
  double energy(const std::array<int, 2>& n) const;
  SpectrumStats spectrum() const;
  /// Same modes and amplitudes with different per-axis masses.
  EigenmodeWaveFunction with_masses(std::array<double, 2> masses) const;

 private:
  int dims_;
  double box_side_;
  std::vector<BoxMode> modes_;
  double t0_;
  std::array<double, 2> masses_;
  std::vector<double> energies_;
  int max_index_ = 1;
  // With equal masses every energy is an integer multiple of energy_quantum_;
  // time phases then come from powers of one complex exponential.
  double energy_quantum_ = 0.0;
  std::vector<int> levels_;
  int max_level_ = 0;
};

/// Normalized superposition of the listed modes. With `phase_seed`, each
/// amplitude keeps its modulus and gets a phase drawn uniformly in [0, 2 pi).
EigenmodeWaveFunction build_box_superposition(int dims, std::span<const BoxMode> modes, double box_side = 1.0,
                                              std::optional<std::uint64_t> phase_seed = std::nullopt,
                                              std::array<double, 2> masses = {1.0, 1.0});

/// Equal-weight superposition of every mode with indices 1..n_max per axis.
EigenmodeWaveFunction equal_weight_box_superposition(int dims, int n_max, std::uint64_t phase_seed, double box_side = 1.0);

/// Advances the reference time by `dt`: every amplitude is multiplied by exp(-i E dt).
EigenmodeWaveFunction evolve_analytic(const EigenmodeWaveFunction& wf, double dt);

// ---------------------------------------------------------------------------
// Free Gaussian packets on the real line
// ---------------------------------------------------------------------------

struct GaussianPacket {
  double center = 0.0;
  double width = 1.0;  ///< position standard deviation of |psi|^2 at t = 0
  double wavenumber = 0.0;
  Complex amplitude{1.0, 0.0};
};

/// Superposition of freely spreading Gaussian packets (1D, closed-form evolution from t = 0).
class GaussianSuperposition final : public GuidingField {
 public:
  explicit GaussianSuperposition(std::vector<GaussianPacket> packets, double mass = 1.0);

  int dims() const override { return 1; }
  FieldSample sample(const Config& x, double t) const override;
  std::array<double, 2> masses() const override { return {mass_, 1.0}; }
  Config lower() const override { return {lo_, 0.0}; }
  Config upper() const override { return {hi_, 0.0}; }
  bool bounded() const override { return false; }
  double reference_density() const override { return reference_density_; }
  double density_bound() const override;

  const std::vector<GaussianPacket>& packets() const { return packets_; }

 private:
  std::vector<GaussianPacket> packets_;
  double mass_;
  double lo_ = 0.0, hi_ = 0.0;
  double reference_density_ = 1.0;
};

// ---------------------------------------------------------------------------
// Grid wave functions and the split-operator evolver
// ---------------------------------------------------------------------------

enum class Boundary { Periodic, HardWall };

/// One lattice axis. Periodic axes carry nodes lo + i h, h = (hi - lo)/n;
/// hard-wall axes carry the interior nodes lo + (i + 1) h, h = (hi - lo)/(n + 1).
struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  int n = 64;

  double spacing(Boundary b) const;
  double coordinate(int i, Boundary b) const;
};

class GridWaveFunction {
 public:
  GridWaveFunction(std::vector<GridAxis> axes, Boundary boundary, std::vector<Complex> values, double t = 0.0,
                   std::array<double, 2> masses = {1.0, 1.0});

  /// Samples a guiding field on the lattice nodes at time t.
  static GridWaveFunction from_field(const GuidingField& field, std::vector<GridAxis> axes, Boundary boundary,
                                     double t);

  int dims() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  Boundary boundary() const { return boundary_; }
  std::span<const Complex> values() const { return values_; }
  std::span<Complex> values() { return values_; }
  double time() const { return t_; }
  std::array<double, 2> masses() const { return masses_; }
  std::size_t size() const { return values_.size(); }
  double cell_volume() const;
  Config node(std::size_t flat_index) const;

  /// Discrete L2 norm squared, sum |psi|^2 dV.
  double norm() const;
  void normalize();

  /// Fraction of spectral power in the top eighth of the resolved wavenumbers.
  double spectral_tail_fraction() const;
  bool resolved(double tol = 1e-6) const { return spectral_tail_fraction() <= tol; }

  /// Band-limited (trigonometric / sine-series) interpolation with derivatives.
  FieldSample interpolate(const Config& x) const;

  /// Probability current J_i = Im(conj(psi) d_i psi) / m_i at every node, spectral derivatives.
  std::array<std::vector<double>, 2> current_at_nodes() const;

  /// Divergence of a nodal vector field, spectral derivatives.
  std::vector<double> divergence(const std::array<std::vector<double>, 2>& field) const;

 private:
  friend GridWaveFunction evolve_splitstep(const GridWaveFunction&, std::span<const double>, double, int);

  std::vector<GridAxis> axes_;
  Boundary boundary_;
  std::vector<Complex> values_;
  double t_;
  std::array<double, 2> masses_;
};

/// Strang split-operator evolution: half potential kick, exact kinetic step
/// in the Fourier (periodic) or sine (hard-wall) basis, half kick. Second order
/// in dt, unitary to rounding. `potential` holds V at every node (empty = free).
/// Throws ValidationError when dt * (max V - min V) exceeds pi / 2 or when
/// the input is not resolved by the grid.
GridWaveFunction evolve_splitstep(const GridWaveFunction& wf, std::span<const double> potential, double dt,
                                  int n_steps);

LocalFlow density_phase_current(const GridWaveFunction& wf, const Config& x);

}  // namespace neqlab::wavefield
