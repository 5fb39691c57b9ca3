#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neqlab/csv.hpp"
#include "neqlab/wavefield.hpp"

/// de Broglie trajectories and particle ensembles carried along them.
namespace neqlab::pilotwave {

using wavefield::GuidingField;

/// Controls for the adaptive Dormand-Prince 4(5) integrator.
struct Tolerances {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_initial = 1e-3;
  /// Step size below which a trajectory is declared failed.
  double h_min = 1e-12;
  /// Per-step displacement cap as a fraction of the smallest domain side.
  double max_displacement = 0.01;
  /// Stage points further than this outside a bounded domain are rejected.
  double domain_slack = 1e-6;
  long max_steps = 50'000'000;
};

struct TrajectoryPoint {
  double t = 0.0;
  Config x{};
  /// ln of the Jacobian det(dX(t)/dX(0)); the density carried by the
  /// trajectory is P(X0, t0) exp(-log_jacobian).
  double log_jacobian = 0.0;
};

struct Trajectory {
  Config initial{};
  /// First point is the start; one point per requested output time follows.
  std::vector<TrajectoryPoint> points;
  long node_encounters = 0;
  long steps = 0;
  long rejected_steps = 0;
  bool failed = false;
  std::string failure;
};

/// Integrates dX/dt = Im(grad psi / psi) / m together with d(ln J)/dt = div v.
/// `output_times` must be strictly increasing and not before `t_start`.
/// Failure (step underflow near a node, step budget) is reported in the
/// result rather than thrown; a start on a node throws NodeError.
Trajectory integrate_trajectory(const GuidingField& wf, const Config& x0, std::span<const double> output_times,
                                const Tolerances& tol = {}, double t_start = 0.0);
Trajectory integrate_trajectory(const GuidingField& wf, const Config& x0, double t_end, const Tolerances& tol = {},
                                double t_start = 0.0);

/// Trajectory dump with columns t, x[, y], f where f = P/|psi|^2 along the path.
CsvTable trajectory_table(const GuidingField& wf, const Trajectory& traj, double initial_density);

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

enum class DistributionKind {
  Equilibrium,  ///< P = |psi|^2
  BoxMode,      ///< P = |phi_n|^2 of one box eigenmode (bounded fields only)
  Histogram,    ///< piecewise-constant density on a regular cell grid over the domain
};

struct DistributionSpec {
  DistributionKind kind = DistributionKind::Equilibrium;
  std::array<int, 2> mode{1, 1};
  /// Histogram layout: cells[0] x cells[1] row-major weights (any positive scale).
  std::array<int, 2> cells{1, 1};
  std::vector<double> weights;

  static DistributionSpec equilibrium() { return {}; }
  static DistributionSpec box_mode(std::array<int, 2> n);
  static DistributionSpec histogram(std::array<int, 2> cells, std::vector<double> weights);
  std::string describe() const;
};

/// Equal-weight particles. `density` is P(X, t) carried along each
/// trajectory; `f_labels` hold the conserved ratio P/|psi|^2 fixed at the
/// sampling time.
struct Ensemble {
  int dims = 2;
  double time = 0.0;
  std::vector<Config> samples;
  std::vector<double> weights;
  std::vector<double> f_labels;
  std::vector<double> density;
  DistributionSpec source;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
};

/// Draws n samples reproducibly (stream i depends only on (seed, i)).
Ensemble sample_ensemble(const DistributionSpec& spec, const GuidingField& wf, std::size_t n, std::uint64_t seed,
                         double t = 0.0, int threads = 0);

/// Density of `spec` at x on the domain of `wf` (equilibrium evaluated at time t).
double spec_density(const DistributionSpec& spec, const GuidingField& wf, const Config& x, double t);
double spec_density(const DistributionSpec& spec, const GuidingField& wf, const Config& x);

struct PropagationReport {
  std::size_t failures = 0;
  long node_encounters = 0;
  long steps = 0;
  long rejected_steps = 0;
  /// max over samples and snapshots of |f(t) - f(0)| / f(0) / max(t - t0, 1).
  double max_f_drift_rate = 0.0;
};

struct EnsembleSeries {
  std::vector<Ensemble> snapshots;
  PropagationReport report;
};

/// Moves every sample along its trajectory and records one ensemble per time.
/// Failed trajectories are dropped from every snapshot and counted; a failure
/// fraction of 0.1% or more throws NumericalError.
EnsembleSeries propagate_ensemble_series(const Ensemble& ens, const GuidingField& wf, std::span<const double> times,
                                         const Tolerances& tol = {}, int threads = 0);
Ensemble propagate_ensemble(const Ensemble& ens, const GuidingField& wf, double t, const Tolerances& tol = {},
                            int threads = 0, PropagationReport* report = nullptr);

inline constexpr double kMaxFailureFraction = 1e-3;

}  // namespace neqlab::pilotwave
