#pragma once

#include <span>
#include <vector>

#include "neqlab/pilotwave.hpp"

/// Coarse-grained H-function diagnostics and the relaxation experiment.
namespace neqlab::relaxation {

using pilotwave::Ensemble;
using wavefield::GuidingField;

/// Regular cell grid over the (bounded) domain of a field.
struct CoarseGraining {
  int dims = 2;
  std::array<int, 2> cells{32, 32};
  Config lower{0.0, 0.0};
  Config upper{1.0, 1.0};

  static CoarseGraining over(const GuidingField& wf, std::array<int, 2> cells);
  std::size_t cell_count() const { return static_cast<std::size_t>(cells[0]) * (dims == 2 ? cells[1] : 1); }
  double side(int axis) const { return (upper[axis] - lower[axis]) / cells[axis]; }
  /// Coarse-graining length: the smallest cell side.
  double epsilon() const;
  /// Cell holding x, or -1 outside the grid.
  long cell_of(const Config& x) const;
};

struct CoarseHistograms {
  std::vector<double> p_bar;    ///< ensemble weight per cell, sums to 1
  std::vector<double> psi_bar;  ///< |psi|^2 integrated per cell, normalized to sum 1
  std::size_t samples = 0;
};

/// Bins the ensemble and integrates |psi(t)|^2 per cell by Gauss-Legendre
/// quadrature (`order` points per axis). A sample in a cell whose |psi|^2
/// mass is below the quadrature floor raises NumericalError.
CoarseHistograms coarse_grain(const Ensemble& ens, const GuidingField& wf, const CoarseGraining& g, int order = 6);

/// sum p ln(p/q) with 0 ln 0 = 0. Throws ValidationError when p > 0 where q = 0
/// or when the layouts differ.
double h_function(std::span<const double> p_bar, std::span<const double> psi_bar);

struct HEstimate {
  double h = 0.0;
  /// Delta-method standard error of the plug-in estimator.
  double sigma = 0.0;
  /// Leading plug-in bias, (occupied cells - 1) / (2 N).
  double bias = 0.0;
};
HEstimate h_estimate(const CoarseHistograms& hist);

struct ExponentialFit {
  bool valid = false;
  double amplitude = 0.0;
  double t_c = 0.0;
  double r2 = 0.0;
  std::size_t points_used = 0;
};

/// Least-squares fit of A exp(-t / t_c) over the window that starts at the
/// first point and stops before the value first drops below 5% of the first
/// value. At least three points are always used. Invalid when h[0] <= 0.
ExponentialFit fit_exponential(std::span<const double> t, std::span<const double> h);

/// Order-of-magnitude relaxation time hbar^2 / (eps m^(1/2) dE^(3/2)), hbar = 1.
double tau_estimate(double delta_e, double mass, double epsilon);

struct RelaxationConfig {
  std::array<int, 2> cells{32, 32};
  /// Probe times; the first must be the sampling time 0.
  std::vector<double> times;
  std::size_t n_samples = 100000;
  std::uint64_t seed = 1;
  pilotwave::Tolerances tolerances{};
  int threads = 0;
  int quadrature_order = 6;
};

struct HTimeSeries {
  std::vector<double> times;
  std::vector<double> h;
  std::vector<double> sigma;
  double bias = 0.0;
  ExponentialFit fit;
  /// h(t_k) <= h(0) + 3 sqrt(sigma_0^2 + sigma_k^2) at every probe.
  bool monotone_within_noise = true;
  double tau = 0.0;
  double epsilon = 0.0;
  double delta_e = 0.0;
  /// Cell-averaged variance of X0-velocity . grad(P0/|psi0|^2), reported only.
  double initial_flow_variance = 0.0;
  pilotwave::PropagationReport report;
};

HTimeSeries relaxation_experiment(const wavefield::EigenmodeWaveFunction& wf, const pilotwave::DistributionSpec& start,
                                  const RelaxationConfig& cfg);

}  // namespace neqlab::relaxation
