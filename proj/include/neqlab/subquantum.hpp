#pragma once

#include <cstdint>
#include <vector>

#include "neqlab/csv.hpp"
#include "neqlab/pilotwave.hpp"

/// Measurements made with a pointer that is out of equilibrium: the exactly
/// solvable position measurement, state discrimination built on it, and the
/// nonlocal signal produced by a local quench.
namespace neqlab::subquantum {

using wavefield::GuidingField;

// ---------------------------------------------------------------------------
// Exactly solvable measurement (H = a x p_y)
// ---------------------------------------------------------------------------

/// Overlap of the box ground state of width L centred at 0 with its copy shifted by u.
/// Zero for |u| >= L.
double pointer_overlap(double u, double box_width);

/// Fidelity <psi0| rho_x(t) |psi0> of the system after coupling for a*t with a
/// box-ground-state pointer of width `pointer_width`:
/// F = int int |psi0(x)|^2 |psi0(x')|^2 C(a t (x - x')) dx dx'.
double measurement_fidelity(const GuidingField& psi0, double at, double pointer_width);

struct SubqConfig {
  double w = 1e-3;            ///< support width of the pointer prior, uniform on [-w/2, w/2]
  double a = 1.0;             ///< coupling constant
  double t = 0.1;             ///< coupling duration
  double pointer_width = 1.0; ///< width of the pointer's box ground state
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct SubqRun {
  double x0 = 0.0;
  double y0 = 0.0;
  double y_meas = 0.0;
  double estimate = 0.0;
  double error = 0.0;  ///< |estimate - x0|
};

struct SubqResult {
  std::vector<SubqRun> runs;
  double bound = 0.0;       ///< w / (2 a t)
  double max_error = 0.0;
  bool all_within_bound = true;
  double disturbance = 0.0; ///< 1 - fidelity
};

/// x0 is drawn from |psi0|^2, y0 from the pointer prior; x(t) = x0 and
/// y(t) = y0 + a x0 t in closed form.
SubqResult subq_measure(const GuidingField& psi0, const SubqConfig& cfg);
CsvTable subq_table(const SubqResult& r);

// ---------------------------------------------------------------------------
// Discriminating two states from a tracked trajectory
// ---------------------------------------------------------------------------

struct DistinguishConfig {
  double w = 1e-3;
  double at = 0.1;                        ///< a t of each position measurement
  std::vector<double> times{0.0, 0.05, 0.1, 0.15, 0.2};  ///< measurement times, first is the preparation time
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  /// With identical states, return the chance accuracy instead of throwing.
  bool allow_degenerate = false;
  pilotwave::Tolerances tolerances{};
  int threads = 0;
};

struct DistinguishResult {
  double accuracy = 0.0;
  double accuracy_sigma = 0.0;
  std::size_t runs = 0;
  std::size_t correct = 0;
  std::size_t ties = 0;
  double overlap = 0.0;  ///< |<psi1|psi2>|^2
  bool degenerate = false;
};

/// |<psi1|psi2>|^2 at t = 0 by composite Gauss-Legendre quadrature over the union of the domains.
double state_overlap(const GuidingField& psi1, const GuidingField& psi2);

/// Each run prepares psi1 or psi2 (fair coin), draws x0 from its |psi|^2,
/// follows the true trajectory and records subquantum position readings with
/// errors uniform on +-w/(2 at). The state is then guessed by comparing
/// log|psi_h(x_hat0)|^2 - sum (x_hat_k - X_h(t_k))^2 / (2 sigma^2), sigma^2 = e^2/3,
/// with X_h the trajectory of psi_h started from the first reading.
DistinguishResult distinguish_nonorthogonal(const GuidingField& psi1, const GuidingField& psi2,
                                            const DistinguishConfig& cfg);

// ---------------------------------------------------------------------------
// Nonlocal signal from a local quench
// ---------------------------------------------------------------------------

struct SignalingConfig {
  /// The quench replaces m_B by this value at t = 0 (kinetic term at B only).
  double quenched_mass_b = 2.0;
  pilotwave::DistributionSpec start;
  std::vector<double> probe_times;
  std::size_t samples = 20000;
  std::uint64_t seed = 1;
  int fourier_modes = 8;
  int histogram_bins = 20;
  pilotwave::Tolerances tolerances{};
  int threads = 0;
};

struct SignalingProbe {
  double t = 0.0;
  std::vector<double> bin_centers;
  std::vector<double> delta_p;  ///< quenched minus unquenched marginal density at A
  std::vector<double> delta_p_sigma;
  double integral = 0.0;        ///< sum delta_p * bin width (algebraically zero)
  std::vector<double> fourier;  ///< D_k = mean[cos(k pi x_A^q / L) - cos(k pi x_A / L)]
  std::vector<double> fourier_sigma;
  double signal_norm = 0.0;     ///< sqrt(sum D_k^2)
  double signal_sigma = 0.0;
  double hotelling_t2 = 0.0;
  int hotelling_dof = 0;
  double p_value = 1.0;         ///< of the null D = 0 (chi-square approximation)
};

struct SignalingResult {
  std::vector<SignalingProbe> probes;
  double exponent = 0.0;        ///< log-log slope of the signal norm against t
  double exponent_sigma = 0.0;
  bool exponent_valid = false;
  std::size_t failures = 0;
};

/// Propagates one set of initial samples with and without the quench
/// (common random numbers) and compares the A-marginals at each probe time.
/// Axis 0 of `psi` is x_A, axis 1 is x_B; its per-axis masses are (m_A, m_B).
SignalingResult signaling_experiment(const wavefield::EigenmodeWaveFunction& psi, const SignalingConfig& cfg);
CsvTable signaling_table(const SignalingResult& r);

/// Null-test threshold: p below this rejects "no signal" at the 3-sigma level.
inline constexpr double kThreeSigmaP = 0.0027;

}  // namespace neqlab::subquantum
