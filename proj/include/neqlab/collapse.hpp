#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neqlab/common.hpp"
#include "neqlab/csv.hpp"

/// Stochastic collapse: finite-dimensional state diffusion with its
/// probability rule, the ensemble density matrix, the one-particle position
/// master equation, closed-form consequences, discrete hits, and the
/// fair-game toy that shares their martingale structure.
namespace neqlab::collapse {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// ---------------------------------------------------------------------------
// Fair game
// ---------------------------------------------------------------------------

struct GamblerReport {
  std::size_t runs = 0;
  double win_frequency = 0.0;  ///< player 1 ends with everything
  double win_sigma = 0.0;
  std::vector<long> steps;     ///< checkpoints (coin tosses)
  std::vector<double> mean_fraction;  ///< <x_1> at each checkpoint
  std::vector<double> mean_sigma;
  double max_abs_z = 0.0;      ///< of (<x_1(t)> - x0) / sigma over checkpoints with sigma > 0
  double mean_absorption_steps = 0.0;
};

/// Fair coin, one stake per toss, until one player holds everything.
/// x0 and 1 - x0 must both be whole multiples of `stake`.
GamblerReport gambler_ruin(double x0, double stake, std::size_t runs, std::uint64_t seed, int threads = 0);

// ---------------------------------------------------------------------------
// Finite-dimensional collapse dynamics
// ---------------------------------------------------------------------------

/// Mutually commuting Hermitian collapse operators and an optional Hamiltonian.
class CollapseOperatorSet {
 public:
  explicit CollapseOperatorSet(std::vector<CMatrix> operators, std::optional<CMatrix> hamiltonian = std::nullopt);

  int dim() const { return static_cast<int>(basis_.rows()); }
  std::size_t count() const { return ops_.size(); }
  const std::vector<CMatrix>& operators() const { return ops_; }
  const std::optional<CMatrix>& hamiltonian() const { return h_; }
  /// Columns are the joint eigenvectors.
  const CMatrix& basis() const { return basis_; }
  /// eigenvalues(r, n): eigenvalue of operator r on joint eigenvector n.
  const Eigen::MatrixXd& eigenvalues() const { return eig_; }
  /// Largest spread of any single operator's spectrum.
  double spectral_range() const;
  /// Spectral norm of H (0 without one).
  double hamiltonian_norm() const { return h_norm_; }
  /// Index of the distinct joint eigenvalue tuple each eigenvector belongs to.
  const std::vector<int>& sector_of() const { return sector_; }
  int sectors() const { return sectors_; }

 private:
  std::vector<CMatrix> ops_;
  std::optional<CMatrix> h_;
  CMatrix basis_;
  Eigen::MatrixXd eig_;
  double h_norm_ = 0.0;
  std::vector<int> sector_;
  int sectors_ = 0;
};

enum class NoiseScheme {
  /// Reference noise w ~ N(0, lambda/dt) with the probability-rule weight carried along.
  Raw,
  /// Noise drawn from the physical measure: each step picks eigenvector n with
  /// its current squared amplitude and draws w^r ~ N(2 lambda a^r_n, lambda/dt).
  Cooked,
};

struct CslOptions {
  double lambda = 1.0;
  /// 0 picks 0.01 / (lambda * range^2 + |H|).
  double dt = 0.0;
  double t_end = 1.0;
  NoiseScheme scheme = NoiseScheme::Cooked;
  /// Store the state every this many steps (the final step is always stored).
  int record_every = 1;
  bool keep_noise = false;
  bool keep_states = true;
  /// Test hook: constant added to every cooked noise draw.
  double noise_bias = 0.0;
};

/// Default step 0.01 / (lambda * range^2 + |H|), capped so at least 100 steps cover t_end.
double default_dt(const CollapseOperatorSet& ops, double lambda, double t_end);

/// One realization. States and amplitudes are in the joint eigenbasis.
struct CollapseRun {
  std::vector<double> times;
  std::vector<CVector> states;             ///< normalized, only with keep_states
  std::vector<std::vector<double>> x;      ///< squared amplitudes per stored time
  std::vector<double> norms;               ///< norm of each stored state
  std::vector<std::vector<double>> noise;  ///< noise[step][r], only with keep_noise
  double dt = 0.0;
  double log_weight = 0.0;                 ///< raw scheme only; 0 for cooked runs
  bool weight_underflow = false;
  std::uint64_t seed = 0;
  int outcome = -1;                        ///< sector with the largest final weight
};

/// Simulates one path of the discrete-time process: per step
/// psi <- exp(-iH dt/2) exp(-(dt/4 lambda) sum_r (w^r - 2 lambda A^r)^2) exp(-iH dt/2) psi.
/// psi0 is given in the original basis and must be normalized.
CollapseRun simulate_csl(const CollapseOperatorSet& ops, const CVector& psi0, const CslOptions& opt, std::uint64_t seed);

struct CslEnsemble {
  std::vector<CollapseRun> runs;    ///< excluded runs are removed
  std::size_t excluded = 0;         ///< raw-scheme weight underflows
  NoiseScheme scheme = NoiseScheme::Cooked;
  int sectors = 0;
  std::vector<int> sector_of;  ///< per joint eigenvector
  std::vector<double> initial_sector_weights;
};

/// Runs are seeded by stream_seed(seed, i), so results do not depend on the worker count.
CslEnsemble csl_ensemble(const CollapseOperatorSet& ops, const CVector& psi0, const CslOptions& opt, std::size_t runs,
                         std::uint64_t seed, int threads = 0);

struct Frequency {
  double value = 0.0;
  double sigma = 0.0;
};

/// (sum w)^2 / sum w^2 over the run weights: the run count for cooked ensembles.
/// Raw weights have log-variance growing like lambda t (a_i - a_j)^2, so this
/// collapses at long times and the weighted estimates stop being meaningful.
double effective_sample_size(const CslEnsemble& ens);
/// Outcome frequency of each sector; raw runs enter with their weights (mean of W 1{outcome}).
std::vector<Frequency> outcome_frequencies(const CslEnsemble& ens);
/// Ensemble mean of the squared amplitudes summed per sector at stored time index k.
std::vector<Frequency> mean_sector_weights(const CslEnsemble& ens, std::size_t k);
/// Ensemble-average density matrix in the joint eigenbasis at stored index k, with per-entry standard errors.
struct AveragedDensity {
  CMatrix rho;
  Eigen::MatrixXd sigma_re;
  Eigen::MatrixXd sigma_im;
};
AveragedDensity ensemble_density(const CslEnsemble& ens, std::size_t k);
CsvTable collapse_run_table(const CollapseRun& run);

struct MartingaleReport {
  bool sums_to_one = true;             ///< sum_n x_n = 1 within 1e-9 for every stored state
  double max_sum_error = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> z;  ///< z[k][n] of (<x_n(t_k)> - x_n(0)) / sigma
  double max_abs_z = 0.0;
  bool drift_ok = true;                ///< max |z| < 3
  double final_cross = 0.0;            ///< max_{n != m} <sqrt(x_n x_m)> at the final time
  double collapsed_fraction = 0.0;     ///< runs with max_n x_n > 0.99 at the end
};

/// Checks sum x_n = 1, <x_n(t)> = x_n(0) and the final cross term. Runs must share dt and record times.
MartingaleReport martingale_diagnostics(const CslEnsemble& ens);

// ---------------------------------------------------------------------------
// Density matrix
// ---------------------------------------------------------------------------

/// -i[H, rho] - (lambda/2) sum_r [A_r, [A_r, rho]] in the original basis.
CMatrix lindblad_rhs(const CollapseOperatorSet& ops, const CMatrix& rho, double lambda);

struct DensityEvolution {
  CMatrix rho;
  double trace_error = 0.0;
  double min_eigenvalue = 0.0;  ///< monitored, never projected
  bool positive = true;         ///< min eigenvalue >= -1e-8
  bool closed_form = false;
  long steps = 0;
};

/// Closed form in the joint eigenbasis when H is absent; fourth-order
/// Runge-Kutta on lindblad_rhs otherwise (dt = 0 picks default_dt).
DensityEvolution density_matrix_csl(const CMatrix& rho0, const CollapseOperatorSet& ops, double lambda, double t,
                                    double dt = 0.0);

// ---------------------------------------------------------------------------
// One particle on a line: position-space master equation
// ---------------------------------------------------------------------------

struct LineGrid {
  int n = 128;
  double length = 32.0;  ///< periodic box [-L/2, L/2)
  double dx() const { return length / n; }
  double x(int i) const { return -0.5 * length + i * dx(); }
};

struct MasterParams {
  double lambda = 1.0;   ///< rate per unit coupling squared
  double a = 1.0;        ///< smearing length
  double mass = 1.0;
  double coupling = 1.0; ///< g; m/m_p by default, N for an N-nucleon clump
  double hbar = 1.0;
};

/// rho(x, x') on the grid, row index x.
struct LineDensity {
  LineGrid grid;
  CMatrix rho;
  double time = 0.0;
};

/// Pure-state density matrix of a sum of Gaussian packets (centers, width, amplitudes), normalized on the grid.
LineDensity gaussian_packets_density(const LineGrid& g, const std::vector<double>& centers, double width,
                                     const std::vector<Complex>& amplitudes);

/// Strang splitting: half kinetic step (spectral, exact), exact collapse
/// factor exp(-lambda g^2 (1 - exp(-(x-x')^2/4a^2)) dt) on every entry, half kinetic step.
/// `potential` (optional, size n) adds exp(-i (V(x) - V(x')) dt / hbar) with the collapse factor.
LineDensity particle_master_equation(const LineDensity& rho0, const MasterParams& p, double dt, int steps,
                                     const std::vector<double>& potential = {});

/// Tr[H rho] with the spectral kinetic energy (plus potential if given).
double line_energy(const LineDensity& rho, const MasterParams& p, const std::vector<double>& potential = {});
double line_trace(const LineDensity& rho);
/// sum over the x-block [i0, i1) and x'-block [j0, j1) of |rho(x, x')| dx^2.
double block_coherence(const LineDensity& rho, int i0, int i1, int j0, int j1);

// ---------------------------------------------------------------------------
// Closed-form consequences
// ---------------------------------------------------------------------------

/// Physical constants and reference parameters (SI), mirrored in data/csl_constants.json.
struct Constants {
  static constexpr double hbar = 1.054571817e-34;        // J s
  static constexpr double proton_mass = 1.67262192369e-27;  // kg
  static constexpr double neutron_mass = 1.67492749804e-27;
  static constexpr double electron_mass = 9.1093837015e-31;
  static constexpr double electron_volt = 1.602176634e-19;  // J
  static constexpr double reference_lambda = 1e-16;      // 1/s
  static constexpr double reference_a = 1e-7;            // m
};

/// Natural units with hbar = 1: lengths in `length_m` metres, masses in `mass_kg` kilograms.
struct UnitSystem {
  double length_m = 1e-7;
  double mass_kg = Constants::proton_mass;
  double time_s() const { return mass_kg * length_m * length_m / Constants::hbar; }
  double energy_j() const { return Constants::hbar / time_s(); }
  double length_to_si(double v) const { return v * length_m; }
  double length_from_si(double v) const { return v / length_m; }
  double time_to_si(double v) const { return v * time_s(); }
  double time_from_si(double v) const { return v / time_s(); }
  double rate_to_si(double v) const { return v / time_s(); }
  double rate_from_si(double v) const { return v * time_s(); }
  double energy_to_si(double v) const { return v * energy_j(); }
  double energy_from_si(double v) const { return v / energy_j(); }
};

struct CslParams {
  double lambda = Constants::reference_lambda;  ///< 1/s for a reference-mass particle
  double a = Constants::reference_a;            ///< m
  double reference_mass = Constants::proton_mass;
  void validate() const;
};

/// sum_i 3 lambda g_i^2 hbar^2 / (4 m_i a^2) in J/s; g_i defaults to m_i / m_ref.
double energy_gain_rate(const std::vector<double>& masses, const CslParams& p,
                        const std::vector<double>& couplings = {});
/// Per spatial dimension: one third of the above.
double energy_gain_rate_1d(double mass, double coupling, double lambda, double a, double hbar = 1.0);

struct WalkPrediction {
  double nucleons = 0.0;
  double size = 0.0;           ///< s, m
  double settle_time = 0.0;    ///< tau_s, s
  double rms_scaling = 0.0;    ///< hbar lambda^(1/2) t^(3/2) / (m_p a), m
  double rms_per_axis = 0.0;   ///< rms_scaling / sqrt(6), from velocity diffusion along one axis
  bool within_validity = true; ///< clump radius <= a
};

/// Clump of N nucleons; t in seconds.
WalkPrediction random_walk_predictions(double nucleons, const CslParams& p, double t, double clump_radius = 0.0);
/// Nucleon count of a sphere with the given radius (m) and density (kg/m^3).
double sphere_nucleons(double radius, double density);

enum class InterferenceVerdict {
  Agrees,    ///< lambda^-1 exceeds 100 N^2 dT by more than a factor 10
  Testable,  ///< within a factor 10 of the 1% threshold
  Excluded,  ///< collapse would wash out the pattern by more than 1%
};
std::string to_string(InterferenceVerdict v);

struct InterferenceResult {
  double threshold_inverse_rate = 0.0;  ///< 100 N^2 dT, s
  double ratio = 0.0;                   ///< lambda 100 N^2 dT
  double decay_factor = 1.0;            ///< exp(-lambda N^2 dT)
  bool agrees_at_1pct = true;           ///< lambda^-1 > 100 N^2 dT
  InterferenceVerdict verdict = InterferenceVerdict::Agrees;
};
InterferenceResult interference_criterion(double nucleons, double delta_t, double lambda);

/// Two particles bound by a harmonic relative potential with the centre of
/// mass fixed at the origin; relative levels n0 (initial) and n (final).
struct HarmonicPair {
  double m1 = 1.0;
  double m2 = 1.0;
  double omega = 1.0;
  int n0 = 0;
  int n = 1;
  double hbar = 1.0;
  double reduced_mass() const { return m1 * m2 / (m1 + m2); }
  /// sqrt(hbar / (mu omega)).
  double size() const;
};

struct ExcitationRate {
  double dipole_element = 0.0;  ///< <n| sum g_i x_i |n0>
  double gamma = 0.0;           ///< lambda / (2 a^2) |dipole_element|^2
  double quadrupole_estimate = 0.0;  ///< lambda (g1 + g2)^2 (size/a)^4, order of magnitude only
};

/// 1D excitation rate. Couplings default to m_i / reference_mass.
ExcitationRate excitation_rate(const HarmonicPair& sys, double lambda, double a, double reference_mass = 1.0,
                               std::optional<std::array<double, 2>> couplings = std::nullopt);

// ---------------------------------------------------------------------------
// Discrete hits
// ---------------------------------------------------------------------------

struct LineState {
  LineGrid grid;
  std::vector<Complex> psi;
  double norm() const;
};

LineState gaussian_packets_state(const LineGrid& g, const std::vector<double>& centers, double width,
                                 const std::vector<Complex>& amplitudes);

/// Hit kernel (pi a^2)^(-1/4) exp(-(x - z)^2 / 2a^2); its square integrates to 1 over z.
double hit_kernel(double u, double a);

struct HitEvent {
  double time = 0.0;
  int particle = 0;
  double center = 0.0;
  double norm_before = 1.0;
  double norm_after = 1.0;   ///< after renormalization
  double weight = 0.0;       ///< norm of the hit state before renormalization
};

struct HitRun {
  std::vector<HitEvent> hits;
  LineState state;
};

/// Poisson hits at rate `rate` (no other dynamics). The centre is drawn from
/// p(z) = int |psi(x)|^2 G(x - z)^2 dx; psi <- G psi, renormalized.
HitRun sl_hit_process(const LineState& psi, double rate, double a, double t_end, std::uint64_t seed,
                      std::size_t max_hits = static_cast<std::size_t>(-1));

/// N particles in a superposition of two branches; in branch b every particle
/// has the same one-particle packet phi_b (width `width` around centers[b]).
/// Factors are tracked per particle and branch, so hits update the product exactly.
struct ClumpConfig {
  int particles = 1;
  std::array<double, 2> centers{-5.0, 5.0};
  double width = 0.1;
  std::array<Complex, 2> amplitudes{Complex(std::sqrt(0.5), 0.0), Complex(std::sqrt(0.5), 0.0)};
  double rate = 1.0;  ///< per particle
  double a = 1.0;
  LineGrid grid{512, 16.0};
};

struct ClumpRun {
  std::vector<double> hit_times;
  std::array<Complex, 2> amplitudes{};  ///< final branch amplitudes
};

struct ClumpCoherence {
  std::vector<double> times;
  std::vector<double> coherence;  ///< ensemble mean of |c_1 c_2^*| / |c_1(0) c_2(0)^*|
  std::vector<double> sigma;
  double fitted_rate = 0.0;
  double fitted_rate_sigma = 0.0;
  std::vector<ClumpRun> runs;
};

/// Ensemble of clump runs; coherence is recorded at `times` and its decay rate fitted log-linearly.
ClumpCoherence sl_clump_collapse(const ClumpConfig& cfg, const std::vector<double>& times, std::size_t runs,
                                 std::uint64_t seed, int threads = 0);

}  // namespace neqlab::collapse
