#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "neqlab/common.hpp"
#include "neqlab/csv.hpp"

/// Deterministic hidden-variables models on the unit square, their ensembles,
/// and the two-outcome transmission signature.
namespace neqlab::hvmodels {

using Setting = std::array<double, 3>;  ///< unit measurement axis
using Lambda = std::array<double, 2>;   ///< point of [0,1)^2

struct Outcomes {
  int a = 1;  ///< sigma_A in {-1, +1}
  int b = 1;  ///< sigma_B in {-1, +1}
  bool operator==(const Outcomes&) const = default;
};

/// Outcome mapping omega(m_A, m_B; lambda). Must be total and deterministic.
struct HvModel {
  std::string name;
  std::function<Outcomes(const Setting& m_a, const Setting& m_b, const Lambda& l)> omega;
  /// True for the builtin threshold model, whose transition sets are known in closed form.
  bool threshold_model = false;
};

/// sigma_B = +1 iff l1 >= 1/2; sigma_A = sigma_B if l2 < q else -sigma_B,
/// q = (1 - m_A . m_B) / 2. Uniform lambda gives <sigma_A sigma_B> = -m_A . m_B.
HvModel builtin_singlet_model();

/// q(m_A, m_B) of the builtin model.
double same_sign_threshold(const Setting& m_a, const Setting& m_b);

/// Axis in the x-z plane at angle theta from +z.
Setting axis_at(double theta);

/// Axis-aligned rectangle [x0, x1) x [y0, y1) inside the unit square.
struct Rect {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
  bool empty() const { return area() == 0.0; }
};

/// Piecewise-constant density on a regular nx x ny partition of [0,1)^2.
class HvDistribution {
 public:
  /// Row-major weights (index i * ny + j covers l1 in cell i, l2 in cell j);
  /// any nonnegative scale with a positive sum.
  HvDistribution(int nx, int ny, std::vector<double> weights);
  static HvDistribution uniform() { return HvDistribution(1, 1, {1.0}); }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double density(const Lambda& l) const;
  /// Exact measure of a rectangle.
  double measure(const Rect& r) const;
  Lambda sample(double u_cell, double u1, double u2) const;
  std::string describe() const;

 private:
  int nx_, ny_;
  std::vector<double> density_;  ///< per cell, integrates to 1
  std::vector<double> cdf_;
};

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

struct EnsembleStatistics {
  std::size_t samples = 0;
  Estimate p_a_plus;
  Estimate p_b_plus;
  Estimate correlation;
};

EnsembleStatistics ensemble_statistics(const HvModel& model, const HvDistribution& rho, const Setting& m_a,
                                       const Setting& m_b, std::size_t n, std::uint64_t seed, int threads = 0);

/// Exact statistics of the builtin model under a piecewise-constant density.
struct ExactStatistics {
  double p_a_plus = 0.0;
  double p_b_plus = 0.0;
  double correlation = 0.0;
};
ExactStatistics exact_statistics(const HvDistribution& rho, const Setting& m_a, const Setting& m_b);

/// Regions of lambda whose A-outcome flips from - to + (and + to -) when m_B changes to m_B'.
struct TransitionSetReport {
  std::vector<Rect> minus_to_plus;
  std::vector<Rect> plus_to_minus;
  double mu_qt_minus_to_plus = 0.0;
  double mu_qt_plus_to_minus = 0.0;
  double mu_rho_minus_to_plus = 0.0;
  double mu_rho_plus_to_minus = 0.0;
  /// Predicted change of P(sigma_A = +1) under the setting change.
  double marginal_shift_a() const { return mu_rho_minus_to_plus - mu_rho_plus_to_minus; }
  /// False when the regions come from a grid scan of a custom model.
  bool exact = true;
};

/// Closed-form rectangles for the builtin model; other models are scanned on
/// a midpoint grid of `scan_cells`^2 cells, and the report is marked inexact.
TransitionSetReport transition_sets(const HvModel& model, const Setting& m_a, const Setting& m_b, const Setting& m_b2,
                                    const HvDistribution& rho, int scan_cells = 512);
std::string transition_report_json(const TransitionSetReport& r);

// ---------------------------------------------------------------------------
// Two-outcome transmission (outcome +1 iff lambda < p_QT(theta))
// ---------------------------------------------------------------------------

/// Density on [0,1) known through its CDF.
class Density1D {
 public:
  static Density1D uniform();
  /// rho(l) = (k + 1) l^k, k > -1; k = 1 gives 2 l.
  static Density1D power(double k);
  /// Piecewise constant on equal bins.
  static Density1D piecewise(std::vector<double> weights);

  double cdf(double l) const;
  double density(double l) const;
  const std::string& describe() const { return name_; }

 private:
  std::function<double(double)> cdf_;
  std::function<double(double)> pdf_;
  std::string name_;
};

/// 1/2 (1 + P cos 2 theta).
double quantum_transmission(double theta, double bloch_p);

struct TransmissionCurve {
  std::vector<double> theta;
  std::vector<double> p_plus;
  std::vector<double> sigma;  ///< zero for the exact curve
  double fit_p = 0.0;         ///< best-fit P' of 1/2 (1 + P' cos(2 theta + phi))
  double fit_phase = 0.0;
  double max_residual = 0.0;  ///< against the fitted curve
  double max_quantum_deviation = 0.0;  ///< against 1/2 (1 + P cos 2 theta)
  /// sqrt(2) E(pi/8) - E(0) - E(pi/4), E = 2 p+ - 1; zero whenever E is linear in the Bloch direction.
  double additivity_defect = 0.0;
  bool nonquantum_signature = false;
};

/// p+(theta) = CDF_rho(p_QT(theta)). With `samples` > 0 the curve is estimated
/// by sampling lambda instead, with binomial error bars.
TransmissionCurve two_state_transmission(const Density1D& rho, const std::vector<double>& theta, double bloch_p,
                                         double residual_threshold = 0.01, std::size_t samples = 0,
                                         std::uint64_t seed = 1);
CsvTable transmission_table(const TransmissionCurve& c);

}  // namespace neqlab::hvmodels
