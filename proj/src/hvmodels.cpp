#include "neqlab/hvmodels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "neqlab/parallel.hpp"
#include "neqlab/rng.hpp"

namespace neqlab::hvmodels {

namespace {

void require_unit(const Setting& m, const char* who) {
  const double n = std::sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]);
  if (!(std::abs(n - 1.0) <= 1e-9)) throw ValidationError(std::string(who) + ": settings must be unit vectors");
}

double dot(const Setting& a, const Setting& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace

double same_sign_threshold(const Setting& m_a, const Setting& m_b) {
  return std::clamp(0.5 * (1.0 - dot(m_a, m_b)), 0.0, 1.0);
}

Setting axis_at(double theta) { return {std::sin(theta), 0.0, std::cos(theta)}; }

HvModel builtin_singlet_model() {
  HvModel m;
  m.name = "singlet-threshold";
  m.threshold_model = true;
  m.omega = [](const Setting& a, const Setting& b, const Lambda& l) {
    Outcomes o;
    o.b = l[0] >= 0.5 ? 1 : -1;
    o.a = l[1] < same_sign_threshold(a, b) ? o.b : -o.b;
    return o;
  };
  return m;
}

// ---------------------------------------------------------------------------

HvDistribution::HvDistribution(int nx, int ny, std::vector<double> weights) : nx_(nx), ny_(ny) {
  if (nx < 1 || ny < 1) throw ValidationError("HvDistribution: partition sizes must be >= 1");
  if (weights.size() != static_cast<std::size_t>(nx) * ny)
    throw ValidationError("HvDistribution: weight count must equal nx * ny");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("HvDistribution: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("HvDistribution: weights must have a positive sum");
  const double cell = 1.0 / (static_cast<double>(nx) * ny);
  density_.resize(weights.size());
  cdf_.resize(weights.size());
  double run = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    density_[c] = weights[c] / total / cell;
    run += weights[c] / total;
    cdf_[c] = run;
  }
  cdf_.back() = 1.0;
}

double HvDistribution::density(const Lambda& l) const {
  if (l[0] < 0.0 || l[0] >= 1.0 || l[1] < 0.0 || l[1] >= 1.0) return 0.0;
  const int i = std::min(nx_ - 1, static_cast<int>(l[0] * nx_));
  const int j = std::min(ny_ - 1, static_cast<int>(l[1] * ny_));
  return density_[i * ny_ + j];
}

double HvDistribution::measure(const Rect& r) const {
  const double x0 = std::max(0.0, r.x0), x1 = std::min(1.0, r.x1);
  const double y0 = std::max(0.0, r.y0), y1 = std::min(1.0, r.y1);
  if (!(x1 > x0) || !(y1 > y0)) return 0.0;
  double mu = 0.0;
  for (int i = 0; i < nx_; ++i) {
    const double ox = std::min(x1, (i + 1.0) / nx_) - std::max(x0, static_cast<double>(i) / nx_);
    if (ox <= 0.0) continue;
    for (int j = 0; j < ny_; ++j) {
      const double oy = std::min(y1, (j + 1.0) / ny_) - std::max(y0, static_cast<double>(j) / ny_);
      if (oy > 0.0) mu += density_[i * ny_ + j] * ox * oy;
    }
  }
  return mu;
}

Lambda HvDistribution::sample(double u_cell, double u1, double u2) const {
  const auto c = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u_cell) - cdf_.begin());
  const std::size_t cell = std::min(c, cdf_.size() - 1);
  const int i = static_cast<int>(cell) / ny_, j = static_cast<int>(cell) % ny_;
  return {(i + u1) / nx_, (j + u2) / ny_};
}

std::string HvDistribution::describe() const {
  if (nx_ == 1 && ny_ == 1) return "uniform";
  return "piecewise " + std::to_string(nx_) + "x" + std::to_string(ny_);
}

// ---------------------------------------------------------------------------

EnsembleStatistics ensemble_statistics(const HvModel& model, const HvDistribution& rho, const Setting& m_a,
                                       const Setting& m_b, std::size_t n, std::uint64_t seed, int threads) {
  require_unit(m_a, "ensemble_statistics");
  require_unit(m_b, "ensemble_statistics");
  if (n < 2) throw ValidationError("ensemble_statistics: need at least two samples");
  // fixed-size blocks keep the result independent of the worker count
  const std::size_t block = 4096, blocks = (n + block - 1) / block;
  std::vector<std::array<long, 3>> tallies(blocks, {0, 0, 0});
  parallel_for(blocks, [&](std::size_t b) {
    Rng rng = make_stream(seed, b);
    auto& t = tallies[b];
    const std::size_t end = std::min(n, (b + 1) * block);
    for (std::size_t s = b * block; s < end; ++s) {
      const double u0 = uniform01(rng), u1 = uniform01(rng), u2 = uniform01(rng);
      const Outcomes o = model.omega(m_a, m_b, rho.sample(u0, u1, u2));
      t[0] += o.a > 0;
      t[1] += o.b > 0;
      t[2] += o.a * o.b;
    }
  }, threads);
  long a = 0, b = 0, ab = 0;
  for (const auto& t : tallies) {
    a += t[0];
    b += t[1];
    ab += t[2];
  }
  const double dn = static_cast<double>(n);
  auto binomial = [&](double p) { return Estimate{p, std::sqrt(p * (1.0 - p) / dn)}; };
  EnsembleStatistics s;
  s.samples = n;
  s.p_a_plus = binomial(a / dn);
  s.p_b_plus = binomial(b / dn);
  const double c = ab / dn;
  s.correlation = {c, std::sqrt(std::max(0.0, 1.0 - c * c) / dn)};
  return s;
}

ExactStatistics exact_statistics(const HvDistribution& rho, const Setting& m_a, const Setting& m_b) {
  require_unit(m_a, "exact_statistics");
  require_unit(m_b, "exact_statistics");
  const double q = same_sign_threshold(m_a, m_b);
  ExactStatistics s;
  s.p_b_plus = rho.measure({0.5, 1.0, 0.0, 1.0});
  s.p_a_plus = rho.measure({0.5, 1.0, 0.0, q}) + rho.measure({0.0, 0.5, q, 1.0});
  const double same = rho.measure({0.0, 1.0, 0.0, q});
  s.correlation = 2.0 * same - 1.0;
  return s;
}

namespace {

// Merges flagged midpoint cells column by column into rectangles.
std::vector<Rect> scan_regions(int cells, const std::function<bool(const Lambda&)>& flag) {
  std::vector<Rect> out;
  const double h = 1.0 / cells;
  for (int i = 0; i < cells; ++i) {
    int start = -1;
    for (int j = 0; j <= cells; ++j) {
      const bool on = j < cells && flag({(i + 0.5) * h, (j + 0.5) * h});
      if (on && start < 0) start = j;
      if (!on && start >= 0) {
        out.push_back({i * h, (i + 1) * h, start * h, j * h});
        start = -1;
      }
    }
  }
  return out;
}

double total_measure(const HvDistribution& rho, const std::vector<Rect>& rs) {
  double mu = 0.0;
  for (const auto& r : rs) mu += rho.measure(r);
  return mu;
}

}  // namespace

TransitionSetReport transition_sets(const HvModel& model, const Setting& m_a, const Setting& m_b, const Setting& m_b2,
                                    const HvDistribution& rho, int scan_cells) {
  require_unit(m_a, "transition_sets");
  require_unit(m_b, "transition_sets");
  require_unit(m_b2, "transition_sets");
  TransitionSetReport r;
  if (model.threshold_model) {
    const double q = same_sign_threshold(m_a, m_b), q2 = same_sign_threshold(m_a, m_b2);
    // raising q turns sigma_A from -sigma_B to sigma_B on l2 in [q, q')
    const Rect right{0.5, 1.0, std::min(q, q2), std::max(q, q2)};
    const Rect left{0.0, 0.5, std::min(q, q2), std::max(q, q2)};
    if (!right.empty()) {
      r.minus_to_plus.push_back(q2 > q ? right : left);
      r.plus_to_minus.push_back(q2 > q ? left : right);
    }
  } else {
    if (scan_cells < 1) throw ValidationError("transition_sets: scan_cells must be >= 1");
    r.exact = false;
    r.minus_to_plus = scan_regions(scan_cells, [&](const Lambda& l) {
      return model.omega(m_a, m_b, l).a < 0 && model.omega(m_a, m_b2, l).a > 0;
    });
    r.plus_to_minus = scan_regions(scan_cells, [&](const Lambda& l) {
      return model.omega(m_a, m_b, l).a > 0 && model.omega(m_a, m_b2, l).a < 0;
    });
  }
  const auto uniform = HvDistribution::uniform();
  r.mu_qt_minus_to_plus = total_measure(uniform, r.minus_to_plus);
  r.mu_qt_plus_to_minus = total_measure(uniform, r.plus_to_minus);
  r.mu_rho_minus_to_plus = total_measure(rho, r.minus_to_plus);
  r.mu_rho_plus_to_minus = total_measure(rho, r.plus_to_minus);
  return r;
}

std::string transition_report_json(const TransitionSetReport& r) {
  auto rects = [](const std::vector<Rect>& rs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : rs) a.push_back({{"l1", {x.x0, x.x1}}, {"l2", {x.y0, x.y1}}});
    return a;
  };
  nlohmann::json j;
  j["exact"] = r.exact;
  j["minus_to_plus"] = {{"regions", rects(r.minus_to_plus)},
                        {"mu_qt", r.mu_qt_minus_to_plus},
                        {"mu_rho", r.mu_rho_minus_to_plus}};
  j["plus_to_minus"] = {{"regions", rects(r.plus_to_minus)},
                        {"mu_qt", r.mu_qt_plus_to_minus},
                        {"mu_rho", r.mu_rho_plus_to_minus}};
  j["marginal_shift_a"] = r.marginal_shift_a();
  return j.dump(2);
}

// ---------------------------------------------------------------------------

Density1D Density1D::uniform() {
  Density1D d;
  d.cdf_ = [](double l) { return std::clamp(l, 0.0, 1.0); };
  d.pdf_ = [](double l) { return l >= 0.0 && l < 1.0 ? 1.0 : 0.0; };
  d.name_ = "uniform";
  return d;
}

Density1D Density1D::power(double k) {
  if (!(k > -1.0)) throw ValidationError("Density1D::power: exponent must exceed -1");
  Density1D d;
  d.cdf_ = [k](double l) { return std::pow(std::clamp(l, 0.0, 1.0), k + 1.0); };
  d.pdf_ = [k](double l) { return l > 0.0 && l < 1.0 ? (k + 1.0) * std::pow(l, k) : 0.0; };
  std::ostringstream s;
  s << "power " << k;
  d.name_ = s.str();
  return d;
}

Density1D Density1D::piecewise(std::vector<double> weights) {
  if (weights.empty()) throw ValidationError("Density1D::piecewise: no bins");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("Density1D::piecewise: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("Density1D::piecewise: weights must have a positive sum");
  for (double& w : weights) w /= total;
  std::vector<double> cum(weights.size() + 1, 0.0);
  std::partial_sum(weights.begin(), weights.end(), cum.begin() + 1);
  const double n = static_cast<double>(weights.size());
  Density1D d;
  d.cdf_ = [cum, weights, n](double l) {
    if (l <= 0.0) return 0.0;
    if (l >= 1.0) return 1.0;
    const auto i = static_cast<std::size_t>(l * n);
    return cum[i] + weights[i] * (l * n - static_cast<double>(i));
  };
  d.pdf_ = [weights, n](double l) {
    if (l < 0.0 || l >= 1.0) return 0.0;
    return weights[static_cast<std::size_t>(l * n)] * n;
  };
  d.name_ = "piecewise " + std::to_string(weights.size());
  return d;
}

double Density1D::cdf(double l) const { return cdf_(l); }
double Density1D::density(double l) const { return pdf_(l); }

double quantum_transmission(double theta, double bloch_p) { return 0.5 * (1.0 + bloch_p * std::cos(2.0 * theta)); }

TransmissionCurve two_state_transmission(const Density1D& rho, const std::vector<double>& theta, double bloch_p,
                                         double residual_threshold, std::size_t samples, std::uint64_t seed) {
  if (!(bloch_p >= 0.0 && bloch_p <= 1.0)) throw ValidationError("two_state_transmission: P must lie in [0, 1]");
  if (theta.size() < 3) throw ValidationError("two_state_transmission: need at least three angles");
  TransmissionCurve c;
  c.theta = theta;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double pq = quantum_transmission(theta[k], bloch_p);
    if (samples == 0) {
      c.p_plus.push_back(rho.cdf(pq));
      c.sigma.push_back(0.0);
      continue;
    }
    // lambda = CDF^-1(u) < pq exactly when u < CDF(pq)
    Rng rng = make_stream(seed, k);
    const double threshold = rho.cdf(pq);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) hits += uniform01(rng) < threshold;
    const double p = static_cast<double>(hits) / static_cast<double>(samples);
    c.p_plus.push_back(p);
    c.sigma.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(samples)));
  }

  // p+ - 1/2 = (A cos 2t - B sin 2t) / 2, linear least squares in (A, B)
  Eigen::MatrixXd m(theta.size(), 2);
  Eigen::VectorXd y(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    m(k, 0) = 0.5 * std::cos(2.0 * theta[k]);
    m(k, 1) = -0.5 * std::sin(2.0 * theta[k]);
    y(k) = c.p_plus[k] - 0.5;
  }
  const Eigen::Vector2d ab = m.colPivHouseholderQr().solve(y);
  c.fit_p = std::hypot(ab(0), ab(1));
  c.fit_phase = std::atan2(ab(1), ab(0));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double fit = 0.5 * (1.0 + c.fit_p * std::cos(2.0 * theta[k] + c.fit_phase));
    c.max_residual = std::max(c.max_residual, std::abs(c.p_plus[k] - fit));
    c.max_quantum_deviation =
        std::max(c.max_quantum_deviation, std::abs(c.p_plus[k] - quantum_transmission(theta[k], bloch_p)));
  }
  auto expectation = [&](double t) { return 2.0 * rho.cdf(quantum_transmission(t, bloch_p)) - 1.0; };
  c.additivity_defect = std::sqrt(2.0) * expectation(kPi / 8) - expectation(0.0) - expectation(kPi / 4);
  c.nonquantum_signature = c.max_residual > residual_threshold;
  return c;
}

CsvTable transmission_table(const TransmissionCurve& c) {
  CsvTable t({"theta", "p_plus", "sigma"});
  for (std::size_t k = 0; k < c.theta.size(); ++k) t.add_row(std::vector<double>{c.theta[k], c.p_plus[k], c.sigma[k]});
  return t;
}

}  // namespace neqlab::hvmodels
