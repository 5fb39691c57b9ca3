#include "neqlab/subquantum.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>

#include "neqlab/parallel.hpp"
#include "neqlab/quadrature.hpp"
#include "neqlab/rng.hpp"

namespace neqlab::subquantum {

namespace {

struct LineRule {
  std::vector<double> x;
  std::vector<double> w;
};

// Composite 8-point Gauss-Legendre rule on [lo, hi].
LineRule composite_rule(double lo, double hi, int panels) {
  const auto& g = gauss_legendre(8);
  LineRule r;
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p)
    for (std::size_t k = 0; k < g.nodes.size(); ++k) {
      r.x.push_back(lo + (p + 0.5 * (g.nodes[k] + 1.0)) * h);
      r.w.push_back(0.5 * h * g.weights[k]);
    }
  return r;
}

void require_line(const GuidingField& f, const char* who) {
  if (f.dims() != 1) throw ValidationError(std::string(who) + ": the state must be one-dimensional");
}

Complex value_in_domain(const GuidingField& f, double x) {
  return f.contains({x, 0.0}) ? f.sample({x, 0.0}, 0.0).psi : Complex{};
}

}  // namespace

double pointer_overlap(double u, double box_width) {
  if (!(box_width > 0.0)) throw ValidationError("pointer_overlap: box width must be positive");
  const double a = std::abs(u);
  if (a >= box_width) return 0.0;
  const double s = kPi * a / box_width;
  return (1.0 - a / box_width) * std::cos(s) + std::sin(s) / kPi;
}

double measurement_fidelity(const GuidingField& psi0, double at, double pointer_width) {
  require_line(psi0, "measurement_fidelity");
  const auto rule = composite_rule(psi0.lower()[0], psi0.upper()[0], 64);
  const std::size_t n = rule.x.size();
  std::vector<double> mass(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = rule.w[i] * std::norm(value_in_domain(psi0, rule.x[i]));
    total += mass[i];
  }
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) f += mass[i] * mass[j] * pointer_overlap(at * (rule.x[i] - rule.x[j]), pointer_width);
  return f / (total * total);
}

SubqResult subq_measure(const GuidingField& psi0, const SubqConfig& cfg) {
  require_line(psi0, "subq_measure");
  const double at = cfg.a * cfg.t;
  if (!(cfg.w > 0.0)) throw ValidationError("subq_measure: w must be positive");
  if (!(at > 0.0)) throw ValidationError("subq_measure: a t must be positive");
  if (!(cfg.pointer_width > 0.0) || cfg.w > cfg.pointer_width)
    throw ValidationError("subq_measure: the pointer prior must fit inside the pointer's box");
  if (cfg.runs == 0) throw ValidationError("subq_measure: runs must be >= 1");

  const auto ens = pilotwave::sample_ensemble(pilotwave::DistributionSpec::equilibrium(), psi0, cfg.runs, cfg.seed, 0.0,
                                              cfg.threads);
  SubqResult r;
  r.bound = cfg.w / (2.0 * at);
  r.runs.resize(cfg.runs);
  // pointer draws use their own streams so x0 and y0 stay independent
  const std::uint64_t pointer_seed = splitmix64(cfg.seed ^ 0x5A17B0A7ULL);
  for (std::size_t i = 0; i < cfg.runs; ++i) {
    Rng rng = make_stream(pointer_seed, i);
    SubqRun& run = r.runs[i];
    run.x0 = ens.samples[i][0];
    run.y0 = cfg.w * (uniform01(rng) - 0.5);
    run.y_meas = run.y0 + at * run.x0;
    run.estimate = run.y_meas / at;
    run.error = std::abs(run.estimate - run.x0);
    r.max_error = std::max(r.max_error, run.error);
  }
  // rounding in y_meas / at may exceed the bound by a few ulps of x0
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(psi0.upper()[0]));
  r.all_within_bound = r.max_error <= r.bound + slack;
  r.disturbance = 1.0 - measurement_fidelity(psi0, at, cfg.pointer_width);
  return r;
}

CsvTable subq_table(const SubqResult& r) {
  CsvTable t({"run", "x0", "y0", "y_meas", "x_estimate", "error"});
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    const auto& u = r.runs[i];
    t.add_row({format_number(static_cast<std::int64_t>(i)), format_number(u.x0), format_number(u.y0),
               format_number(u.y_meas), format_number(u.estimate), format_number(u.error)});
  }
  return t;
}

double state_overlap(const GuidingField& psi1, const GuidingField& psi2) {
  require_line(psi1, "state_overlap");
  require_line(psi2, "state_overlap");
  const double lo = std::min(psi1.lower()[0], psi2.lower()[0]);
  const double hi = std::max(psi1.upper()[0], psi2.upper()[0]);
  const auto rule = composite_rule(lo, hi, 256);
  Complex ip{};
  double n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    const Complex a = value_in_domain(psi1, rule.x[i]), b = value_in_domain(psi2, rule.x[i]);
    ip += rule.w[i] * std::conj(a) * b;
    n1 += rule.w[i] * std::norm(a);
    n2 += rule.w[i] * std::norm(b);
  }
  return std::norm(ip) / (n1 * n2);
}

DistinguishResult distinguish_nonorthogonal(const GuidingField& psi1, const GuidingField& psi2,
                                            const DistinguishConfig& cfg) {
  require_line(psi1, "distinguish_nonorthogonal");
  require_line(psi2, "distinguish_nonorthogonal");
  if (!(cfg.w > 0.0) || !(cfg.at > 0.0)) throw ValidationError("distinguish_nonorthogonal: w and a t must be positive");
  if (cfg.times.empty()) throw ValidationError("distinguish_nonorthogonal: at least one measurement time is needed");
  for (std::size_t k = 1; k < cfg.times.size(); ++k)
    if (!(cfg.times[k] > cfg.times[k - 1]))
      throw ValidationError("distinguish_nonorthogonal: measurement times must increase");
  if (cfg.runs == 0) throw ValidationError("distinguish_nonorthogonal: runs must be >= 1");

  DistinguishResult out;
  out.overlap = state_overlap(psi1, psi2);
  if (out.overlap >= 1.0 - 1e-10) {
    // identical up to a phase: same velocity field, so no record can tell them apart
    if (!cfg.allow_degenerate)
      throw ValidationError(
          "distinguish_nonorthogonal: the two states define the same velocity field and cannot be distinguished");
    out.degenerate = true;
    out.accuracy = 0.5;
    return out;
  }

  const double t0 = cfg.times.front();
  const std::span<const double> later(cfg.times.data() + 1, cfg.times.size() - 1);
  const GuidingField* states[2] = {&psi1, &psi2};
  const auto eq = pilotwave::DistributionSpec::equilibrium();
  const pilotwave::Ensemble starts[2] = {
      pilotwave::sample_ensemble(eq, psi1, cfg.runs, splitmix64(cfg.seed ^ 1), t0, cfg.threads),
      pilotwave::sample_ensemble(eq, psi2, cfg.runs, splitmix64(cfg.seed ^ 2), t0, cfg.threads)};
  const double e = cfg.w / (2.0 * cfg.at);
  const double var = e * e / 3.0;
  constexpr double kNone = -std::numeric_limits<double>::infinity();

  enum Outcome : int { Dropped, Wrong, Right, TieWrong, TieRight };
  std::vector<int> outcome(cfg.runs, Dropped);
  parallel_for(cfg.runs, [&](std::size_t i) {
    Rng rng = make_stream(cfg.seed, i);
    const int truth = uniform01(rng) < 0.5 ? 0 : 1;
    const auto path = pilotwave::integrate_trajectory(*states[truth], starts[truth].samples[i], later, cfg.tolerances, t0);
    if (path.failed) return;
    std::vector<double> reading(path.points.size());
    for (std::size_t k = 0; k < reading.size(); ++k)
      reading[k] = path.points[k].x[0] + e * (2.0 * uniform01(rng) - 1.0);

    double score[2];
    for (int g = 0; g < 2; ++g) {
      const GuidingField& f = *states[g];
      double x = reading[0];
      if (f.bounded()) {
        const double pad = 1e-9 * (f.upper()[0] - f.lower()[0]);
        x = std::clamp(x, f.lower()[0] + pad, f.upper()[0] - pad);
      }
      const double rho = f.contains({x, 0.0}) ? std::norm(f.sample({x, 0.0}, t0).psi) : 0.0;
      score[g] = kNone;
      // a reading outside a state's support rules that state out
      if (!f.contains({x, 0.0}) || !(rho > 0.0)) continue;
      try {
        const auto pred = pilotwave::integrate_trajectory(f, {x, 0.0}, later, cfg.tolerances, t0);
        if (pred.failed) continue;
        double s = std::log(rho);
        for (std::size_t k = 0; k < reading.size(); ++k) {
          const double r = reading[k] - pred.points[k].x[0];
          s -= r * r / (2.0 * var);
        }
        score[g] = s;
      } catch (const NodeError&) {
      }
    }
    int guess;
    bool tie = score[0] == score[1];
    if (tie)
      guess = uniform01(rng) < 0.5 ? 0 : 1;
    else
      guess = score[1] > score[0] ? 1 : 0;
    const bool right = guess == truth;
    outcome[i] = tie ? (right ? TieRight : TieWrong) : (right ? Right : Wrong);
  }, cfg.threads);

  for (int o : outcome) {
    if (o == Dropped) continue;
    ++out.runs;
    if (o == Right || o == TieRight) ++out.correct;
    if (o == TieRight || o == TieWrong) ++out.ties;
  }
  if (out.runs == 0) throw NumericalError("distinguish_nonorthogonal: every trajectory failed");
  if (out.runs < cfg.runs && static_cast<double>(cfg.runs - out.runs) >= pilotwave::kMaxFailureFraction * cfg.runs)
    throw NumericalError("distinguish_nonorthogonal: too many failed trajectories");
  out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.runs);
  out.accuracy_sigma = std::sqrt(out.accuracy * (1.0 - out.accuracy) / static_cast<double>(out.runs));
  return out;
}

SignalingResult signaling_experiment(const wavefield::EigenmodeWaveFunction& psi, const SignalingConfig& cfg) {
  if (psi.dims() != 2) throw ValidationError("signaling_experiment: the entangled state must be two-dimensional");
  if (!(cfg.quenched_mass_b > 0.0)) throw ValidationError("signaling_experiment: quenched mass must be positive");
  if (cfg.probe_times.empty()) throw ValidationError("signaling_experiment: at least one probe time is needed");
  for (std::size_t k = 0; k < cfg.probe_times.size(); ++k)
    if (!(cfg.probe_times[k] > (k ? cfg.probe_times[k - 1] : 0.0)))
      throw ValidationError("signaling_experiment: probe times must be positive and increasing");
  if (cfg.samples < 2) throw ValidationError("signaling_experiment: need at least two samples");
  if (cfg.fourier_modes < 1 || cfg.histogram_bins < 1)
    throw ValidationError("signaling_experiment: fourier_modes and histogram_bins must be >= 1");

  const auto masses = psi.masses();
  const auto quenched = psi.with_masses({masses[0], cfg.quenched_mass_b});
  const auto ens = pilotwave::sample_ensemble(cfg.start, psi, cfg.samples, cfg.seed, 0.0, cfg.threads);
  const std::size_t n = ens.size(), np = cfg.probe_times.size();

  // x_A per sample and probe for both evolutions; a failure in either drops the pair
  std::vector<double> xa(n * np), xq(n * np);
  std::vector<char> ok(n, 1);
  parallel_for(n, [&](std::size_t i) {
    const auto a = pilotwave::integrate_trajectory(psi, ens.samples[i], cfg.probe_times, cfg.tolerances);
    const auto b = pilotwave::integrate_trajectory(quenched, ens.samples[i], cfg.probe_times, cfg.tolerances);
    if (a.failed || b.failed) {
      ok[i] = 0;
      return;
    }
    for (std::size_t k = 0; k < np; ++k) {
      xa[i * np + k] = a.points[k + 1].x[0];
      xq[i * np + k] = b.points[k + 1].x[0];
    }
  }, cfg.threads);

  SignalingResult out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) kept.push_back(i);
  out.failures = n - kept.size();
  if (static_cast<double>(out.failures) >= pilotwave::kMaxFailureFraction * static_cast<double>(n))
    throw NumericalError("signaling_experiment: too many failed trajectories");
  const double m = static_cast<double>(kept.size());

  const double side = psi.box_side();
  const int bins = cfg.histogram_bins, kf = cfg.fourier_modes;
  const double bw = side / bins;
  auto bin_of = [&](double x) { return std::clamp(static_cast<int>(x / bw), 0, bins - 1); };

  for (std::size_t k = 0; k < np; ++k) {
    SignalingProbe p;
    p.t = cfg.probe_times[k];
    // per-sample differences: histogram indicators and Fourier cosines
    std::vector<double> sum(bins, 0.0), sum2(bins, 0.0);
    Eigen::MatrixXd d(kept.size(), kf);
    for (std::size_t s = 0; s < kept.size(); ++s) {
      const std::size_t i = kept[s];
      const double a = xa[i * np + k], q = xq[i * np + k];
      const int ba = bin_of(a), bq = bin_of(q);
      if (ba != bq) {
        sum[bq] += 1.0;
        sum[ba] -= 1.0;
        sum2[bq] += 1.0;
        sum2[ba] += 1.0;
      }
      for (int j = 0; j < kf; ++j)
        d(s, j) = std::cos((j + 1) * kPi * q / side) - std::cos((j + 1) * kPi * a / side);
    }
    for (int b = 0; b < bins; ++b) {
      const double mean = sum[b] / m;
      const double var = std::max(0.0, sum2[b] / m - mean * mean) * m / (m - 1.0);
      p.bin_centers.push_back((b + 0.5) * bw);
      p.delta_p.push_back(mean / bw);
      p.delta_p_sigma.push_back(std::sqrt(var / m) / bw);
      p.integral += mean;
    }
    const Eigen::VectorXd mean = d.colwise().mean();
    const Eigen::MatrixXd centered = d.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (m - 1.0);
    for (int j = 0; j < kf; ++j) {
      p.fourier.push_back(mean(j));
      p.fourier_sigma.push_back(std::sqrt(cov(j, j) / m));
    }
    p.signal_norm = mean.norm();
    if (p.signal_norm > 0.0) p.signal_sigma = std::sqrt(std::max(0.0, mean.dot(cov * mean) / m)) / p.signal_norm;
    if (p.signal_norm > 0.0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cov);
      cod.setThreshold(1e-12);
      p.hotelling_dof = static_cast<int>(cod.rank());
      if (p.hotelling_dof > 0) {
        p.hotelling_t2 = m * mean.dot(cod.pseudoInverse() * mean);
        boost::math::chi_squared chi(p.hotelling_dof);
        p.p_value = boost::math::cdf(boost::math::complement(chi, p.hotelling_t2));
      } else {
        // every sample moved by the same amount: a deterministic, nonzero shift
        p.p_value = 0.0;
      }
    }
    out.probes.push_back(std::move(p));
  }

  // log-log slope of the signal norm
  if (np >= 2 && std::all_of(out.probes.begin(), out.probes.end(), [](const auto& p) { return p.signal_norm > 0.0; })) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : out.probes) {
      const double x = std::log(p.t), y = std::log(p.signal_norm);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double c = static_cast<double>(np);
    const double denom = c * sxx - sx * sx;
    if (denom > 0.0) {
      out.exponent = (c * sxy - sx * sy) / denom;
      const double icpt = (sy - out.exponent * sx) / c;
      double rss = 0.0;
      for (const auto& p : out.probes) {
        const double r = std::log(p.signal_norm) - icpt - out.exponent * std::log(p.t);
        rss += r * r;
      }
      out.exponent_sigma = np > 2 ? std::sqrt(rss / (c - 2.0) * c / denom) : 0.0;
      out.exponent_valid = true;
    }
  }
  return out;
}

CsvTable signaling_table(const SignalingResult& r) {
  CsvTable t({"t", "x_A", "delta_p_A", "sigma"});
  for (const auto& p : r.probes)
    for (std::size_t b = 0; b < p.bin_centers.size(); ++b)
      t.add_row(std::vector<double>{p.t, p.bin_centers[b], p.delta_p[b], p.delta_p_sigma[b]});
  return t;
}

}  // namespace neqlab::subquantum
