#include "neqlab/pilotwave.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "neqlab/parallel.hpp"
#include "neqlab/rng.hpp"

namespace neqlab::pilotwave {

using wavefield::FieldSample;

namespace {

struct OutOfDomain {};

using State = std::array<double, 3>;  // x, y, ln J

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

class Flow {
 public:
  Flow(const GuidingField& wf, const Tolerances& tol)
      : wf_(wf), dims_(wf.dims()), masses_(wf.masses()), node_density_(wf.reference_density()),
        bounded_(wf.bounded()), lo_(wf.lower()), hi_(wf.upper()), slack_(tol.domain_slack) {}

  State operator()(double t, const State& y) const {
    if (bounded_) {
      for (int a = 0; a < dims_; ++a)
        if (y[a] < lo_[a] - slack_ || y[a] > hi_[a] + slack_) throw OutOfDomain{};
    }
    const FieldSample s = wf_.sample({y[0], y[1]}, t);
    const auto v = wavefield::guidance_velocity(s, masses_, dims_, node_density_);
    return {v[0], v[1], wavefield::velocity_divergence(s, masses_, dims_)};
  }

  int dims() const { return dims_; }

 private:
  const GuidingField& wf_;
  int dims_;
  std::array<double, 2> masses_;
  double node_density_;
  bool bounded_;
  Config lo_, hi_;
  double slack_;
};

State axpy(const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
  State out = y;
  for (const auto& [c, k] : terms)
    for (int i = 0; i < 3; ++i) out[i] += h * c * (*k)[i];
  return out;
}

double displacement_length(const GuidingField& wf, const Tolerances& tol) {
  double side = std::numeric_limits<double>::infinity();
  for (int a = 0; a < wf.dims(); ++a) side = std::min(side, wf.upper()[a] - wf.lower()[a]);
  return tol.max_displacement * side;
}

}  // namespace

Trajectory integrate_trajectory(const GuidingField& wf, const Config& x0, std::span<const double> output_times,
                                const Tolerances& tol, double t_start) {
  if (!(tol.rtol > 0.0) || !(tol.atol > 0.0) || !(tol.h_min > 0.0) || !(tol.h_initial > tol.h_min))
    throw ValidationError("integrate_trajectory: tolerances must be positive with h_initial > h_min");
  for (std::size_t i = 0; i < output_times.size(); ++i) {
    if (!std::isfinite(output_times[i]) || output_times[i] < t_start || (i && !(output_times[i] > output_times[i - 1])))
      throw ValidationError("integrate_trajectory: output times must be finite, increasing and >= t_start");
  }
  if (!wf.contains(x0)) throw ValidationError("integrate_trajectory: start point outside the domain");
  if (std::norm(wf.sample(x0, t_start).psi) < wavefield::kNodeThreshold * wf.reference_density())
    throw NodeError();

  const Flow flow(wf, tol);
  const int dims = wf.dims();
  const double max_step_length = displacement_length(wf, tol);

  Trajectory traj;
  traj.initial = x0;
  traj.points.push_back({t_start, x0, 0.0});

  State y{x0[0], dims == 2 ? x0[1] : 0.0, 0.0};
  double t = t_start;
  double h = tol.h_initial;
  State k1 = flow(t, y);
  bool have_k1 = true;

  auto error_norm = [&](const State& y0, const State& y1, const State& err) {
    double s = 0.0;
    int n = 0;
    for (int i = 0; i < 3; ++i) {
      if (i == 1 && dims == 1) continue;
      const double sc = tol.atol + tol.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      s += (err[i] / sc) * (err[i] / sc);
      ++n;
    }
    return std::sqrt(s / n);
  };

  for (double target : output_times) {
    while (t < target) {
      if (traj.steps + traj.rejected_steps >= tol.max_steps) {
        traj.failed = true;
        traj.failure = "step budget exhausted";
        return traj;
      }
      if (!have_k1) {
        k1 = flow(t, y);
        have_k1 = true;
      }
      const double speed = std::hypot(k1[0], k1[1]);
      if (speed > 0.0) h = std::min(h, max_step_length / speed);
      bool last = false;
      if (t + h >= target) {
        h = target - t;
        last = true;
      }
      if (h < tol.h_min && !last) {
        traj.failed = true;
        traj.failure = "step size underflow";
        return traj;
      }
      State y_new, k7;
      double err = 0.0;
      bool node = false;
      try {
        const State k2 = flow(t + c2 * h, axpy(y, h, {{a21, &k1}}));
        const State k3 = flow(t + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
        const State k4 = flow(t + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
        const State k5 = flow(t + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
        const State k6 =
            flow(t + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
        y_new = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
        k7 = flow(t + h, y_new);
        State e{};
        for (int i = 0; i < 3; ++i)
          e[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        err = error_norm(y, y_new, e);
      } catch (const NodeError&) {
        node = true;
        err = std::numeric_limits<double>::infinity();
      } catch (const OutOfDomain&) {
        err = std::numeric_limits<double>::infinity();
      }
      if (!(err <= 1.0)) {
        ++traj.rejected_steps;
        if (node) ++traj.node_encounters;
        h *= std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.25;
        if (h < tol.h_min) {
          traj.failed = true;
          traj.failure = node ? "step size underflow near a node" : "step size underflow";
          return traj;
        }
        continue;
      }
      ++traj.steps;
      t = last ? target : t + h;
      y = y_new;
      k1 = k7;
      const double grow = err > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2))) : 5.0;
      if (!last) h *= grow;
      else h = std::max(h * grow, tol.h_initial);
    }
    traj.points.push_back({target, {y[0], dims == 2 ? y[1] : 0.0}, y[2]});
  }
  return traj;
}

Trajectory integrate_trajectory(const GuidingField& wf, const Config& x0, double t_end, const Tolerances& tol,
                                double t_start) {
  const double times[1] = {t_end};
  return integrate_trajectory(wf, x0, times, tol, t_start);
}

CsvTable trajectory_table(const GuidingField& wf, const Trajectory& traj, double initial_density) {
  std::vector<std::string> header{"t", "x"};
  if (wf.dims() == 2) header.push_back("y");
  header.push_back("f");
  CsvTable table(header);
  for (const auto& p : traj.points) {
    const double rho = std::norm(wf.sample(p.x, p.t).psi);
    const double f = initial_density * std::exp(-p.log_jacobian) / rho;
    std::vector<double> row{p.t, p.x[0]};
    if (wf.dims() == 2) row.push_back(p.x[1]);
    row.push_back(f);
    table.add_row(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Ensembles

DistributionSpec DistributionSpec::box_mode(std::array<int, 2> n) {
  DistributionSpec s;
  s.kind = DistributionKind::BoxMode;
  s.mode = n;
  return s;
}

DistributionSpec DistributionSpec::histogram(std::array<int, 2> cells, std::vector<double> weights) {
  DistributionSpec s;
  s.kind = DistributionKind::Histogram;
  s.cells = cells;
  s.weights = std::move(weights);
  return s;
}

std::string DistributionSpec::describe() const {
  std::ostringstream o;
  switch (kind) {
    case DistributionKind::Equilibrium:
      o << "equilibrium";
      break;
    case DistributionKind::BoxMode:
      o << "box_mode(" << mode[0] << "," << mode[1] << ")";
      break;
    case DistributionKind::Histogram:
      o << "histogram(" << cells[0] << "x" << cells[1] << ")";
      break;
  }
  return o.str();
}

namespace {

void validate_spec(const DistributionSpec& spec, const GuidingField& wf) {
  const int dims = wf.dims();
  if (spec.kind == DistributionKind::BoxMode) {
    if (!wf.bounded()) throw ValidationError("box_mode distribution requires a bounded domain");
    for (int a = 0; a < dims; ++a)
      if (spec.mode[a] < 1) throw ValidationError("box_mode distribution: mode indices must be >= 1");
  }
  if (spec.kind == DistributionKind::Histogram) {
    if (spec.cells[0] < 1 || spec.cells[1] < 1 || (dims == 1 && spec.cells[1] != 1))
      throw ValidationError("histogram distribution: bad cell layout");
    if (spec.weights.size() != static_cast<std::size_t>(spec.cells[0]) * spec.cells[1])
      throw ValidationError("histogram distribution: weight count does not match the cell layout");
    double total = 0.0;
    for (double w : spec.weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("histogram distribution: weights must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw ValidationError("histogram distribution: weights are all zero");
  }
}

Config cell_extent(const GuidingField& wf, const DistributionSpec& spec) {
  return {(wf.upper()[0] - wf.lower()[0]) / spec.cells[0],
          wf.dims() == 2 ? (wf.upper()[1] - wf.lower()[1]) / spec.cells[1] : 1.0};
}

/// |psi|^2 mass on the support of a histogram, midpoint rule with 8 points per cell axis.
double support_overlap(const DistributionSpec& spec, const GuidingField& wf, double t) {
  const Config d = cell_extent(wf, spec);
  const int q = 8;
  const int qy = wf.dims() == 2 ? q : 1;
  double mass = 0.0;
  for (int i = 0; i < spec.cells[0]; ++i) {
    for (int j = 0; j < spec.cells[1]; ++j) {
      if (spec.weights[static_cast<std::size_t>(i) * spec.cells[1] + j] <= 0.0) continue;
      for (int u = 0; u < q; ++u)
        for (int v = 0; v < qy; ++v) {
          const Config x{wf.lower()[0] + (i + (u + 0.5) / q) * d[0],
                         wf.dims() == 2 ? wf.lower()[1] + (j + (v + 0.5) / qy) * d[1] : 0.0};
          mass += std::norm(wf.sample(x, t).psi) * d[0] * d[1] / (q * qy);
        }
    }
  }
  return mass;
}

Config draw(const DistributionSpec& spec, const GuidingField& wf, double t, Rng& rng,
            const std::vector<double>& cdf) {
  const int dims = wf.dims();
  const Config lo = wf.lower(), hi = wf.upper();
  switch (spec.kind) {
    case DistributionKind::Equilibrium: {
      const double bound = wf.density_bound();
      for (;;) {
        Config x{lo[0] + (hi[0] - lo[0]) * uniform01(rng), dims == 2 ? lo[1] + (hi[1] - lo[1]) * uniform01(rng) : 0.0};
        if (uniform01(rng) * bound < std::norm(wf.sample(x, t).psi)) return x;
      }
    }
    case DistributionKind::BoxMode: {
      Config x{0.0, 0.0};
      for (int a = 0; a < dims; ++a) {
        const double L = hi[a] - lo[a];
        for (;;) {
          const double u = uniform01(rng);
          const double s = std::sin(kPi * spec.mode[a] * u);
          if (uniform01(rng) < s * s) {
            x[a] = lo[a] + L * u;
            break;
          }
        }
      }
      return x;
    }
    case DistributionKind::Histogram: {
      const double u = uniform01(rng) * cdf.back();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto cell = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
      const int i = static_cast<int>(cell / spec.cells[1]);
      const int j = static_cast<int>(cell % spec.cells[1]);
      const Config d = cell_extent(wf, spec);
      return {lo[0] + (i + uniform01(rng)) * d[0], dims == 2 ? lo[1] + (j + uniform01(rng)) * d[1] : 0.0};
    }
  }
  return {};
}

}  // namespace

double spec_density(const DistributionSpec& spec, const GuidingField& wf, const Config& x, double t) {
  validate_spec(spec, wf);
  const int dims = wf.dims();
  switch (spec.kind) {
    case DistributionKind::Equilibrium:
      return std::norm(wf.sample(x, t).psi);
    case DistributionKind::BoxMode: {
      double p = 1.0;
      for (int a = 0; a < dims; ++a) {
        const double L = wf.upper()[a] - wf.lower()[a];
        const double s = std::sin(kPi * spec.mode[a] * (x[a] - wf.lower()[a]) / L);
        p *= 2.0 / L * s * s;
      }
      return p;
    }
    case DistributionKind::Histogram: {
      if (!wf.contains(x)) return 0.0;
      const Config d = cell_extent(wf, spec);
      const int i = std::clamp(static_cast<int>((x[0] - wf.lower()[0]) / d[0]), 0, spec.cells[0] - 1);
      const int j = dims == 2 ? std::clamp(static_cast<int>((x[1] - wf.lower()[1]) / d[1]), 0, spec.cells[1] - 1) : 0;
      double total = 0.0;
      for (double w : spec.weights) total += w;
      return spec.weights[static_cast<std::size_t>(i) * spec.cells[1] + j] / (total * d[0] * d[1]);
    }
  }
  return 0.0;
}

double spec_density(const DistributionSpec& spec, const GuidingField& wf, const Config& x) {
  return spec_density(spec, wf, x, 0.0);
}

Ensemble sample_ensemble(const DistributionSpec& spec, const GuidingField& wf, std::size_t n, std::uint64_t seed,
                         double t, int threads) {
  if (n < 1) throw ValidationError("sample_ensemble: n must be >= 1");
  validate_spec(spec, wf);
  std::vector<double> cdf;
  if (spec.kind == DistributionKind::Histogram) {
    if (!(support_overlap(spec, wf, t) > 1e-12))
      throw ValidationError("sample_ensemble: distribution has no support where |psi|^2 > 0");
    double acc = 0.0;
    for (double w : spec.weights) cdf.push_back(acc += w);
  }
  Ensemble ens;
  ens.dims = wf.dims();
  ens.time = t;
  ens.source = spec;
  ens.seed = seed;
  ens.samples.resize(n);
  ens.weights.assign(n, 1.0 / static_cast<double>(n));
  ens.f_labels.resize(n);
  ens.density.resize(n);
  const double node = wavefield::kNodeThreshold * wf.reference_density();
  parallel_for(
      n,
      [&](std::size_t i) {
        Rng rng = make_stream(seed, i);
        for (;;) {
          const Config x = draw(spec, wf, t, rng, cdf);
          const double rho = std::norm(wf.sample(x, t).psi);
          const double p = spec.kind == DistributionKind::Equilibrium ? rho : spec_density(spec, wf, x, t);
          // configurations on nodes have measure zero; redraw them
          if (!(rho >= node) || !(p > 0.0)) continue;
          ens.samples[i] = x;
          ens.density[i] = p;
          ens.f_labels[i] = spec.kind == DistributionKind::Equilibrium ? 1.0 : p / rho;
          return;
        }
      },
      threads);
  return ens;
}

EnsembleSeries propagate_ensemble_series(const Ensemble& ens, const GuidingField& wf, std::span<const double> times,
                                         const Tolerances& tol, int threads) {
  if (ens.size() == 0) throw ValidationError("propagate_ensemble: empty ensemble");
  if (ens.dims != wf.dims()) throw ValidationError("propagate_ensemble: ensemble and field dimensions differ");
  const std::size_t n = ens.size();
  const std::size_t m = times.size();
  std::vector<Trajectory> trajs(n);
  parallel_for(
      n, [&](std::size_t i) { trajs[i] = integrate_trajectory(wf, ens.samples[i], times, tol, ens.time); }, threads);

  EnsembleSeries out;
  auto& rep = out.report;
  std::vector<char> ok(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    rep.node_encounters += trajs[i].node_encounters;
    rep.steps += trajs[i].steps;
    rep.rejected_steps += trajs[i].rejected_steps;
    if (trajs[i].failed) {
      ok[i] = 0;
      ++rep.failures;
    }
  }
  if (rep.failures > 0 && static_cast<double>(rep.failures) >= kMaxFailureFraction * static_cast<double>(n)) {
    std::ostringstream msg;
    msg << "propagate_ensemble: " << rep.failures << " of " << n << " trajectories failed (limit 0.1%)";
    throw NumericalError(msg.str());
  }
  const std::size_t kept = n - rep.failures;
  out.snapshots.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    Ensemble& e = out.snapshots[k];
    e.dims = ens.dims;
    e.time = times[k];
    e.source = ens.source;
    e.seed = ens.seed;
    e.samples.reserve(kept);
    e.f_labels.reserve(kept);
    e.density.reserve(kept);
    for (std::size_t i = 0; i < n; ++i) {
      if (!ok[i]) continue;
      const auto& p = trajs[i].points[k + 1];
      e.samples.push_back(p.x);
      e.f_labels.push_back(ens.f_labels[i]);
      const double d = ens.density[i] * std::exp(-p.log_jacobian);
      e.density.push_back(d);
      const double f = d / std::norm(wf.sample(p.x, p.t).psi);
      const double drift = std::abs(f - ens.f_labels[i]) / ens.f_labels[i] / std::max(p.t - ens.time, 1.0);
      rep.max_f_drift_rate = std::max(rep.max_f_drift_rate, drift);
    }
    e.weights.assign(kept, 1.0 / static_cast<double>(kept));
  }
  return out;
}

Ensemble propagate_ensemble(const Ensemble& ens, const GuidingField& wf, double t, const Tolerances& tol, int threads,
                            PropagationReport* report) {
  const double times[1] = {t};
  auto series = propagate_ensemble_series(ens, wf, times, tol, threads);
  if (report) *report = series.report;
  return std::move(series.snapshots.front());
}

}  // namespace neqlab::pilotwave
