#include "neqlab/relaxation.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>

#include "neqlab/parallel.hpp"
#include "neqlab/quadrature.hpp"

namespace neqlab::relaxation {

CoarseGraining CoarseGraining::over(const GuidingField& wf, std::array<int, 2> cells) {
  if (!wf.bounded()) throw ValidationError("coarse graining needs a bounded domain");
  CoarseGraining g;
  g.dims = wf.dims();
  g.cells = {cells[0], g.dims == 2 ? cells[1] : 1};
  if (g.cells[0] < 1 || g.cells[1] < 1) throw ValidationError("coarse graining: cell counts must be >= 1");
  g.lower = wf.lower();
  g.upper = wf.upper();
  if (g.dims == 1) g.upper[1] = 1.0;
  return g;
}

double CoarseGraining::epsilon() const { return dims == 2 ? std::min(side(0), side(1)) : side(0); }

long CoarseGraining::cell_of(const Config& x) const {
  long idx[2] = {0, 0};
  for (int a = 0; a < dims; ++a) {
    if (x[a] < lower[a] || x[a] > upper[a]) return -1;
    idx[a] = std::min<long>(cells[a] - 1, static_cast<long>((x[a] - lower[a]) / side(a)));
  }
  return dims == 2 ? idx[0] * cells[1] + idx[1] : idx[0];
}

CoarseHistograms coarse_grain(const Ensemble& ens, const GuidingField& wf, const CoarseGraining& g, int order) {
  if (ens.size() == 0) throw ValidationError("coarse_grain: empty ensemble");
  if (ens.dims != g.dims || wf.dims() != g.dims) throw ValidationError("coarse_grain: dimension mismatch");
  const std::size_t k = g.cell_count();
  CoarseHistograms out;
  out.samples = ens.size();
  out.p_bar.assign(k, 0.0);
  out.psi_bar.assign(k, 0.0);

  const auto& rule = gauss_legendre(order);
  const double hx = g.side(0), hy = g.dims == 2 ? g.side(1) : 1.0;
  const int ny = g.dims == 2 ? g.cells[1] : 1;
  parallel_for(static_cast<std::size_t>(g.cells[0]), [&](std::size_t i) {
    for (int j = 0; j < ny; ++j) {
      double mass = 0.0;
      for (std::size_t u = 0; u < rule.nodes.size(); ++u) {
        const double x = g.lower[0] + (i + 0.5 * (rule.nodes[u] + 1.0)) * hx;
        if (g.dims == 1) {
          mass += rule.weights[u] * std::norm(wf.sample({x, 0.0}, ens.time).psi);
          continue;
        }
        for (std::size_t v = 0; v < rule.nodes.size(); ++v) {
          const double y = g.lower[1] + (j + 0.5 * (rule.nodes[v] + 1.0)) * hy;
          mass += rule.weights[u] * rule.weights[v] * std::norm(wf.sample({x, y}, ens.time).psi);
        }
      }
      out.psi_bar[i * ny + j] = mass;
    }
  });
  double total = 0.0;
  for (double m : out.psi_bar) total += m;
  for (double& m : out.psi_bar) m /= total;

  double wsum = 0.0;
  for (std::size_t s = 0; s < ens.size(); ++s) {
    const long c = g.cell_of(ens.samples[s]);
    if (c < 0) throw NumericalError("coarse_grain: sample outside the coarse-graining domain");
    out.p_bar[c] += ens.weights[s];
    wsum += ens.weights[s];
  }
  const double floor = 1e-12 / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.p_bar[c] /= wsum;
    if (out.p_bar[c] > 0.0 && out.psi_bar[c] < floor)
      throw NumericalError("coarse_grain: samples in a cell where |psi|^2 is below the quadrature floor");
  }
  return out;
}

double h_function(std::span<const double> p_bar, std::span<const double> psi_bar) {
  if (p_bar.size() != psi_bar.size() || p_bar.empty())
    throw ValidationError("h_function: histograms must have the same nonzero length");
  double h = 0.0;
  for (std::size_t i = 0; i < p_bar.size(); ++i) {
    if (p_bar[i] < 0.0 || psi_bar[i] < 0.0) throw ValidationError("h_function: negative histogram entry");
    if (p_bar[i] == 0.0) continue;
    if (psi_bar[i] == 0.0) throw ValidationError("h_function: P > 0 on a cell where |psi|^2 = 0");
    h += p_bar[i] * std::log(p_bar[i] / psi_bar[i]);
  }
  return h;
}

HEstimate h_estimate(const CoarseHistograms& hist) {
  HEstimate e;
  e.h = h_function(hist.p_bar, hist.psi_bar);
  double second = 0.0;
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < hist.p_bar.size(); ++i) {
    if (hist.p_bar[i] == 0.0) continue;
    const double l = std::log(hist.p_bar[i] / hist.psi_bar[i]);
    second += hist.p_bar[i] * l * l;
    ++occupied;
  }
  const double n = static_cast<double>(hist.samples);
  e.sigma = std::sqrt(std::max(0.0, second - e.h * e.h) / n);
  e.bias = (static_cast<double>(occupied) - 1.0) / (2.0 * n);
  return e;
}

ExponentialFit fit_exponential(std::span<const double> t, std::span<const double> h) {
  if (t.size() != h.size()) throw ValidationError("fit_exponential: size mismatch");
  ExponentialFit fit;
  if (t.size() < 3 || !(h[0] > 0.0)) return fit;
  std::size_t end = 1;
  while (end < h.size() && h[end] >= 0.05 * h[0]) ++end;
  end = std::max<std::size_t>(end, 3);
  const auto tw = t.subspan(0, end);
  const auto hw = h.subspan(0, end);

  // for fixed rate k the optimal amplitude is linear; Brent over ln k
  auto residual = [&](double log_k, double* amp) {
    const double k = std::exp(log_k);
    double se = 0.0, he = 0.0;
    for (std::size_t i = 0; i < tw.size(); ++i) {
      const double e = std::exp(-k * (tw[i] - tw[0]));
      se += e * e;
      he += hw[i] * e;
    }
    const double a = he / se;
    double ss = 0.0;
    for (std::size_t i = 0; i < tw.size(); ++i) {
      const double r = hw[i] - a * std::exp(-k * (tw[i] - tw[0]));
      ss += r * r;
    }
    if (amp) *amp = a;
    return ss;
  };
  const double span_t = tw.back() - tw.front();
  if (!(span_t > 0.0)) return fit;
  const double lo = std::log(1e-3 / span_t), hi = std::log(1e4 / span_t);
  // coarse scan first so Brent starts in the right basin
  double best = lo, best_ss = std::numeric_limits<double>::infinity();
  const int scan = 200;
  for (int i = 0; i <= scan; ++i) {
    const double u = lo + (hi - lo) * i / scan;
    const double ss = residual(u, nullptr);
    if (ss < best_ss) {
      best_ss = ss;
      best = u;
    }
  }
  const double step = (hi - lo) / scan;
  const auto r = boost::math::tools::brent_find_minima([&](double u) { return residual(u, nullptr); },
                                                       std::max(lo, best - step), std::min(hi, best + step), 52);
  double amp = 0.0;
  const double ss = residual(r.first, &amp);
  double mean = 0.0;
  for (double v : hw) mean += v;
  mean /= static_cast<double>(hw.size());
  double tot = 0.0;
  for (double v : hw) tot += (v - mean) * (v - mean);
  fit.valid = true;
  fit.t_c = 1.0 / std::exp(r.first);
  fit.amplitude = amp * std::exp(tw[0] / fit.t_c);
  fit.r2 = tot > 0.0 ? 1.0 - ss / tot : 1.0;
  fit.points_used = end;
  return fit;
}

double tau_estimate(double delta_e, double mass, double epsilon) {
  if (!(delta_e > 0.0) || !(mass > 0.0) || !(epsilon > 0.0))
    throw ValidationError("tau_estimate: all inputs must be positive");
  return 1.0 / (epsilon * std::sqrt(mass) * std::pow(delta_e, 1.5));
}

namespace {

double flow_variance(const Ensemble& ens, const GuidingField& wf, const pilotwave::DistributionSpec& spec,
                     const CoarseGraining& g) {
  const std::size_t n = std::min<std::size_t>(ens.size(), 20000);
  const double h = 1e-6;
  auto f0 = [&](const Config& x) {
    return pilotwave::spec_density(spec, wf, x, ens.time) / std::norm(wf.sample(x, ens.time).psi);
  };
  std::vector<double> sum(g.cell_count(), 0.0), sum2(g.cell_count(), 0.0), count(g.cell_count(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const Config& x = ens.samples[s];
    double q = 0.0;
    try {
      const auto v = wavefield::guidance_velocity(wf.sample(x, ens.time), wf.masses(), wf.dims(),
                                                  wf.reference_density());
      for (int a = 0; a < wf.dims(); ++a) {
        Config xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        if (!wf.contains(xp) || !wf.contains(xm)) continue;
        q += v[a] * (f0(xp) - f0(xm)) / (2 * h);
      }
    } catch (const NodeError&) {
      continue;
    }
    const long c = g.cell_of(x);
    if (c < 0) continue;
    sum[c] += q;
    sum2[c] += q * q;
    count[c] += 1;
  }
  double acc = 0.0;
  int cells = 0;
  for (std::size_t c = 0; c < sum.size(); ++c) {
    if (count[c] < 2) continue;
    const double m = sum[c] / count[c];
    acc += (sum2[c] / count[c] - m * m) * count[c] / (count[c] - 1);
    ++cells;
  }
  return cells ? acc / cells : 0.0;
}

}  // namespace

HTimeSeries relaxation_experiment(const wavefield::EigenmodeWaveFunction& wf, const pilotwave::DistributionSpec& start,
                                  const RelaxationConfig& cfg) {
  if (cfg.times.empty() || cfg.times.front() != 0.0)
    throw ValidationError("relaxation_experiment: probe times must start at 0");
  for (std::size_t i = 1; i < cfg.times.size(); ++i)
    if (!(cfg.times[i] > cfg.times[i - 1])) throw ValidationError("relaxation_experiment: probe times must increase");
  const auto graining = CoarseGraining::over(wf, cfg.cells);
  auto ens = pilotwave::sample_ensemble(start, wf, cfg.n_samples, cfg.seed, 0.0, cfg.threads);

  HTimeSeries out;
  out.epsilon = graining.epsilon();
  out.delta_e = wf.spectrum().energy_spread;
  out.tau = out.delta_e > 0.0 ? tau_estimate(out.delta_e, wf.masses()[0], out.epsilon)
                              : std::numeric_limits<double>::infinity();
  out.initial_flow_variance = flow_variance(ens, wf, start, graining);

  // t = 0 is propagated too, so failed trajectories drop out of every snapshot alike
  auto series = pilotwave::propagate_ensemble_series(ens, wf, cfg.times, cfg.tolerances, cfg.threads);
  out.report = series.report;
  for (std::size_t k = 0; k < series.snapshots.size(); ++k) {
    const auto hist = coarse_grain(series.snapshots[k], wf, graining, cfg.quadrature_order);
    const auto est = h_estimate(hist);
    out.times.push_back(cfg.times[k]);
    out.h.push_back(est.h);
    out.sigma.push_back(est.sigma);
    if (k == 0) out.bias = est.bias;
  }
  for (std::size_t k = 1; k < out.h.size(); ++k) {
    const double band = 3.0 * std::hypot(out.sigma[0], out.sigma[k]);
    if (out.h[k] > out.h[0] + band) out.monotone_within_noise = false;
  }
  out.fit = fit_exponential(out.times, out.h);
  return out;
}

}  // namespace neqlab::relaxation
