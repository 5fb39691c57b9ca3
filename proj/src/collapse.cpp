#include "neqlab/collapse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "neqlab/parallel.hpp"
#include "neqlab/rng.hpp"

namespace neqlab::collapse {

namespace {

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Mean and standard error of a sample.
Frequency mean_and_error(const std::vector<double>& v) {
  Frequency f;
  const double n = static_cast<double>(v.size());
  if (v.empty()) return f;
  f.value = mean_of(v);
  if (v.size() < 2) return f;
  double ss = 0.0;
  for (double x : v) ss += (x - f.value) * (x - f.value);
  f.sigma = std::sqrt(ss / (n - 1.0) / n);
  return f;
}

double hermitian_defect(const CMatrix& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

}  // namespace

// ---------------------------------------------------------------------------
// Fair game
// ---------------------------------------------------------------------------

GamblerReport gambler_ruin(double x0, double stake, std::size_t runs, std::uint64_t seed, int threads) {
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw ValidationError("gambler_ruin: x0 must lie in [0, 1]");
  if (!(stake > 0.0 && stake <= 1.0)) throw ValidationError("gambler_ruin: stake must lie in (0, 1]");
  if (runs < 2) throw ValidationError("gambler_ruin: need at least two runs");
  const double total = 1.0 / stake, start = x0 / stake;
  const long K = std::lround(total), k0 = std::lround(start);
  if (std::abs(total - K) > 1e-9 * total || std::abs(start - k0) > 1e-9 * std::max(1.0, start))
    throw ValidationError("gambler_ruin: the stake must divide both fortunes");

  GamblerReport rep;
  rep.runs = runs;
  const long horizon = std::max<long>(4 * std::max<long>(k0 * (K - k0), 1), 8);
  const int checkpoints = 20;
  for (int c = 0; c <= checkpoints; ++c) rep.steps.push_back(horizon * c / checkpoints);

  std::vector<std::vector<double>> fraction(rep.steps.size(), std::vector<double>(runs));
  std::vector<double> win(runs), length(runs);
  parallel_for(runs, [&](std::size_t r) {
    Rng rng = make_stream(seed, r);
    long k = k0, step = 0;
    std::size_t next = 0;
    auto record = [&](long s) {
      while (next < rep.steps.size() && rep.steps[next] == s) fraction[next++][r] = static_cast<double>(k) / K;
    };
    record(0);
    while (k > 0 && k < K) {
      k += (rng() >> 63) ? 1 : -1;
      record(++step);
    }
    // absorbed: the fortune stays put for the remaining checkpoints
    while (next < rep.steps.size()) fraction[next++][r] = static_cast<double>(k) / K;
    win[r] = k == K ? 1.0 : 0.0;
    length[r] = static_cast<double>(step);
  }, threads);

  const auto w = mean_and_error(win);
  rep.win_frequency = w.value;
  rep.win_sigma = w.sigma;
  rep.mean_absorption_steps = mean_of(length);
  for (auto& f : fraction) {
    const auto m = mean_and_error(f);
    rep.mean_fraction.push_back(m.value);
    rep.mean_sigma.push_back(m.sigma);
    // deviations at rounding level carry no information
    if (m.sigma > 0.0 && std::abs(m.value - x0) > 1e-12)
      rep.max_abs_z = std::max(rep.max_abs_z, std::abs(m.value - x0) / m.sigma);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Operator set
// ---------------------------------------------------------------------------

CollapseOperatorSet::CollapseOperatorSet(std::vector<CMatrix> operators, std::optional<CMatrix> hamiltonian)
    : ops_(std::move(operators)), h_(std::move(hamiltonian)) {
  if (ops_.empty()) throw ValidationError("CollapseOperatorSet: at least one collapse operator is required");
  const Eigen::Index d = ops_.front().rows();
  if (d < 1 || d > 64) throw ValidationError("CollapseOperatorSet: dimension must be 1..64");
  double scale = 1.0;
  for (const auto& a : ops_) {
    if (a.rows() != d || a.cols() != d) throw ValidationError("CollapseOperatorSet: operators must be square and equal in size");
    if (hermitian_defect(a) > 1e-12) throw ValidationError("CollapseOperatorSet: collapse operators must be Hermitian");
    scale = std::max(scale, a.cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 0; i < ops_.size(); ++i)
    for (std::size_t j = i + 1; j < ops_.size(); ++j)
      if ((ops_[i] * ops_[j] - ops_[j] * ops_[i]).cwiseAbs().maxCoeff() > 1e-10)
        throw ValidationError("CollapseOperatorSet: collapse operators must commute");
  if (h_) {
    if (h_->rows() != d || h_->cols() != d) throw ValidationError("CollapseOperatorSet: Hamiltonian has the wrong size");
    if (hermitian_defect(*h_) > 1e-12) throw ValidationError("CollapseOperatorSet: Hamiltonian must be Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(*h_);
    h_norm_ = es.eigenvalues().cwiseAbs().maxCoeff();
  }

  // a generic real combination separates every joint eigenspace
  CMatrix mix = CMatrix::Zero(d, d);
  for (std::size_t r = 0; r < ops_.size(); ++r) mix += (1.0 + 0.6180339887498949 * std::sqrt(2.0 + r)) * ops_[r];
  Eigen::SelfAdjointEigenSolver<CMatrix> es(mix);
  basis_ = es.eigenvectors();
  eig_.resize(static_cast<Eigen::Index>(ops_.size()), d);
  for (std::size_t r = 0; r < ops_.size(); ++r)
    for (Eigen::Index n = 0; n < d; ++n) {
      const CVector v = basis_.col(n);
      const CVector av = ops_[r] * v;
      const double a = (v.adjoint() * av)(0).real();
      if ((av - a * v).norm() > 1e-8 * scale)
        throw ValidationError("CollapseOperatorSet: could not find a joint eigenbasis");
      eig_(static_cast<Eigen::Index>(r), n) = a;
    }
  sector_.assign(static_cast<std::size_t>(d), -1);
  for (Eigen::Index n = 0; n < d; ++n) {
    if (sector_[n] >= 0) continue;
    sector_[n] = sectors_;
    for (Eigen::Index m = n + 1; m < d; ++m)
      if (sector_[m] < 0 && (eig_.col(n) - eig_.col(m)).cwiseAbs().maxCoeff() <= 1e-9 * scale) sector_[m] = sectors_;
    ++sectors_;
  }
}

double CollapseOperatorSet::spectral_range() const {
  double range = 0.0;
  for (Eigen::Index r = 0; r < eig_.rows(); ++r) range = std::max(range, eig_.row(r).maxCoeff() - eig_.row(r).minCoeff());
  return range;
}

double default_dt(const CollapseOperatorSet& ops, double lambda, double t_end) {
  const double range = ops.spectral_range();
  const double scale = lambda * range * range + ops.hamiltonian_norm();
  double dt = scale > 0.0 ? 0.01 / scale : t_end / 100.0;
  return std::min(dt, t_end / 100.0);
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

namespace {

CMatrix half_step_propagator(const CollapseOperatorSet& ops, double dt) {
  if (!ops.hamiltonian()) return {};
  const CMatrix hb = ops.basis().adjoint() * (*ops.hamiltonian()) * ops.basis();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hb);
  CVector phase(hb.rows());
  for (Eigen::Index i = 0; i < hb.rows(); ++i) phase(i) = std::exp(-kI * es.eigenvalues()(i) * 0.5 * dt);
  return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

void record(CollapseRun& run, const CVector& c, double t, bool keep_state) {
  run.times.push_back(t);
  std::vector<double> x(static_cast<std::size_t>(c.size()));
  for (Eigen::Index n = 0; n < c.size(); ++n) x[n] = std::norm(c(n));
  run.x.push_back(std::move(x));
  run.norms.push_back(c.norm());
  if (keep_state) run.states.push_back(c);
}

struct Stepper {
  double dt = 0.0;
  long steps = 0;
};

Stepper plan_steps(const CollapseOperatorSet& ops, const CslOptions& opt) {
  if (!(opt.t_end > 0.0)) throw ValidationError("simulate_csl: t_end must be positive");
  if (!(opt.lambda >= 0.0)) throw ValidationError("simulate_csl: lambda must be >= 0");
  if (opt.record_every < 1) throw ValidationError("simulate_csl: record_every must be >= 1");
  const double limit = default_dt(ops, opt.lambda, opt.t_end);
  double dt = opt.dt > 0.0 ? opt.dt : limit;
  // the same resolution rule guards user-supplied steps
  const double range = ops.spectral_range();
  if (opt.dt > 0.0 && dt * (opt.lambda * range * range + ops.hamiltonian_norm()) > 0.1)
    throw ValidationError("simulate_csl: dt does not resolve the collapse and Hamiltonian time scales");
  Stepper s;
  s.steps = static_cast<long>(std::ceil(opt.t_end / dt - 1e-9));
  s.dt = opt.t_end / static_cast<double>(s.steps);
  return s;
}

}  // namespace

CollapseRun simulate_csl(const CollapseOperatorSet& ops, const CVector& psi0, const CslOptions& opt, std::uint64_t seed) {
  if (psi0.size() != ops.dim()) throw ValidationError("simulate_csl: state has the wrong dimension");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw ValidationError("simulate_csl: initial state must be normalized");
  const auto plan = plan_steps(ops, opt);
  const double dt = plan.dt, lambda = opt.lambda;
  const CMatrix uh = half_step_propagator(ops, dt);
  const bool has_h = ops.hamiltonian().has_value();
  const auto& eig = ops.eigenvalues();
  const Eigen::Index d = ops.dim(), nr = eig.rows();

  CollapseRun run;
  run.dt = dt;
  run.seed = seed;
  Rng rng(seed);
  CVector c = ops.basis().adjoint() * psi0;
  record(run, c, 0.0, opt.keep_states);
  const double sd = lambda > 0.0 ? std::sqrt(lambda / dt) : 0.0;
  std::vector<double> w(static_cast<std::size_t>(nr));
  std::vector<double> logf(static_cast<std::size_t>(d));
  for (long j = 1; j <= plan.steps; ++j) {
    if (has_h) c = uh * c;
    if (lambda > 0.0) {
      if (opt.scheme == NoiseScheme::Cooked) {
        // conditional law of this step's noise: mixture over eigenvectors weighted by |c_n|^2
        double u = uniform01(rng) * c.squaredNorm();
        Eigen::Index pick = d - 1;
        for (Eigen::Index n = 0; n < d; ++n) {
          u -= std::norm(c(n));
          if (u < 0.0) {
            pick = n;
            break;
          }
        }
        for (Eigen::Index r = 0; r < nr; ++r) w[r] = 2.0 * lambda * eig(r, pick) + sd * normal(rng) + opt.noise_bias;
      } else {
        for (Eigen::Index r = 0; r < nr; ++r) w[r] = sd * normal(rng);
      }
      // amplitude factor exp(dt sum_r (w a - lambda a^2)): the n-independent part of
      // exp(-(dt/4 lambda)(w - 2 lambda a)^2) is dropped, which leaves |c|^2 equal to
      // the probability-rule weight relative to the reference Gaussian
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index n = 0; n < d; ++n) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < nr; ++r) s += w[r] * eig(r, n) - lambda * eig(r, n) * eig(r, n);
        logf[n] = dt * s;
        top = std::max(top, logf[n]);
      }
      for (Eigen::Index n = 0; n < d; ++n) c(n) *= std::exp(logf[n] - top);
      const double nrm = c.norm();
      if (opt.scheme == NoiseScheme::Raw) run.log_weight += 2.0 * (top + std::log(nrm));
      c /= nrm;
      if (opt.keep_noise) run.noise.push_back(w);
    }
    if (has_h) c = uh * c;
    c.normalize();
    if (j % opt.record_every == 0 || j == plan.steps) record(run, c, dt * static_cast<double>(j), opt.keep_states);
  }
  if (opt.scheme == NoiseScheme::Raw && run.log_weight < -700.0) run.weight_underflow = true;

  std::vector<double> sector_weight(static_cast<std::size_t>(ops.sectors()), 0.0);
  for (Eigen::Index n = 0; n < d; ++n) sector_weight[ops.sector_of()[n]] += run.x.back()[n];
  run.outcome = static_cast<int>(std::max_element(sector_weight.begin(), sector_weight.end()) - sector_weight.begin());
  return run;
}

CslEnsemble csl_ensemble(const CollapseOperatorSet& ops, const CVector& psi0, const CslOptions& opt, std::size_t runs,
                         std::uint64_t seed, int threads) {
  if (runs < 1) throw ValidationError("csl_ensemble: runs must be >= 1");
  std::vector<CollapseRun> all(runs);
  parallel_for(runs, [&](std::size_t i) { all[i] = simulate_csl(ops, psi0, opt, stream_seed(seed, i)); }, threads);
  CslEnsemble ens;
  ens.scheme = opt.scheme;
  ens.sectors = ops.sectors();
  ens.sector_of = ops.sector_of();
  ens.initial_sector_weights.assign(static_cast<std::size_t>(ops.sectors()), 0.0);
  const CVector c0 = ops.basis().adjoint() * psi0;
  for (Eigen::Index n = 0; n < c0.size(); ++n) ens.initial_sector_weights[ops.sector_of()[n]] += std::norm(c0(n));
  for (auto& r : all) {
    if (r.weight_underflow) {
      ++ens.excluded;
      continue;
    }
    ens.runs.push_back(std::move(r));
  }
  if (ens.runs.empty()) throw NumericalError("csl_ensemble: every run underflowed its weight");
  return ens;
}

namespace {

std::vector<double> run_weights(const CslEnsemble& ens) {
  std::vector<double> w(ens.runs.size(), 1.0);
  if (ens.scheme == NoiseScheme::Raw)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(ens.runs[i].log_weight);
  return w;
}

}  // namespace

double effective_sample_size(const CslEnsemble& ens) {
  double sw = 0.0, sw2 = 0.0;
  for (double w : run_weights(ens)) {
    sw += w;
    sw2 += w * w;
  }
  return sw2 > 0.0 ? sw * sw / sw2 : 0.0;
}

std::vector<Frequency> outcome_frequencies(const CslEnsemble& ens) {
  const auto w = run_weights(ens);
  std::vector<Frequency> out;
  for (int s = 0; s < ens.sectors; ++s) {
    std::vector<double> v(ens.runs.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = ens.runs[i].outcome == s ? w[i] : 0.0;
    out.push_back(mean_and_error(v));
  }
  return out;
}

std::vector<Frequency> mean_sector_weights(const CslEnsemble& ens, std::size_t k) {
  const auto w = run_weights(ens);
  const std::size_t d = ens.runs.front().x.front().size();
  const auto& map = ens.sector_of;
  std::vector<Frequency> out;
  for (int s = 0; s < ens.sectors; ++s) {
    std::vector<double> v(ens.runs.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (k >= ens.runs[i].x.size()) throw ValidationError("mean_sector_weights: time index out of range");
      for (std::size_t n = 0; n < d; ++n)
        if (map[n] == s) v[i] += w[i] * ens.runs[i].x[k][n];
    }
    out.push_back(mean_and_error(v));
  }
  return out;
}

AveragedDensity ensemble_density(const CslEnsemble& ens, std::size_t k) {
  const auto w = run_weights(ens);
  if (ens.runs.front().states.empty()) throw ValidationError("ensemble_density: runs were simulated without states");
  const Eigen::Index d = ens.runs.front().states.front().size();
  const double n = static_cast<double>(ens.runs.size());
  CMatrix sum = CMatrix::Zero(d, d);
  Eigen::MatrixXd sq_re = Eigen::MatrixXd::Zero(d, d), sq_im = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < ens.runs.size(); ++i) {
    if (k >= ens.runs[i].states.size()) throw ValidationError("ensemble_density: time index out of range");
    const CVector& c = ens.runs[i].states[k];
    const CMatrix m = w[i] * (c * c.adjoint());
    sum += m;
    sq_re += m.real().cwiseAbs2();
    sq_im += m.imag().cwiseAbs2();
  }
  AveragedDensity out;
  out.rho = sum / n;
  const Eigen::MatrixXd mr = out.rho.real(), mi = out.rho.imag();
  out.sigma_re = ((sq_re / n - mr.cwiseAbs2()).cwiseMax(0.0) / std::max(1.0, n - 1.0)).cwiseSqrt();
  out.sigma_im = ((sq_im / n - mi.cwiseAbs2()).cwiseMax(0.0) / std::max(1.0, n - 1.0)).cwiseSqrt();
  return out;
}

CsvTable collapse_run_table(const CollapseRun& run) {
  std::vector<std::string> header{"t"};
  const std::size_t d = run.x.empty() ? 0 : run.x.front().size();
  for (std::size_t n = 0; n < d; ++n) header.push_back("x_" + std::to_string(n));
  header.push_back("norm");
  CsvTable t(header);
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    std::vector<double> row{run.times[k]};
    row.insert(row.end(), run.x[k].begin(), run.x[k].end());
    row.push_back(run.norms[k]);
    t.add_row(row);
  }
  return t;
}

MartingaleReport martingale_diagnostics(const CslEnsemble& ens) {
  if (ens.runs.size() < 2) throw ValidationError("martingale_diagnostics: need at least two runs");
  const auto& first = ens.runs.front();
  for (const auto& r : ens.runs)
    if (r.times != first.times || r.dt != first.dt || r.x.front().size() != first.x.front().size())
      throw ValidationError("martingale_diagnostics: runs come from different configurations");
  const auto w = run_weights(ens);
  const std::size_t d = first.x.front().size(), nt = first.times.size();
  MartingaleReport rep;
  rep.times = first.times;
  for (const auto& r : ens.runs)
    for (const auto& x : r.x) {
      const double err = std::abs(std::accumulate(x.begin(), x.end(), 0.0) - 1.0);
      rep.max_sum_error = std::max(rep.max_sum_error, err);
    }
  rep.sums_to_one = rep.max_sum_error <= 1e-9;
  const std::vector<double>& x0 = first.x.front();
  for (std::size_t k = 0; k < nt; ++k) {
    std::vector<double> zk(d, 0.0);
    for (std::size_t n = 0; n < d; ++n) {
      std::vector<double> v(ens.runs.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] * ens.runs[i].x[k][n];
      const auto m = mean_and_error(v);
      const double dev = m.value - x0[n];
      if (std::abs(dev) <= 1e-12)
        zk[n] = 0.0;
      else if (m.sigma > 0.0)
        zk[n] = dev / m.sigma;
      else if (std::abs(dev) > 1e-12)
        zk[n] = std::copysign(std::numeric_limits<double>::infinity(), dev);
      rep.max_abs_z = std::max(rep.max_abs_z, std::abs(zk[n]));
    }
    rep.z.push_back(std::move(zk));
  }
  rep.drift_ok = rep.max_abs_z < 3.0;
  double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t n = 0; n < d; ++n)
    for (std::size_t m = n + 1; m < d; ++m) {
      double s = 0.0;
      for (std::size_t i = 0; i < ens.runs.size(); ++i)
        s += w[i] * std::sqrt(ens.runs[i].x.back()[n] * ens.runs[i].x.back()[m]);
      rep.final_cross = std::max(rep.final_cross, s / wsum);
    }
  double collapsed = 0.0;
  for (std::size_t i = 0; i < ens.runs.size(); ++i)
    if (*std::max_element(ens.runs[i].x.back().begin(), ens.runs[i].x.back().end()) > 0.99) collapsed += w[i];
  rep.collapsed_fraction = collapsed / wsum;
  return rep;
}

// ---------------------------------------------------------------------------
// Density matrix
// ---------------------------------------------------------------------------

CMatrix lindblad_rhs(const CollapseOperatorSet& ops, const CMatrix& rho, double lambda) {
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  if (ops.hamiltonian()) {
    const CMatrix& h = *ops.hamiltonian();
    out += -kI * (h * rho - rho * h);
  }
  for (const auto& a : ops.operators()) {
    const CMatrix inner = a * rho - rho * a;
    out -= 0.5 * lambda * (a * inner - inner * a);
  }
  return out;
}

DensityEvolution density_matrix_csl(const CMatrix& rho0, const CollapseOperatorSet& ops, double lambda, double t,
                                    double dt) {
  if (rho0.rows() != ops.dim() || rho0.cols() != ops.dim())
    throw ValidationError("density_matrix_csl: density matrix has the wrong size");
  if (hermitian_defect(rho0) > 1e-10) throw ValidationError("density_matrix_csl: density matrix must be Hermitian");
  if (std::abs(rho0.trace().real() - 1.0) > 1e-10) throw ValidationError("density_matrix_csl: trace must be 1");
  {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho0);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw ValidationError("density_matrix_csl: density matrix must be positive semidefinite");
  }
  if (!(lambda >= 0.0) || !(t >= 0.0)) throw ValidationError("density_matrix_csl: lambda and t must be >= 0");

  DensityEvolution out;
  if (!ops.hamiltonian()) {
    out.closed_form = true;
    const auto& v = ops.basis();
    const auto& eig = ops.eigenvalues();
    CMatrix rb = v.adjoint() * rho0 * v;
    for (Eigen::Index n = 0; n < rb.rows(); ++n)
      for (Eigen::Index m = 0; m < rb.cols(); ++m) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < eig.rows(); ++r) s += (eig(r, n) - eig(r, m)) * (eig(r, n) - eig(r, m));
        rb(n, m) *= std::exp(-0.5 * lambda * t * s);
      }
    out.rho = v * rb * v.adjoint();
  } else {
    double h = dt > 0.0 ? dt : default_dt(ops, lambda, std::max(t, 1e-300));
    const long steps = t > 0.0 ? static_cast<long>(std::ceil(t / h - 1e-9)) : 0;
    h = steps > 0 ? t / static_cast<double>(steps) : 0.0;
    CMatrix rho = rho0;
    for (long s = 0; s < steps; ++s) {
      const CMatrix k1 = lindblad_rhs(ops, rho, lambda);
      const CMatrix k2 = lindblad_rhs(ops, rho + 0.5 * h * k1, lambda);
      const CMatrix k3 = lindblad_rhs(ops, rho + 0.5 * h * k2, lambda);
      const CMatrix k4 = lindblad_rhs(ops, rho + h * k3, lambda);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    out.rho = rho;
    out.steps = steps;
  }
  out.trace_error = std::abs(out.rho.trace().real() - 1.0);
  const CMatrix herm = 0.5 * (out.rho + out.rho.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.positive = out.min_eigenvalue >= -1e-8;
  if (out.trace_error > 1e-10) throw NumericalError("density_matrix_csl: trace drifted beyond 1e-10");
  return out;
}

// ---------------------------------------------------------------------------
// One particle on a line
// ---------------------------------------------------------------------------

namespace {

void require_grid(const LineGrid& g) {
  if (g.n < 8 || g.n > 1024) throw ValidationError("LineGrid: point count must be 8..1024");
  if (!(g.length > 0.0)) throw ValidationError("LineGrid: length must be positive");
}

double wavenumber(const LineGrid& g, int j) {
  const int s = j <= g.n / 2 ? j : j - g.n;
  return 2.0 * kPi * s / g.length;
}

// Dense matrix of the spectral operator with symbol f(k) on the periodic grid.
CMatrix spectral_matrix(const LineGrid& g, const std::function<Complex(double)>& symbol) {
  const int n = g.n;
  CMatrix f(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) f(j, i) = std::exp(-kI * (2.0 * kPi * j * i / n)) / std::sqrt(static_cast<double>(n));
  CVector d(n);
  for (int j = 0; j < n; ++j) d(j) = symbol(wavenumber(g, j));
  return f.adjoint() * d.asDiagonal() * f;
}

}  // namespace

LineState gaussian_packets_state(const LineGrid& g, const std::vector<double>& centers, double width,
                                 const std::vector<Complex>& amplitudes) {
  require_grid(g);
  if (centers.empty() || centers.size() != amplitudes.size())
    throw ValidationError("gaussian_packets_state: need one amplitude per center");
  if (!(width > 0.0)) throw ValidationError("gaussian_packets_state: width must be positive");
  LineState s;
  s.grid = g;
  s.psi.assign(g.n, Complex{});
  for (int i = 0; i < g.n; ++i)
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double u = g.x(i) - centers[k];
      s.psi[i] += amplitudes[k] * std::exp(-u * u / (4.0 * width * width));
    }
  const double nrm = s.norm();
  if (!(nrm > 0.0)) throw ValidationError("gaussian_packets_state: state vanishes on the grid");
  for (auto& v : s.psi) v /= nrm;
  return s;
}

double LineState::norm() const {
  double s = 0.0;
  for (const auto& v : psi) s += std::norm(v);
  return std::sqrt(s * grid.dx());
}

LineDensity gaussian_packets_density(const LineGrid& g, const std::vector<double>& centers, double width,
                                     const std::vector<Complex>& amplitudes) {
  const auto s = gaussian_packets_state(g, centers, width, amplitudes);
  LineDensity d;
  d.grid = g;
  const CVector v = Eigen::Map<const CVector>(s.psi.data(), g.n);
  d.rho = v * v.adjoint();
  return d;
}

LineDensity particle_master_equation(const LineDensity& rho0, const MasterParams& p, double dt, int steps,
                                     const std::vector<double>& potential) {
  const LineGrid& g = rho0.grid;
  require_grid(g);
  if (rho0.rho.rows() != g.n || rho0.rho.cols() != g.n) throw ValidationError("particle_master_equation: size mismatch");
  if (!(p.lambda >= 0.0) || !(p.a > 0.0) || !(p.mass > 0.0) || !(p.hbar > 0.0))
    throw ValidationError("particle_master_equation: invalid parameters");
  if (!(dt > 0.0) || steps < 0) throw ValidationError("particle_master_equation: dt must be positive");
  if (!potential.empty() && potential.size() != static_cast<std::size_t>(g.n))
    throw ValidationError("particle_master_equation: potential has the wrong size");
  if (p.a < 2.0 * g.dx()) throw ValidationError("particle_master_equation: grid does not resolve the smearing length");
  const double kmax = kPi / g.dx();
  if (p.hbar * kmax * kmax / (2.0 * p.mass) * dt > 1e3)
    throw ValidationError("particle_master_equation: dt is too coarse for the grid's fastest mode");

  const CMatrix u = spectral_matrix(g, [&](double k) { return std::exp(-kI * p.hbar * k * k / (2.0 * p.mass) * 0.5 * dt); });
  const double rate = p.lambda * p.coupling * p.coupling;
  CMatrix factor(g.n, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) {
      const double s = g.x(i) - g.x(j);
      Complex f = std::exp(-rate * (1.0 - std::exp(-s * s / (4.0 * p.a * p.a))) * dt);
      if (!potential.empty()) f *= std::exp(-kI * (potential[i] - potential[j]) * dt / p.hbar);
      factor(i, j) = f;
    }
  LineDensity out = rho0;
  for (int s = 0; s < steps; ++s) {
    out.rho = u * out.rho * u.adjoint();
    out.rho = out.rho.cwiseProduct(factor);
    out.rho = u * out.rho * u.adjoint();
  }
  out.time = rho0.time + dt * steps;
  return out;
}

double line_trace(const LineDensity& rho) { return rho.rho.trace().real() * rho.grid.dx(); }

double line_energy(const LineDensity& rho, const MasterParams& p, const std::vector<double>& potential) {
  const CMatrix t = spectral_matrix(rho.grid, [&](double k) { return Complex(p.hbar * p.hbar * k * k / (2.0 * p.mass)); });
  double e = (t * rho.rho).trace().real() * rho.grid.dx();
  for (std::size_t i = 0; i < potential.size(); ++i) e += potential[i] * rho.rho(i, i).real() * rho.grid.dx();
  return e;
}

double block_coherence(const LineDensity& rho, int i0, int i1, int j0, int j1) {
  double s = 0.0;
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) s += std::abs(rho.rho(i, j));
  return s * rho.grid.dx() * rho.grid.dx();
}

// ---------------------------------------------------------------------------
// Closed-form consequences
// ---------------------------------------------------------------------------

void CslParams::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("CslParams: lambda must be >= 0");
  if (!(a > 0.0)) throw ValidationError("CslParams: a must be positive");
  if (!(reference_mass > 0.0)) throw ValidationError("CslParams: reference mass must be positive");
}

double energy_gain_rate(const std::vector<double>& masses, const CslParams& p, const std::vector<double>& couplings) {
  p.validate();
  if (!couplings.empty() && couplings.size() != masses.size())
    throw ValidationError("energy_gain_rate: one coupling per mass");
  double rate = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0)) throw ValidationError("energy_gain_rate: masses must be positive");
    const double g = couplings.empty() ? masses[i] / p.reference_mass : couplings[i];
    rate += 3.0 * p.lambda * g * g * Constants::hbar * Constants::hbar / (4.0 * masses[i] * p.a * p.a);
  }
  return rate;
}

double energy_gain_rate_1d(double mass, double coupling, double lambda, double a, double hbar) {
  if (!(mass > 0.0) || !(a > 0.0) || !(lambda >= 0.0)) throw ValidationError("energy_gain_rate_1d: invalid inputs");
  return lambda * coupling * coupling * hbar * hbar / (4.0 * mass * a * a);
}

double sphere_nucleons(double radius, double density) {
  if (!(radius > 0.0) || !(density > 0.0)) throw ValidationError("sphere_nucleons: radius and density must be positive");
  return 4.0 / 3.0 * kPi * radius * radius * radius * density / Constants::proton_mass;
}

WalkPrediction random_walk_predictions(double nucleons, const CslParams& p, double t, double clump_radius) {
  p.validate();
  if (!(nucleons > 0.0)) throw ValidationError("random_walk_predictions: N must be positive");
  if (!(p.lambda > 0.0)) throw ValidationError("random_walk_predictions: lambda must be positive");
  if (!(t >= 0.0)) throw ValidationError("random_walk_predictions: t must be >= 0");
  const double hbar = Constants::hbar, mp = p.reference_mass;
  WalkPrediction w;
  w.nucleons = nucleons;
  w.size = std::pow(p.a * p.a * hbar / (p.lambda * mp * nucleons * nucleons * nucleons), 0.25);
  w.settle_time = nucleons * mp * w.size * w.size / hbar;
  w.rms_scaling = hbar * std::sqrt(p.lambda) * std::pow(t, 1.5) / (mp * p.a);
  w.rms_per_axis = w.rms_scaling / std::sqrt(6.0);
  w.within_validity = clump_radius <= p.a;
  return w;
}

std::string to_string(InterferenceVerdict v) {
  switch (v) {
    case InterferenceVerdict::Agrees: return "agrees";
    case InterferenceVerdict::Testable: return "testable";
    case InterferenceVerdict::Excluded: return "excluded";
  }
  return "unknown";
}

InterferenceResult interference_criterion(double nucleons, double delta_t, double lambda) {
  if (!(nucleons > 0.0) || !(delta_t > 0.0) || !(lambda >= 0.0))
    throw ValidationError("interference_criterion: inputs must be positive");
  InterferenceResult r;
  r.threshold_inverse_rate = 100.0 * nucleons * nucleons * delta_t;
  r.ratio = lambda * r.threshold_inverse_rate;
  r.decay_factor = std::exp(-lambda * nucleons * nucleons * delta_t);
  r.agrees_at_1pct = r.ratio < 1.0;
  r.verdict = r.ratio < 0.1 ? InterferenceVerdict::Agrees
              : r.ratio <= 10.0 ? InterferenceVerdict::Testable
                                : InterferenceVerdict::Excluded;
  return r;
}

double HarmonicPair::size() const { return std::sqrt(hbar / (reduced_mass() * omega)); }

ExcitationRate excitation_rate(const HarmonicPair& sys, double lambda, double a, double reference_mass,
                               std::optional<std::array<double, 2>> couplings) {
  if (!(sys.m1 > 0.0) || !(sys.m2 > 0.0) || !(sys.omega > 0.0) || !(sys.hbar > 0.0))
    throw ValidationError("excitation_rate: masses, frequency and hbar must be positive");
  if (sys.n0 < 0 || sys.n < 0 || sys.n == sys.n0)
    throw ValidationError("excitation_rate: levels must be distinct nonnegative eigenstate indices");
  if (!(lambda >= 0.0) || !(a > 0.0) || !(reference_mass > 0.0))
    throw ValidationError("excitation_rate: invalid collapse parameters");
  const double g1 = couplings ? (*couplings)[0] : sys.m1 / reference_mass;
  const double g2 = couplings ? (*couplings)[1] : sys.m2 / reference_mass;
  // x1 = X + (m2/M) r, x2 = X - (m1/M) r with <X> = 0 in both states
  const double total = sys.m1 + sys.m2;
  const double lever = (g1 * sys.m2 - g2 * sys.m1) / total;
  double r_element = 0.0;
  const double half_size = sys.size() / std::sqrt(2.0);
  if (sys.n == sys.n0 + 1) r_element = half_size * std::sqrt(static_cast<double>(sys.n0 + 1));
  if (sys.n == sys.n0 - 1) r_element = half_size * std::sqrt(static_cast<double>(sys.n0));
  ExcitationRate out;
  out.dipole_element = lever * r_element;
  out.gamma = lambda / (2.0 * a * a) * out.dipole_element * out.dipole_element;
  out.quadrupole_estimate = lambda * (g1 + g2) * (g1 + g2) * std::pow(sys.size() / a, 4);
  return out;
}

// ---------------------------------------------------------------------------
// Discrete hits
// ---------------------------------------------------------------------------

double hit_kernel(double u, double a) { return std::pow(kPi * a * a, -0.25) * std::exp(-u * u / (2.0 * a * a)); }

namespace {

// Node drawn with probability density[i] / sum(density).
int draw_node(const std::vector<double>& density, Rng& rng) {
  double total = std::accumulate(density.begin(), density.end(), 0.0);
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < density.size(); ++i) {
    u -= density[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(density.size()) - 1;
}

}  // namespace

HitRun sl_hit_process(const LineState& psi, double rate, double a, double t_end, std::uint64_t seed,
                      std::size_t max_hits) {
  require_grid(psi.grid);
  if (std::abs(psi.norm() - 1.0) > 1e-9) throw ValidationError("sl_hit_process: state must be normalized");
  if (!(rate >= 0.0) || !(a > 0.0) || !(t_end >= 0.0)) throw ValidationError("sl_hit_process: invalid parameters");
  HitRun run;
  run.state = psi;
  if (rate == 0.0) return run;
  Rng rng(seed);
  const LineGrid& g = psi.grid;
  std::vector<double> density(g.n);
  double t = 0.0;
  while (run.hits.size() < max_hits) {
    t += std::exponential_distribution<double>(rate)(rng);
    if (t > t_end) break;
    for (int i = 0; i < g.n; ++i) density[i] = std::norm(run.state.psi[i]);
    // p(z) = sum_x |psi(x)|^2 dx N(z; x, a^2/2): pick a node, then smear
    const int node = draw_node(density, rng);
    const double z = g.x(node) + a / std::sqrt(2.0) * normal(rng);
    HitEvent ev;
    ev.time = t;
    ev.center = z;
    ev.norm_before = run.state.norm();
    for (int i = 0; i < g.n; ++i) run.state.psi[i] *= hit_kernel(g.x(i) - z, a);
    ev.weight = run.state.norm();
    if (!(ev.weight > 0.0)) throw NumericalError("sl_hit_process: hit annihilated the state");
    for (auto& v : run.state.psi) v /= ev.weight;
    ev.norm_after = run.state.norm();
    run.hits.push_back(ev);
  }
  return run;
}

ClumpCoherence sl_clump_collapse(const ClumpConfig& cfg, const std::vector<double>& times, std::size_t runs,
                                 std::uint64_t seed, int threads) {
  require_grid(cfg.grid);
  if (cfg.particles < 1) throw ValidationError("sl_clump_collapse: need at least one particle");
  if (!(cfg.rate >= 0.0) || !(cfg.a > 0.0) || !(cfg.width > 0.0)) throw ValidationError("sl_clump_collapse: invalid parameters");
  if (times.empty() || runs < 2) throw ValidationError("sl_clump_collapse: need probe times and at least two runs");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw ValidationError("sl_clump_collapse: probe times must increase");
  const double amp_norm = std::sqrt(std::norm(cfg.amplitudes[0]) + std::norm(cfg.amplitudes[1]));
  if (!(amp_norm > 0.0) || std::abs(cfg.amplitudes[0]) == 0.0 || std::abs(cfg.amplitudes[1]) == 0.0)
    throw ValidationError("sl_clump_collapse: both branches need nonzero amplitude");

  const LineGrid& g = cfg.grid;
  const double dx = g.dx();
  std::array<std::vector<double>, 2> base;
  for (int b = 0; b < 2; ++b) {
    const auto s = gaussian_packets_state(g, {cfg.centers[b]}, cfg.width, {Complex(1.0, 0.0)});
    base[b].resize(g.n);
    for (int i = 0; i < g.n; ++i) base[b][i] = std::norm(s.psi[i]) * dx;
  }
  const std::array<Complex, 2> c0{cfg.amplitudes[0] / amp_norm, cfg.amplitudes[1] / amp_norm};
  const double coh0 = std::abs(c0[0] * std::conj(c0[1]));

  ClumpCoherence out;
  out.times = times;
  out.runs.resize(runs);
  std::vector<std::vector<double>> coh(times.size(), std::vector<double>(runs));
  parallel_for(runs, [&](std::size_t r) {
    Rng rng = make_stream(seed, r);
    // per branch, per particle: |phi|^2 dx on the grid
    std::array<std::vector<std::vector<double>>, 2> dens{
        std::vector<std::vector<double>>(cfg.particles, base[0]),
        std::vector<std::vector<double>>(cfg.particles, base[1])};
    std::array<Complex, 2> c = c0;
    ClumpRun& run = out.runs[r];
    double t = 0.0;
    std::size_t k = 0;
    const double total_rate = cfg.rate * cfg.particles;
    std::vector<double> kernel2(g.n);
    while (true) {
      const double next = total_rate > 0.0 ? t + std::exponential_distribution<double>(total_rate)(rng)
                                           : std::numeric_limits<double>::infinity();
      while (k < times.size() && times[k] < next) coh[k++][r] = std::abs(c[0] * std::conj(c[1])) / coh0;
      if (k == times.size()) break;
      t = next;
      run.hit_times.push_back(t);
      const int who = static_cast<int>(uniform01(rng) * cfg.particles) % cfg.particles;
      const int branch = uniform01(rng) < std::norm(c[0]) / (std::norm(c[0]) + std::norm(c[1])) ? 0 : 1;
      const int node = draw_node(dens[branch][who], rng);
      const double z = g.x(node) + cfg.a / std::sqrt(2.0) * normal(rng);
      for (int i = 0; i < g.n; ++i) {
        const double h = hit_kernel(g.x(i) - z, cfg.a);
        kernel2[i] = h * h;
      }
      double total = 0.0;
      std::array<double, 2> n2{};
      for (int b = 0; b < 2; ++b) {
        for (int i = 0; i < g.n; ++i) n2[b] += dens[b][who][i] * kernel2[i];
        total += std::norm(c[b]) * n2[b];
      }
      for (int b = 0; b < 2; ++b) {
        c[b] *= std::sqrt(n2[b] / total);
        if (n2[b] > 0.0)
          for (int i = 0; i < g.n; ++i) dens[b][who][i] *= kernel2[i] / n2[b];
      }
    }
    run.amplitudes = c;
  }, threads);

  for (const auto& v : coh) {
    const auto m = mean_and_error(v);
    out.coherence.push_back(m.value);
    out.sigma.push_back(m.sigma);
  }
  // weighted least squares of ln(coherence) against t over well-measured points
  double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
  int used = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(out.coherence[k] > 0.02) || !(out.sigma[k] > 0.0)) continue;
    const double y = std::log(out.coherence[k]);
    const double wk = std::pow(out.coherence[k] / out.sigma[k], 2);
    sw += wk;
    st += wk * times[k];
    sy += wk * y;
    stt += wk * times[k] * times[k];
    sty += wk * times[k] * y;
    ++used;
  }
  const double det = sw * stt - st * st;
  if (used >= 2 && det > 0.0) {
    out.fitted_rate = -(sw * sty - st * sy) / det;
    out.fitted_rate_sigma = std::sqrt(sw / det);
  }
  return out;
}

}  // namespace neqlab::collapse
