#include "neqlab/bench.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "neqlab/collapse.hpp"
#include "neqlab/csv.hpp"
#include "neqlab/hvmodels.hpp"
#include "neqlab/parallel.hpp"
#include "neqlab/relaxation.hpp"
#include "neqlab/rng.hpp"
#include "neqlab/subquantum.hpp"
#include "neqlab/wavefield.hpp"

namespace neqlab::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Units
// ---------------------------------------------------------------------------

enum class Dim { Natural, Pure, Length, Time, Rate, MassDensity, Angle };

struct UnitEntry {
  const char* name;
  Dim dim;
  double scale;  ///< to the base unit of the dimension (SI, radians, or natural units)
};

constexpr UnitEntry kUnits[] = {
    {"nat", Dim::Natural, 1.0},
    {"1", Dim::Pure, 1.0},
    {"m", Dim::Length, 1.0},
    {"cm", Dim::Length, 1e-2},
    {"mm", Dim::Length, 1e-3},
    {"um", Dim::Length, 1e-6},
    {"nm", Dim::Length, 1e-9},
    {"s", Dim::Time, 1.0},
    {"ms", Dim::Time, 1e-3},
    {"min", Dim::Time, 60.0},
    {"h", Dim::Time, 3600.0},
    {"day", Dim::Time, 86400.0},
    {"1/s", Dim::Rate, 1.0},
    {"kg/m^3", Dim::MassDensity, 1.0},
    {"g/cm^3", Dim::MassDensity, 1000.0},
    {"rad", Dim::Angle, 1.0},
    {"deg", Dim::Angle, kPi / 180.0},
};

std::string units_of(Dim d) {
  std::string out;
  for (const auto& u : kUnits)
    if (u.dim == d) out += (out.empty() ? "\"" : ", \"") + std::string(u.name) + "\"";
  return out;
}

enum class Bound { Any, Positive, NonNegative };

// ---------------------------------------------------------------------------
// Schema reader: reads with defaults, records every violation, and keeps going
// with a harmless fallback so one pass reports all problems.
// ---------------------------------------------------------------------------

class Reader {
 public:
  Reader(const json* obj, std::string path, std::vector<SchemaError>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (obj_ && !obj_->is_object()) {
      fail("", "must be an object");
      obj_ = nullptr;
    }
  }

  double quantity(const std::string& key, Dim dim, std::optional<double> fallback, Bound bound = Bound::Any) {
    const json* v = take(key);
    if (!v) return missing(key, fallback, 1.0);
    auto [value, ok] = scalar_quantity(key, *v, dim);
    if (ok) check_bound(key, value, bound);
    return ok ? value : 1.0;
  }

  std::vector<double> quantity_list(const std::string& key, Dim dim, std::optional<std::vector<double>> fallback,
                                    Bound bound = Bound::Any, std::size_t min_size = 1) {
    const json* v = take(key);
    if (!v) {
      if (fallback) return *fallback;
      fail(key, "is required");
      return std::vector<double>(min_size, 1.0);
    }
    auto out = list_quantity(key, *v, dim);
    if (out.size() < min_size) fail(key, "needs at least " + std::to_string(min_size) + " values");
    for (double x : out) check_bound(key, x, bound);
    if (out.size() < min_size) out.resize(min_size, 1.0);
    return out;
  }

  /// Several quantity lists under one key, e.g. diagonal operators.
  std::vector<std::vector<double>> quantity_lists(const std::string& key, Dim dim) {
    const json* v = take(key);
    if (!v) {
      fail(key, "is required");
      return {{1.0}};
    }
    if (!v->is_array() || v->empty()) {
      fail(key, "must be a non-empty array of quantities");
      return {{1.0}};
    }
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(list_quantity(key + "[" + std::to_string(i) + "]", (*v)[i], dim));
    return out;
  }

  /// Square matrix quantity {"value": [[...], ...], "unit": ...}; nullopt when absent.
  std::optional<std::vector<std::vector<double>>> matrix(const std::string& key, Dim dim) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    const auto scale = unit_scale(key, *v, dim);
    if (!scale) return std::nullopt;
    const json& rows = (*v)["value"];
    std::vector<std::vector<double>> m;
    bool ok = rows.is_array() && !rows.empty();
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
      ok = rows[i].is_array() && rows[i].size() == rows.size();
      std::vector<double> row;
      for (std::size_t j = 0; ok && j < rows[i].size(); ++j) {
        ok = rows[i][j].is_number();
        if (ok) row.push_back(rows[i][j].get<double>() * *scale);
      }
      m.push_back(row);
    }
    if (!ok) {
      fail(key, "value must be a square array of numbers");
      return std::nullopt;
    }
    return m;
  }

  long integer(const std::string& key, std::optional<long> fallback, long lo, long hi) {
    const json* v = take(key);
    if (!v) return missing(key, fallback, lo);
    if (!v->is_number_integer()) {
      fail(key, "must be an integer");
      return lo;
    }
    const long x = v->get<long>();
    if (x < lo || x > hi) {
      fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return lo;
    }
    return x;
  }

  std::vector<long> integers(const std::string& key, std::optional<std::vector<long>> fallback, long lo, long hi,
                             std::size_t exact_size = 0) {
    const json* v = take(key);
    if (!v) {
      if (fallback) return *fallback;
      fail(key, "is required");
      return std::vector<long>(std::max<std::size_t>(exact_size, 1), lo);
    }
    std::vector<long> out;
    bool ok = v->is_array() && !v->empty();
    for (std::size_t i = 0; ok && i < v->size(); ++i) {
      ok = (*v)[i].is_number_integer() && (*v)[i].get<long>() >= lo && (*v)[i].get<long>() <= hi;
      if (ok) out.push_back((*v)[i].get<long>());
    }
    if (ok && exact_size && out.size() != exact_size) ok = false;
    if (!ok) {
      fail(key, "must be " + (exact_size ? std::to_string(exact_size) + " " : std::string("a non-empty list of ")) +
                    "integers in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return std::vector<long>(std::max<std::size_t>(exact_size, 1), lo);
    }
    return out;
  }

  std::string choice(const std::string& key, const std::vector<std::string>& options, std::optional<std::string> fallback) {
    const json* v = take(key);
    if (!v) {
      if (fallback) return *fallback;
      fail(key, "is required");
      return options.front();
    }
    if (v->is_string())
      for (const auto& o : options)
        if (v->get<std::string>() == o) return o;
    std::string list;
    for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
    fail(key, "must be one of: " + list);
    return options.front();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = take(key);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      fail(key, "must be true or false");
      return fallback;
    }
    return v->get<bool>();
  }

  /// Array of objects under `key`; empty when absent.
  std::vector<Reader> objects(const std::string& key) {
    const json* v = take(key);
    std::vector<Reader> out;
    if (!v) return out;
    if (!v->is_array()) {
      fail(key, "must be an array of objects");
      return out;
    }
    for (std::size_t i = 0; i < v->size(); ++i) out.emplace_back(&(*v)[i], join(key) + "[" + std::to_string(i) + "]", errors_);
    return out;
  }

  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }

  /// Flags every key that was never read.
  void finish() {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown field");
  }

  void fail(const std::string& key, const std::string& reason) { errors_.push_back({join(key), reason}); }

 private:
  std::string join(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* take(const std::string& key) {
    seen_[key] = true;
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &(*obj_)[key];
  }

  template <class T>
  T missing(const std::string& key, std::optional<T> fallback, T placeholder) {
    if (fallback) return *fallback;
    fail(key, "is required");
    return placeholder;
  }

  std::optional<double> unit_scale(const std::string& key, const json& v, Dim dim) {
    if (v.is_number()) {
      fail(key, "needs an explicit unit: write {\"value\": ..., \"unit\": ...} with unit " + units_of(dim));
      return std::nullopt;
    }
    if (!v.is_object() || !v.contains("value") || !v.contains("unit") || !v["unit"].is_string() || v.size() != 2) {
      fail(key, "must be {\"value\": ..., \"unit\": ...}");
      return std::nullopt;
    }
    const std::string unit = v["unit"].get<std::string>();
    for (const auto& u : kUnits)
      if (unit == u.name) {
        if (u.dim == dim) return u.scale;
        break;
      }
    fail(key, "unit \"" + unit + "\" is not allowed here; use " + units_of(dim));
    return std::nullopt;
  }

  std::pair<double, bool> scalar_quantity(const std::string& key, const json& v, Dim dim) {
    const auto scale = unit_scale(key, v, dim);
    if (!scale) return {1.0, false};
    if (!v["value"].is_number()) {
      fail(key, "value must be a number");
      return {1.0, false};
    }
    const double x = v["value"].get<double>() * *scale;
    if (!std::isfinite(x)) {
      fail(key, "value must be finite");
      return {1.0, false};
    }
    return {x, true};
  }

  std::vector<double> list_quantity(const std::string& key, const json& v, Dim dim) {
    const auto scale = unit_scale(key, v, dim);
    if (!scale) return {1.0};
    const json& arr = v["value"];
    std::vector<double> out;
    bool ok = arr.is_array() && !arr.empty();
    for (std::size_t i = 0; ok && i < arr.size(); ++i) {
      ok = arr[i].is_number() && std::isfinite(arr[i].get<double>());
      if (ok) out.push_back(arr[i].get<double>() * *scale);
    }
    if (!ok) {
      fail(key, "value must be a non-empty array of finite numbers");
      return {1.0};
    }
    return out;
  }

  void check_bound(const std::string& key, double x, Bound b) {
    if (b == Bound::Positive && !(x > 0.0)) fail(key, "must be > 0");
    if (b == Bound::NonNegative && !(x >= 0.0)) fail(key, "must be >= 0");
  }

  const json* obj_;
  std::string path_;
  std::vector<SchemaError>& errors_;
  std::map<std::string, bool> seen_;
};

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct Context {
  std::uint64_t seed = 0;
  int threads = 0;
  bool execute = false;
};

struct Outputs {
  std::vector<std::pair<std::string, CsvTable>> tables;
  json results = json::object();
};

constexpr long kMaxCount = 100'000'000;

std::vector<double> probe_grid(double t_end, double step) {
  std::vector<double> t;
  for (long k = 0; k * step <= t_end * (1.0 + 1e-12); ++k) t.push_back(k * step);
  return t;
}

wavefield::EigenmodeWaveFunction box_1d(const std::vector<long>& modes, double side) {
  std::vector<wavefield::BoxMode> m;
  for (long n : modes) m.push_back({{static_cast<int>(n), 1}, Complex(1.0, 0.0)});
  return wavefield::build_box_superposition(1, m, side);
}

Outputs run_relax(Reader& r, const Context& ctx) {
  const long n_max = r.integer("n_max", 4, 1, 12);
  const long phase_seed = r.integer("phase_seed", 1, 0, std::numeric_limits<long>::max());
  const double side = r.quantity("box_side", Dim::Natural, 1.0, Bound::Positive);
  const auto start = r.choice("start", {"box_mode", "equilibrium"}, "box_mode");
  const auto start_mode = r.integers("start_mode", std::vector<long>{1, 1}, 1, 64, 2);
  const auto cells = r.integers("cells", std::vector<long>{32, 32}, 1, 512, 2);
  const long samples = r.integer("samples", 100000, 100, kMaxCount);
  const double t_end = r.quantity("t_end", Dim::Natural, 2.0, Bound::Positive);
  const double step = r.quantity("probe_step", Dim::Natural, 0.1, Bound::Positive);
  const double rtol = r.quantity("rtol", Dim::Pure, 1e-6, Bound::Positive);
  if (step > t_end) r.fail("probe_step", "must not exceed t_end");
  if (!ctx.execute) return {};

  const auto wf = wavefield::equal_weight_box_superposition(2, static_cast<int>(n_max), static_cast<std::uint64_t>(phase_seed), side);
  const auto spec = start == "equilibrium"
                        ? pilotwave::DistributionSpec::equilibrium()
                        : pilotwave::DistributionSpec::box_mode({static_cast<int>(start_mode[0]), static_cast<int>(start_mode[1])});
  relaxation::RelaxationConfig cfg;
  cfg.cells = {static_cast<int>(cells[0]), static_cast<int>(cells[1])};
  cfg.times = probe_grid(t_end, step);
  cfg.n_samples = static_cast<std::size_t>(samples);
  cfg.seed = ctx.seed;
  cfg.tolerances.rtol = rtol;
  cfg.threads = ctx.threads;
  const auto res = relaxation::relaxation_experiment(wf, spec, cfg);

  Outputs out;
  CsvTable t({"t", "h_bar", "sigma"});
  for (std::size_t k = 0; k < res.times.size(); ++k) t.add_row(std::vector<double>{res.times[k], res.h[k], res.sigma[k]});
  out.tables.emplace_back("h_series.csv", std::move(t));
  out.results = {{"h0", res.h.front()},
                 {"h_final", res.h.back()},
                 {"estimator_bias", res.bias},
                 {"monotone_within_noise", res.monotone_within_noise},
                 {"fit", {{"valid", res.fit.valid}, {"amplitude", res.fit.amplitude}, {"t_c", res.fit.t_c},
                          {"r2", res.fit.r2}, {"points_used", res.fit.points_used}}},
                 {"tau_estimate", res.tau},
                 {"t_c_over_tau", res.tau > 0 ? res.fit.t_c / res.tau : 0.0},
                 {"epsilon", res.epsilon},
                 {"delta_e", res.delta_e},
                 {"modes", wf.modes().size()},
                 {"failures", res.report.failures}};
  return out;
}

Outputs run_subq(Reader& r, const Context& ctx) {
  const auto modes = r.integers("modes", std::vector<long>{1}, 1, 64);
  const double side = r.quantity("box_side", Dim::Natural, 1.0, Bound::Positive);
  subquantum::SubqConfig cfg;
  cfg.w = r.quantity("w", Dim::Natural, 1e-3, Bound::Positive);
  cfg.a = r.quantity("a", Dim::Natural, 1.0, Bound::Positive);
  cfg.t = r.quantity("t", Dim::Natural, 0.1, Bound::Positive);
  cfg.pointer_width = r.quantity("pointer_width", Dim::Natural, 1.0, Bound::Positive);
  cfg.runs = static_cast<std::size_t>(r.integer("runs", 1000, 1, kMaxCount));
  if (!ctx.execute) return {};
  cfg.seed = ctx.seed;
  cfg.threads = ctx.threads;
  const auto psi = box_1d(modes, side);
  const auto res = subquantum::subq_measure(psi, cfg);
  Outputs out;
  out.tables.emplace_back("subq_runs.csv", subquantum::subq_table(res));
  out.results = {{"bound", res.bound},
                 {"max_error", res.max_error},
                 {"all_within_bound", res.all_within_bound},
                 {"disturbance", res.disturbance},
                 {"runs", res.runs.size()}};
  return out;
}

Outputs run_distinguish(Reader& r, const Context& ctx) {
  const auto s1 = r.integers("state1", std::vector<long>{1}, 1, 64);
  const auto s2 = r.integers("state2", std::vector<long>{1, 2}, 1, 64);
  const double side = r.quantity("box_side", Dim::Natural, 1.0, Bound::Positive);
  subquantum::DistinguishConfig cfg;
  cfg.w = r.quantity("w", Dim::Natural, 1e-3, Bound::Positive);
  cfg.at = r.quantity("at", Dim::Natural, 0.1, Bound::Positive);
  cfg.times = r.quantity_list("times", Dim::Natural, cfg.times, Bound::NonNegative, 1);
  cfg.runs = static_cast<std::size_t>(r.integer("runs", 1000, 1, kMaxCount));
  cfg.allow_degenerate = r.boolean("allow_degenerate", false);
  if (!ctx.execute) return {};
  cfg.seed = ctx.seed;
  cfg.threads = ctx.threads;
  const auto res = subquantum::distinguish_nonorthogonal(box_1d(s1, side), box_1d(s2, side), cfg);
  Outputs out;
  CsvTable t({"runs", "correct", "ties", "accuracy", "sigma", "overlap"});
  t.add_row({format_number(static_cast<std::int64_t>(res.runs)), format_number(static_cast<std::int64_t>(res.correct)),
             format_number(static_cast<std::int64_t>(res.ties)), format_number(res.accuracy),
             format_number(res.accuracy_sigma), format_number(res.overlap)});
  out.tables.emplace_back("distinguish.csv", std::move(t));
  out.results = {{"accuracy", res.accuracy}, {"accuracy_sigma", res.accuracy_sigma}, {"overlap", res.overlap},
                 {"runs", res.runs},         {"ties", res.ties},                     {"degenerate", res.degenerate}};
  return out;
}

Outputs run_signal(Reader& r, const Context& ctx) {
  std::vector<wavefield::BoxMode> modes;
  auto mode_readers = r.objects("modes");
  for (auto& m : mode_readers) {
    const auto n = m.integers("n", std::nullopt, 1, 64, 2);
    const auto amp = m.quantity_list("amplitude", Dim::Pure, std::vector<double>{1.0, 0.0}, Bound::Any, 2);
    m.finish();
    modes.push_back({{static_cast<int>(n[0]), static_cast<int>(n[1])}, Complex(amp[0], amp[1])});
  }
  if (!r.has("modes")) modes = {{{1, 1}, Complex(1.0, 0.0)}, {{2, 2}, Complex(0.0, 0.5)}};
  const auto masses = r.quantity_list("masses", Dim::Natural, std::vector<double>{1.0, 1.0}, Bound::Positive, 2);
  const double side = r.quantity("box_side", Dim::Natural, 1.0, Bound::Positive);
  subquantum::SignalingConfig cfg;
  cfg.quenched_mass_b = r.quantity("quenched_mass_b", Dim::Natural, 2.0, Bound::Positive);
  const auto start = r.choice("start", {"box_mode", "equilibrium"}, "box_mode");
  const auto start_mode = r.integers("start_mode", std::vector<long>{1, 1}, 1, 64, 2);
  cfg.samples = static_cast<std::size_t>(r.integer("samples", 20000, 10, kMaxCount));
  std::vector<double> probes;
  for (int k = 0; k < 5; ++k) probes.push_back(1e-3 * std::pow(10.0, k / 4.0));
  cfg.probe_times = r.quantity_list("probe_times", Dim::Natural, probes, Bound::Positive, 1);
  cfg.fourier_modes = static_cast<int>(r.integer("fourier_modes", 8, 1, 256));
  cfg.histogram_bins = static_cast<int>(r.integer("histogram_bins", 20, 2, 4096));
  if (!ctx.execute) return {};
  cfg.start = start == "equilibrium"
                  ? pilotwave::DistributionSpec::equilibrium()
                  : pilotwave::DistributionSpec::box_mode({static_cast<int>(start_mode[0]), static_cast<int>(start_mode[1])});
  cfg.seed = ctx.seed;
  cfg.threads = ctx.threads;
  const auto psi = wavefield::build_box_superposition(2, modes, side, std::nullopt, {masses[0], masses[1]});
  const auto res = subquantum::signaling_experiment(psi, cfg);
  Outputs out;
  out.tables.emplace_back("signal_marginals.csv", subquantum::signaling_table(res));
  CsvTable probes_t({"t", "signal_norm", "signal_sigma", "hotelling_t2", "dof", "p_value"});
  json probe_json = json::array();
  for (const auto& p : res.probes) {
    probes_t.add_row(std::vector<double>{p.t, p.signal_norm, p.signal_sigma, p.hotelling_t2,
                                         static_cast<double>(p.hotelling_dof), p.p_value});
    probe_json.push_back({{"t", p.t}, {"signal_norm", p.signal_norm}, {"p_value", p.p_value}});
  }
  out.tables.emplace_back("signal_probes.csv", std::move(probes_t));
  out.results = {{"exponent", res.exponent},
                 {"exponent_sigma", res.exponent_sigma},
                 {"exponent_valid", res.exponent_valid},
                 {"failures", res.failures},
                 {"three_sigma_p", subquantum::kThreeSigmaP},
                 {"probes", probe_json}};
  return out;
}

hvmodels::HvDistribution read_hv_density(Reader& r) {
  const auto cells = r.integers("rho_cells", std::vector<long>{1, 1}, 1, 1024, 2);
  const auto weights = r.quantity_list("rho_weights", Dim::Pure, std::vector<double>(cells[0] * cells[1], 1.0),
                                       Bound::NonNegative, 1);
  if (weights.size() != static_cast<std::size_t>(cells[0] * cells[1]))
    r.fail("rho_weights", "needs rho_cells[0] * rho_cells[1] entries");
  try {
    return hvmodels::HvDistribution(static_cast<int>(cells[0]), static_cast<int>(cells[1]), weights);
  } catch (const ValidationError& e) {
    r.fail("rho_weights", e.what());
    return hvmodels::HvDistribution::uniform();
  }
}

Outputs run_hv_singlet(Reader& r, const Context& ctx) {
  const double ta = r.quantity("theta_a", Dim::Angle, 0.0);
  const double tb = r.quantity("theta_b", Dim::Angle, kPi / 3);
  std::optional<double> tb2;
  if (r.has("theta_b2")) tb2 = r.quantity("theta_b2", Dim::Angle, std::nullopt);
  const long samples = r.integer("samples", 100000, 1, kMaxCount);
  const auto rho = read_hv_density(r);
  if (!ctx.execute) return {};
  const auto model = hvmodels::builtin_singlet_model();
  const auto a = hvmodels::axis_at(ta), b = hvmodels::axis_at(tb);
  const auto s = hvmodels::ensemble_statistics(model, rho, a, b, static_cast<std::size_t>(samples), ctx.seed, ctx.threads);
  const auto e = hvmodels::exact_statistics(rho, a, b);
  Outputs out;
  CsvTable t({"quantity", "estimate", "sigma", "exact", "quantum"});
  const double quantum = -std::cos(tb - ta);
  t.add_row({"correlation", format_number(s.correlation.value), format_number(s.correlation.sigma),
             format_number(e.correlation), format_number(quantum)});
  t.add_row({"p_a_plus", format_number(s.p_a_plus.value), format_number(s.p_a_plus.sigma), format_number(e.p_a_plus),
             format_number(0.5)});
  t.add_row({"p_b_plus", format_number(s.p_b_plus.value), format_number(s.p_b_plus.sigma), format_number(e.p_b_plus),
             format_number(0.5)});
  out.tables.emplace_back("hv_singlet.csv", std::move(t));
  out.results = {{"density", rho.describe()},
                 {"correlation", {{"value", s.correlation.value}, {"sigma", s.correlation.sigma}, {"exact", e.correlation},
                                  {"quantum", quantum}}},
                 {"p_a_plus", {{"value", s.p_a_plus.value}, {"sigma", s.p_a_plus.sigma}, {"exact", e.p_a_plus}}},
                 {"p_b_plus", {{"value", s.p_b_plus.value}, {"sigma", s.p_b_plus.sigma}, {"exact", e.p_b_plus}}}};
  if (tb2) {
    const auto rep = hvmodels::transition_sets(model, a, b, hvmodels::axis_at(*tb2), rho);
    out.results["transition_sets"] = json::parse(hvmodels::transition_report_json(rep));
    const auto after = hvmodels::exact_statistics(rho, a, hvmodels::axis_at(*tb2));
    out.results["marginal_shift_exact"] = after.p_a_plus - e.p_a_plus;
  }
  return out;
}

Outputs run_hv_photon(Reader& r, const Context& ctx) {
  const double p = r.quantity("bloch_p", Dim::Pure, 1.0);
  if (std::abs(p) > 1.0) r.fail("bloch_p", "must lie in [-1, 1]");
  const auto kind = r.choice("rho", {"uniform", "power", "piecewise"}, "uniform");
  const double power = r.quantity("rho_power", Dim::Pure, 1.0);
  const auto weights = r.quantity_list("rho_weights", Dim::Pure, std::vector<double>{1.0}, Bound::NonNegative);
  const long points = r.integer("theta_points", 37, 3, 100000);
  const long samples = r.integer("samples", 0, 0, kMaxCount);
  const double threshold = r.quantity("residual_threshold", Dim::Pure, 0.01, Bound::Positive);
  if (kind == "power" && !(power > -1.0)) r.fail("rho_power", "must be > -1");
  if (!ctx.execute) return {};
  const auto rho = kind == "power" ? hvmodels::Density1D::power(power)
                   : kind == "piecewise" ? hvmodels::Density1D::piecewise(weights)
                                         : hvmodels::Density1D::uniform();
  std::vector<double> theta;
  for (long k = 0; k < points; ++k) theta.push_back(kPi * k / (points - 1));
  const auto c = hvmodels::two_state_transmission(rho, theta, p, threshold, static_cast<std::size_t>(samples), ctx.seed);
  Outputs out;
  out.tables.emplace_back("transmission.csv", hvmodels::transmission_table(c));
  out.results = {{"density", rho.describe()},
                 {"fit_p", c.fit_p},
                 {"fit_phase", c.fit_phase},
                 {"max_residual", c.max_residual},
                 {"max_quantum_deviation", c.max_quantum_deviation},
                 {"additivity_defect", c.additivity_defect},
                 {"nonquantum_signature", c.nonquantum_signature}};
  return out;
}

Outputs run_csl(Reader& r, const Context& ctx) {
  using namespace collapse;
  const auto diagonals = r.quantity_lists("operators", Dim::Natural);
  const auto h = r.matrix("hamiltonian", Dim::Natural);
  const auto pops = r.quantity_list("populations", Dim::Pure, std::nullopt, Bound::NonNegative, 1);
  CslOptions opt;
  opt.lambda = r.quantity("lambda", Dim::Natural, 1.0, Bound::NonNegative);
  opt.t_end = r.quantity("t_end", Dim::Natural, 8.0, Bound::Positive);
  opt.dt = r.quantity("dt", Dim::Natural, 0.0, Bound::NonNegative);
  opt.scheme = r.choice("scheme", {"cooked", "raw"}, "cooked") == "raw" ? NoiseScheme::Raw : NoiseScheme::Cooked;
  opt.record_every = static_cast<int>(r.integer("record_every", 100, 1, 1'000'000));
  const long runs = r.integer("runs", 10000, 2, kMaxCount);
  const std::size_t d = diagonals.front().size();
  for (std::size_t i = 0; i < diagonals.size(); ++i)
    if (diagonals[i].size() != d) r.fail("operators", "every operator needs the same number of diagonal entries");
  if (pops.size() != d) r.fail("populations", "needs one entry per basis state");
  if (h && h->size() != d) r.fail("hamiltonian", "must match the operator dimension");
  double total = 0.0;
  for (double x : pops) total += x;
  if (!(total > 0.0)) r.fail("populations", "must not all vanish");
  if (!ctx.execute) return {};

  std::vector<CMatrix> ops;
  for (const auto& diag : diagonals) {
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) m(i, i) = diag[i];
    ops.push_back(m);
  }
  std::optional<CMatrix> hm;
  if (h) {
    hm = CMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) (*hm)(i, j) = (*h)[i][j];
  }
  const CollapseOperatorSet set(ops, hm);
  CVector psi(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) psi(i) = std::sqrt(pops[i] / total);
  const auto ens = csl_ensemble(set, psi, opt, static_cast<std::size_t>(runs), ctx.seed, ctx.threads);
  const auto freq = outcome_frequencies(ens);
  const auto mg = martingale_diagnostics(ens);

  Outputs out;
  CsvTable outcomes({"sector", "frequency", "sigma", "born"});
  json fj = json::array();
  for (std::size_t s = 0; s < freq.size(); ++s) {
    outcomes.add_row(std::vector<double>{static_cast<double>(s), freq[s].value, freq[s].sigma, ens.initial_sector_weights[s]});
    fj.push_back({{"frequency", freq[s].value}, {"sigma", freq[s].sigma}, {"born", ens.initial_sector_weights[s]}});
  }
  out.tables.emplace_back("csl_outcomes.csv", std::move(outcomes));

  std::vector<std::string> header{"t"};
  for (std::size_t n = 0; n < d; ++n) header.push_back("z_" + std::to_string(n));
  const bool coherence = d >= 2;
  if (coherence) {
    header.insert(header.end(), {"coherence_01", "coherence_sigma", "coherence_exact"});
  }
  CsvTable series(header);
  const CMatrix rho0 = psi * psi.adjoint();
  double worst_coherence_z = 0.0;
  for (std::size_t k = 0; k < mg.times.size(); ++k) {
    std::vector<double> row{mg.times[k]};
    row.insert(row.end(), mg.z[k].begin(), mg.z[k].end());
    if (coherence) {
      const auto avg = ensemble_density(ens, k);
      const auto exact = density_matrix_csl(rho0, set, opt.lambda, mg.times[k]);
      const CMatrix eb = set.basis().adjoint() * exact.rho * set.basis();
      const double sigma = std::hypot(avg.sigma_re(0, 1), avg.sigma_im(0, 1));
      const double dev = std::abs(avg.rho(0, 1) - eb(0, 1));
      if (dev > 1e-12) worst_coherence_z = std::max(worst_coherence_z, sigma > 0 ? dev / sigma : 1e300);
      row.insert(row.end(), {std::abs(avg.rho(0, 1)), sigma, std::abs(eb(0, 1))});
    }
    series.add_row(row);
  }
  out.tables.emplace_back("csl_series.csv", std::move(series));
  out.results = {{"scheme", opt.scheme == NoiseScheme::Raw ? "raw" : "cooked"},
                 {"runs", ens.runs.size()},
                 {"excluded", ens.excluded},
                 {"effective_sample_size", effective_sample_size(ens)},
                 {"dt", ens.runs.front().dt},
                 {"sectors", ens.sectors},
                 {"outcomes", fj},
                 {"martingale", {{"max_abs_z", mg.max_abs_z}, {"drift_ok", mg.drift_ok}, {"sums_to_one", mg.sums_to_one},
                                 {"final_cross", mg.final_cross}, {"collapsed_fraction", mg.collapsed_fraction}}}};
  if (coherence) out.results["coherence_max_abs_z"] = worst_coherence_z;
  return out;
}

Outputs run_master(Reader& r, const Context& ctx) {
  using namespace collapse;
  MasterParams p;
  p.lambda = r.quantity("lambda", Dim::Natural, 0.2, Bound::NonNegative);
  p.a = r.quantity("a", Dim::Natural, 1.0, Bound::Positive);
  p.mass = r.quantity("mass", Dim::Natural, 5.0, Bound::Positive);
  p.coupling = r.quantity("coupling", Dim::Pure, 1.0);
  LineGrid g;
  g.n = static_cast<int>(r.integer("grid_points", 128, 8, 1024));
  g.length = r.quantity("length", Dim::Natural, 32.0, Bound::Positive);
  const auto centers = r.quantity_list("centers", Dim::Natural, std::vector<double>{-8.0, 8.0}, Bound::Any, 2);
  const double width = r.quantity("width", Dim::Natural, 0.7, Bound::Positive);
  const double dt = r.quantity("dt", Dim::Natural, 0.02, Bound::Positive);
  const long steps = r.integer("steps", 50, 1, 10'000'000);
  const long every = r.integer("record_every", 5, 1, 10'000'000);
  if (centers.size() != 2) r.fail("centers", "needs exactly two packet centres");
  if (!ctx.execute) return {};

  std::vector<Complex> amps(2, Complex(1.0, 0.0));
  const auto rho0 = gaussian_packets_density(g, {centers[0], centers[1]}, width, amps);
  const double mid = 0.5 * (centers[0] + centers[1]);
  int split = 0;
  while (split < g.n && g.x(split) < mid) ++split;
  MasterParams ref = p;
  ref.lambda = 0.0;
  LineDensity on = rho0, off = rho0;
  const double e0 = line_energy(rho0, p);
  const double c0 = block_coherence(rho0, 0, split, split, g.n);
  CsvTable t({"t", "energy", "trace", "coherence", "coherence_reference", "coherence_ratio"});
  t.add_row(std::vector<double>{0.0, e0, line_trace(rho0), c0, c0, 1.0});
  for (long done = 0; done < steps;) {
    const int chunk = static_cast<int>(std::min(every, steps - done));
    on = particle_master_equation(on, p, dt, chunk);
    off = particle_master_equation(off, ref, dt, chunk);
    done += chunk;
    const double c_on = block_coherence(on, 0, split, split, g.n), c_off = block_coherence(off, 0, split, split, g.n);
    t.add_row(std::vector<double>{on.time, line_energy(on, p), line_trace(on), c_on, c_off, c_on / c_off});
  }
  const double c_on = block_coherence(on, 0, split, split, g.n), c_off = block_coherence(off, 0, split, split, g.n);
  const double sep = centers[1] - centers[0];
  const double expected_rate = p.lambda * p.coupling * p.coupling * (1.0 - std::exp(-sep * sep / (4.0 * p.a * p.a)));
  Outputs out;
  out.tables.emplace_back("master.csv", std::move(t));
  out.results = {{"time", on.time},
                 {"decay_rate", -std::log(c_on / c_off) / on.time},
                 {"decay_rate_expected", expected_rate},
                 {"energy_slope", (line_energy(on, p) - e0) / on.time},
                 {"energy_slope_expected", energy_gain_rate_1d(p.mass, p.coupling, p.lambda, p.a)},
                 {"trace_error", std::abs(line_trace(on) - 1.0)}};
  return out;
}

Outputs run_sl_hits(Reader& r, const Context& ctx) {
  using namespace collapse;
  const auto particles = r.integers("particles", std::vector<long>{1, 2, 4, 8}, 1, 64);
  const double rate = r.quantity("rate", Dim::Natural, 1.0, Bound::Positive);
  const double a = r.quantity("a", Dim::Natural, 1.0, Bound::Positive);
  const double width = r.quantity("width", Dim::Natural, 0.1, Bound::Positive);
  const double sep = r.quantity("separation", Dim::Natural, 10.0, Bound::Positive);
  LineGrid g;
  g.n = static_cast<int>(r.integer("grid_points", 512, 8, 1024));
  g.length = r.quantity("length", Dim::Natural, 16.0, Bound::Positive);
  const long runs = r.integer("runs", 10000, 2, kMaxCount);
  const long points = r.integer("probe_points", 10, 2, 1000);
  const auto pops = r.quantity_list("populations", Dim::Pure, std::vector<double>{0.3, 0.7}, Bound::NonNegative, 2);
  const double t_end = r.quantity("t_end", Dim::Natural, 5.0, Bound::Positive);
  if (pops.size() != 2 || !(pops[0] + pops[1] > 0.0)) r.fail("populations", "needs two entries with a positive sum");
  if (!ctx.execute) return {};

  Outputs out;
  CsvTable t({"particles", "t", "coherence", "sigma"});
  json rates = json::array();
  for (long n : particles) {
    ClumpConfig cfg;
    cfg.particles = static_cast<int>(n);
    cfg.centers = {-0.5 * sep, 0.5 * sep};
    cfg.width = width;
    cfg.rate = rate;
    cfg.a = a;
    cfg.grid = g;
    std::vector<double> times;
    for (long k = 1; k <= points; ++k) times.push_back(static_cast<double>(k) / (points * rate * n));
    const auto c = sl_clump_collapse(cfg, times, static_cast<std::size_t>(runs), stream_seed(ctx.seed, static_cast<std::uint64_t>(n)),
                                     ctx.threads);
    for (std::size_t k = 0; k < times.size(); ++k)
      t.add_row(std::vector<double>{static_cast<double>(n), times[k], c.coherence[k], c.sigma[k]});
    const double overlap = std::exp(-sep * sep / (8.0 * a * a));
    rates.push_back({{"particles", n},
                     {"fitted_rate", c.fitted_rate},
                     {"fitted_rate_sigma", c.fitted_rate_sigma},
                     {"expected_rate", rate * n * (1.0 - overlap)}});
  }
  out.tables.emplace_back("sl_coherence.csv", std::move(t));

  const double total = pops[0] + pops[1];
  const auto psi = gaussian_packets_state(g, {-0.5 * sep, 0.5 * sep}, width,
                                          {Complex(std::sqrt(pops[0] / total), 0.0), Complex(std::sqrt(pops[1] / total), 0.0)});
  const std::uint64_t born_seed = stream_seed(ctx.seed, 0);
  std::vector<int> left(static_cast<std::size_t>(runs));
  parallel_for(static_cast<std::size_t>(runs), [&](std::size_t i) {
    const auto run = sl_hit_process(psi, rate, a, t_end, stream_seed(born_seed, i));
    double w = 0.0;
    for (int j = 0; j < g.n && g.x(j) < 0.0; ++j) w += std::norm(run.state.psi[j]) * g.dx();
    left[i] = w > 0.5 ? 1 : 0;
  }, ctx.threads);
  double f = 0.0;
  for (int x : left) f += x;
  f /= static_cast<double>(runs);
  out.results = {{"clump_rates", rates},
                 {"born", {{"frequency_left", f},
                           {"sigma", std::sqrt(f * (1.0 - f) / static_cast<double>(runs))},
                           {"expected_left", pops[0] / total}}}};
  return out;
}

Outputs run_gambler(Reader& r, const Context& ctx) {
  const double x0 = r.quantity("x0", Dim::Pure, 0.5);
  const double stake = r.quantity("stake", Dim::Pure, 0.1, Bound::Positive);
  const long runs = r.integer("runs", 10000, 2, kMaxCount);
  if (!(x0 >= 0.0 && x0 <= 1.0)) r.fail("x0", "must lie in [0, 1]");
  if (!ctx.execute) return {};
  const auto rep = collapse::gambler_ruin(x0, stake, static_cast<std::size_t>(runs), ctx.seed, ctx.threads);
  Outputs out;
  CsvTable t({"step", "mean_fraction", "sigma"});
  for (std::size_t k = 0; k < rep.steps.size(); ++k)
    t.add_row(std::vector<double>{static_cast<double>(rep.steps[k]), rep.mean_fraction[k], rep.mean_sigma[k]});
  out.tables.emplace_back("gambler.csv", std::move(t));
  out.results = {{"win_freq", rep.win_frequency},
                 {"win_sigma", rep.win_sigma},
                 {"expected", x0},
                 {"max_abs_z", rep.max_abs_z},
                 {"mean_absorption_steps", rep.mean_absorption_steps}};
  return out;
}

Outputs run_predict(Reader& r, const Context& ctx) {
  using namespace collapse;
  CslParams p;
  p.lambda = r.quantity("lambda", Dim::Rate, Constants::reference_lambda, Bound::Positive);
  p.a = r.quantity("a", Dim::Length, Constants::reference_a, Bound::Positive);
  const double radius = r.quantity("radius", Dim::Length, 1e-7, Bound::Positive);
  const double density = r.quantity("density", Dim::MassDensity, 1000.0, Bound::Positive);
  const double time = r.quantity("time", Dim::Time, 86400.0, Bound::NonNegative);
  const double nucleons = r.quantity("interference_nucleons", Dim::Pure, 1e8, Bound::Positive);
  const double dt = r.quantity("interference_dt", Dim::Time, 0.01, Bound::Positive);
  if (!ctx.execute) return {};
  const double n = sphere_nucleons(radius, density);
  const auto w = random_walk_predictions(n, p, time, radius);
  const auto ic = interference_criterion(nucleons, dt, p.lambda);
  const double gain = energy_gain_rate({Constants::proton_mass}, p) / Constants::electron_volt;
  Outputs out;
  CsvTable t({"quantity", "value", "unit"});
  t.add_row({"clump_nucleons", format_number(n), "1"});
  t.add_row({"clump_size_s", format_number(w.size), "m"});
  t.add_row({"settle_time", format_number(w.settle_time), "s"});
  t.add_row({"rms_displacement_scaling", format_number(w.rms_scaling), "m"});
  t.add_row({"rms_displacement_per_axis", format_number(w.rms_per_axis), "m"});
  t.add_row({"energy_gain_per_nucleon", format_number(gain), "eV/s"});
  t.add_row({"interference_threshold_inverse_rate", format_number(ic.threshold_inverse_rate), "s"});
  t.add_row({"interference_ratio", format_number(ic.ratio), "1"});
  out.tables.emplace_back("predictions.csv", std::move(t));
  out.results = {{"clump_nucleons", n},
                 {"size_m", w.size},
                 {"settle_time_s", w.settle_time},
                 {"rms_scaling_m", w.rms_scaling},
                 {"rms_per_axis_m", w.rms_per_axis},
                 {"within_validity", w.within_validity},
                 {"energy_gain_ev_per_s", gain},
                 {"interference", {{"nucleons", nucleons}, {"delta_t_s", dt},
                                   {"threshold_inverse_rate_s", ic.threshold_inverse_rate}, {"ratio", ic.ratio},
                                   {"decay_factor", ic.decay_factor}, {"agrees_at_1pct", ic.agrees_at_1pct},
                                   {"verdict", to_string(ic.verdict)}}}};
  return out;
}

struct Kind {
  ExperimentInfo info;
  std::function<Outputs(Reader&, const Context&)> run;
};

const std::vector<Kind>& kinds() {
  static const std::vector<Kind> k = {
      {{"relax", "coarse-grained H-function of a nonequilibrium box ensemble over time, with exponential fit",
        "relaxation toward quantum equilibrium"}, run_relax},
      {{"subq", "exactly solvable position measurement with a narrow pointer prior", "subquantum measurement"}, run_subq},
      {{"distinguish", "guess which of two nonorthogonal states was prepared from tracked readings",
        "distinguishing nonorthogonal states"}, run_distinguish},
      {{"signal", "A-marginal response to a mass quench at B for an entangled two-axis state",
        "nonlocal signal in nonequilibrium"}, run_signal},
      {{"hv-singlet", "singlet correlations and transition sets of the builtin threshold model",
        "hidden-variables detailed balance"}, run_hv_singlet},
      {{"hv-photon", "two-outcome transmission curve under a hidden-variable density",
        "cos 2 theta signature"}, run_hv_photon},
      {{"csl-run", "finite-dimensional collapse ensemble: outcome frequencies, martingale and coherence",
        "state diffusion with the probability rule"}, run_csl},
      {{"csl-master", "one-particle position master equation: coherence decay and energy growth",
        "collapse master equation"}, run_master},
      {{"sl-hits", "discrete Gaussian hits: clump coherence decay and two-location frequencies",
        "discrete hitting process"}, run_sl_hits},
      {{"gambler", "fair-coin gambler's ruin with martingale checkpoints", "martingale toy"}, run_gambler},
      {{"predict", "SI predictions: clump size, settle time, random walk, energy gain, interference verdict",
        "collapse-parameter consequences"}, run_predict},
  };
  return k;
}

const Kind* find_kind(const std::string& name) {
  for (const auto& k : kinds())
    if (k.info.kind == name) return &k;
  return nullptr;
}

// Parses the manifest envelope and the kind's parameters; with ctx.execute the experiment also runs.
Outputs process(const json& manifest, std::vector<SchemaError>& errors, const Context& ctx, std::string* kind_out,
                std::uint64_t* seed_out) {
  Reader top(&manifest, "", errors);
  std::vector<std::string> names;
  for (const auto& k : kinds()) names.push_back(k.info.kind);
  const std::string name = top.choice("kind", names, std::nullopt);
  const Kind* kind = manifest.contains("kind") && manifest["kind"].is_string()
                         ? find_kind(manifest["kind"].get<std::string>())
                         : nullptr;
  const long seed = top.integer("seed", std::nullopt, 0, std::numeric_limits<long>::max());
  if (manifest.contains("output") && (!manifest["output"].is_string() || manifest["output"].get<std::string>().empty()))
    errors.push_back({"output", "must be a non-empty path string"});
  for (auto it = manifest.begin(); it != manifest.end(); ++it)
    if (it.key() != "kind" && it.key() != "seed" && it.key() != "output" && it.key() != "params")
      errors.push_back({it.key(), "unknown field"});
  if (kind_out) *kind_out = name;
  if (seed_out) *seed_out = static_cast<std::uint64_t>(seed);

  static const json empty = json::object();
  const json* params = manifest.contains("params") ? &manifest["params"] : &empty;
  if (kind) {
    Reader pr(params, "params", errors);
    kind->run(pr, Context{ctx.seed, ctx.threads, false});
    pr.finish();
  }
  if (!errors.empty() || !ctx.execute) return {};
  Reader pr(params, "params", errors);
  return kind->run(pr, ctx);
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f << content;
    if (!f) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

const std::vector<ExperimentInfo>& list_experiments() {
  static const std::vector<ExperimentInfo> catalog = [] {
    std::vector<ExperimentInfo> c;
    for (const auto& k : kinds()) c.push_back(k.info);
    return c;
  }();
  return catalog;
}

std::vector<SchemaError> validate_manifest(const json& manifest) {
  std::vector<SchemaError> errors;
  if (!manifest.is_object()) {
    errors.push_back({"", "manifest must be a JSON object"});
    return errors;
  }
  process(manifest, errors, Context{}, nullptr, nullptr);
  return errors;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

std::vector<SchemaError> validate_file(const fs::path& path) { return validate_manifest(read_json(path)); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

json RunRecord::to_json() const {
  json files = json::array();
  for (const auto& f : outputs) files.push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"schema", kRecordSchema},
          {"tool", {{"name", kToolName}, {"version", kToolVersion}}},
          {"manifest", manifest},
          {"output_dir", output_dir.string()},
          {"wall_time_s", wall_time_s},
          {"outputs", files},
          {"summary", summary}};
}

RunRecord run_manifest(const json& manifest, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (!manifest.is_object()) throw ValidationError("manifest must be a JSON object");
  std::vector<SchemaError> errors;
  std::string kind;
  std::uint64_t manifest_seed = 0;
  Context ctx;
  ctx.threads = options.threads;
  process(manifest, errors, Context{}, &kind, &manifest_seed);
  if (!errors.empty()) {
    std::string msg = "manifest failed validation:";
    for (const auto& e : errors) msg += "\n  " + e.str();
    throw ValidationError(msg);
  }
  const std::uint64_t seed = options.seed.value_or(manifest_seed);
  json effective = manifest;
  effective["seed"] = seed;
  fs::path out_dir = options.output ? *options.output
                                    : fs::path(manifest.value("output", std::string("runs/") + kind + "-seed" + std::to_string(seed)));
  effective["output"] = out_dir.string();

  ctx.seed = seed;
  ctx.execute = true;
  Outputs outputs;
  try {
    std::vector<SchemaError> run_errors;
    outputs = process(effective, run_errors, ctx, nullptr, nullptr);
  } catch (const NumericalError& e) {
    throw NumericalError(kind + ": " + e.what());
  }

  fs::create_directories(out_dir);
  RunRecord rec;
  rec.manifest = effective;
  rec.output_dir = out_dir;
  for (const auto& [name, table] : outputs.tables) {
    const std::string text = table.str();
    write_atomic(out_dir / name, text);
    rec.outputs.push_back({name, sha256_hex(text), text.size()});
  }
  rec.summary = {{"schema", kSummarySchema}, {"kind", kind}, {"seed", seed}, {"results", outputs.results}};
  const std::string summary_text = rec.summary.dump(2) + "\n";
  write_atomic(out_dir / "summary.json", summary_text);
  rec.outputs.push_back({"summary.json", sha256_hex(summary_text), summary_text.size()});
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_atomic(out_dir / "run_record.json", rec.to_json().dump(2) + "\n");
  return rec;
}

RunRecord run_file(const fs::path& path, const RunOptions& options) { return run_manifest(read_json(path), options); }

}  // namespace neqlab::bench
