// Python bindings. Manifests and summaries cross the boundary as JSON text;
// the package wrapper converts them to and from dicts.

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "neqlab/bench.hpp"
#include "neqlab/collapse.hpp"
#include "neqlab/common.hpp"
#include "neqlab/hvmodels.hpp"
#include "neqlab/relaxation.hpp"

namespace py = pybind11;
using namespace neqlab;

namespace {

py::dict record_dict(const bench::RunRecord& r) {
  py::dict d;
  d["output_dir"] = r.output_dir;
  d["wall_time_s"] = r.wall_time_s;
  d["summary"] = r.summary.dump();
  d["manifest"] = r.manifest.dump();
  py::list files;
  for (const auto& f : r.outputs) files.append(py::make_tuple(f.name, f.sha256, f.bytes));
  d["outputs"] = files;
  return d;
}

}  // namespace

PYBIND11_MODULE(_neqlab, m) {
  m.doc() = "pilot-wave relaxation, hidden-variable and collapse-model experiments";
  m.attr("__version__") = bench::kToolVersion;

  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(validation_error.ptr(), e.what());
    } catch (const NumericalError& e) {
      PyErr_SetString(numerical_error.ptr(), e.what());
    }
  });

  // manifest runner
  m.def("list_experiments", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& e : bench::list_experiments()) out.emplace_back(e.kind, e.description, e.topic);
    return out;
  });
  m.def(
      "validate_manifest",
      [](const std::string& text) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& e : bench::validate_manifest(nlohmann::json::parse(text))) out.emplace_back(e.field, e.reason);
        return out;
      },
      py::arg("manifest_json"));
  m.def(
      "run_manifest",
      [](const std::string& text, std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> output,
         int threads) {
        bench::RunOptions opt{seed, output, threads};
        bench::RunRecord rec;
        {
          py::gil_scoped_release release;
          rec = bench::run_manifest(nlohmann::json::parse(text), opt);
        }
        return record_dict(rec);
      },
      py::arg("manifest_json"), py::arg("seed") = py::none(), py::arg("output") = py::none(), py::arg("threads") = 0);
  m.def("sha256_file", &bench::sha256_file, py::arg("path"));

  // relaxation
  m.def(
      "h_function",
      [](const std::vector<double>& p, const std::vector<double>& q) { return relaxation::h_function(p, q); },
      py::arg("p_bar"), py::arg("psi_bar"));
  m.def("tau_estimate", &relaxation::tau_estimate, py::arg("delta_e"), py::arg("mass"), py::arg("epsilon"));

  // hidden variables
  m.def(
      "singlet_correlation",
      [](double theta_a, double theta_b, std::size_t samples, std::uint64_t seed) {
        const auto s = hvmodels::ensemble_statistics(hvmodels::builtin_singlet_model(), hvmodels::HvDistribution::uniform(),
                                                     hvmodels::axis_at(theta_a), hvmodels::axis_at(theta_b), samples, seed);
        return py::make_tuple(s.correlation.value, s.correlation.sigma);
      },
      py::arg("theta_a"), py::arg("theta_b"), py::arg("samples") = 100000, py::arg("seed") = 1);
  m.def(
      "transmission_curve",
      [](const std::vector<double>& theta, double bloch_p, double power) {
        const auto density = power == 0.0 ? hvmodels::Density1D::uniform() : hvmodels::Density1D::power(power);
        const auto c = hvmodels::two_state_transmission(density, theta, bloch_p);
        py::dict d;
        d["p_plus"] = c.p_plus;
        d["max_residual"] = c.max_residual;
        d["max_quantum_deviation"] = c.max_quantum_deviation;
        d["nonquantum_signature"] = c.nonquantum_signature;
        return d;
      },
      py::arg("theta"), py::arg("bloch_p") = 1.0, py::arg("power") = 0.0,
      "p+ over analyser angles; hidden-variable density proportional to lambda^power");

  // collapse
  m.def(
      "gambler_ruin",
      [](double x0, double stake, std::size_t runs, std::uint64_t seed) {
        const auto r = collapse::gambler_ruin(x0, stake, runs, seed);
        return py::make_tuple(r.win_frequency, r.win_sigma);
      },
      py::arg("x0"), py::arg("stake"), py::arg("runs"), py::arg("seed"));
  m.def(
      "collapse_frequencies",
      [](const std::vector<double>& eigenvalues, const std::vector<std::complex<double>>& amplitudes, double lambda,
         double t_end, std::size_t runs, std::uint64_t seed, bool raw) {
        if (eigenvalues.size() != amplitudes.size()) throw ValidationError("eigenvalues and amplitudes differ in length");
        const auto d = static_cast<Eigen::Index>(eigenvalues.size());
        collapse::CMatrix a = collapse::CMatrix::Zero(d, d);
        collapse::CVector psi(d);
        for (Eigen::Index i = 0; i < d; ++i) {
          a(i, i) = eigenvalues[i];
          psi(i) = amplitudes[i];
        }
        const collapse::CollapseOperatorSet ops({a});
        collapse::CslOptions opt;
        opt.lambda = lambda;
        opt.t_end = t_end;
        opt.scheme = raw ? collapse::NoiseScheme::Raw : collapse::NoiseScheme::Cooked;
        opt.keep_states = false;
        std::vector<std::pair<double, double>> out;
        {
          py::gil_scoped_release release;
          for (const auto& f : collapse::outcome_frequencies(collapse::csl_ensemble(ops, psi, opt, runs, seed)))
            out.emplace_back(f.value, f.sigma);
        }
        return out;
      },
      py::arg("eigenvalues"), py::arg("amplitudes"), py::arg("lambda_") = 1.0, py::arg("t_end") = 8.0,
      py::arg("runs") = 1000, py::arg("seed") = 1, py::arg("raw") = false,
      "outcome frequency and standard error per distinct eigenvalue of one diagonal collapse operator");
  m.def(
      "nucleon_heating_ev_per_s",
      [](double lambda, double a) {
        collapse::CslParams p;
        p.lambda = lambda;
        p.a = a;
        return collapse::energy_gain_rate({collapse::Constants::proton_mass}, p) / collapse::Constants::electron_volt;
      },
      py::arg("lambda_") = collapse::Constants::reference_lambda, py::arg("a") = collapse::Constants::reference_a);
  m.def(
      "clump_predictions",
      [](double radius, double density, double time) {
        const double n = collapse::sphere_nucleons(radius, density);
        const auto w = collapse::random_walk_predictions(n, collapse::CslParams{}, time, radius);
        py::dict d;
        d["nucleons"] = n;
        d["size_m"] = w.size;
        d["settle_time_s"] = w.settle_time;
        d["rms_scaling_m"] = w.rms_scaling;
        d["rms_per_axis_m"] = w.rms_per_axis;
        d["within_validity"] = w.within_validity;
        return d;
      },
      py::arg("radius"), py::arg("density"), py::arg("time"), "SI inputs: m, kg/m^3, s");
  m.def(
      "interference_verdict",
      [](double nucleons, double delta_t, double lambda) {
        return collapse::to_string(collapse::interference_criterion(nucleons, delta_t, lambda).verdict);
      },
      py::arg("nucleons"), py::arg("delta_t"), py::arg("lambda_") = collapse::Constants::reference_lambda);
}
