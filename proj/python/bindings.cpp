// Python veneer over the core library: each function loads a configuration
// file, runs one of the main operations, and returns the same JSON report
// text the command-line tool writes (deterministic bytes for a fixed config).

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dichotomia/config.hpp"
#include "dichotomia/dichotomy.hpp"
#include "dichotomia/linearize.hpp"
#include "dichotomia/reports.hpp"
#include "dichotomia/spectrum.hpp"
#include "dichotomia/verify.hpp"

namespace py = pybind11;
namespace dm = dichotomia;

namespace {

dm::spectrum::SpectrumResult run_spectrum(const dm::RunConfig& cfg,
                                          const dm::cocycle::NonautonomousSystem& sys,
                                          int threads) {
  dm::spectrum::SpectrumOptions opts;
  opts.threads = threads;
  if (cfg.tol > 0) opts.tol = cfg.tol;
  opts.a_min = cfg.a_min;
  opts.a_max = cfg.a_max;
  if (cfg.window > 0) opts.probe.window = cfg.window;
  if (cfg.horizon > 0) {
    opts.probe.horizon = cfg.horizon;
    opts.probe.gaps = cfg.horizon;
  }
  return dm::spectrum::dichotomy_spectrum(*sys.propagator, opts);
}

std::string spectrum_json(const std::string& config_path, int threads) {
  const auto cfg = dm::load_config(config_path);
  const auto sys = dm::make_system(cfg);
  const auto result = run_spectrum(cfg, sys, threads);
  return dm::reports::dump(
      dm::reports::envelope("spectrum", dm::reports::to_json(result), cfg.raw));
}

std::string gap_check_json(const std::string& config_path, int threads) {
  const auto cfg = dm::load_config(config_path);
  const auto sys = dm::make_system(cfg);
  const auto result = run_spectrum(cfg, sys, threads);
  const auto gap = dm::spectrum::check_gap_condition(result);
  dm::reports::ordered_json body{{"spectrum", dm::reports::to_json(result)},
                                 {"gap", dm::reports::to_json(gap)}};
  try {
    body["rates"] = dm::reports::to_json(dm::spectrum::choose_foliation_rates(result));
  } catch (const dm::assumption_error& e) {
    body["rates_error"] = e.what();
  }
  return dm::reports::dump(dm::reports::envelope("gap-check", body, cfg.raw));
}

std::string verify_json(const std::string& config_path, int samples,
                        std::uint64_t seed, int threads) {
  const auto cfg = dm::load_config(config_path);
  const auto sys = dm::make_system(cfg);
  dm::verify::SuiteOptions opts;
  opts.samples = samples;
  opts.seed = seed ? seed : cfg.seed;
  opts.window = cfg.window;
  opts.threads = threads;
  const auto report = dm::verify::run_invariant_suite(
      sys, cfg.name.empty() ? config_path : cfg.name, opts);
  return dm::reports::dump(dm::reports::envelope(
      "verify", dm::verify::to_json(report), cfg.raw));
}

std::vector<double> conjugate_point(const std::string& config_path, long m,
                                    const std::vector<double>& x) {
  const auto cfg = dm::load_config(config_path);
  const auto sys = dm::make_system(cfg);
  if (static_cast<int>(x.size()) != sys.dimension())
    throw dm::parameter_error("point dimension does not match the system");

  dm::linearize::ConjugacyOptions copts;
  if (cfg.T > 0) copts.T = static_cast<int>(cfg.T);

  dm::dichotomy::CertificateOptions probe;
  probe.anchor_stride = 1;
  probe.window = std::max(cfg.window, std::labs(m) + 2 + copts.T + 4);
  const auto cert = dm::dichotomy::test_scaled_dichotomy(*sys.propagator, 1.0, probe);
  if (!cert.accepted)
    throw dm::assumption_error("no splitting at scale 1: " + cert.reject_reason);

  dm::Vec v(static_cast<long>(x.size()));
  for (size_t i = 0; i < x.size(); ++i) v(static_cast<long>(i)) = x[i];
  const dm::Vec h = dm::linearize::conjugacy_forward(sys, cert, m, v, copts);
  return std::vector<double>(h.data(), h.data() + h.size());
}

}  // namespace

PYBIND11_MODULE(_dichotomia, mod) {
  mod.doc() =
      "Dichotomy spectra, spectral-gap checks, invariant suites, and "
      "linearizing conjugacies for nonautonomous linear difference systems";
  mod.attr("schema_version") = dm::reports::kSchemaVersion;

  mod.def("spectrum_json", &spectrum_json, py::arg("config_path"),
          py::arg("threads") = 0,
          "Locate the spectral intervals; returns the JSON report text.");
  mod.def("gap_check_json", &gap_check_json, py::arg("config_path"),
          py::arg("threads") = 0,
          "Spectrum plus spectral-gap inequalities; returns the JSON report text.");
  mod.def("verify_json", &verify_json, py::arg("config_path"),
          py::arg("samples") = 300, py::arg("seed") = 0, py::arg("threads") = 0,
          "Run the invariant/property suite; returns the JSON report text.");
  mod.def("conjugate_point", &conjugate_point, py::arg("config_path"), py::arg("m"),
          py::arg("x"),
          "Evaluate the linearizing conjugacy h_m at a point; returns coordinates.");
}
