#pragma once

// Property/invariant suites run against a configured system: cocycle
// algebra, nonlinearity bounds, splitting invariance and envelopes, adapted
// norms, finite-section margins vs. splitting probes, operator assembly
// consistency, determinism of reports, and a fault-injection probe that
// must detect a deliberately corrupted propagator cache entry.

#include <cstdint>
#include <string>
#include <vector>

#include "dichotomia/cocycle.hpp"
#include "dichotomia/reports.hpp"
#include "dichotomia/spectrum.hpp"

namespace dichotomia {
namespace verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  bool skipped = false;
  double value = 0.0;  // measured quantity (check-specific)
  double bound = 0.0;  // threshold it was compared against
  std::string note;
};

struct SuiteOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  long window = 0;        // certificate anchor window (0 = default)
  double probe_scale = 0; // scale for splitting checks (0 = auto from spectrum)
  double tol = 0;         // spectrum tolerance override (0 = default)
  int threads = 0;
};

struct SuiteReport {
  std::string config_name;
  double probe_scale = 0.0;
  bool spectrum_ok = false;
  std::string spectrum_error;
  spectrum::SpectrumResult spec;
  spectrum::GapReport gap;
  std::vector<CheckResult> checks;
  bool all_pass = false;
};

SuiteReport run_invariant_suite(const cocycle::NonautonomousSystem& sys,
                                const std::string& name,
                                const SuiteOptions& opts = {});

reports::ordered_json to_json(const SuiteReport& report);

}  // namespace verify
}  // namespace dichotomia
