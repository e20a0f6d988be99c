#pragma once

// Run configuration: JSON description of a system (linear generator +
// optional nonlinear perturbation) together with solver/tuning knobs.
// Malformed input raises parameter_error so callers can map it to a
// usage-error exit code.

#include <cstdint>
#include <string>

#include "dichotomia/cocycle.hpp"

#include "json.hpp"

namespace dichotomia {

struct RunConfig {
  std::string name;            // free-form label echoed into reports
  cocycle::ExampleSpec spec;   // generator + nonlinearity
  long window = 0;             // certificate anchor window (0 = library default)
  int horizon = 0;             // growth-curve horizon (0 = library default)
  long T = 0;                  // series truncation length (0 = library default)
  double tol = 0.0;            // spectrum bisection tolerance (0 = default)
  double a_min = 0.0;          // optional scale search bounds (0 = auto)
  double a_max = 0.0;
  std::uint64_t seed = 1;      // RNG seed for sampling-based checks
  nlohmann::ordered_json raw;  // original document, echoed into reports
};

// Parse a configuration document. Throws parameter_error on any malformed,
// missing, or inconsistent field.
RunConfig parse_config(const nlohmann::ordered_json& doc);

// Read + parse a configuration file. Throws parameter_error if the file is
// unreadable or not valid JSON.
RunConfig load_config(const std::string& path);

// Instantiate the configured system.
cocycle::NonautonomousSystem make_system(const RunConfig& cfg);

}  // namespace dichotomia
