#pragma once

// JSON/CSV report builders. Every JSON report carries schema_version and
// echoes the tolerances it was produced under; serialization is
// deterministic (ordered keys, shortest round-trip doubles, 17-digit CSV).

#include <string>
#include <vector>

#include "dichotomia/dichotomy.hpp"
#include "dichotomia/linearize.hpp"
#include "dichotomia/sequence_space.hpp"
#include "dichotomia/spectrum.hpp"

#include "json.hpp"

namespace dichotomia {
namespace reports {

inline constexpr int kSchemaVersion = 1;

using nlohmann::ordered_json;

ordered_json to_json(const spectrum::SpectralInterval& iv);
ordered_json to_json(const spectrum::SpectrumResult& sr);
ordered_json to_json(const spectrum::GapReport& gr);
ordered_json to_json(const spectrum::FoliationRates& fr);
ordered_json to_json(const dichotomy::DichotomyCertificate& cert);
ordered_json to_json(const dichotomy::NormFamilyReport& nr);
ordered_json to_json(const sequence_space::OperatorGapReport& og);
ordered_json to_json(const linearize::ResidualReport& rr);
ordered_json to_json(const linearize::FoliationSolveResult& fs);

/// Top-level report envelope: schema_version, kind, optional config echo.
ordered_json envelope(const std::string& kind, ordered_json body,
                      const ordered_json& config_echo = {});

/// "a,dim,accepted" rows over all probes (header line included).
std::string spectrum_csv(const spectrum::SpectrumResult& sr);

/// "m,sup_residual" rows (header line included).
std::string residuals_csv(const linearize::ResidualReport& rr);

/// "m,x...,h..." rows: index, grid point coordinates, image coordinates.
std::string conjugacy_csv(const std::vector<long>& ms,
                          const std::vector<Vec>& grid,
                          const std::vector<std::vector<Vec>>& images);

/// "n,norm_q,weighted_q" rows of a stable-leaf solve.
std::string foliation_csv(const linearize::FoliationSolveResult& fs);

/// Serialize with 2-space indent and trailing newline (byte-stable).
std::string dump(const ordered_json& doc);

/// Write content to path, creating parent directories. Throws
/// parameter_error on failure.
void write_text(const std::string& path, const std::string& content);

}  // namespace reports
}  // namespace dichotomia
