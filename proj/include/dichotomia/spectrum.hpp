#pragma once

#include <string>
#include <vector>

#include "dichotomia/dichotomy.hpp"

namespace dichotomia {
namespace spectrum {

using cocycle::Propagator;
using dichotomy::CertificateOptions;

/// One spectral interval of scales: for every a in [lo, hi] the scaled system
/// A/a has no exponential splitting. Reported as an outer enclosure at the
/// requested tolerance. dim is the number of growth directions the interval
/// accounts for; below_unit records hi < 1.
struct SpectralInterval {
    double lo = 0.0, hi = 0.0;
    int dim = 0;
    bool below_unit = false;
};

struct ProbeRecord {
    double a = 0.0;
    bool accepted = false;
    int dim = -1;            // stable dimension of the splitting when accepted
    std::string note;        // rejection reason when rejected
};

struct SpectrumResult {
    int dimension = 0;
    std::vector<SpectralInterval> intervals;   // disjoint, increasing
    int k = 0;               // intervals entirely below 1
    int r = 0;               // total interval count
    bool hyperbolic = false; // no interval contains 1
    double searched_lo = 0.0, searched_hi = 0.0;
    double tol = 0.0;        // relative endpoint tolerance actually used
    std::vector<ProbeRecord> probes;           // every probe, sorted by a
};

struct SpectrumOptions {
    double a_min = 0.0;      // 0 = derive bounds from growth-rate sweep
    double a_max = 0.0;
    double tol = 1e-3;       // relative endpoint tolerance
    int initial_grid = 33;   // log-spaced seed probes including the ends
    int threads = 0;         // 0 = DICHOTOMIA_THREADS env or 1
    CertificateOptions probe;
};

/// Count directions whose uniform upper growth rate lies strictly below
/// ln(a), from QR-accumulated diagonal growth over [-window, window] with
/// rates averaged over all index pairs at least 20 apart. Throws
/// boundary_error when ln(a) falls inside (or within resolution of) a
/// direction's rate bracket; use the splitting probe near boundaries instead.
int dim_growth_subspace(const Propagator& prop, double a, long window,
                        double resolution = 1e-6);

/// Locate the spectral intervals of scales by probing the splitting test on
/// a log grid and bisecting every dimension jump to relative tolerance
/// opts.tol. Throws coverage_error (with suggested bounds) when the search
/// range does not bracket the spectrum, and assumption_error if accepted
/// dimensions fail to increase monotonically in a.
SpectrumResult dichotomy_spectrum(const Propagator& prop,
                                  const SpectrumOptions& opts = {});

/// Spectral-gap inequalities on the interval endpoints a_i = intervals[i].lo,
/// b_i = intervals[i].hi (1-based below, k = #intervals below 1, r = total):
///   main_gap:            a_{k+1}/b_k > max{ b_r, 1/a_1 }
///   stable_width[i]:     b_i/a_i < 1/b_k            (i = 1..k)
///   unstable_width[j]:   b_j/a_j < a_{k+1}          (j = k+1..r)
///   product_gap:         b_k * b_r < a_{k+1}
///   unstable_extension:  a_1 * a_{k+1} > b_k
/// all_pass = main_gap and all width inequalities. Margins are logarithmic
/// (positive = satisfied strictly). With k = 0 or k = r the two-sided
/// inequalities are vacuous: they are reported true with degenerate set and
/// a warning naming them.
struct GapReport {
    int k = 0, r = 0;
    bool degenerate = false;
    std::string warning;
    std::vector<std::string> vacuous;

    bool main_gap = false;
    double main_gap_margin = 0.0;
    std::vector<bool> stable_width;
    std::vector<double> stable_width_margin;
    std::vector<bool> unstable_width;
    std::vector<double> unstable_width_margin;
    bool product_gap = false;
    double product_gap_margin = 0.0;
    bool unstable_extension = false;
    double unstable_extension_margin = 0.0;
    bool all_pass = false;
};

GapReport check_gap_condition(const SpectrumResult& spec);

/// Foliation/conjugacy rates between the stable and unstable parts:
/// b_k < gamma1 < 1 < gamma2 < a_{k+1} with gamma1 * b_r < gamma2.
/// Throws assumption_error naming the violated inequality when the gaps do
/// not admit such rates (equivalent to the product_gap inequality).
struct FoliationRates {
    double gamma1 = 0.0, gamma2 = 0.0;
    double b_k = 0.0, a_k1 = 0.0, b_r = 0.0, a_1 = 0.0;
};
FoliationRates choose_foliation_rates(const SpectrumResult& spec);

} // namespace spectrum
} // namespace dichotomia
