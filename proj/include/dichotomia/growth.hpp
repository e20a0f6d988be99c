#pragma once

// Rescaled accumulation of long coefficient products. Everything here works
// in log magnitudes so that ranges far beyond the direct-product cap stay
// representable; all loops are deterministic.

#include <vector>

#include "dichotomia/cocycle.hpp"

namespace dichotomia {
namespace growth {

using cocycle::Propagator;

/// log ||Phi_a(t) X0||_F for t = 1..steps, where Phi_a(t) is the t-step
/// product of A/a forward from `anchor` (direction +1) or of a A^{-1}
/// backward from `anchor` (direction -1).
std::vector<double> log_norm_curve(const Propagator& prop, long anchor, double a,
                                   const Mat& X0, int steps, int direction);

struct SingularCurves {
    // row i = log sigma_i(t), t = 1..trust, sigma sorted descending.
    std::vector<std::vector<double>> log_sigma;
    // right singular vectors of the product at t = trust, same order.
    Mat V;
    // last step whose singular values are trustworthy: once the product's
    // condition number exceeds the floating-point budget, the small singular
    // values saturate at the rounding floor of the large ones and stop
    // tracking the true contraction, so accumulation is cut off there.
    int trust = 0;
};

/// Singular value history of the scaled product itself (X0 = Id), cut off
/// at the conditioning trust horizon (see SingularCurves::trust).
SingularCurves singular_curves(const Propagator& prop, long anchor, double a,
                               int steps, int direction);

/// Cumulative log growth sums ell_i(n) from a QR sweep of A/a over
/// [lo, hi]: ell row for each n in [lo, hi] (first row zero), d columns.
/// Column signs are fixed so the sweep is deterministic.
std::vector<std::vector<double>> qr_growth_sums(const Propagator& prop, long lo, long hi,
                                                double a);

/// Least-squares slope of ys against xs.
double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys);

} // namespace growth
} // namespace dichotomia
