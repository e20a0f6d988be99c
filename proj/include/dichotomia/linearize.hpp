#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dichotomia/dichotomy.hpp"
#include "dichotomia/spectrum.hpp"

namespace dichotomia {
namespace linearize {

using cocycle::NonautonomousSystem;
using cocycle::Propagator;
using dichotomy::DichotomyCertificate;

/// Truncation horizon and fixed-point controls shared by the conjugacy
/// evaluators. The construction sums a signed P/Q-split propagator series
/// over the nonlinear orbit; it converges absolutely only for nonlinearities
/// with a finite sup bound, so that assumption is checked up front.
struct ConjugacyOptions {
    int T = 60;                 // series truncation horizon
    double picard_tol = 1e-10;  // fixed-point tolerance for the inverse
    int max_iters = 200;
    bool require_bounded_f = true;
};

/// Geometric tail bound of the truncated series: both half-sums decay at
/// rate lambda with constant D, against a nonlinearity sup bound M.
double series_tail_bound(const DichotomyCertificate& cert, double M, int T);

/// h_m(v) = v + (signed P/Q series of f along the orbit through (m, v));
/// satisfies h_{m+1}(A_m v + f_m(v)) = A_m h_m(v) up to the truncation tail,
/// with h_m(0) = 0 exactly.
Vec conjugacy_forward(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                      long m, const Vec& v, const ConjugacyOptions& opts = {});

/// Dh_m(v) = Id + (same series with Df_n(xi_n) times the tangent propagator
/// along the orbit); Dh_m(0) = Id exactly.
Mat conjugacy_derivative(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                         long m, const Vec& v, const ConjugacyOptions& opts = {});

/// Picard fixed point of the reversed-sign series along the linear orbit of
/// w; satisfies h_m(conjugacy_inverse(w)) = w within solver tolerance.
Vec conjugacy_inverse(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                      long m, const Vec& w, const ConjugacyOptions& opts = {});

struct ResidualReport {
    std::vector<long> m;                 // sampled indices
    std::vector<double> sup_residual;    // per-index sup over the grid
    double max_residual = 0.0;
    long argmax_m = 0;
    Vec argmax_x;
    double tol = 0.0;
    bool pass = false;
    double tail_bound = 0.0;             // truncation tail appended for context
    bool bounded_f_assumed = true;       // construction hypothesis flag
    std::string construction;
};

/// Tabulate the conjugation defect ||h_{m+1}(F_m(x)) - A_m h_m(x)|| over the
/// grid for m in [m_lo, m_hi].
ResidualReport verify_conjugacy(const NonautonomousSystem& sys,
                                const DichotomyCertificate& cert, long m_lo, long m_hi,
                                const std::vector<Vec>& grid, double tol,
                                const ConjugacyOptions& opts = {});

/// Uniform grid of points in [lo, hi]^d, per_axis points per axis
/// (enumerated up to d = 3, axis-sampled beyond).
std::vector<Vec> sample_grid(int d, int per_axis, double lo, double hi);

struct FoliationOptions {
    int T = 60;
    double tol = 1e-10;       // weighted update tolerance
    int max_iters = 100;
};

/// One stable-leaf solve: q_n, 0 <= n <= T, solves
///   q_n = Phi(n,0) P_0 (y_- - P_0 x)
///         + sum_{m<n}  Phi(n,m+1) P_{m+1} [f_m(q_m + xi_m) - f_m(xi_m)]
///         - sum_{m>=n} Phi(n,m+1) Q_{m+1} [f_m(q_m + xi_m) - f_m(xi_m)]
/// along the nonlinear orbit xi of x, and w_n carries the derivative of q_n
/// with respect to (x, c) where y_- = Y0 c parameterizes the stable range.
/// Solved jointly by iterating (v, w) -> (Tv, S(v, w)) from (0, 0): the
/// first component is a contraction and the second converges to its
/// derivative, so the limit is differentiable with derivative w.
struct FoliationSolveResult {
    Vec x, y_minus;
    Mat Y0;
    std::vector<Vec> q;       // 0..T
    std::vector<Mat> w;       // 0..T, d x (d + stable_dim)
    double gamma1 = 0.0, gamma2 = 0.0;
    int iterations = 0;
    double residual = 0.0;          // gamma1^{-n}-weighted sup defect
    double weighted_sup_q = 0.0;    // gamma1^{-n}-weighted sup of q
    double weighted_sup_w = 0.0;    // gamma2^{-n}-weighted sup of w
    double contraction_ratio = 0.0; // measured update ratio
};

FoliationSolveResult solve_foliation_point(const NonautonomousSystem& sys,
                                           const DichotomyCertificate& cert,
                                           const spectrum::FoliationRates& rates,
                                           const Vec& x, const Vec& y_minus,
                                           const FoliationOptions& opts = {});

/// Globalize a conjugacy of an expansion from a chart ball of the given
/// radius: pull x into the chart with the contraction-solved inverse of F,
/// apply psi, and push back out with the linear part. Verifies that the
/// chart boundary maps strictly outside the chart before extending.
struct ExtensionResult {
    Vec value;
    int pullbacks = 0;
};

ExtensionResult extend_by_fundamental_domains(
    const std::function<Vec(const Vec&)>& psi, double radius, const Mat& A_plus,
    const std::function<Vec(const Vec&)>& F, const Vec& x, int max_pullbacks = 64);

} // namespace linearize
} // namespace dichotomia
