#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dichotomia/cocycle.hpp"

namespace dichotomia {
namespace dichotomy {

using cocycle::NonautonomousSystem;
using cocycle::Propagator;

struct CertificateOptions {
    long window = 48;        // anchors n in [-window, window]
    long anchor_stride = 0;  // 0 = auto (1 up to 64 anchors, then odd subsampling)
    int horizon = 96;        // classification steps each direction
    int gaps = 96;           // gap range for the growth envelopes
    double slope_floor = 1e-4;     // required decay margin per step
    double ambiguous_slope = 1e-6; // splitting resolution
    double angle_floor = 1e-6;     // min principal angle between bundles
    double slack = 0.01;           // multiplicative slack on the final check

    [[nodiscard]] long stride() const {
        if (anchor_stride > 0) return anchor_stride;
        if (window <= 32) return 1;
        long s = (2 * window) / 64;
        if (s < 1) s = 1;
        if (s > 1 && s % 2 == 0) ++s;   // odd stride mixes anchor parities
        return s;
    }
};

/// Invariant projection family P_n for the system scaled by a, held at
/// anchors lo, lo+stride, ..., hi.
struct ProjectionFamily {
    long lo = 0, hi = -1;
    long stride = 1;
    int stable_dim = 0;
    std::vector<Mat> P;

    [[nodiscard]] bool covers(long n) const {
        return n >= lo && n <= hi && (n - lo) % stride == 0;
    }
    [[nodiscard]] const Mat& at(long n) const {
        if (!covers(n))
            throw parameter_error("projection request outside certified anchors at index "
                                  + std::to_string(n));
        return P[static_cast<size_t>((n - lo) / stride)];
    }
    [[nodiscard]] std::vector<long> anchors() const {
        std::vector<long> out;
        for (long n = lo; n <= hi; n += stride) out.push_back(n);
        return out;
    }
};

/// Outcome of probing the scaled system A/a for an exponential splitting
/// that is uniform up to the allowance e^{eps |n|}:
///   ||Phi(m,n) P_n||   <= D e^{-lambda (m-n) + eps |n|}   (m >= n)   [1]
///   ||Phi(m,n) Q_n||   <= D e^{ mu    (m-n) + eps |n|}               [2]
///   ||Phi(n,m) Q_m||   <= D e^{-lambda (m-n) + eps |m|}              [3]
///   ||Phi(n,m) P_m||   <= D e^{ mu    (m-n) + eps |m|}               [4]
/// Norms in the growth data are Frobenius norms; the constant D absorbs the
/// sqrt(d) equivalence factor.
struct DichotomyCertificate {
    bool accepted = false;
    double a = 1.0;
    std::string reject_reason;
    long reject_anchor = 0;
    int reject_inequality = 0;   // 1..4, 0 when structural

    int dim_stable = 0;
    double D = 0.0, lambda = 0.0, mu = 0.0, eps = 0.0;
    // fitted envelope rates per inequality: decay slopes for [1],[3],
    // growth slopes for [2],[4] (signed, per step)
    double envelope_slope[4] = {0.0, 0.0, 0.0, 0.0};
    // worst log overshoot of each inequality under the fitted constants
    double residual[4] = {0.0, 0.0, 0.0, 0.0};

    ProjectionFamily projections;
    CertificateOptions options;

    [[nodiscard]] const Mat& projection(long n) const { return projections.at(n); }
};

/// Per-anchor stable/unstable splitting of the scaled system from singular
/// value growth slopes. Throws ambiguous_split_error when the splitting is
/// not resolvable (slope below resolution, inconsistent bundle dimensions,
/// rank drift across anchors, or near-tangent bundles).
ProjectionFamily estimate_projections(const Propagator& prop, double a,
                                      long window, int horizon,
                                      const CertificateOptions& opts = {});

/// Orthonormal bases of the decaying/growing bundles at every index of a
/// contiguous range. Decaying growth data cannot be read off raw long
/// products: rounding noise from the dominant directions outgrows the true
/// signal after about 16/log10(contrast) steps. Walks that reproject onto
/// these bases after every step stay accurate for arbitrarily many steps,
/// and the projection changes nothing in exact arithmetic because the true
/// bundles are invariant.
struct BundleTables {
    long lo = 0, hi = -1;
    int dim_stable = 0;
    std::vector<Mat> stable;    // d x s orthonormal basis at index lo + i
    std::vector<Mat> unstable;  // d x (d-s) orthonormal basis at index lo + i

    [[nodiscard]] const Mat& stable_basis(long k) const {
        if (k < lo || k > hi || stable.empty())
            throw parameter_error("stable bundle basis request outside the continued "
                                  "range at index " + std::to_string(k));
        return stable[static_cast<size_t>(k - lo)];
    }
    [[nodiscard]] const Mat& unstable_basis(long k) const {
        if (k < lo || k > hi || unstable.empty())
            throw parameter_error("growing bundle basis request outside the continued "
                                  "range at index " + std::to_string(k));
        return unstable[static_cast<size_t>(k - lo)];
    }
};

/// Continue the bundle bases over [lo, hi] by one-step graph transforms in
/// their attracting directions (decaying bundle backward from an estimate at
/// hi, growing bundle forward from an estimate at lo). Throws
/// ambiguous_split_error when the seed estimates do not reproduce the
/// expected stable rank.
BundleTables continue_bundles(const Propagator& prop, double a, long lo, long hi,
                              int dim_stable, const CertificateOptions& opts = {});

/// Fit the four splitting inequalities for the system scaled by a.
/// Never throws for spectral scales; returns a rejected certificate with the
/// failing inequality and anchor instead.
DichotomyCertificate test_scaled_dichotomy(const Propagator& prop, double a,
                                           const CertificateOptions& opts = {});

/// Family of norms    |x|_m = max-sup construction over a window of length K
/// that trades the e^{eps|n|} allowance for uniform constants:
///   |x|_m = sup_j e^{lambda j} |Phi(m+j,m) P_m x|
///         + sup_j e^{-mu j}    |Phi(m-j,m) P_m x|
///         + sup_j e^{lambda j} |Phi(m-j,m) Q_m x|
///         + sup_j e^{-mu j}    |Phi(m+j,m) Q_m x|,   j = 0..K.
class AdaptedNormFamily {
public:
    AdaptedNormFamily(std::shared_ptr<const Propagator> prop, DichotomyCertificate cert,
                      int K = 60);
    /// Override the rates used in the sups (the certificate rates by default).
    void set_rates(double lambda, double mu);

    [[nodiscard]] double operator()(long m, const Vec& x) const;
    [[nodiscard]] int K() const { return K_; }
    [[nodiscard]] double rate_lambda() const { return lambda_; }
    [[nodiscard]] double rate_mu() const { return mu_; }
    [[nodiscard]] const DichotomyCertificate& certificate() const { return cert_; }
    [[nodiscard]] const Propagator& propagator() const { return *prop_; }

    /// Orthogonal projection onto the continued decaying/growing bundle at
    /// index k; external walks along one bundle apply this after every step
    /// for the same reason the internal sups do (see BundleTables).
    [[nodiscard]] Vec project_stable(long k, const Vec& w) const;
    [[nodiscard]] Vec project_unstable(long k, const Vec& w) const;

private:
    std::shared_ptr<const Propagator> prop_;
    DichotomyCertificate cert_;
    int K_;
    double lambda_, mu_;
    BundleTables tables_;
};

AdaptedNormFamily adapted_norm(std::shared_ptr<const Propagator> prop,
                               const DichotomyCertificate& cert, int K = 60);

struct NormFamilyReport {
    bool lower_ok = false;       // |x| <= |x|_m on all samples
    double C = 0.0;              // measured constant in |x|_m <= C e^{eps|m|} |x|
    double eps = 0.0;            // measured envelope exponent
    double step_C = 0.0;         // measured constant in the one-step sandwich
    double uniform_D = 0.0;      // envelope constant of the scaled system in the new norms
    double worst_lower = 0.0;
    bool pass = false;
};

/// Sample-based check of the two defining norm properties and of the
/// uniformity of the scaled system measured in the family's norms.
NormFamilyReport verify_norm_family(const AdaptedNormFamily& fam, int samples,
                                    std::uint64_t seed);

} // namespace dichotomy
} // namespace dichotomia
