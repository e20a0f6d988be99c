#include "dichotomia/growth.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

namespace dichotomia {
namespace growth {

namespace {

// One scaled multiplication step, keeping X at unit Frobenius norm and
// pushing the magnitude into log_off.
void scaled_step(const Propagator& prop, long& index, int direction, double a,
                 Mat& X, double& log_off) {
    if (direction > 0) {
        X = prop.coefficient(index) * X;
        ++index;
        log_off -= std::log(a);
    } else {
        --index;
        X = prop.inverse_coefficient(index) * X;
        log_off += std::log(a);
    }
    const double nrm = X.norm();
    if (!(nrm > 0.0) || !X.allFinite())
        throw divergence_error("degenerate product while accumulating growth at index "
                               + std::to_string(index), index);
    X /= nrm;
    log_off += std::log(nrm);
}

} // namespace

std::vector<double> log_norm_curve(const Propagator& prop, long anchor, double a,
                                   const Mat& X0, int steps, int direction) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(steps));
    const double n0 = X0.norm();
    if (!(n0 > 0.0)) {
        // zero seed (e.g. a trivial projection): the whole curve is -inf;
        // callers treat an empty curve as "no data".
        return out;
    }
    Mat X = X0 / n0;
    double log_off = std::log(n0);
    long index = anchor;
    for (int t = 1; t <= steps; ++t) {
        scaled_step(prop, index, direction, a, X, log_off);
        out.push_back(log_off);
    }
    return out;
}

SingularCurves singular_curves(const Propagator& prop, long anchor, double a,
                               int steps, int direction) {
    const int d = prop.dimension();
    // Relative accuracy of sigma_min(X) degrades like eps * cond(X); beyond
    // cond ~ 1e10 the small values are no longer reliable enough for slope
    // classification, so the history stops there.
    constexpr double kTrustLogCond = 23.0; // log(1e10)
    SingularCurves sc;
    sc.log_sigma.assign(static_cast<size_t>(d), {});
    Mat X = Mat::Identity(d, d);
    double log_off = 0.0;
    long index = anchor;
    for (int t = 1; t <= steps; ++t) {
        scaled_step(prop, index, direction, a, X, log_off);
        Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeFullV);
        const Vec& s = svd.singularValues();
        const double lead = s[0] > 0.0 ? std::log(s[0]) : -745.0;
        const double tail = s[d - 1] > 0.0 ? std::log(s[d - 1]) : -745.0;
        if (t > 1 && lead - tail > kTrustLogCond) break;
        for (int i = 0; i < d; ++i) {
            const double si = s[i];
            sc.log_sigma[static_cast<size_t>(i)].push_back(
                si > 0.0 ? log_off + std::log(si) : -745.0 + log_off);
        }
        sc.V = svd.matrixV();
        sc.trust = t;
    }
    return sc;
}

std::vector<std::vector<double>> qr_growth_sums(const Propagator& prop, long lo, long hi,
                                                double a) {
    const int d = prop.dimension();
    std::vector<std::vector<double>> ell;
    ell.reserve(static_cast<size_t>(hi - lo + 2));
    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    ell.push_back(acc);
    Mat Q = Mat::Identity(d, d);
    for (long n = lo; n < hi; ++n) {
        Mat Z = (prop.coefficient(n) / a) * Q;
        Eigen::HouseholderQR<Mat> qr(Z);
        Q = qr.householderQ() * Mat::Identity(d, d);
        Mat R = Q.transpose() * Z;
        for (int i = 0; i < d; ++i) {
            double rii = R(i, i);
            if (rii < 0.0) { Q.col(i) *= -1.0; rii = -rii; }
            if (!(rii > 0.0))
                throw invertibility_error("rank collapse in growth sweep at index "
                                          + std::to_string(n), n);
            acc[static_cast<size_t>(i)] += std::log(rii);
        }
        ell.push_back(acc);
    }
    return ell;
}

double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    return sxy / sxx;
}

} // namespace growth
} // namespace dichotomia
