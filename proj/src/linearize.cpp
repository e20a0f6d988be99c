#include "dichotomia/linearize.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

namespace dichotomia {
namespace linearize {

namespace {

constexpr double kCap = 1e100;

const cocycle::Nonlinearity& checked_nonlinearity(const NonautonomousSystem& sys,
                                                  bool require_bounded) {
    if (require_bounded && !sys.nonlinearity.M.has_value())
        throw assumption_error("series construction assumes a sup-bounded nonlinearity; "
                               "the configured nonlinearity has no finite sup bound M");
    return sys.nonlinearity;
}

void require_window(const DichotomyCertificate& cert, long lo, long hi,
                    const char* what) {
    if (!cert.accepted)
        throw parameter_error(std::string(what) + " needs an accepted splitting certificate");
    if (cert.projections.stride != 1)
        throw parameter_error(std::string(what) + " needs unit anchor stride in the certificate");
    if (cert.projections.lo > lo || cert.projections.hi < hi)
        throw parameter_error(std::string(what) + " needs projections on [" + std::to_string(lo)
                              + ", " + std::to_string(hi) + "] but the certificate covers ["
                              + std::to_string(cert.projections.lo) + ", "
                              + std::to_string(cert.projections.hi)
                              + "]; rebuild it with a larger window");
}

template <class X>
double size_of(const X& x) {
    return x.norm();
}

// Signed split series  sign_p * S_m + sign_q * U_m  with
//   S_m = sum_{n=m-T}^{m-1} Phi(m,n+1) P_{n+1} g(n)      (forward recursion)
//   U_m = sum_{n=m}^{m+T}   Phi(m,n+1) Q_{n+1} g(n)      (backward recursion)
template <class X>
X green_series(const Propagator& prop, const dichotomy::ProjectionFamily& PF, long m,
               int T, double sign_p, double sign_q, const std::function<X(long)>& g,
               const X& zero) {
    const int d = prop.dimension();
    X S = zero;
    for (long k = m - T; k < m; ++k) {
        S = prop.coefficient(k) * S + PF.at(k + 1) * g(k);
        if (!S.allFinite() || size_of(S) > kCap)
            throw divergence_error("split series diverges in the forward sum", k);
    }
    X U = zero;
    for (long k = m + T; k >= m; --k) {
        const Mat Q = Mat::Identity(d, d) - PF.at(k + 1);
        U = prop.inverse_coefficient(k) * (Q * g(k) + U);
        if (!U.allFinite() || size_of(U) > kCap)
            throw divergence_error("split series diverges in the backward sum", k);
    }
    return sign_p * S + sign_q * U;
}

} // namespace

double series_tail_bound(const DichotomyCertificate& cert, double M, int T) {
    if (!cert.accepted || !(cert.lambda > 0.0)) return std::numeric_limits<double>::infinity();
    const double el = std::exp(-cert.lambda);
    return 2.0 * cert.D * M * std::exp(-cert.lambda * (T + 1)) / (1.0 - el);
}

Vec conjugacy_forward(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                      long m, const Vec& v, const ConjugacyOptions& opts) {
    const auto& nl = checked_nonlinearity(sys, opts.require_bounded_f);
    const int T = opts.T;
    require_window(cert, m - T, m + T + 1, "conjugacy");
    const auto orbit = cocycle::nonlinear_orbit(sys, m, v, m - T, m + T);
    std::function<Vec(long)> g = [&](long n) {
        return nl.f(n, orbit[static_cast<size_t>(n - (m - T))]);
    };
    const int d = sys.propagator->dimension();
    Vec u = green_series<Vec>(*sys.propagator, cert.projections, m, T, -1.0, 1.0, g,
                              Vec::Zero(d));
    return v + u;
}

Mat conjugacy_derivative(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                         long m, const Vec& v, const ConjugacyOptions& opts) {
    const auto& nl = checked_nonlinearity(sys, opts.require_bounded_f);
    const int T = opts.T;
    require_window(cert, m - T, m + T + 1, "conjugacy derivative");
    const int d = sys.propagator->dimension();
    const auto orbit = cocycle::nonlinear_orbit(sys, m, v, m - T, m + T);
    auto xi = [&](long n) -> const Vec& { return orbit[static_cast<size_t>(n - (m - T))]; };

    // tangent propagator Xi_n = D(xi_n)/D(v), Xi_m = Id
    std::vector<Mat> Xi(static_cast<size_t>(2 * T + 1));
    Xi[static_cast<size_t>(T)] = Mat::Identity(d, d);
    for (long n = m; n < m + T; ++n) {
        const Mat J = sys.propagator->coefficient(n) + nl.Df(n, xi(n));
        Xi[static_cast<size_t>(n + 1 - (m - T))] = J * Xi[static_cast<size_t>(n - (m - T))];
    }
    for (long n = m - 1; n >= m - T; --n) {
        const Mat J = sys.propagator->coefficient(n) + nl.Df(n, xi(n));
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible())
            throw invertibility_error("tangent step is singular along the orbit", n);
        Xi[static_cast<size_t>(n - (m - T))] = lu.solve(Xi[static_cast<size_t>(n + 1 - (m - T))]);
    }

    std::function<Mat(long)> g = [&](long n) {
        return Mat(nl.Df(n, xi(n)) * Xi[static_cast<size_t>(n - (m - T))]);
    };
    Mat series = green_series<Mat>(*sys.propagator, cert.projections, m, T, -1.0, 1.0, g,
                                   Mat::Zero(d, d));
    return Mat::Identity(d, d) + series;
}

Vec conjugacy_inverse(const NonautonomousSystem& sys, const DichotomyCertificate& cert,
                      long m, const Vec& w, const ConjugacyOptions& opts) {
    const auto& nl = checked_nonlinearity(sys, opts.require_bounded_f);
    const int T = opts.T;
    require_window(cert, m - T, m + T + 1, "conjugacy inverse");
    const int d = sys.propagator->dimension();
    const auto& prop = *sys.propagator;

    // linear orbit eta_n = Phi(n, m) w on [m-T, m+T]
    std::vector<Vec> eta(static_cast<size_t>(2 * T + 1));
    eta[static_cast<size_t>(T)] = w;
    for (long n = m; n < m + T; ++n) {
        const Vec next = prop.coefficient(n) * eta[static_cast<size_t>(n - (m - T))];
        if (!next.allFinite() || next.norm() > kCap)
            throw divergence_error("linear orbit leaves the representable range", n);
        eta[static_cast<size_t>(n + 1 - (m - T))] = next;
    }
    for (long n = m - 1; n >= m - T; --n) {
        const Vec prev = prop.inverse_coefficient(n) * eta[static_cast<size_t>(n + 1 - (m - T))];
        if (!prev.allFinite() || prev.norm() > kCap)
            throw divergence_error("linear orbit leaves the representable range", n);
        eta[static_cast<size_t>(n - (m - T))] = prev;
    }

    // Picard on the grid of corrections zeta_n: bounded solution of
    // zeta_{n+1} = A_n zeta_n + f_n(eta_n + zeta_n), all anchors per sweep
    std::vector<Vec> zeta(static_cast<size_t>(2 * T + 1), Vec::Zero(d));
    std::vector<Vec> g(static_cast<size_t>(2 * T + 1));
    double prev_update = std::numeric_limits<double>::infinity();
    int stall = 0;
    for (int it = 0; it < opts.max_iters; ++it) {
        for (long n = m - T; n <= m + T; ++n) {
            const size_t i = static_cast<size_t>(n - (m - T));
            g[i] = nl.f(n, eta[i] + zeta[i]);
        }
        // prefix S_n = sum_{j<n} Phi(n,j+1) P_{j+1} g_j over the grid
        std::vector<Vec> next(static_cast<size_t>(2 * T + 1));
        Vec S = Vec::Zero(d);
        for (long n = m - T; n <= m + T; ++n) {
            const size_t i = static_cast<size_t>(n - (m - T));
            next[i] = S;
            S = prop.coefficient(n) * S + cert.projection(n + 1) * g[i];
            if (!S.allFinite()) throw divergence_error("inverse series diverges", n);
        }
        // suffix U_n = sum_{j>=n} Phi(n,j+1) Q_{j+1} g_j
        Vec U = Vec::Zero(d);
        for (long n = m + T; n >= m - T; --n) {
            const size_t i = static_cast<size_t>(n - (m - T));
            const Mat Q = Mat::Identity(d, d) - cert.projection(n + 1);
            U = prop.inverse_coefficient(n) * (Q * g[i] + U);
            if (!U.allFinite()) throw divergence_error("inverse series diverges", n);
            next[i] -= U;
        }
        double update = 0.0;
        for (size_t i = 0; i < zeta.size(); ++i)
            update = std::max(update, (next[i] - zeta[i]).norm());
        zeta.swap(next);
        if (update <= opts.picard_tol)
            return w + zeta[static_cast<size_t>(T)];
        stall = (update >= prev_update) ? stall + 1 : 0;
        if (stall >= 5)
            throw contraction_error("inverse fixed point is not contracting "
                                    "(nonlinearity too strong for the spectral gap)");
        prev_update = update;
    }
    throw contraction_error("inverse fixed point missed tolerance "
                            + std::to_string(opts.picard_tol) + " within "
                            + std::to_string(opts.max_iters) + " sweeps");
}

ResidualReport verify_conjugacy(const NonautonomousSystem& sys,
                                const DichotomyCertificate& cert, long m_lo, long m_hi,
                                const std::vector<Vec>& grid, double tol,
                                const ConjugacyOptions& opts) {
    if (m_hi < m_lo) throw parameter_error("empty index range in the conjugation check");
    require_window(cert, m_lo - opts.T, m_hi + opts.T + 2, "conjugation check");
    ResidualReport rep;
    rep.tol = tol;
    rep.bounded_f_assumed = opts.require_bounded_f;
    rep.construction = "signed split-propagator series over the nonlinear orbit, truncated at T="
                       + std::to_string(opts.T);
    rep.tail_bound = series_tail_bound(cert, sys.nonlinearity.M.value_or(
                                                 std::numeric_limits<double>::quiet_NaN()),
                                       opts.T);
    rep.max_residual = 0.0;
    for (long m = m_lo; m <= m_hi; ++m) {
        double sup = 0.0;
        for (const Vec& x : grid) {
            const Vec lhs = conjugacy_forward(sys, cert, m + 1, sys.step(m, x), opts);
            const Vec rhs = sys.propagator->coefficient(m)
                            * conjugacy_forward(sys, cert, m, x, opts);
            const double r = (lhs - rhs).norm();
            if (r > rep.max_residual) {
                rep.max_residual = r;
                rep.argmax_m = m;
                rep.argmax_x = x;
            }
            sup = std::max(sup, r);
        }
        rep.m.push_back(m);
        rep.sup_residual.push_back(sup);
    }
    rep.pass = rep.max_residual <= tol;
    return rep;
}

std::vector<Vec> sample_grid(int d, int per_axis, double lo, double hi) {
    if (d < 1 || per_axis < 1) throw parameter_error("grid shape must be positive");
    std::vector<double> axis(static_cast<size_t>(per_axis));
    for (int i = 0; i < per_axis; ++i)
        axis[static_cast<size_t>(i)] =
            per_axis == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (per_axis - 1);
    std::vector<Vec> out;
    if (d <= 3) {
        long total = 1;
        for (int k = 0; k < d; ++k) total *= per_axis;
        out.reserve(static_cast<size_t>(total));
        for (long idx = 0; idx < total; ++idx) {
            Vec p(d);
            long rest = idx;
            for (int k = 0; k < d; ++k) {
                p[k] = axis[static_cast<size_t>(rest % per_axis)];
                rest /= per_axis;
            }
            out.push_back(p);
        }
        return out;
    }
    // high dimension: axis sweeps through the origin
    out.push_back(Vec::Zero(d));
    for (int k = 0; k < d; ++k)
        for (double t : axis) {
            if (t == 0.0) continue;
            Vec p = Vec::Zero(d);
            p[k] = t;
            out.push_back(p);
        }
    return out;
}

FoliationSolveResult solve_foliation_point(const NonautonomousSystem& sys,
                                           const DichotomyCertificate& cert,
                                           const spectrum::FoliationRates& rates,
                                           const Vec& x, const Vec& y_minus,
                                           const FoliationOptions& opts) {
    const auto& nl = sys.nonlinearity;
    const auto& prop = *sys.propagator;
    const int d = prop.dimension();
    const int T = opts.T;
    require_window(cert, 0, T + 1, "foliation solve");
    if (x.size() != d || y_minus.size() != d)
        throw parameter_error("foliation point shapes disagree with the system dimension");

    FoliationSolveResult res;
    res.x = x;
    res.y_minus = y_minus;
    res.gamma1 = rates.gamma1;
    res.gamma2 = rates.gamma2;

    const Mat& P0 = cert.projection(0);
    if ((P0 * y_minus - y_minus).norm() > 1e-9 * (1.0 + y_minus.norm()))
        throw parameter_error("leaf parameter must lie in the range of the time-0 "
                              "contracting projection");

    // orthonormal basis of Range(P0) for the leaf parameters
    const int ds = cert.dim_stable;
    Eigen::JacobiSVD<Mat> svd(P0, Eigen::ComputeThinU);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-9) ++rank;
    if (rank != ds)
        throw assumption_error("contracting projection rank disagrees with the certificate");
    res.Y0 = svd.matrixU().leftCols(ds);

    const auto orbit = cocycle::nonlinear_orbit(sys, 0, x, 0, T);
    auto xi = [&](long n) -> const Vec& { return orbit[static_cast<size_t>(n)]; };

    // tangent propagator along the orbit and its (x, c)-block extension
    std::vector<Mat> Dxi(static_cast<size_t>(T + 1));
    {
        Mat Xi = Mat::Identity(d, d);
        for (long n = 0; n <= T; ++n) {
            Mat blocks = Mat::Zero(d, d + ds);
            blocks.leftCols(d) = Xi;
            Dxi[static_cast<size_t>(n)] = blocks;
            if (n < T) Xi = (prop.coefficient(n) + nl.Df(n, xi(n))) * Xi;
        }
    }

    // leading terms Phi(n,0) P0 (y_- - P0 x) and their (x, c)-derivative
    std::vector<Vec> lead(static_cast<size_t>(T + 1));
    std::vector<Mat> Dlead(static_cast<size_t>(T + 1));
    {
        Vec g = P0 * (y_minus - P0 * x);
        Mat Dg(d, d + ds);
        Dg.leftCols(d) = -P0;
        Dg.rightCols(ds) = res.Y0;
        for (long n = 0; n <= T; ++n) {
            lead[static_cast<size_t>(n)] = g;
            Dlead[static_cast<size_t>(n)] = Dg;
            if (n < T) {
                g = prop.coefficient(n) * g;
                Dg = prop.coefficient(n) * Dg;
            }
        }
    }

    std::vector<Vec> v(static_cast<size_t>(T + 1), Vec::Zero(d));
    std::vector<Mat> w(static_cast<size_t>(T + 1), Mat::Zero(d, d + ds));
    std::vector<Vec> gv(static_cast<size_t>(T + 1));
    std::vector<Mat> gw(static_cast<size_t>(T + 1));

    auto sweep = [&](std::vector<Vec>& nv, std::vector<Mat>& nw) {
        for (long n = 0; n <= T; ++n) {
            const size_t i = static_cast<size_t>(n);
            gv[i] = nl.f(n, v[i] + xi(n)) - nl.f(n, xi(n));
            gw[i] = nl.Df(n, v[i] + xi(n)) * (w[i] + Dxi[i]) - nl.Df(n, xi(n)) * Dxi[i];
        }
        Vec S = Vec::Zero(d);
        Mat SW = Mat::Zero(d, d + ds);
        for (long n = 0; n <= T; ++n) {
            const size_t i = static_cast<size_t>(n);
            nv[i] = lead[i] + S;
            nw[i] = Dlead[i] + SW;
            const Mat& Pn1 = cert.projection(n + 1);
            S = prop.coefficient(n) * S + Pn1 * gv[i];
            SW = prop.coefficient(n) * SW + Pn1 * gw[i];
            if (!S.allFinite() || !SW.allFinite())
                throw divergence_error("leaf series diverges in the forward sum", n);
        }
        Vec U = Vec::Zero(d);
        Mat UW = Mat::Zero(d, d + ds);
        for (long n = T; n >= 0; --n) {
            const size_t i = static_cast<size_t>(n);
            const Mat Q = Mat::Identity(d, d) - cert.projection(n + 1);
            U = prop.inverse_coefficient(n) * (Q * gv[i] + U);
            UW = prop.inverse_coefficient(n) * (Q * gw[i] + UW);
            if (!U.allFinite() || !UW.allFinite())
                throw divergence_error("leaf series diverges in the backward sum", n);
            nv[i] -= U;
            nw[i] -= UW;
        }
    };

    auto weighted_v = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double s = 0.0, wgt = 1.0;
        for (long n = 0; n <= T; ++n) {
            s = std::max(s, (a[static_cast<size_t>(n)] - b[static_cast<size_t>(n)]).norm() / wgt);
            wgt *= rates.gamma1;
        }
        return s;
    };
    auto weighted_w = [&](const std::vector<Mat>& a, const std::vector<Mat>& b) {
        double s = 0.0, wgt = 1.0;
        for (long n = 0; n <= T; ++n) {
            s = std::max(s, (a[static_cast<size_t>(n)] - b[static_cast<size_t>(n)]).norm() / wgt);
            wgt *= rates.gamma2;
        }
        return s;
    };

    std::vector<Vec> nv(static_cast<size_t>(T + 1));
    std::vector<Mat> nw(static_cast<size_t>(T + 1));
    double prev_update = std::numeric_limits<double>::infinity();
    int stall = 0;
    bool converged = false;
    for (int it = 0; it < opts.max_iters; ++it) {
        sweep(nv, nw);
        const double dv = weighted_v(nv, v);
        const double dw = weighted_w(nw, w);
        const double update = std::max(dv, dw);
        v.swap(nv);
        w.swap(nw);
        res.iterations = it + 1;
        if (std::isfinite(prev_update) && prev_update > 0.0)
            res.contraction_ratio = std::max(res.contraction_ratio,
                                             update / prev_update);
        if (update <= opts.tol) {
            converged = true;
            break;
        }
        stall = (update >= prev_update) ? stall + 1 : 0;
        if (stall >= 5)
            throw contraction_error("leaf fixed point is not contracting "
                                    "(nonlinearity too strong for the spectral gap)");
        prev_update = update;
    }
    if (!converged)
        throw contraction_error("leaf fixed point missed tolerance within "
                                + std::to_string(opts.max_iters) + " sweeps");

    sweep(nv, nw);
    res.residual = weighted_v(nv, v);
    res.q = v;
    res.w = w;
    double wq = 0.0, ww = 0.0, g1 = 1.0, g2 = 1.0;
    for (long n = 0; n <= T; ++n) {
        wq = std::max(wq, v[static_cast<size_t>(n)].norm() / g1);
        ww = std::max(ww, w[static_cast<size_t>(n)].norm() / g2);
        g1 *= rates.gamma1;
        g2 *= rates.gamma2;
    }
    res.weighted_sup_q = wq;
    res.weighted_sup_w = ww;
    return res;
}

ExtensionResult extend_by_fundamental_domains(
    const std::function<Vec(const Vec&)>& psi, double radius, const Mat& A_plus,
    const std::function<Vec(const Vec&)>& F, const Vec& x, int max_pullbacks) {
    const int d = static_cast<int>(A_plus.rows());
    if (!(radius > 0.0)) throw parameter_error("chart radius must be positive");
    if (x.size() != d) throw parameter_error("point dimension disagrees with the linear part");
    Eigen::FullPivLU<Mat> lu(A_plus);
    if (!lu.isInvertible())
        throw invertibility_error("linear expansion is singular", 0);

    // strict nesting: the chart boundary must map strictly outside the chart
    {
        std::mt19937_64 rng(0x6e657374u);
        std::normal_distribution<double> gauss;
        std::vector<Vec> dirs;
        for (int k = 0; k < d; ++k) {
            Vec e = Vec::Zero(d);
            e[k] = 1.0;
            dirs.push_back(e);
            dirs.push_back(-e);
        }
        for (int s = 0; s < 8 * d; ++s) {
            Vec v(d);
            for (int k = 0; k < d; ++k) v[k] = gauss(rng);
            if (v.norm() > 1e-12) dirs.push_back(v.normalized());
        }
        for (const Vec& s : dirs)
            if (F(radius * s).norm() <= radius * (1.0 + 1e-12))
                throw assumption_error("chart boundary does not map strictly outside the "
                                       "chart; the extension rule needs a strictly "
                                       "expanding map");
    }

    auto inverse_step = [&](const Vec& y) {
        Vec z = lu.solve(y);
        for (int it = 0; it < 300; ++it) {
            const Vec fz = F(z) - A_plus * z;
            const Vec next = lu.solve(y - fz);
            const double delta = (next - z).norm();
            z = next;
            if (delta <= 1e-13 * (1.0 + z.norm())) return z;
        }
        throw contraction_error("inverse of the expansion failed to converge");
    };

    ExtensionResult out;
    Vec z = x;
    while (z.norm() > radius) {
        if (out.pullbacks >= max_pullbacks)
            throw divergence_error("point is not pulled into the chart within the "
                                   "pullback budget", out.pullbacks);
        z = inverse_step(z);
        ++out.pullbacks;
    }
    Vec val = psi(z);
    for (int j = 0; j < out.pullbacks; ++j) val = A_plus * val;
    out.value = val;
    return out;
}

} // namespace linearize
} // namespace dichotomia
