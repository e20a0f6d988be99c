#include "dichotomia/sequence_space.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace dichotomia {
namespace sequence_space {

std::string to_string(Boundary b) {
    return b == Boundary::zero ? "zero" : "periodic";
}

Boundary boundary_from_string(const std::string& s) {
    if (s == "zero") return Boundary::zero;
    if (s == "periodic") return Boundary::periodic;
    throw parameter_error("unknown boundary rule '" + s + "' (expected zero|periodic)");
}

WindowVector WindowVector::zero(long N, int d) {
    WindowVector x;
    x.N = N;
    x.d = d;
    x.entries.assign(static_cast<size_t>(2 * N + 1), Vec::Zero(d));
    return x;
}

size_t WindowVector::checked(long n) const {
    if (n < -N || n > N)
        throw parameter_error("window index " + std::to_string(n) + " outside half-width "
                              + std::to_string(N));
    return static_cast<size_t>(n + N);
}

double WindowVector::norm_infty() const {
    double best = 0.0;
    for (long n = -N; n <= N; ++n) {
        const Vec& v = entries[static_cast<size_t>(n + N)];
        best = std::max(best, norms ? (*norms)(n, v) : v.norm());
    }
    return best;
}

TruncatedOperator build_truncated(std::shared_ptr<const Propagator> prop, long N,
                                  double a, Boundary boundary) {
    if (!prop) throw parameter_error("truncated section needs a propagator");
    if (N < 1) throw parameter_error("truncation half-width must be at least 1");
    if (!(a >= 0.0)) throw parameter_error("truncation scale must be nonnegative");
    TruncatedOperator op;
    op.N = N;
    op.d = prop->dimension();
    op.a = a;
    op.boundary = boundary;
    op.prop = prop;

    const int d = op.d;
    const long rows = (2 * N + 1) * d;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(rows * (d + 1)));
    auto put_block = [&](long bn, long bm, const Mat& B) {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (B(i, j) != 0.0)
                    trips.emplace_back(static_cast<int>((bn + N) * d + i),
                                       static_cast<int>((bm + N) * d + j), B(i, j));
    };
    if (a != 0.0)
        for (long n = -N; n <= N; ++n) put_block(n, n, a * Mat::Identity(d, d));
    for (long n = -N + 1; n <= N; ++n) put_block(n, n - 1, -prop->coefficient(n - 1));
    if (boundary == Boundary::periodic) put_block(-N, N, -prop->coefficient(N));

    op.matrix.resize(static_cast<int>(rows), static_cast<int>(rows));
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    op.matrix.makeCompressed();
    return op;
}

namespace {

// Eigenvalues of the symmetric G strictly below x, counted by the inertia of
// the LDLT factorization of G - x Id (Sturm slicing); -1 signals pivot
// breakdown at this shift.
int eigencount_below(const Eigen::SparseMatrix<double>& G, double x) {
    Eigen::SparseMatrix<double> S = G;
    for (Eigen::Index k = 0; k < S.rows(); ++k) S.coeffRef(k, k) -= x;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(S);
    if (ldlt.info() != Eigen::Success) return -1;
    const Vec& D = ldlt.vectorD();
    int below = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
        if (!std::isfinite(D[i])) return -1;
        if (D[i] < 0.0) ++below;
    }
    return below;
}

// Robust variant: eigenvalue clusters abound in these sections (the slicing
// shift sits next to a pivot zero there), so nudge the shift a few ulps on
// breakdown before giving up on it.
int eigencount_below_robust(const Eigen::SparseMatrix<double>& G, double x, double scale) {
    for (int attempt = 0; attempt < 5; ++attempt) {
        const int c = eigencount_below(G, x);
        if (c >= 0) return c;
        x += scale * 3e-13 * static_cast<double>(attempt + 1) + 1e-300;
    }
    return -1;
}

// sqrt of the smallest eigenvalue of M^T M by inertia bisection, exact to a
// few ulps regardless of eigenvalue clustering (power iterations stall when
// the lowest eigenvalues cluster, which is the plateau regime here).
double smallest_singular_value(const Eigen::SparseMatrix<double>& M) {
    Eigen::SparseMatrix<double> G = Eigen::SparseMatrix<double>(M.transpose()) * M;

    // lambda_min is at most the smallest diagonal entry (Schur-Horn)
    double hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < G.rows(); ++k) hi = std::min(hi, G.coeff(k, k));
    if (!(hi > 0.0)) return 0.0;
    hi *= 1.0 + 1e-12;
    const double scale = hi;
    double lo = 0.0;

    if (eigencount_below_robust(G, hi, scale) <= 0)    // clustered at the bound
        return std::sqrt(hi);
    for (int it = 0; it < 120 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const int below = eigencount_below_robust(G, mid, scale);
        if (below < 0) break;                          // persistent breakdown
        if (below >= 1) hi = mid;
        else lo = mid;
    }
    return std::sqrt(std::max(0.5 * (lo + hi), 0.0));
}

long wrap_index(long n, long N) {
    const long period = 2 * N + 1;
    long k = (n + N) % period;
    if (k < 0) k += period;
    return k - N;
}

} // namespace

double invertibility_margin(const TruncatedOperator& op) {
    if (op.boundary == Boundary::periodic) return smallest_singular_value(op.matrix);

    // column section: square rows plus the spill row carrying -A_N x_N
    const int d = op.d;
    const long N = op.N;
    const long cols = (2 * N + 1) * d;
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < op.matrix.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op.matrix, k); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                               it.value());
    const Mat spill = -op.prop->coefficient(N);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (spill(i, j) != 0.0)
                trips.emplace_back(static_cast<int>(cols + i),
                                   static_cast<int>((N + N) * d + j), spill(i, j));
    Eigen::SparseMatrix<double> M(static_cast<int>(cols + d), static_cast<int>(cols));
    M.setFromTriplets(trips.begin(), trips.end());
    M.makeCompressed();
    return smallest_singular_value(M);
}

void write_triplets(std::ostream& out, const TruncatedOperator& op) {
    out << "# " << op.matrix.rows() << " " << op.matrix.cols() << " "
        << op.matrix.nonZeros() << "\n";
    for (int k = 0; k < op.matrix.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op.matrix, k); it; ++it)
            out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

WindowVector apply_F(const NonautonomousSystem& sys, const WindowVector& x,
                     Boundary boundary) {
    WindowVector y = WindowVector::zero(x.N, x.d);
    y.norms = x.norms;
    for (long n = -x.N; n <= x.N; ++n) {
        long m = n - 1;
        if (m < -x.N) {
            if (boundary == Boundary::zero) continue;   // zero-extended neighbor
            m = wrap_index(m, x.N);
        }
        const Vec& xm = x.at(m);
        y.at(n) = sys.propagator->coefficient(m) * xm + sys.nonlinearity.f(m, xm);
    }
    return y;
}

WindowVector apply_DF(const NonautonomousSystem& sys, const WindowVector& x,
                      const WindowVector& xi, Boundary boundary) {
    if (x.N != xi.N || x.d != xi.d)
        throw parameter_error("window shapes disagree in the derivative action");
    WindowVector y = WindowVector::zero(x.N, x.d);
    y.norms = x.norms;
    for (long n = -x.N; n <= x.N; ++n) {
        long m = n - 1;
        if (m < -x.N) {
            if (boundary == Boundary::zero) continue;
            m = wrap_index(m, x.N);
        }
        y.at(n) = sys.propagator->coefficient(m) * xi.at(m)
                  + sys.nonlinearity.Df(m, x.at(m)) * xi.at(m);
    }
    return y;
}

OperatorGapReport check_operator_gap(const NonautonomousSystem& sys, long N,
                                     int samples, std::uint64_t seed,
                                     double equivalence_C) {
    OperatorGapReport rep;
    rep.eta = sys.nonlinearity.eta;
    rep.bound = equivalence_C * rep.eta;
    rep.samples = samples;
    const int d = sys.propagator->dimension();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> scale(0.0, 2.0);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        WindowVector x = WindowVector::zero(N, d);
        WindowVector xi = WindowVector::zero(N, d);
        const double amp = scale(rng);
        for (long n = -N; n <= N; ++n)
            for (int i = 0; i < d; ++i) {
                x.at(n)[i] = amp * gauss(rng);
                xi.at(n)[i] = gauss(rng);
            }
        const double nxi = xi.norm_infty();
        if (!(nxi > 0.0)) continue;
        WindowVector lhs = apply_DF(sys, x, xi);
        const WindowVector lin = apply_DF(sys, WindowVector::zero(N, d), xi);
        for (long n = -N; n <= N; ++n) lhs.at(n) -= lin.at(n);
        worst = std::max(worst, lhs.norm_infty() / nxi);
    }
    rep.measured = worst;
    rep.pass = rep.measured <= rep.bound * (1.0 + 1e-9) + 1e-12;
    return rep;
}

} // namespace sequence_space
} // namespace dichotomia
