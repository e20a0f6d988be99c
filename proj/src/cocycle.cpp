#include "dichotomia/cocycle.hpp"

#include <cmath>
#include <cstdint>

namespace dichotomia {
namespace cocycle {

namespace {

constexpr double kOrbitCap = 1e100;
constexpr double kProductCap = 1e100;

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_hash(std::uint64_t seed, long m, int slot) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(m) * 2654435761ULL
                                                   + static_cast<std::uint64_t>(slot)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Deterministic orthogonal matrix from a chain of Givens rotations.
Mat seeded_orthogonal(int d, std::uint64_t seed, long m) {
    Mat Q = Mat::Identity(d, d);
    int slot = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            double theta = 2.0 * M_PI * unit_hash(seed, m, slot++);
            Eigen::JacobiRotation<double> g;
            g.makeGivens(std::cos(theta), std::sin(theta));
            Q.applyOnTheLeft(i, j, g);
        }
    }
    return Q;
}

long floor_mod(long a, long p) {
    long r = a % p;
    return r < 0 ? r + p : r;
}

} // namespace

LinearSystem::LinearSystem(int dimension, std::string kind, std::function<Mat(long)> generator)
    : dim_(dimension), kind_(std::move(kind)), generator_(std::move(generator)) {}

double LinearSystem::invertibility_margin(long lo, long hi) const {
    double margin = std::numeric_limits<double>::infinity();
    for (long m = lo; m <= hi; ++m)
        margin = std::min(margin, std::abs(generator_(m).determinant()));
    return margin;
}

LinearSystem LinearSystem::constant(const Mat& A) {
    if (A.rows() != A.cols() || A.rows() == 0)
        throw parameter_error("constant generator needs a square matrix");
    Mat copy = A;
    return LinearSystem(static_cast<int>(A.rows()), "constant",
                        [copy](long) { return copy; });
}

LinearSystem LinearSystem::periodic(const std::vector<Mat>& table) {
    if (table.empty())
        throw parameter_error("periodic generator needs a non-empty table");
    const long p = static_cast<long>(table.size());
    const int d = static_cast<int>(table.front().rows());
    for (const Mat& A : table)
        if (A.rows() != d || A.cols() != d)
            throw parameter_error("periodic table entries must share one square shape");
    std::vector<Mat> copy = table;
    return LinearSystem(d, "periodic",
                        [copy, p](long m) { return copy[static_cast<size_t>(floor_mod(m, p))]; });
}

LinearSystem LinearSystem::diagonal_exponential(int d, double lambda, double eps) {
    if (d <= 0) throw parameter_error("dimension must be positive");
    if (!(lambda > eps))
        throw parameter_error("diagonal_exponential requires lambda > eps for an invertible "
                              "hyperbolic family");
    return LinearSystem(d, "nonuniform_scalar", [d, lambda, eps](long m) {
        const double sm = (floor_mod(m, 2) == 0) ? 1.0 : -1.0;       // (-1)^m
        const double exponent = -lambda + eps * (-(double)(m + 1) * sm - (double)m * sm);
        return Mat(std::exp(exponent) * Mat::Identity(d, d));
    });
}

LinearSystem LinearSystem::tabulated(std::vector<Mat> table, long lo, Extension ext) {
    if (table.empty())
        throw parameter_error("tabulated generator needs a non-empty window");
    const int d = static_cast<int>(table.front().rows());
    const long n = static_cast<long>(table.size());
    LinearSystem sys(d, "tabulated", [table = std::move(table), lo, n, ext](long m) {
        long k = m - lo;
        if (k < 0 || k >= n)
            k = (ext == Extension::wrap) ? floor_mod(k, n) : std::clamp(k, 0L, n - 1);
        return table[static_cast<size_t>(k)];
    });
    sys.set_extension_policy(ext == Extension::wrap ? "tabulated window, wrap"
                                                    : "tabulated window, freeze endpoints");
    return sys;
}

LinearSystem LinearSystem::random_hyperbolic(int d, const std::vector<double>& rates,
                                             std::uint64_t seed) {
    if (static_cast<int>(rates.size()) != d)
        throw parameter_error("random_hyperbolic needs one rate per dimension");
    for (double r : rates)
        if (r == 0.0 || std::abs(std::abs(r) - 1.0) < 1e-12)
            throw parameter_error("random_hyperbolic rates must be nonzero and away from 1");
    Vec D = Eigen::Map<const Vec>(rates.data(), d);
    return LinearSystem(d, "random_hyperbolic", [d, D, seed](long m) {
        Mat Qn = seeded_orthogonal(d, seed, m);
        Mat Qm = seeded_orthogonal(d, seed, m + 1);
        return Mat(Qm * D.asDiagonal() * Qn.transpose());
    });
}

Propagator::Propagator(LinearSystem sys) : sys_(std::move(sys)) {}

const Mat& Propagator::coefficient(long m) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = coeff_.find(m);
    if (it == coeff_.end())
        it = coeff_.emplace(m, sys_.coefficient(m)).first;
    return it->second;
}

const Mat& Propagator::inverse_coefficient(long m) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = inv_.find(m);
        if (it != inv_.end()) return it->second;
    }
    const Mat A = coefficient(m);
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible())
        throw invertibility_error("coefficient matrix is singular at index " + std::to_string(m), m);
    Mat Ainv = lu.inverse();
    std::lock_guard<std::mutex> lock(mu_);
    return inv_.emplace(m, std::move(Ainv)).first->second;
}

Mat Propagator::compute(long m, long n) const {
    const int d = sys_.dimension();
    Mat X = Mat::Identity(d, d);
    if (m > n) {
        for (long k = n; k < m; ++k) {
            X = coefficient(k) * X;
            if (!X.allFinite() || X.norm() > kProductCap)
                throw divergence_error("transition product overflow at index " + std::to_string(k), k);
        }
    } else if (m < n) {
        for (long k = n - 1; k >= m; --k) {
            X = inverse_coefficient(k) * X;
            if (!X.allFinite() || X.norm() > kProductCap)
                throw divergence_error("transition product overflow at index " + std::to_string(k), k);
        }
    }
    return X;
}

Mat Propagator::operator()(long m, long n) const {
    if (std::labs(m - n) > kMaxDirectProduct)
        throw parameter_error("transition gap " + std::to_string(m - n) + " exceeds the direct "
                              "product cap; use the rescaled growth paths for long ranges");
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = products_.find({m, n});
        if (it != products_.end()) return it->second;
    }
    Mat X = compute(m, n);
    std::lock_guard<std::mutex> lock(mu_);
    return products_.emplace(std::make_pair(m, n), std::move(X)).first->second;
}

bool Propagator::corrupt_cached_product(long m, long n, double delta) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = products_.find({m, n});
    if (it == products_.end()) return false;
    it->second(0, 0) += delta;
    return true;
}

Nonlinearity Nonlinearity::none(int d) {
    Nonlinearity nl;
    nl.kind = "none";
    nl.M = 0.0;
    nl.f = [d](long, const Vec&) { return Vec(Vec::Zero(d)); };
    nl.Df = [d](long, const Vec&) { return Mat(Mat::Zero(d, d)); };
    return nl;
}

Nonlinearity Nonlinearity::tanh_squared(int d, double eta, double eps) {
    if (eta < 0.0 || eps < 0.0)
        throw parameter_error("tanh_squared needs eta >= 0 and eps >= 0");
    Nonlinearity nl;
    nl.kind = "tanh_sq";
    nl.eta = eta;
    nl.eps = eps;
    nl.B = 2.0 * eta;            // sup |d/ds (2 tanh s sech^2 s)| = 2 at s = 0
    nl.M = eta * std::sqrt(static_cast<double>(d));
    nl.f = [eta, eps](long m, const Vec& v) {
        const double scale = eta * std::exp(-eps * std::abs(static_cast<double>(m + 1)));
        Vec out(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double t = std::tanh(v[i]);
            out[i] = scale * t * t;
        }
        return out;
    };
    nl.Df = [eta, eps](long m, const Vec& v) {
        const double scale = eta * std::exp(-eps * std::abs(static_cast<double>(m + 1)));
        Mat out = Mat::Zero(v.size(), v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double t = std::tanh(v[i]);
            out(i, i) = scale * 2.0 * t * (1.0 - t * t);
        }
        return out;
    };
    return nl;
}

Vec NonautonomousSystem::step(long n, const Vec& x) const {
    Vec y = propagator->coefficient(n) * x;
    if (!nonlinearity.trivial()) y += nonlinearity.f(n, x);
    return y;
}

Vec NonautonomousSystem::step_back(long n, const Vec& y) const {
    const Mat& Ainv = propagator->inverse_coefficient(n);
    if (nonlinearity.trivial()) return Ainv * y;
    Vec x = Ainv * y;
    double prev = std::numeric_limits<double>::infinity();
    int stalls = 0;
    for (int it = 0; it < 200; ++it) {
        Vec next = Ainv * (y - nonlinearity.f(n, x));
        const double upd = (next - x).norm();
        x = next;
        if (upd <= 1e-12 * (1.0 + x.norm())) return x;
        if (upd >= prev) {
            if (++stalls >= 3)
                throw contraction_error("backward step failed to contract at index "
                                        + std::to_string(n));
        } else {
            stalls = 0;
        }
        prev = upd;
    }
    throw contraction_error("backward step did not reach tolerance at index " + std::to_string(n));
}

std::vector<Vec> nonlinear_orbit(const NonautonomousSystem& sys, long m0, const Vec& x0,
                                 long from, long to) {
    if (from > to) throw parameter_error("orbit range is empty");
    if (m0 < from || m0 > to) throw parameter_error("orbit anchor must lie inside [from, to]");
    std::vector<Vec> orbit(static_cast<size_t>(to - from + 1));
    orbit[static_cast<size_t>(m0 - from)] = x0;
    for (long n = m0; n < to; ++n) {
        Vec next = sys.step(n, orbit[static_cast<size_t>(n - from)]);
        if (!next.allFinite() || next.norm() > kOrbitCap)
            throw divergence_error("orbit overflow; last finite index " + std::to_string(n), n);
        orbit[static_cast<size_t>(n + 1 - from)] = std::move(next);
    }
    for (long n = m0; n > from; --n)
        orbit[static_cast<size_t>(n - 1 - from)] =
            sys.step_back(n - 1, orbit[static_cast<size_t>(n - from)]);
    return orbit;
}

NonautonomousSystem make_example(const ExampleSpec& spec) {
    LinearSystem lin;
    if (spec.kind == "constant_diag") {
        if (spec.diag.empty()) throw parameter_error("constant_diag needs diagonal entries");
        Vec d = Eigen::Map<const Vec>(spec.diag.data(), static_cast<Eigen::Index>(spec.diag.size()));
        lin = LinearSystem::constant(Mat(d.asDiagonal()));
    } else if (spec.kind == "periodic") {
        lin = LinearSystem::periodic(spec.period_table);
    } else if (spec.kind == "nonuniform_scalar") {
        lin = LinearSystem::diagonal_exponential(spec.dimension, spec.lambda, spec.eps);
    } else if (spec.kind == "random_hyperbolic") {
        lin = LinearSystem::random_hyperbolic(spec.dimension, spec.diag, spec.seed);
    } else {
        throw parameter_error("unknown example kind '" + spec.kind + "'");
    }

    const int d = lin.dimension();
    Nonlinearity nl = Nonlinearity::none(d);
    if (spec.nonlinearity == "tanh_sq")
        nl = Nonlinearity::tanh_squared(d, spec.eta, spec.nl_eps);
    else if (spec.nonlinearity != "none")
        throw parameter_error("unknown nonlinearity kind '" + spec.nonlinearity + "'");
    return NonautonomousSystem(std::move(lin), std::move(nl));
}

} // namespace cocycle
} // namespace dichotomia
