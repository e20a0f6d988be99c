#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dichotomia/errors.hpp"

namespace dichotomia {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace cocycle {

/// Direct propagator products are capped at this gap; longer ranges must go
/// through the rescaled accumulation paths of the growth/certificate code.
inline constexpr long kMaxDirectProduct = 400;

/// How a tabulated coefficient window extends to the rest of the line.
enum class Extension { wrap, freeze };

/// Invertible coefficient sequence A_m, m in Z, produced by a deterministic
/// generator. Queries for the same index always return the same matrix,
/// independent of evaluation order.
class LinearSystem {
public:
    LinearSystem() = default;
    LinearSystem(int dimension, std::string kind, std::function<Mat(long)> generator);

    [[nodiscard]] int dimension() const { return dim_; }
    [[nodiscard]] const std::string& kind() const { return kind_; }

    /// Coefficient matrix at index m.
    [[nodiscard]] Mat coefficient(long m) const { return generator_(m); }

    /// Smallest |det A_m| seen over [lo, hi].
    [[nodiscard]] double invertibility_margin(long lo, long hi) const;

    // ---- generators ----
    static LinearSystem constant(const Mat& A);
    static LinearSystem periodic(const std::vector<Mat>& table);
    /// Scalar-diagonal family A_m = exp(-lambda + eps*((m+1)(-1)^{m+1} - m(-1)^m)) I_d.
    /// The one-step factors oscillate unboundedly in m while every long
    /// window averages to rate -lambda; requires lambda > eps.
    static LinearSystem diagonal_exponential(int d, double lambda, double eps);
    /// Explicit window [lo, lo + table.size()) with an extension rule outside.
    static LinearSystem tabulated(std::vector<Mat> table, long lo, Extension ext);
    /// A_m = Q_{m+1} D Q_m^T with D = diag(rates) and Q_m a seeded orthogonal
    /// path, so the propagator is Q_m D^{m-n} Q_n^T.
    static LinearSystem random_hyperbolic(int d, const std::vector<double>& rates,
                                          std::uint64_t seed);

    [[nodiscard]] const std::string& extension_policy() const { return extension_; }
    void set_extension_policy(std::string p) { extension_ = std::move(p); }

private:
    int dim_ = 0;
    std::string kind_;
    std::string extension_ = "whole-line generator";
    std::function<Mat(long)> generator_;
};

/// Two-sided propagator of x_{n+1} = A_n x_n with memoised coefficients,
/// inverses and (m, n) products:
///   m > n: A_{m-1} ... A_n,   m == n: Id,   m < n: A_m^{-1} ... A_{n-1}^{-1}.
class Propagator {
public:
    explicit Propagator(LinearSystem sys);

    [[nodiscard]] const LinearSystem& system() const { return sys_; }
    [[nodiscard]] int dimension() const { return sys_.dimension(); }

    /// A_m, cached.
    const Mat& coefficient(long m) const;
    /// A_m^{-1}, cached; throws invertibility_error naming m if singular.
    const Mat& inverse_coefficient(long m) const;

    /// Transition matrix over [n, m]; throws parameter_error when
    /// |m - n| > kMaxDirectProduct and divergence_error on overflow.
    Mat operator()(long m, long n) const;

    /// Test hook: perturb a cached product so downstream consistency checks
    /// can demonstrate fault detection. Returns false if (m, n) was not cached.
    bool corrupt_cached_product(long m, long n, double delta) const;

private:
    Mat compute(long m, long n) const;

    LinearSystem sys_;
    mutable std::mutex mu_;
    mutable std::map<long, Mat> coeff_;
    mutable std::map<long, Mat> inv_;
    mutable std::map<std::pair<long, long>, Mat> products_;
};

/// Time-dependent perturbation f_m together with the constants it certifies:
/// ||Df_m(x) - Df_m(y)|| <= B e^{-eps|m+1|} ||x - y||,
/// ||Df_m(x)||           <= eta e^{-eps|m+1|},
/// and optionally sup_x ||f_m(x)|| e^{eps|m+1|} <= M.
struct Nonlinearity {
    std::string kind = "none";
    double B = 0.0;
    double eta = 0.0;
    double eps = 0.0;
    std::optional<double> M;
    std::function<Vec(long, const Vec&)> f;
    std::function<Mat(long, const Vec&)> Df;

    [[nodiscard]] bool trivial() const { return kind == "none"; }

    static Nonlinearity none(int d);
    /// f_m(v) = eta e^{-eps|m+1|} (tanh^2 v_1, ..., tanh^2 v_d).
    static Nonlinearity tanh_squared(int d, double eta, double eps);
};

/// x_{n+1} = A_n x_n + f_n(x_n).
struct NonautonomousSystem {
    NonautonomousSystem(LinearSystem lin, Nonlinearity nl)
        : propagator(std::make_shared<Propagator>(std::move(lin))), nonlinearity(std::move(nl)) {}

    std::shared_ptr<Propagator> propagator;
    Nonlinearity nonlinearity;

    [[nodiscard]] int dimension() const { return propagator->dimension(); }
    [[nodiscard]] const LinearSystem& linear() const { return propagator->system(); }

    [[nodiscard]] Vec step(long n, const Vec& x) const;
    /// Solves x from A_n x + f_n(x) = y by the contraction
    /// x <- A_n^{-1}(y - f_n(x)); tol 1e-12, at most 200 sweeps.
    [[nodiscard]] Vec step_back(long n, const Vec& y) const;
};

/// States of the orbit through (m0, x0) for n in [from, to], both inclusive.
/// Backward continuation uses step_back; forward overflow past ~1e100 raises
/// divergence_error carrying the last finite index.
std::vector<Vec> nonlinear_orbit(const NonautonomousSystem& sys, long m0, const Vec& x0,
                                 long from, long to);

struct ExampleSpec {
    std::string kind;           // constant_diag | periodic | nonuniform_scalar | random_hyperbolic
    int dimension = 2;
    std::vector<double> diag;                 // constant_diag, random_hyperbolic rates
    std::vector<Mat> period_table;            // periodic
    double lambda = 0.7, eps = 0.1;           // nonuniform_scalar
    std::uint64_t seed = 1;                   // random_hyperbolic
    std::string nonlinearity = "none";        // none | tanh_sq
    double eta = 0.0, nl_eps = 0.0;
};

NonautonomousSystem make_example(const ExampleSpec& spec);

} // namespace cocycle
} // namespace dichotomia
