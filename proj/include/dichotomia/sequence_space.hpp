#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dichotomia/dichotomy.hpp"

namespace dichotomia {
namespace sequence_space {

using cocycle::NonautonomousSystem;
using cocycle::Propagator;

enum class Boundary { zero, periodic };

std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// Finite window x_n, |n| <= N, of a bi-infinite sequence of states. The sup
/// norm uses the attached adapted-norm family when present, otherwise the
/// Euclidean norm of each entry.
struct WindowVector {
    long N = 0;
    int d = 0;
    std::vector<Vec> entries;   // index n+N
    std::shared_ptr<const dichotomy::AdaptedNormFamily> norms;

    static WindowVector zero(long N, int d);

    [[nodiscard]] const Vec& at(long n) const { return entries[checked(n)]; }
    [[nodiscard]] Vec& at(long n) { return entries[checked(n)]; }
    [[nodiscard]] double norm_infty() const;

private:
    [[nodiscard]] size_t checked(long n) const;
};

/// Square finite section of a*Id - (shift by the coefficients): row block n
/// carries a*Id on the diagonal and -A_{n-1} in block (n, n-1), with the
/// missing neighbor of the first row set by the boundary rule (dropped for
/// zero, wrapped to column +N with coefficient A_N for periodic). Layout is
/// n-major, coordinate-minor: unknown (n, i) sits at index (n+N)*d + i.
struct TruncatedOperator {
    long N = 0;
    int d = 0;
    double a = 1.0;
    Boundary boundary = Boundary::zero;
    Eigen::SparseMatrix<double> matrix;
    std::shared_ptr<const Propagator> prop;

    [[nodiscard]] Mat dense() const { return Mat(matrix); }
};

TruncatedOperator build_truncated(std::shared_ptr<const Propagator> prop, long N,
                                  double a, Boundary boundary = Boundary::zero);

/// Smallest singular value of the finite section, the resolvent probe: it
/// plateaus at a positive level as N grows exactly when the scale a admits a
/// splitting, and collapses toward 0 when a is a spectral scale. For the
/// zero boundary rule the margin is computed on the column section (the
/// square rows plus the spill row -A_N x_N), which bounds the whole-line
/// margin from above without the square section's artificial near-kernel in
/// expanding directions; the periodic rule keeps the square matrix.
double invertibility_margin(const TruncatedOperator& op);

/// Write "row col value" triplets (0-based) with a "# rows cols nnz" header.
void write_triplets(std::ostream& out, const TruncatedOperator& op);

/// Entrywise lifted map (F x)_n = A_{n-1} x_{n-1} + f_{n-1}(x_{n-1}) on the
/// window, missing neighbor by the boundary rule.
WindowVector apply_F(const NonautonomousSystem& sys, const WindowVector& x,
                     Boundary boundary = Boundary::zero);

/// Derivative action (DF(x) xi)_n = A_{n-1} xi_{n-1} + Df_{n-1}(x_{n-1}) xi_{n-1}.
WindowVector apply_DF(const NonautonomousSystem& sys, const WindowVector& x,
                      const WindowVector& xi, Boundary boundary = Boundary::zero);

/// Sampled sup of ||(DF(x) - DF(0)) xi|| / ||xi|| in the window sup norm,
/// compared against the nonlinearity's derivative bound.
struct OperatorGapReport {
    double measured = 0.0;
    double eta = 0.0;
    double bound = 0.0;   // norm-equivalence constant times eta
    int samples = 0;
    bool pass = false;
};

OperatorGapReport check_operator_gap(const NonautonomousSystem& sys, long N,
                                     int samples, std::uint64_t seed,
                                     double equivalence_C = 1.0);

} // namespace sequence_space
} // namespace dichotomia
