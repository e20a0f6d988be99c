#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dichotomia/cocycle.hpp"
#include "dichotomia/errors.hpp"
#include "dichotomia/sequence_space.hpp"
#include "doctest.h"

using namespace dichotomia;
using namespace dichotomia::cocycle;
using namespace dichotomia::sequence_space;

namespace {

Mat diag2(double a, double b) {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = a;
  M(1, 1) = b;
  return M;
}

std::shared_ptr<const Propagator> scalar_prop(double c) {
  Mat A(1, 1);
  A(0, 0) = c;
  return std::make_shared<Propagator>(LinearSystem::constant(A));
}

Vec flatten(const WindowVector& x) {
  Vec v(static_cast<long>(x.entries.size()) * x.d);
  for (size_t k = 0; k < x.entries.size(); ++k)
    v.segment(static_cast<long>(k) * x.d, x.d) = x.entries[k];
  return v;
}

// Smallest singular value of the zero-boundary column section of a*Id - c*shift
// in one dimension: the normal matrix is the (2N+1)-point discrete Laplacian
// (a^2+c^2) - 2ac cos(k pi / (2N+2)), minimized at k = 1.
double scalar_zero_margin(double c, double a, long N) {
  const double theta = M_PI / static_cast<double>(2 * N + 2);
  return std::sqrt(a * a + c * c - 2.0 * a * c * std::cos(theta));
}

}  // namespace

TEST_CASE("window vector access is bounds-checked") {
  WindowVector x = WindowVector::zero(3, 2);
  CHECK(x.entries.size() == 7);
  CHECK(x.norm_infty() == 0.0);
  x.at(-3)(0) = 4.0;
  x.at(3)(1) = -5.0;
  CHECK(x.norm_infty() == doctest::Approx(5.0));
  CHECK_THROWS_AS(static_cast<void>(x.at(4)), parameter_error);
  CHECK_THROWS_AS(static_cast<void>(x.at(-4)), parameter_error);
}

TEST_CASE("truncated section has the pinned banded layout") {
  const auto op = build_truncated(scalar_prop(0.5), 1, 1.0, Boundary::zero);
  Mat expect(3, 3);
  expect << 1.0, 0.0, 0.0,  //
      -0.5, 1.0, 0.0,       //
      0.0, -0.5, 1.0;
  CHECK((op.dense() - expect).norm() == 0.0);

  const auto per = build_truncated(scalar_prop(0.5), 1, 1.0, Boundary::periodic);
  Mat pexpect = expect;
  pexpect(0, 2) = -0.5;  // first row wraps to the far column
  CHECK((per.dense() - pexpect).norm() == 0.0);
}

TEST_CASE("truncated section validates its parameters") {
  CHECK_THROWS_AS(build_truncated(scalar_prop(0.5), 0, 1.0), parameter_error);
  CHECK_THROWS_AS(build_truncated(scalar_prop(0.5), 4, -1.0), parameter_error);
  CHECK_THROWS_AS(build_truncated(nullptr, 4, 1.0), parameter_error);
}

TEST_CASE("invertibility margin matches the scalar closed form") {
  // contraction by 0.5 probed at scale 1: margin from the tridiagonal normal
  // matrix, plateauing at 1 - 0.5
  for (long N : {5L, 12L}) {
    const auto op = build_truncated(scalar_prop(0.5), N, 1.0, Boundary::zero);
    CHECK(invertibility_margin(op) ==
          doctest::Approx(scalar_zero_margin(0.5, 1.0, N)).epsilon(1e-9));
  }
  // expansion by 3 probed at its own rate: spectral scale, margin collapses
  // like 6 sin(pi / (2(2N+2)))
  for (long N : {5L, 25L}) {
    const auto op = build_truncated(scalar_prop(3.0), N, 3.0, Boundary::zero);
    CHECK(invertibility_margin(op) ==
          doctest::Approx(6.0 * std::sin(M_PI / (2.0 * (2.0 * N + 2.0))))
              .epsilon(1e-9));
  }
}

TEST_CASE("periodic sections of a constant coefficient are circulant-exact") {
  const auto per = build_truncated(scalar_prop(0.5), 10, 1.0, Boundary::periodic);
  CHECK(invertibility_margin(per) == doctest::Approx(0.5).epsilon(1e-9));
  // the zero rule stays within a few percent of the circulant value here
  const auto zer = build_truncated(scalar_prop(0.5), 10, 1.0, Boundary::zero);
  CHECK(invertibility_margin(zer) == doctest::Approx(0.5).epsilon(0.1));
  CHECK(invertibility_margin(zer) >= 0.5);
}

TEST_CASE("margin plateaus off the spectrum and collapses on it") {
  auto margin_at = [](double c, double a, long N) {
    return invertibility_margin(build_truncated(scalar_prop(c), N, a));
  };
  // off-spectrum: doubling the window barely moves the margin
  const double p1 = margin_at(0.5, 1.0, 40), p2 = margin_at(0.5, 1.0, 80);
  CHECK(p2 <= p1 + 1e-12);
  CHECK(p2 >= 0.95 * p1);
  // on-spectrum: doubling the window halves the margin
  const double c1 = margin_at(0.5, 0.5, 40), c2 = margin_at(0.5, 0.5, 80);
  CHECK(c2 / c1 <= 0.6);
  CHECK(c2 / c1 >= 0.4);
}

TEST_CASE("margin is monotone in the window for a saddle") {
  const auto prop = std::make_shared<Propagator>(
      LinearSystem::constant(diag2(0.5, 3.0)));
  double prev = std::numeric_limits<double>::infinity();
  for (long N : {5L, 10L, 20L, 40L}) {
    const double m = invertibility_margin(build_truncated(prop, N, 1.0));
    CHECK(m <= prev + 1e-12);
    CHECK(m > 0.3);  // hyperbolic at scale 1, margin stays away from zero
    prev = m;
  }
}

TEST_CASE("triplet dump reproduces the matrix") {
  const auto prop = std::make_shared<Propagator>(
      LinearSystem::constant(diag2(0.5, 3.0)));
  const auto op = build_truncated(prop, 2, 1.5, Boundary::periodic);
  std::ostringstream os;
  write_triplets(os, op);
  std::istringstream is(os.str());

  std::string hash;
  long rows = 0, cols = 0, nnz = 0;
  REQUIRE((is >> hash >> rows >> cols >> nnz));
  CHECK(hash == "#");
  CHECK(rows == 10);
  CHECK(cols == 10);
  CHECK(nnz == op.matrix.nonZeros());

  Mat rebuilt = Mat::Zero(rows, cols);
  long r = 0, c = 0;
  double v = 0.0;
  long count = 0;
  while (is >> r >> c >> v) {
    rebuilt(r, c) += v;
    ++count;
  }
  CHECK(count == nnz);
  CHECK((rebuilt - op.dense()).norm() <= 1e-15);
}

TEST_CASE("lifted map shifts by the coefficients and honors the boundary") {
  Mat A(1, 1);
  A(0, 0) = 2.0;
  NonautonomousSystem sys{LinearSystem::constant(A), Nonlinearity::none(1)};
  WindowVector x = WindowVector::zero(2, 1);
  for (long n = -2; n <= 2; ++n) x.at(n)(0) = static_cast<double>(n);

  const WindowVector fz = apply_F(sys, x, Boundary::zero);
  for (long n = -1; n <= 2; ++n)
    CHECK(fz.at(n)(0) == doctest::Approx(2.0 * static_cast<double>(n - 1)));
  CHECK(fz.at(-2)(0) == 0.0);

  const WindowVector fp = apply_F(sys, x, Boundary::periodic);
  CHECK(fp.at(-2)(0) == doctest::Approx(2.0 * 2.0));
  for (long n = -1; n <= 2; ++n)
    CHECK(fp.at(n)(0) == doctest::Approx(2.0 * static_cast<double>(n - 1)));
}

TEST_CASE("section action agrees with the lifted derivative at the origin") {
  NonautonomousSystem sys{LinearSystem::constant(diag2(0.5, 3.0)),
                          Nonlinearity::tanh_squared(2, 0.05, 0.1)};
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Boundary b : {Boundary::zero, Boundary::periodic}) {
    const auto op = build_truncated(sys.propagator, 4, 1.7, b);
    WindowVector xi = WindowVector::zero(4, 2);
    for (auto& e : xi.entries)
      for (long i = 0; i < 2; ++i) e(i) = gauss(rng);

    const WindowVector base = WindowVector::zero(4, 2);
    const WindowVector dfxi = apply_DF(sys, base, xi, b);
    Vec lhs = op.dense() * flatten(xi);
    Vec rhs = 1.7 * flatten(xi) - flatten(dfxi);
    CHECK((lhs - rhs).norm() <= 1e-13 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("sampled nonlinear perturbation stays inside the stated gap") {
  NonautonomousSystem sys{LinearSystem::constant(diag2(0.5, 3.0)),
                          Nonlinearity::tanh_squared(2, 0.05, 0.1)};
  const OperatorGapReport rep = check_operator_gap(sys, 10, 64, 3);
  CHECK(rep.pass);
  CHECK(rep.eta == doctest::Approx(0.05));
  CHECK(rep.samples == 64);
  CHECK(rep.measured <= rep.bound * (1.0 + 1e-12));
  CHECK(rep.measured > 0.05 * rep.eta);  // the sampling is not vacuous
}

TEST_CASE("boundary names round-trip") {
  CHECK(to_string(Boundary::zero) == "zero");
  CHECK(to_string(Boundary::periodic) == "periodic");
  CHECK(boundary_from_string("zero") == Boundary::zero);
  CHECK(boundary_from_string("periodic") == Boundary::periodic);
  CHECK_THROWS_AS(boundary_from_string("wrapped"), parameter_error);
}
