#include <cmath>
#include <random>

#include "dichotomia/cocycle.hpp"
#include "doctest.h"

using namespace dichotomia;
using namespace dichotomia::cocycle;

namespace {

Mat diag2(double a, double b) {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = a;
  M(1, 1) = b;
  return M;
}

}  // namespace

TEST_CASE("constant propagator is the matrix power") {
  Propagator prop(LinearSystem::constant(diag2(0.5, 3.0)));
  CHECK(prop(0, 0).isApprox(Mat::Identity(2, 2)));
  for (long t : {1L, 2L, 7L, 20L}) {
    CHECK(prop(t, 0)(0, 0) == doctest::Approx(std::pow(0.5, t)).epsilon(1e-12));
    CHECK(prop(t, 0)(1, 1) == doctest::Approx(std::pow(3.0, t)).epsilon(1e-12));
    CHECK(prop(0, t)(0, 0) == doctest::Approx(std::pow(0.5, -static_cast<double>(t))).epsilon(1e-12));
    CHECK(prop(0, t)(1, 1) == doctest::Approx(std::pow(3.0, -static_cast<double>(t))).epsilon(1e-12));
    CHECK(prop(t, 0)(0, 1) == 0.0);
  }
}

TEST_CASE("propagator satisfies the composition identity") {
  Propagator prop(LinearSystem::random_hyperbolic(3, {0.4, 2.2, 5.0}, 11));
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<long> idx(-30, 30);
  for (int s = 0; s < 100; ++s) {
    const long m = idx(rng), k = idx(rng), n = idx(rng);
    const Mat A = prop(m, k), B = prop(k, n);
    const Mat rhs = prop(m, n);
    // the defect of stepwise products is small relative to the factor norms;
    // relative to ||rhs|| it can legitimately blow up like the condition
    // number of the hyperbolic transition, so that is not the invariant
    CHECK((A * B - rhs).norm() <= 1e-11 * std::max(1.0, A.norm() * B.norm()));
  }
}

TEST_CASE("rotated diagonal family has exact singular values") {
  // A_m = Q_{m+1} D Q_m^T makes the transition matrix Q_m D^{m-n} Q_n^T, so
  // its singular values are the rate powers exactly.
  const std::vector<double> rates = {0.4, 2.2, 5.0};
  Propagator prop(LinearSystem::random_hyperbolic(3, rates, 7));
  for (long n : {-9L, 0L, 4L}) {
    for (long t : {1L, 3L, 8L}) {
      Eigen::JacobiSVD<Mat> svd(prop(n + t, n));
      std::vector<double> expect;
      for (double r : rates) expect.push_back(std::pow(r, t));
      std::sort(expect.rbegin(), expect.rend());
      for (int i = 0; i < 3; ++i)
        CHECK(svd.singularValues()(i) == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-10));
    }
  }
}

TEST_CASE("periodic system composes its table") {
  const Mat A0 = diag2(0.4, 2.0), A1 = diag2(0.9, 4.5);
  Propagator prop(LinearSystem::periodic({A0, A1}));
  CHECK(prop.coefficient(0).isApprox(A0));
  CHECK(prop.coefficient(1).isApprox(A1));
  CHECK(prop.coefficient(2).isApprox(A0));
  CHECK(prop.coefficient(-1).isApprox(A1));
  CHECK(prop(2, 0).isApprox(Mat(A1 * A0), 1e-14));
  CHECK(prop(4, 0).isApprox(Mat(A1 * A0 * A1 * A0), 1e-14));
}

TEST_CASE("oscillating scalar family matches its closed form") {
  const double lambda = 0.7, eps = 0.1;
  Propagator prop(LinearSystem::diagonal_exponential(1, lambda, eps));
  auto sign = [](long m) { return (m % 2 == 0) ? 1.0 : -1.0; };
  for (long n : {-7L, -2L, 0L, 3L}) {
    for (long m : {n + 1, n + 4, n + 9, n - 3}) {
      const double expect = std::exp(-lambda * static_cast<double>(m - n) +
                                     eps * (m * sign(m) - n * sign(n)));
      CHECK(prop(m, n)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("tabulated windows extend by wrap or freeze") {
  Mat A = Mat::Identity(1, 1), B = Mat::Identity(1, 1);
  A(0, 0) = 2.0;
  B(0, 0) = 5.0;
  LinearSystem wrap = LinearSystem::tabulated({A, B}, 0, Extension::wrap);
  CHECK(wrap.coefficient(0)(0, 0) == 2.0);
  CHECK(wrap.coefficient(1)(0, 0) == 5.0);
  CHECK(wrap.coefficient(2)(0, 0) == 2.0);
  CHECK(wrap.coefficient(-1)(0, 0) == 5.0);
  LinearSystem frz = LinearSystem::tabulated({A, B}, 0, Extension::freeze);
  CHECK(frz.coefficient(5)(0, 0) == 5.0);
  CHECK(frz.coefficient(-5)(0, 0) == 2.0);
}

TEST_CASE("invertibility margin is the smallest determinant magnitude") {
  LinearSystem sys = LinearSystem::constant(diag2(0.5, 3.0));
  CHECK(sys.invertibility_margin(-5, 5) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("singular coefficients raise invertibility errors") {
  Mat S = Mat::Zero(2, 2);
  S(0, 0) = 1.0;  // rank 1
  Propagator prop(LinearSystem::tabulated({S}, 0, Extension::freeze));
  CHECK_THROWS_AS(prop.inverse_coefficient(0), invertibility_error);
  CHECK_THROWS_AS(prop(-1, 1), invertibility_error);
}

TEST_CASE("long products overflow into divergence errors") {
  Mat A = Mat::Identity(1, 1);
  A(0, 0) = 3.0;
  Propagator prop(LinearSystem::constant(A));
  CHECK_THROWS_AS(prop(250, 0), divergence_error);
  CHECK_THROWS_AS(prop(900, 0), parameter_error);  // beyond the direct cap
}

TEST_CASE("cache corruption hook only hits cached products") {
  Propagator prop(LinearSystem::constant(diag2(0.5, 3.0)));
  CHECK_FALSE(prop.corrupt_cached_product(4, 0, 1.0));
  const Mat clean = prop(4, 0);
  CHECK(prop.corrupt_cached_product(4, 0, 1e-3));
  CHECK((prop(4, 0) - clean).norm() == doctest::Approx(1e-3).epsilon(1e-9));
}

TEST_CASE("tanh-squared perturbation certifies its constants") {
  const double eta = 0.05, eps = 0.1;
  Nonlinearity nl = Nonlinearity::tanh_squared(2, eta, eps);
  CHECK(nl.B == doctest::Approx(2.0 * eta));
  CHECK(nl.M.has_value());
  CHECK(*nl.M == doctest::Approx(eta * std::sqrt(2.0)));
  // values at a known point
  const double s0 = eta * std::exp(-eps);  // scale at m = 0
  Vec v(2);
  v << 0.5, -1.0;
  const Vec f0 = nl.f(0, v);
  CHECK(f0(0) == doctest::Approx(s0 * std::pow(std::tanh(0.5), 2)).epsilon(1e-14));
  CHECK(f0(1) == doctest::Approx(s0 * std::pow(std::tanh(-1.0), 2)).epsilon(1e-14));
  // Df vanishes at the origin and stays within the certified bound
  CHECK(nl.Df(3, Vec::Zero(2)).norm() == 0.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    Vec x(2);
    x << gauss(rng), gauss(rng);
    const long m = static_cast<long>(i) - 100;
    const double damp = std::exp(-eps * std::abs(static_cast<double>(m + 1)));
    CHECK(nl.f(m, x).norm() <= *nl.M * damp + 1e-12);
    CHECK(nl.Df(m, x).cwiseAbs().maxCoeff() <= eta * damp + 1e-12);
  }
  Nonlinearity none = Nonlinearity::none(2);
  CHECK(none.trivial());
  CHECK(none.M.has_value());
  CHECK(*none.M == 0.0);
}

TEST_CASE("nonlinear steps invert and orbits chain") {
  ExampleSpec spec;
  spec.kind = "constant_diag";
  spec.diag = {0.5, 3.0};
  spec.nonlinearity = "tanh_sq";
  spec.eta = 0.05;
  spec.nl_eps = 0.1;
  NonautonomousSystem sys = make_example(spec);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 100; ++i) {
    Vec x(2);
    x << gauss(rng), gauss(rng);
    const long n = static_cast<long>(i % 21) - 10;
    const Vec y = sys.step(n, x);
    CHECK((sys.step_back(n, y) - x).norm() <= 1e-9 * std::max(1.0, x.norm()));
  }
  Vec x0(2);
  x0 << 0.3, -0.2;
  const auto orbit = nonlinear_orbit(sys, 0, x0, -5, 5);
  REQUIRE(orbit.size() == 11);
  CHECK((orbit[5] - x0).norm() == 0.0);
  for (long n = -5; n < 5; ++n)
    CHECK((orbit[static_cast<size_t>(n + 6)] - sys.step(n, orbit[static_cast<size_t>(n + 5)])).norm() <= 1e-12);
}

TEST_CASE("example factory validates kinds") {
  ExampleSpec spec;
  spec.kind = "nonuniform_scalar";
  spec.dimension = 1;
  spec.lambda = 0.7;
  spec.eps = 0.1;
  CHECK(make_example(spec).dimension() == 1);
  spec.kind = "unknown";
  CHECK_THROWS_AS(make_example(spec), parameter_error);
  spec.kind = "nonuniform_scalar";
  spec.nonlinearity = "mystery";
  CHECK_THROWS_AS(make_example(spec), parameter_error);
}
