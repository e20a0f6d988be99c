#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "dichotomia/cocycle.hpp"
#include "dichotomia/errors.hpp"
#include "dichotomia/linearize.hpp"
#include "dichotomia/spectrum.hpp"
#include "doctest.h"

using namespace dichotomia;
using namespace dichotomia::cocycle;
using namespace dichotomia::dichotomy;
using namespace dichotomia::linearize;

namespace {

Mat diag2(double a, double b) {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = a;
  M(1, 1) = b;
  return M;
}

NonautonomousSystem saddle_system(double eta) {
  if (eta == 0.0)
    return {LinearSystem::constant(diag2(0.5, 3.0)), Nonlinearity::none(2)};
  return {LinearSystem::constant(diag2(0.5, 3.0)),
          Nonlinearity::tanh_squared(2, eta, 0.1)};
}

DichotomyCertificate certify(const NonautonomousSystem& sys, int window) {
  CertificateOptions opts;
  opts.window = window;
  auto cert = test_scaled_dichotomy(*sys.propagator, 1.0, opts);
  REQUIRE(cert.accepted);
  return cert;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

spectrum::SpectrumResult exact_saddle_spectrum() {
  spectrum::SpectrumResult sr;
  sr.dimension = 2;
  sr.r = 2;
  sr.k = 1;
  sr.hyperbolic = true;
  spectrum::SpectralInterval lo, hi;
  lo.lo = lo.hi = 0.5;
  lo.dim = 1;
  lo.below_unit = true;
  hi.lo = hi.hi = 3.0;
  hi.dim = 1;
  sr.intervals = {lo, hi};
  sr.searched_lo = 0.1;
  sr.searched_hi = 10.0;
  sr.tol = 1e-3;
  return sr;
}

}  // namespace

TEST_CASE("series tail bound is the closed geometric form") {
  DichotomyCertificate cert;
  cert.accepted = true;
  cert.D = 2.0;
  cert.lambda = 0.5;
  const double expect =
      2.0 * 2.0 * 0.3 * std::exp(-0.5 * 11.0) / (1.0 - std::exp(-0.5));
  CHECK(series_tail_bound(cert, 0.3, 10) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("conjugacy is the identity for a trivial perturbation") {
  const auto sys = saddle_system(0.0);
  const auto cert = certify(sys, 24);
  ConjugacyOptions opts;
  opts.T = 8;
  for (double a : {-0.7, 0.0, 1.3}) {
    const Vec v = vec2(a, 0.5 - a);
    CHECK((conjugacy_forward(sys, cert, 0, v, opts) - v).norm() == 0.0);
    CHECK((conjugacy_derivative(sys, cert, 0, v, opts) - Mat::Identity(2, 2)).norm() ==
          0.0);
    CHECK((conjugacy_inverse(sys, cert, 0, v, opts) - v).norm() <= 1e-12);
  }
}

TEST_CASE("conjugacy fixes the origin with identity derivative exactly") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 24);
  ConjugacyOptions opts;
  opts.T = 12;
  const Vec zero = Vec::Zero(2);
  for (long m : {-3L, 0L, 2L}) {
    CHECK(conjugacy_forward(sys, cert, m, zero, opts).norm() == 0.0);
    CHECK((conjugacy_derivative(sys, cert, m, zero, opts) - Mat::Identity(2, 2))
              .norm() == 0.0);
  }
}

TEST_CASE("recursive series agrees with a direct term-by-term sum") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 24);
  const int T = 10;
  ConjugacyOptions opts;
  opts.T = T;

  for (long m : {-2L, 0L, 3L}) {
    const Vec v = vec2(0.3, -0.2);
    // independent evaluation: explicit propagator times projected f-terms
    const auto orbit = nonlinear_orbit(sys, m, v, m - T, m + T);
    auto state = [&](long k) { return orbit[static_cast<size_t>(k - (m - T))]; };
    Vec direct = v;
    for (long k = m - T; k < m; ++k) {
      const Mat P = cert.projection(k + 1);
      direct -= (*sys.propagator)(m, k + 1) * (P * sys.nonlinearity.f(k, state(k)));
    }
    for (long k = m; k <= m + T; ++k) {
      const Mat Q = Mat::Identity(2, 2) - cert.projection(k + 1);
      direct += (*sys.propagator)(m, k + 1) * (Q * sys.nonlinearity.f(k, state(k)));
    }
    const Vec h = conjugacy_forward(sys, cert, m, v, opts);
    CHECK((h - direct).norm() <= 1e-11);
    CHECK((h - v).norm() > 1e-4);  // the series actually moved the point
  }
}

TEST_CASE("conjugation defect stays below the truncation tail") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 48);
  ConjugacyOptions opts;
  opts.T = 40;
  const auto grid = sample_grid(2, 5, -1.0, 1.0);
  REQUIRE(grid.size() == 25);
  const ResidualReport rep = verify_conjugacy(sys, cert, -2, 2, grid, 1e-6, opts);

  CHECK(rep.pass);
  CHECK(rep.m.size() == 5);
  CHECK(rep.sup_residual.size() == 5);
  CHECK(rep.max_residual <= 1e-8);
  CHECK(rep.max_residual >= 0.0);
  CHECK(rep.tol == 1e-6);
  CHECK(rep.tail_bound > 0.0);
  CHECK(rep.tail_bound < 1e-6);
  CHECK(rep.bounded_f_assumed);
  CHECK(!rep.construction.empty());
  CHECK(rep.argmax_m >= -2);
  CHECK(rep.argmax_m <= 2);
}

TEST_CASE("derivative of the conjugacy matches central differences") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 48);
  ConjugacyOptions opts;
  opts.T = 30;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(-0.9, 0.9);
  const double delta = 1e-5;
  for (int trial = 0; trial < 6; ++trial) {
    const Vec v = vec2(unif(rng), unif(rng));
    const Mat D = conjugacy_derivative(sys, cert, 0, v, opts);
    Mat fd(2, 2);
    for (int j = 0; j < 2; ++j) {
      Vec vp = v, vm = v;
      vp(j) += delta;
      vm(j) -= delta;
      fd.col(j) = (conjugacy_forward(sys, cert, 0, vp, opts) -
                   conjugacy_forward(sys, cert, 0, vm, opts)) /
                  (2.0 * delta);
    }
    CHECK((D - fd).norm() <= 1e-6 * std::max(1.0, D.norm()));
  }
}

TEST_CASE("inverse round-trips the forward conjugacy") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 48);
  ConjugacyOptions opts;
  opts.T = 30;
  for (long m : {-1L, 0L, 2L}) {
    for (double t : {0.3, 1.7, 4.1}) {
      const Vec w = vec2(0.8 * std::cos(t), 0.8 * std::sin(t));
      const Vec v = conjugacy_inverse(sys, cert, m, w, opts);
      CHECK((conjugacy_forward(sys, cert, m, v, opts) - w).norm() <= 1e-8);

      const Vec v0 = vec2(0.4 * std::sin(t), 0.4 * std::cos(t));
      const Vec w0 = conjugacy_forward(sys, cert, m, v0, opts);
      CHECK((conjugacy_inverse(sys, cert, m, w0, opts) - v0).norm() <= 1e-8);
    }
  }
}

TEST_CASE("inverse solver reports a stalled contraction") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 24);
  ConjugacyOptions opts;
  opts.T = 10;
  opts.max_iters = 1;
  opts.picard_tol = 1e-16;
  CHECK_THROWS_AS(conjugacy_inverse(sys, cert, 0, vec2(0.5, 0.5), opts),
                  contraction_error);
}

TEST_CASE("conjugacy demands a usable certificate and coverage") {
  const auto sys = saddle_system(0.05);
  ConjugacyOptions opts;
  opts.T = 8;

  CertificateOptions bad;
  bad.window = 16;
  const auto rejected = test_scaled_dichotomy(*sys.propagator, 0.5, bad);
  REQUIRE(!rejected.accepted);
  CHECK_THROWS_AS(conjugacy_forward(sys, rejected, 0, vec2(0.1, 0.1), opts),
                  parameter_error);

  const auto cert = certify(sys, 24);
  CHECK_THROWS_AS(conjugacy_forward(sys, cert, 20, vec2(0.1, 0.1), opts),
                  parameter_error);

  CertificateOptions wide;
  wide.window = 200;
  const auto strided = test_scaled_dichotomy(*sys.propagator, 1.0, wide);
  REQUIRE(strided.accepted);
  REQUIRE(strided.projections.stride == 7);
  CHECK_THROWS_AS(conjugacy_forward(sys, strided, 0, vec2(0.1, 0.1), opts),
                  parameter_error);
}

TEST_CASE("unbounded perturbations are refused unless waived") {
  Nonlinearity nl;
  nl.kind = "linear_drift";
  nl.B = 0.0;
  nl.eta = 0.01;
  nl.eps = 0.0;
  nl.f = [](long, const Vec& v) { return (0.01 * v).eval(); };
  nl.Df = [](long, const Vec& v) {
    return (0.01 * Mat::Identity(v.size(), v.size())).eval();
  };
  NonautonomousSystem sys{LinearSystem::constant(diag2(0.5, 3.0)), nl};
  const auto cert = certify(sys, 24);
  ConjugacyOptions opts;
  opts.T = 6;
  CHECK_THROWS_AS(conjugacy_forward(sys, cert, 0, vec2(0.2, 0.2), opts),
                  assumption_error);
  opts.require_bounded_f = false;
  CHECK_NOTHROW(conjugacy_forward(sys, cert, 0, vec2(0.2, 0.2), opts));
}

TEST_CASE("stable leaf solve satisfies its fixed-point identities") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 48);
  const auto rates = spectrum::choose_foliation_rates(exact_saddle_spectrum());
  FoliationOptions opts;
  opts.T = 30;

  const Vec x = vec2(0.4, 0.1);
  const Mat P0 = cert.projection(0);
  const Vec y_minus = P0 * vec2(-0.3, 0.2);
  const auto sol = solve_foliation_point(sys, cert, rates, x, y_minus, opts);

  CHECK(sol.iterations <= opts.max_iters);
  CHECK(sol.residual <= 1e-8);
  REQUIRE(sol.q.size() == 31);
  REQUIRE(sol.w.size() == 31);
  CHECK(sol.w[0].rows() == 2);
  CHECK(sol.w[0].cols() == 3);  // d + stable_dim

  // the base fiber point has the requested stable component
  CHECK((P0 * sol.q[0] - (y_minus - P0 * x)).norm() <= 1e-8);

  // leaf points track the base orbit: orbit(x + q_0)_n = xi_n + q_n
  const auto xi = nonlinear_orbit(sys, 0, x, 0, 10);
  Vec z = x + sol.q[0];
  for (long n = 0; n <= 10; ++n) {
    CHECK((z - (xi[static_cast<size_t>(n)] + sol.q[static_cast<size_t>(n)])).norm() <=
          1e-7);
    z = sys.step(n, z);
  }

  // the weighted sups reported match the stored profiles
  double wq = 0.0;
  for (size_t n = 0; n < sol.q.size(); ++n)
    wq = std::max(wq, std::pow(sol.gamma1, -static_cast<double>(n)) * sol.q[n].norm());
  CHECK(wq == doctest::Approx(sol.weighted_sup_q).epsilon(1e-12));
  CHECK(sol.contraction_ratio < 1.0);
}

TEST_CASE("leaf derivative matches central differences in the base point") {
  const auto sys = saddle_system(0.05);
  const auto cert = certify(sys, 48);
  const auto rates = spectrum::choose_foliation_rates(exact_saddle_spectrum());
  FoliationOptions opts;
  opts.T = 30;

  const Vec x = vec2(0.4, 0.1);
  const Mat P0 = cert.projection(0);
  const Vec y_minus = P0 * vec2(-0.3, 0.2);
  const auto sol = solve_foliation_point(sys, cert, rates, x, y_minus, opts);

  const double delta = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Vec xp = x, xm = x;
    xp(j) += delta;
    xm(j) -= delta;
    const auto sp = solve_foliation_point(sys, cert, rates, xp, y_minus, opts);
    const auto sm = solve_foliation_point(sys, cert, rates, xm, y_minus, opts);
    const Vec fd = (sp.q[0] - sm.q[0]) / (2.0 * delta);
    CHECK((sol.w[0].col(j) - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("fundamental-domain extension reproduces the explicit pullback") {
  auto F = [](const Vec& x) {
    Vec y(1);
    y(0) = 2.0 * x(0) + 0.1 * std::tanh(x(0)) * std::tanh(x(0));
    return y;
  };
  auto ident = [](const Vec& z) { return z; };
  Mat A(1, 1);
  A(0, 0) = 2.0;

  Vec x(1);
  x(0) = 5.0;
  const auto res = extend_by_fundamental_domains(ident, 0.5, A, F, x);
  CHECK(res.pullbacks == 4);

  // independent bisection inverse of the scalar map, chained four times
  double target = 5.0;
  for (int stage = 0; stage < 4; ++stage) {
    double lo = 0.0, hi = target;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double val = 2.0 * mid + 0.1 * std::tanh(mid) * std::tanh(mid);
      (val < target ? lo : hi) = mid;
    }
    target = 0.5 * (lo + hi);
  }
  CHECK(res.value(0) == doctest::Approx(16.0 * target).epsilon(1e-9));
}

TEST_CASE("extension applies the chart map directly on interior points") {
  auto F = [](const Vec& x) {
    Vec y(1);
    y(0) = 2.0 * x(0) + 0.1 * std::tanh(x(0)) * std::tanh(x(0));
    return y;
  };
  auto cubic = [](const Vec& z) {
    Vec y(1);
    y(0) = z(0) + z(0) * z(0) * z(0);
    return y;
  };
  Mat A(1, 1);
  A(0, 0) = 2.0;
  Vec x(1);
  x(0) = 0.3;
  const auto res = extend_by_fundamental_domains(cubic, 0.5, A, F, x);
  CHECK(res.pullbacks == 0);
  CHECK(res.value(0) == doctest::Approx(0.3 + 0.027).epsilon(1e-15));
}

TEST_CASE("extension rejects maps that do not expand the chart") {
  auto F = [](const Vec& x) { return (0.5 * x).eval(); };
  auto ident = [](const Vec& z) { return z; };
  Mat A(1, 1);
  A(0, 0) = 0.5;
  Vec x(1);
  x(0) = 3.0;
  CHECK_THROWS_AS(extend_by_fundamental_domains(ident, 0.5, A, F, x),
                  assumption_error);
}

TEST_CASE("extension enforces its pullback budget") {
  auto F = [](const Vec& x) {
    Vec y(1);
    y(0) = 2.0 * x(0) + 0.1 * std::tanh(x(0)) * std::tanh(x(0));
    return y;
  };
  auto ident = [](const Vec& z) { return z; };
  Mat A(1, 1);
  A(0, 0) = 2.0;
  Vec x(1);
  x(0) = 5.0;
  CHECK_THROWS_AS(extend_by_fundamental_domains(ident, 0.5, A, F, x, 2),
                  divergence_error);
}

TEST_CASE("grid sampler enumerates low dimensions and sweeps high ones") {
  const auto g2 = sample_grid(2, 3, -1.0, 1.0);
  REQUIRE(g2.size() == 9);
  CHECK((g2.front() - vec2(-1.0, -1.0)).norm() == 0.0);
  CHECK((g2.back() - vec2(1.0, 1.0)).norm() == 0.0);

  const auto g1 = sample_grid(1, 5, 0.0, 2.0);
  REQUIRE(g1.size() == 5);
  CHECK(g1[2](0) == doctest::Approx(1.0));

  const auto g4 = sample_grid(4, 3, -1.0, 1.0);
  CHECK(g4.size() >= 4);
  for (const auto& p : g4) {
    REQUIRE(p.size() == 4);
    CHECK(p.cwiseAbs().maxCoeff() <= 1.0 + 1e-15);
  }
}
