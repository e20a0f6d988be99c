#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dichotomia/cocycle.hpp"
#include "dichotomia/errors.hpp"
#include "dichotomia/spectrum.hpp"
#include "doctest.h"

using namespace dichotomia;
using namespace dichotomia::cocycle;
using namespace dichotomia::spectrum;

namespace {

Mat diag2(double a, double b) {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = a;
  M(1, 1) = b;
  return M;
}

// Synthetic exact spectrum (point or banded intervals, one direction each)
// for exercising the gap arithmetic without running the probe machinery.
SpectrumResult exact_spectrum(const std::vector<std::pair<double, double>>& bands) {
  SpectrumResult sr;
  sr.r = static_cast<int>(bands.size());
  sr.dimension = sr.r;
  sr.hyperbolic = true;
  for (const auto& [lo, hi] : bands) {
    SpectralInterval iv;
    iv.lo = lo;
    iv.hi = hi;
    iv.dim = 1;
    iv.below_unit = hi < 1.0;
    if (iv.below_unit) ++sr.k;
    if (lo <= 1.0 && 1.0 <= hi) sr.hyperbolic = false;
    sr.intervals.push_back(iv);
  }
  sr.searched_lo = bands.front().first / 2.0;
  sr.searched_hi = bands.back().second * 2.0;
  sr.tol = 1e-3;
  return sr;
}

void check_probe_consistency(const SpectrumResult& res) {
  for (size_t i = 1; i < res.probes.size(); ++i)
    CHECK(res.probes[i - 1].a < res.probes[i].a);
  int last_dim = -1;
  for (const auto& p : res.probes) {
    if (!p.accepted) continue;
    if (last_dim >= 0) CHECK(p.dim >= last_dim);
    last_dim = p.dim;
  }
  REQUIRE(!res.probes.empty());
  // rejected probes must lie inside one of the reported enclosures
  for (const auto& p : res.probes) {
    if (p.accepted) continue;
    bool covered = false;
    for (const auto& iv : res.intervals)
      covered = covered || (iv.lo <= p.a && p.a <= iv.hi);
    CHECK(covered);
  }
}

}  // namespace

TEST_CASE("constant saddle spectrum brackets both rates tightly") {
  Propagator prop(LinearSystem::constant(diag2(0.5, 3.0)));
  SpectrumOptions opts;
  opts.threads = 2;
  const SpectrumResult res = dichotomy_spectrum(prop, opts);

  REQUIRE(res.r == 2);
  CHECK(res.k == 1);
  CHECK(res.hyperbolic);
  CHECK(res.dimension == 2);
  CHECK(res.intervals[0].dim == 1);
  CHECK(res.intervals[1].dim == 1);
  CHECK(res.intervals[0].below_unit);
  CHECK(!res.intervals[1].below_unit);

  CHECK(res.intervals[0].lo <= 0.5);
  CHECK(res.intervals[0].hi >= 0.5);
  CHECK(res.intervals[0].hi / res.intervals[0].lo <= 1.0 + 5e-3);
  CHECK(res.intervals[1].lo <= 3.0);
  CHECK(res.intervals[1].hi >= 3.0);
  CHECK(res.intervals[1].hi / res.intervals[1].lo <= 1.0 + 5e-3);

  CHECK(res.searched_lo < res.intervals[0].lo);
  CHECK(res.searched_hi > res.intervals[1].hi);
  check_probe_consistency(res);
}

TEST_CASE("alternating periodic system matches its monodromy rates") {
  const Mat A0 = diag2(0.4, 2.0), A1 = diag2(0.9, 4.5);
  Propagator prop(LinearSystem::periodic({A0, A1}));

  // Independent oracle: per-step rates are the period-th roots of the
  // monodromy eigenvalue moduli.
  Eigen::EigenSolver<Mat> eig(A1 * A0);
  std::vector<double> oracle;
  for (int i = 0; i < 2; ++i)
    oracle.push_back(std::sqrt(std::abs(eig.eigenvalues()(i))));
  std::sort(oracle.begin(), oracle.end());
  CHECK(oracle[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(oracle[1] == doctest::Approx(3.0).epsilon(1e-12));

  const SpectrumResult res = dichotomy_spectrum(prop);
  REQUIRE(res.r == 2);
  CHECK(res.k == 1);
  CHECK(res.hyperbolic);
  for (int i = 0; i < 2; ++i) {
    CHECK(res.intervals[static_cast<size_t>(i)].lo <= oracle[static_cast<size_t>(i)]);
    CHECK(res.intervals[static_cast<size_t>(i)].hi >= oracle[static_cast<size_t>(i)]);
    CHECK(res.intervals[static_cast<size_t>(i)].hi / res.intervals[static_cast<size_t>(i)].lo <=
          1.0 + 5e-3);
  }
}

TEST_CASE("oscillating scalar family recovers the closed-form band") {
  // |transition(m,n)| = exp(-0.7 (m-n) + 0.1 (m s(m) - n s(n))) with
  // s(m) = (-1)^m, so the band of unresolvable scales is exactly
  // [exp(-0.8), exp(-0.6)].
  Propagator prop(LinearSystem::diagonal_exponential(1, 0.7, 0.1));
  const SpectrumResult res = dichotomy_spectrum(prop);

  REQUIRE(res.r == 1);
  CHECK(res.k == 1);
  CHECK(res.hyperbolic);
  CHECK(res.dimension == 1);
  CHECK(res.intervals[0].dim == 1);
  CHECK(res.intervals[0].lo == doctest::Approx(std::exp(-0.8)).epsilon(1e-2));
  CHECK(res.intervals[0].hi == doctest::Approx(std::exp(-0.6)).epsilon(1e-2));
  CHECK(res.intervals[0].lo <= std::exp(-0.8) * (1.0 + 1e-6));
  CHECK(res.intervals[0].hi >= std::exp(-0.6) * (1.0 - 1e-6));
  check_probe_consistency(res);
}

TEST_CASE("rotating saddle resolves three point intervals") {
  const std::vector<double> rates = {0.4, 2.2, 5.0};
  Propagator prop(LinearSystem::random_hyperbolic(3, rates, 7));
  SpectrumOptions opts;
  opts.threads = 2;
  const SpectrumResult res = dichotomy_spectrum(prop, opts);

  REQUIRE(res.r == 3);
  CHECK(res.k == 1);
  CHECK(res.hyperbolic);
  CHECK(res.dimension == 3);
  for (size_t i = 0; i < rates.size(); ++i) {
    CHECK(res.intervals[i].lo <= rates[i]);
    CHECK(res.intervals[i].hi >= rates[i]);
    CHECK(res.intervals[i].hi / res.intervals[i].lo <= 1.0 + 5e-3);
    CHECK(res.intervals[i].dim == 1);
  }
  check_probe_consistency(res);
}

TEST_CASE("explicit bounds that miss the spectrum fail with suggestions") {
  Propagator prop(LinearSystem::constant(diag2(0.5, 3.0)));
  SpectrumOptions opts;
  opts.a_min = 2.0;
  opts.a_max = 4.0;
  opts.initial_grid = 9;
  bool thrown = false;
  try {
    dichotomy_spectrum(prop, opts);
  } catch (const coverage_error& e) {
    thrown = true;
    CHECK(e.suggested_lo > 0.0);
    CHECK(e.suggested_lo < 0.5);
    CHECK(e.suggested_hi > 3.0);
  }
  CHECK(thrown);
}

TEST_CASE("growth subspace dimension counts directions below the scale") {
  Propagator prop(LinearSystem::constant(diag2(0.5, 3.0)));
  CHECK(dim_growth_subspace(prop, 0.2, 40) == 0);
  CHECK(dim_growth_subspace(prop, 1.0, 40) == 1);
  CHECK(dim_growth_subspace(prop, 5.0, 40) == 2);
  CHECK_THROWS_AS(dim_growth_subspace(prop, 0.5, 40), boundary_error);
  CHECK_THROWS_AS(dim_growth_subspace(prop, 3.0, 40), boundary_error);
}

TEST_CASE("gap inequalities pass with hand-computed margins on a clean saddle") {
  const auto sr = exact_spectrum({{0.5, 0.5}, {3.0, 3.0}});
  const GapReport rep = check_gap_condition(sr);

  CHECK(rep.k == 1);
  CHECK(rep.r == 2);
  CHECK(!rep.degenerate);
  CHECK(rep.warning.empty());
  CHECK(rep.vacuous.empty());

  // main: 3/0.5 = 6 vs max(3, 1/0.5) = 3, margin log 2
  CHECK(rep.main_gap);
  CHECK(rep.main_gap_margin == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // stable width: 1 < 1/0.5, margin log 2
  REQUIRE(rep.stable_width.size() == 1);
  CHECK(rep.stable_width[0]);
  CHECK(rep.stable_width_margin[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // unstable width: 1 < 3, margin log 3
  REQUIRE(rep.unstable_width.size() == 1);
  CHECK(rep.unstable_width[0]);
  CHECK(rep.unstable_width_margin[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  // products: 0.5 * 3 < 3 (margin log 2); 0.5 * 3 > 0.5 (margin log 3)
  CHECK(rep.product_gap);
  CHECK(rep.product_gap_margin == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(rep.unstable_extension);
  CHECK(rep.unstable_extension_margin == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(rep.all_pass);
}

TEST_CASE("narrow central gap fails the main inequality") {
  const auto sr = exact_spectrum({{0.4, 0.9}, {1.2, 1.3}});
  const GapReport rep = check_gap_condition(sr);

  CHECK(rep.k == 1);
  CHECK(rep.r == 2);
  // main: 1.2/0.9 = 1.333... vs max(1.3, 1/0.4 = 2.5) fails
  CHECK(!rep.main_gap);
  CHECK(rep.main_gap_margin ==
        doctest::Approx(std::log((1.2 / 0.9) / 2.5)).epsilon(1e-12));
  CHECK(rep.main_gap_margin < 0.0);
  // stable width: 0.9/0.4 = 2.25 not below 1/0.9
  REQUIRE(rep.stable_width.size() == 1);
  CHECK(!rep.stable_width[0]);
  // unstable width: 1.3/1.2 < 1.2 holds
  REQUIRE(rep.unstable_width.size() == 1);
  CHECK(rep.unstable_width[0]);
  CHECK(!rep.all_pass);
}

TEST_CASE("one-sided spectra make the two-sided inequalities vacuous") {
  SUBCASE("everything expanding") {
    const auto sr = exact_spectrum({{2.0, 2.0}});
    const GapReport rep = check_gap_condition(sr);
    CHECK(rep.k == 0);
    CHECK(rep.r == 1);
    CHECK(rep.degenerate);
    CHECK(!rep.warning.empty());
    CHECK(!rep.vacuous.empty());
    CHECK(rep.main_gap);  // vacuously
    CHECK(rep.all_pass);
  }
  SUBCASE("everything contracting") {
    const auto sr = exact_spectrum({{0.5, 0.5}});
    const GapReport rep = check_gap_condition(sr);
    CHECK(rep.k == 1);
    CHECK(rep.r == 1);
    CHECK(rep.degenerate);
    CHECK(!rep.warning.empty());
    CHECK(rep.all_pass);
  }
}

TEST_CASE("foliation rates split the central gap") {
  SUBCASE("unclipped square roots") {
    const auto sr = exact_spectrum({{0.5, 0.5}, {1.6, 1.6}});
    const FoliationRates fr = choose_foliation_rates(sr);
    CHECK(fr.gamma1 == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(fr.gamma2 == doctest::Approx(std::sqrt(1.6)).epsilon(1e-12));
    CHECK(fr.b_k == 0.5);
    CHECK(fr.a_k1 == 1.6);
    CHECK(fr.b_r == 1.6);
    CHECK(fr.a_1 == 0.5);
  }
  SUBCASE("clipped against the top rate") {
    const auto sr = exact_spectrum({{0.5, 0.5}, {3.0, 3.0}});
    const FoliationRates fr = choose_foliation_rates(sr);
    // gamma1 * b_r = sqrt(0.5) * 3 would exceed sqrt(3); the stable rate is
    // re-centred below min(1, a_{k+1}/b_r) = 1 and the unstable rate above
    // gamma1 * b_r.
    CHECK(fr.gamma1 == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(fr.gamma2 ==
          doctest::Approx(std::sqrt(std::sqrt(0.5) * 3.0 * 3.0)).epsilon(1e-9));
    CHECK(fr.b_k < fr.gamma1);
    CHECK(fr.gamma1 < 1.0);
    CHECK(1.0 < fr.gamma2);
    CHECK(fr.gamma2 < fr.a_k1);
    CHECK(fr.gamma1 * fr.b_r < fr.gamma2);
  }
  SUBCASE("infeasible product gap is refused") {
    const auto sr = exact_spectrum({{0.9, 0.9}, {1.1, 1.1}, {5.0, 5.0}});
    CHECK(!check_gap_condition(sr).product_gap);
    CHECK_THROWS_AS(choose_foliation_rates(sr), assumption_error);
  }
}
