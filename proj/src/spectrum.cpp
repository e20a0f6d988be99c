#include "dichotomia/spectrum.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <thread>

#include "dichotomia/growth.hpp"

namespace dichotomia {
namespace spectrum {

namespace {

constexpr long kMinPairGap = 20;       // rate averages use pairs this far apart
constexpr double kAutoPad = 0.35;      // log padding on swept growth rates
constexpr int kCoverageRetries = 8;
constexpr size_t kProbeBudget = 5000;

int resolve_threads(int requested) {
    int t = requested;
    if (t <= 0) {
        if (const char* env = std::getenv("DICHOTOMIA_THREADS")) t = std::atoi(env);
    }
    if (t <= 0) t = 1;
    return std::min(t, 64);
}

// Per-direction growth-rate brackets from QR-accumulated diagonal sums:
// [inf, sup] over all pair averages with gap >= kMinPairGap.
std::vector<std::pair<double, double>> rate_brackets(const Propagator& prop, long window) {
    const auto sums = growth::qr_growth_sums(prop, -window, window, 1.0);
    const long T = static_cast<long>(sums.size()) - 1;
    if (T < kMinPairGap)
        throw parameter_error("growth-rate sweep window too small for pair averages");
    const int d = prop.dimension();
    std::vector<std::pair<double, double>> out(
        static_cast<size_t>(d),
        {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (long t1 = 0; t1 + kMinPairGap <= T; ++t1) {
        for (long t2 = t1 + kMinPairGap; t2 <= T; ++t2) {
            const double gap = static_cast<double>(t2 - t1);
            for (int i = 0; i < d; ++i) {
                const double r = (sums[static_cast<size_t>(t2)][static_cast<size_t>(i)]
                                  - sums[static_cast<size_t>(t1)][static_cast<size_t>(i)]) / gap;
                out[static_cast<size_t>(i)].first = std::min(out[static_cast<size_t>(i)].first, r);
                out[static_cast<size_t>(i)].second = std::max(out[static_cast<size_t>(i)].second, r);
            }
        }
    }
    return out;
}

struct Probe {
    double a = 0.0;
    bool accepted = false;
    int dim = -1;
    std::string note;
};

Probe run_probe(const Propagator& prop, double a, const CertificateOptions& copts) {
    Probe p;
    p.a = a;
    const auto cert = dichotomy::test_scaled_dichotomy(prop, a, copts);
    p.accepted = cert.accepted;
    if (cert.accepted) p.dim = cert.dim_stable;
    else p.note = cert.reject_reason;
    return p;
}

void eval_batch(const Propagator& prop, const CertificateOptions& copts,
                std::vector<Probe>& batch, int threads) {
    if (threads <= 1 || batch.size() <= 1) {
        for (auto& p : batch) p = run_probe(prop, p.a, copts);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1))
            batch[i] = run_probe(prop, batch[i].a, copts);
    };
    const size_t n = std::min<size_t>(static_cast<size_t>(threads), batch.size());
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

} // namespace

int dim_growth_subspace(const Propagator& prop, double a, long window,
                        double resolution) {
    if (!(a > 0.0)) throw parameter_error("growth-subspace scale must be positive");
    const double la = std::log(a);
    const auto brackets = rate_brackets(prop, window);
    int dim = 0;
    for (const auto& [lo, hi] : brackets) {
        if (la > lo - resolution && la < hi + resolution)
            throw boundary_error("scale ln(a)=" + std::to_string(la)
                                 + " falls inside a growth-rate bracket ["
                                 + std::to_string(lo) + ", " + std::to_string(hi)
                                 + "]; bisect around it instead",
                                 std::exp(0.5 * (lo + hi)));
        if (hi < la) ++dim;
    }
    return dim;
}

SpectrumResult dichotomy_spectrum(const Propagator& prop, const SpectrumOptions& opts) {
    if (!(opts.tol > 0.0) || opts.tol >= 0.5)
        throw parameter_error("spectrum tolerance must be in (0, 0.5)");
    const int d = prop.dimension();
    const int threads = resolve_threads(opts.threads);
    const CertificateOptions& copts = opts.probe;
    const bool auto_bounds = !(opts.a_min > 0.0) || !(opts.a_max > 0.0);

    // swept rate range, for auto bounds and coverage suggestions
    double rate_lo = 0.0, rate_hi = 0.0;
    {
        const long sweep = std::min<long>(std::max<long>(copts.window, 24), 64);
        const auto brackets = rate_brackets(prop, sweep);
        rate_lo = std::numeric_limits<double>::infinity();
        rate_hi = -std::numeric_limits<double>::infinity();
        for (const auto& [lo, hi] : brackets) {
            rate_lo = std::min(rate_lo, lo);
            rate_hi = std::max(rate_hi, hi);
        }
    }
    double lo = auto_bounds ? std::exp(rate_lo - kAutoPad) : opts.a_min;
    double hi = auto_bounds ? std::exp(rate_hi + kAutoPad) : opts.a_max;
    if (!(lo > 0.0) || !(hi > lo))
        throw parameter_error("spectrum search range is empty");

    std::map<double, Probe> probes;
    auto ensure = [&](std::vector<double> as) {
        std::vector<Probe> batch;
        for (double a : as) {
            if (probes.count(a)) continue;
            Probe p;
            p.a = a;
            batch.push_back(p);
        }
        if (batch.empty()) return;
        if (probes.size() + batch.size() > kProbeBudget)
            throw assumption_error("spectrum probe budget exhausted; the splitting test "
                                   "appears inconsistent on this system");
        eval_batch(prop, copts, batch, threads);
        for (auto& p : batch) probes.emplace(p.a, std::move(p));
    };

    // coverage at the ends: the bottom must accept with no decaying
    // directions, the top with all of them
    const auto suggest_lo = std::exp(rate_lo - 1.0);
    const auto suggest_hi = std::exp(rate_hi + 1.0);
    for (int attempt = 0;; ++attempt) {
        ensure({lo});
        const Probe& p = probes.at(lo);
        if (p.accepted && p.dim == 0) break;
        if (!auto_bounds || attempt >= kCoverageRetries)
            throw coverage_error("search range does not extend below the spectrum (probe at "
                                 + std::to_string(lo) + (p.accepted
                                     ? " accepts with " + std::to_string(p.dim)
                                       + " decaying directions"
                                     : " rejects") + ")",
                                 suggest_lo, suggest_hi);
        lo *= std::exp(-0.75);
    }
    for (int attempt = 0;; ++attempt) {
        ensure({hi});
        const Probe& p = probes.at(hi);
        if (p.accepted && p.dim == d) break;
        if (!auto_bounds || attempt >= kCoverageRetries)
            throw coverage_error("search range does not extend above the spectrum (probe at "
                                 + std::to_string(hi) + (p.accepted
                                     ? " accepts with " + std::to_string(p.dim)
                                       + " decaying directions"
                                     : " rejects") + ")",
                                 suggest_lo, suggest_hi);
        hi *= std::exp(0.75);
    }

    // seed grid, log-spaced, with the unit scale included when bracketed
    {
        std::vector<double> seeds;
        const int g = std::max(2, opts.initial_grid);
        const double llo = std::log(lo), lhi = std::log(hi);
        for (int i = 0; i <= g - 1; ++i)
            seeds.push_back(std::exp(llo + (lhi - llo) * i / (g - 1)));
        if (lo < 1.0 && 1.0 < hi) seeds.push_back(1.0);
        ensure(seeds);
    }

    // bisection rounds: refine every adjacent pair that neither sits in a
    // common gap (both accept, equal dim) nor inside the spectrum (both
    // reject) nor is already below tolerance
    for (int round = 0; round < 64; ++round) {
        std::vector<double> mids;
        const Probe* prev = nullptr;
        for (const auto& [a, p] : probes) {
            if (prev) {
                const bool resolved =
                    (prev->accepted && p.accepted && prev->dim == p.dim)
                    || (!prev->accepted && !p.accepted)
                    || (p.a - prev->a <= opts.tol * prev->a);
                if (!resolved) {
                    const double mid = std::sqrt(prev->a * p.a);
                    if (mid > prev->a && mid < p.a) mids.push_back(mid);
                }
            }
            prev = &p;
        }
        if (mids.empty()) break;
        ensure(mids);
    }

    // assemble intervals between accepted probes of different dimension
    SpectrumResult res;
    res.dimension = d;
    res.searched_lo = lo;
    res.searched_hi = hi;
    res.tol = opts.tol;
    for (const auto& [a, p] : probes) {
        ProbeRecord rec;
        rec.a = p.a;
        rec.accepted = p.accepted;
        rec.dim = p.dim;
        rec.note = p.note;
        res.probes.push_back(std::move(rec));
    }

    const Probe* last_acc = nullptr;
    for (const auto& [a, p] : probes) {
        if (!p.accepted) continue;
        if (last_acc) {
            if (p.dim < last_acc->dim)
                throw assumption_error("decaying dimension decreased from "
                                       + std::to_string(last_acc->dim) + " at scale "
                                       + std::to_string(last_acc->a) + " to "
                                       + std::to_string(p.dim) + " at scale "
                                       + std::to_string(p.a));
            if (p.dim > last_acc->dim) {
                SpectralInterval iv;
                iv.lo = last_acc->a;
                iv.hi = p.a;
                iv.dim = p.dim - last_acc->dim;
                iv.below_unit = iv.hi < 1.0;
                res.intervals.push_back(iv);
            }
        }
        last_acc = &p;
    }
    int dimsum = 0;
    for (const auto& iv : res.intervals) dimsum += iv.dim;
    if (dimsum != d)
        throw assumption_error("interval dimensions sum to " + std::to_string(dimsum)
                               + " instead of " + std::to_string(d));
    res.r = static_cast<int>(res.intervals.size());
    res.k = 0;
    res.hyperbolic = true;
    for (const auto& iv : res.intervals) {
        if (iv.below_unit) ++res.k;
        if (iv.lo <= 1.0 && 1.0 <= iv.hi) res.hyperbolic = false;
    }
    return res;
}

GapReport check_gap_condition(const SpectrumResult& spec) {
    GapReport rep;
    rep.k = spec.k;
    rep.r = spec.r;
    if (spec.r == 0) throw parameter_error("gap check needs a nonempty spectrum");
    const auto& iv = spec.intervals;
    const int k = spec.k, r = spec.r;
    const bool have_stable = k >= 1;
    const bool have_unstable = k < r;
    rep.degenerate = !(have_stable && have_unstable);

    const double a1 = iv.front().lo;
    const double br = iv.back().hi;
    const double bk = have_stable ? iv[static_cast<size_t>(k - 1)].hi : 0.0;
    const double ak1 = have_unstable ? iv[static_cast<size_t>(k)].lo : 0.0;

    auto vacuous = [&](const char* name) {
        rep.vacuous.push_back(name);
        return true;
    };

    if (have_stable && have_unstable) {
        rep.main_gap_margin = std::log(ak1 / bk) - std::log(std::max(br, 1.0 / a1));
        rep.main_gap = rep.main_gap_margin > 0.0;
    } else {
        rep.main_gap = vacuous("main_gap");
    }
    for (int i = 1; i <= k; ++i) {
        const double m = -std::log(bk) - std::log(iv[static_cast<size_t>(i - 1)].hi
                                                  / iv[static_cast<size_t>(i - 1)].lo);
        rep.stable_width_margin.push_back(m);
        rep.stable_width.push_back(m > 0.0);
    }
    for (int j = k + 1; j <= r; ++j) {
        if (!have_unstable) break;
        const double m = std::log(ak1) - std::log(iv[static_cast<size_t>(j - 1)].hi
                                                  / iv[static_cast<size_t>(j - 1)].lo);
        rep.unstable_width_margin.push_back(m);
        rep.unstable_width.push_back(m > 0.0);
    }
    if (have_stable && have_unstable) {
        rep.product_gap_margin = std::log(ak1) - std::log(bk * br);
        rep.product_gap = rep.product_gap_margin > 0.0;
        rep.unstable_extension_margin = std::log(a1 * ak1) - std::log(bk);
        rep.unstable_extension = rep.unstable_extension_margin > 0.0;
    } else {
        rep.product_gap = vacuous("product_gap");
        rep.unstable_extension = vacuous("unstable_extension");
    }
    if (rep.degenerate) {
        rep.warning = std::string("spectrum is one-sided (")
                      + (have_stable ? "no expanding intervals" : "no contracting intervals")
                      + "); inequalities needing both sides are vacuously true: ";
        for (size_t i = 0; i < rep.vacuous.size(); ++i)
            rep.warning += (i ? ", " : "") + rep.vacuous[i];
    }
    rep.all_pass = rep.main_gap;
    for (bool b : rep.stable_width) rep.all_pass = rep.all_pass && b;
    for (bool b : rep.unstable_width) rep.all_pass = rep.all_pass && b;
    return rep;
}

FoliationRates choose_foliation_rates(const SpectrumResult& spec) {
    if (spec.k < 1 || spec.k >= spec.r)
        throw assumption_error("foliation rates need spectrum on both sides of 1");
    FoliationRates fr;
    fr.a_1 = spec.intervals.front().lo;
    fr.b_r = spec.intervals.back().hi;
    fr.b_k = spec.intervals[static_cast<size_t>(spec.k - 1)].hi;
    fr.a_k1 = spec.intervals[static_cast<size_t>(spec.k)].lo;
    if (!(fr.b_k < 1.0) || !(fr.a_k1 > 1.0))
        throw assumption_error("foliation rates need a hyperbolic central gap (b_k < 1 < a_{k+1})");

    fr.gamma1 = std::sqrt(fr.b_k);
    fr.gamma2 = std::sqrt(fr.a_k1);
    if (fr.gamma1 * fr.b_r >= fr.gamma2) {
        // pull gamma1 down and gamma2 up inside their windows; feasible
        // exactly when b_k * b_r < a_{k+1}
        const double upper = std::min(1.0, fr.a_k1 / fr.b_r);
        if (fr.b_k >= upper)
            throw assumption_error("rate window empty: b_k * b_r >= a_{k+1} (violated "
                                   "product inequality b_k*b_r < a_{k+1})");
        fr.gamma1 = std::sqrt(fr.b_k * upper);
        const double lo2 = std::max(1.0, fr.gamma1 * fr.b_r);
        if (lo2 >= fr.a_k1)
            throw assumption_error("rate window empty for the expanding rate (violated "
                                   "product inequality b_k*b_r < a_{k+1})");
        fr.gamma2 = std::sqrt(lo2 * fr.a_k1);
    }
    if (!(fr.b_k < fr.gamma1 && fr.gamma1 < 1.0))
        throw assumption_error("violated rate inequality b_k < gamma1 < 1");
    if (!(1.0 < fr.gamma2 && fr.gamma2 < fr.a_k1))
        throw assumption_error("violated rate inequality 1 < gamma2 < a_{k+1}");
    if (!(fr.gamma1 * fr.b_r < fr.gamma2))
        throw assumption_error("violated rate inequality gamma1 * b_r < gamma2");
    return fr;
}

} // namespace spectrum
} // namespace dichotomia
