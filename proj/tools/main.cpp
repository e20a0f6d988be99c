// Command-line front end: spectrum, gap-check, conjugate, verify.
//
// Exit codes: 0 success, 1 failed checks / refused overwrite, 2 probe range
// does not cover the growth rates, 3 spectral-gap or hyperbolicity
// hypothesis fails, 4 one-sided (degenerate) gap configuration, 5 a
// fixed-point solve failed to contract, 64 malformed config or usage.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dichotomia/config.hpp"
#include "dichotomia/errors.hpp"
#include "dichotomia/linearize.hpp"
#include "dichotomia/reports.hpp"
#include "dichotomia/sequence_space.hpp"
#include "dichotomia/spectrum.hpp"
#include "dichotomia/verify.hpp"

namespace dm = dichotomia;
using dm::reports::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  long window = 0;
  double tol = 0.0;
  std::string grid;     // "lo:hi:steps"
  bool force = false;
  int threads = 0;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration JSON file")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory (default: out)");
  cmd->add_option("--window", args.window, "anchor window for splitting probes");
  cmd->add_option("--tol", args.tol, "tolerance override");
  cmd->add_option("--grid", args.grid, "lo:hi:steps range override");
  cmd->add_flag("--force", args.force, "overwrite existing output files");
  cmd->add_option("--threads", args.threads, "worker threads (env DICHOTOMIA_THREADS)")
      ->envname("DICHOTOMIA_THREADS");
  cmd->add_option("--seed", args.seed, "seed for sampling-based checks");
}

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  int steps = 0;
};

GridSpec parse_grid(const std::string& s) {
  GridSpec g;
  const auto c1 = s.find(':');
  const auto c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw dm::parameter_error("--grid expects lo:hi:steps, got '" + s + "'");
  try {
    std::size_t used = 0;
    g.lo = std::stod(s.substr(0, c1), &used);
    g.hi = std::stod(s.substr(c1 + 1, c2 - c1 - 1), &used);
    g.steps = std::stoi(s.substr(c2 + 1), &used);
  } catch (const std::exception&) {
    throw dm::parameter_error("--grid expects numeric lo:hi:steps, got '" + s + "'");
  }
  if (g.steps < 2) throw dm::parameter_error("--grid needs at least 2 steps");
  if (!(g.lo < g.hi)) throw dm::parameter_error("--grid needs lo < hi");
  return g;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  return (std::filesystem::path(args.out_dir) / name).string();
}

void write_output(const CommonArgs& args, const std::string& name,
                  const std::string& content) {
  const std::string path = out_path(args, name);
  if (!args.force && std::filesystem::exists(path))
    throw dm::error("refusing to overwrite '" + path + "' (use --force)");
  dm::reports::write_text(path, content);
  std::cout << "wrote " << path << "\n";
}

dm::spectrum::SpectrumResult run_spectrum(const dm::RunConfig& cfg,
                                          const CommonArgs& args,
                                          const dm::cocycle::NonautonomousSystem& sys) {
  dm::spectrum::SpectrumOptions opts;
  opts.threads = args.threads;
  opts.tol = args.tol > 0 ? args.tol : (cfg.tol > 0 ? cfg.tol : opts.tol);
  opts.a_min = cfg.a_min;
  opts.a_max = cfg.a_max;
  if (!args.grid.empty()) {
    const GridSpec g = parse_grid(args.grid);
    if (g.lo <= 0) throw dm::parameter_error("--grid scales must be positive");
    opts.a_min = g.lo;
    opts.a_max = g.hi;
    opts.initial_grid = g.steps;
  }
  const long window = args.window > 0 ? args.window : cfg.window;
  if (window > 0) opts.probe.window = window;
  if (cfg.horizon > 0) {
    opts.probe.horizon = cfg.horizon;
    opts.probe.gaps = cfg.horizon;
  }
  return dm::spectrum::dichotomy_spectrum(*sys.propagator, opts);
}

int cmd_spectrum(const CommonArgs& args) {
  const auto cfg = dm::load_config(args.config_path);
  const auto sys = dm::make_system(cfg);
  const auto result = run_spectrum(cfg, args, sys);
  write_output(args, "spectrum.json",
               dm::reports::dump(dm::reports::envelope(
                   "spectrum", dm::reports::to_json(result), cfg.raw)));
  write_output(args, "spectrum.csv", dm::reports::spectrum_csv(result));
  std::cout << "intervals:";
  for (const auto& iv : result.intervals)
    std::cout << " [" << iv.lo << ", " << iv.hi << "] dim " << iv.dim;
  std::cout << "\nhyperbolic: " << (result.hyperbolic ? "yes" : "no") << "\n";
  return 0;
}

int cmd_gap_check(const CommonArgs& args) {
  const auto cfg = dm::load_config(args.config_path);
  const auto sys = dm::make_system(cfg);
  const auto result = run_spectrum(cfg, args, sys);
  const auto gap = dm::spectrum::check_gap_condition(result);

  ordered_json body{{"spectrum", dm::reports::to_json(result)},
                    {"gap", dm::reports::to_json(gap)}};
  try {
    body["rates"] = dm::reports::to_json(dm::spectrum::choose_foliation_rates(result));
  } catch (const dm::assumption_error& e) {
    body["rates_error"] = e.what();
  }
  write_output(args, "gap.json",
               dm::reports::dump(dm::reports::envelope("gap-check", body, cfg.raw)));

  std::cout << "k = " << gap.k << ", r = " << gap.r << "\n";
  std::cout << "main_gap: " << (gap.main_gap ? "pass" : "fail")
            << " (log margin " << gap.main_gap_margin << ")\n";
  std::cout << "all width inequalities: "
            << (gap.all_pass == gap.main_gap ? (gap.all_pass ? "pass" : "see report")
                                             : "fail")
            << "\n";
  if (gap.degenerate) {
    std::cout << "warning: " << gap.warning << "\n";
    return 4;
  }
  if (!gap.all_pass) {
    std::cout << "spectral-gap condition fails\n";
    return 3;
  }
  std::cout << "spectral-gap condition holds\n";
  return 0;
}

int cmd_conjugate(const CommonArgs& args, long m_lo, long m_hi, int per_axis) {
  const auto cfg = dm::load_config(args.config_path);
  const auto sys = dm::make_system(cfg);

  dm::linearize::ConjugacyOptions copts;
  if (cfg.T > 0) copts.T = static_cast<int>(cfg.T);

  dm::dichotomy::CertificateOptions probe;
  probe.anchor_stride = 1;  // the series needs every index in its range
  const long needed = std::max(std::labs(m_lo), std::labs(m_hi) + 2) + copts.T + 4;
  probe.window = args.window > 0 ? args.window
                                 : std::max(cfg.window, needed);
  const auto cert = dm::dichotomy::test_scaled_dichotomy(*sys.propagator, 1.0, probe);
  if (!cert.accepted) {
    std::cout << "no splitting at scale 1: " << cert.reject_reason << "\n";
    return 3;
  }

  double glo = -1.0, ghi = 1.0;
  int steps = per_axis;
  if (!args.grid.empty()) {
    const GridSpec g = parse_grid(args.grid);
    glo = g.lo;
    ghi = g.hi;
    steps = g.steps;
  }
  const auto grid = dm::linearize::sample_grid(sys.dimension(), steps, glo, ghi);
  const double tol = args.tol > 0 ? args.tol : 1e-6;

  const auto report =
      dm::linearize::verify_conjugacy(sys, cert, m_lo, m_hi, grid, tol, copts);

  std::vector<std::vector<dm::Vec>> images;
  for (long m = m_lo; m <= m_hi; ++m) {
    std::vector<dm::Vec> row;
    row.reserve(grid.size());
    for (const auto& x : grid)
      row.push_back(dm::linearize::conjugacy_forward(sys, cert, m, x, copts));
    images.push_back(std::move(row));
  }

  ordered_json body{{"residuals", dm::reports::to_json(report)},
                    {"certificate", dm::reports::to_json(cert)},
                    {"m_lo", m_lo},
                    {"m_hi", m_hi},
                    {"T", copts.T},
                    {"grid", ordered_json{{"lo", glo}, {"hi", ghi}, {"per_axis", steps}}}};
  write_output(args, "conjugacy.json",
               dm::reports::dump(dm::reports::envelope("conjugate", body, cfg.raw)));
  write_output(args, "conjugacy.csv",
               dm::reports::conjugacy_csv(report.m, grid, images));
  write_output(args, "residuals.csv", dm::reports::residuals_csv(report));

  std::cout << "max residual " << report.max_residual << " at m = " << report.argmax_m
            << " (tol " << report.tol << ", series tail bound " << report.tail_bound
            << ")\n";
  std::cout << (report.pass ? "conjugacy verified\n" : "conjugacy residual above tolerance\n");
  return report.pass ? 0 : 1;
}

int cmd_verify(const CommonArgs& args, int samples) {
  const auto cfg = dm::load_config(args.config_path);
  const auto sys = dm::make_system(cfg);

  dm::verify::SuiteOptions opts;
  opts.samples = samples;
  opts.seed = args.seed ? args.seed : cfg.seed;
  opts.window = args.window > 0 ? args.window : cfg.window;
  opts.tol = args.tol;
  opts.threads = args.threads;

  const auto report = dm::verify::run_invariant_suite(
      sys, cfg.name.empty() ? args.config_path : cfg.name, opts);

  write_output(args, "verify.json",
               dm::reports::dump(dm::reports::envelope(
                   "verify", dm::verify::to_json(report), cfg.raw)));

  for (const auto& c : report.checks) {
    std::cout << (c.skipped ? "SKIP" : (c.pass ? "PASS" : "FAIL")) << "  " << c.name;
    if (!c.note.empty()) std::cout << "  (" << c.note << ")";
    std::cout << "\n";
  }
  std::cout << (report.all_pass ? "all invariant checks pass\n"
                                : "invariant checks FAILED\n");
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dichotomy spectra, spectral-gap checks, and linearizing conjugacies "
               "for nonautonomous linear difference systems"};
  app.require_subcommand(1);

  CommonArgs spectrum_args;
  auto* sp = app.add_subcommand("spectrum", "locate the spectral intervals of scales");
  add_common(sp, spectrum_args);

  CommonArgs gap_args;
  auto* gp = app.add_subcommand("gap-check", "evaluate the spectral-gap inequalities");
  add_common(gp, gap_args);

  CommonArgs conj_args;
  long m_lo = -5, m_hi = 5;
  int per_axis = 21;
  auto* cj = app.add_subcommand("conjugate", "build and verify a linearizing conjugacy");
  add_common(cj, conj_args);
  cj->add_option("--m-lo", m_lo, "first time index (default -5)");
  cj->add_option("--m-hi", m_hi, "last time index (default 5)");
  cj->add_option("--per-axis", per_axis, "grid points per axis (default 21)");

  CommonArgs verify_args;
  int samples = 1000;
  auto* vf = app.add_subcommand("verify", "run the invariant/property suites");
  add_common(vf, verify_args);
  vf->add_option("--samples", samples, "sample count for randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  try {
    if (sp->parsed()) return cmd_spectrum(spectrum_args);
    if (gp->parsed()) return cmd_gap_check(gap_args);
    if (cj->parsed()) return cmd_conjugate(conj_args, m_lo, m_hi, per_axis);
    if (vf->parsed()) return cmd_verify(verify_args, samples);
  } catch (const dm::parameter_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 64;
  } catch (const dm::coverage_error& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "suggested range: " << e.suggested_lo << " .. " << e.suggested_hi
              << "\n";
    return 2;
  } catch (const dm::contraction_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const dm::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 64;
}
