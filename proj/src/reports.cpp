#include "dichotomia/reports.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dichotomia/errors.hpp"

namespace dichotomia {
namespace reports {

namespace {

std::string csv_num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

ordered_json to_json(const spectrum::SpectralInterval& iv) {
  return ordered_json{{"lo", iv.lo}, {"hi", iv.hi}, {"dim", iv.dim},
                      {"below_unit", iv.below_unit}};
}

ordered_json to_json(const spectrum::SpectrumResult& sr) {
  ordered_json intervals = ordered_json::array();
  for (const auto& iv : sr.intervals) intervals.push_back(to_json(iv));
  ordered_json probes = ordered_json::array();
  for (const auto& p : sr.probes) {
    ordered_json pj{{"a", p.a}, {"accepted", p.accepted}};
    if (p.accepted) pj["dim"] = p.dim;
    if (!p.note.empty()) pj["note"] = p.note;
    probes.push_back(std::move(pj));
  }
  return ordered_json{{"dimension", sr.dimension},
                      {"intervals", std::move(intervals)},
                      {"k", sr.k},
                      {"r", sr.r},
                      {"hyperbolic", sr.hyperbolic},
                      {"searched_lo", sr.searched_lo},
                      {"searched_hi", sr.searched_hi},
                      {"tol", sr.tol},
                      {"probe_count", sr.probes.size()},
                      {"probes", std::move(probes)}};
}

ordered_json to_json(const spectrum::GapReport& gr) {
  ordered_json j{{"k", gr.k}, {"r", gr.r}, {"degenerate", gr.degenerate}};
  if (!gr.warning.empty()) j["warning"] = gr.warning;
  if (!gr.vacuous.empty()) j["vacuous"] = gr.vacuous;
  j["main_gap"] = ordered_json{{"pass", gr.main_gap}, {"log_margin", gr.main_gap_margin}};
  ordered_json sw = ordered_json::array();
  for (size_t i = 0; i < gr.stable_width.size(); ++i)
    sw.push_back(ordered_json{{"interval", i + 1},
                              {"pass", static_cast<bool>(gr.stable_width[i])},
                              {"log_margin", gr.stable_width_margin[i]}});
  j["stable_width"] = std::move(sw);
  ordered_json uw = ordered_json::array();
  for (size_t i = 0; i < gr.unstable_width.size(); ++i)
    uw.push_back(ordered_json{{"interval", gr.k + static_cast<int>(i) + 1},
                              {"pass", static_cast<bool>(gr.unstable_width[i])},
                              {"log_margin", gr.unstable_width_margin[i]}});
  j["unstable_width"] = std::move(uw);
  j["product_gap"] = ordered_json{{"pass", gr.product_gap}, {"log_margin", gr.product_gap_margin}};
  j["unstable_extension"] =
      ordered_json{{"pass", gr.unstable_extension}, {"log_margin", gr.unstable_extension_margin}};
  j["all_pass"] = gr.all_pass;
  return j;
}

ordered_json to_json(const spectrum::FoliationRates& fr) {
  return ordered_json{{"gamma1", fr.gamma1}, {"gamma2", fr.gamma2}, {"b_k", fr.b_k},
                      {"a_k1", fr.a_k1},     {"b_r", fr.b_r},       {"a_1", fr.a_1}};
}

ordered_json to_json(const dichotomy::DichotomyCertificate& cert) {
  ordered_json j{{"accepted", cert.accepted}, {"a", cert.a}};
  if (!cert.accepted) {
    j["reject_reason"] = cert.reject_reason;
    j["reject_anchor"] = cert.reject_anchor;
    j["reject_inequality"] = cert.reject_inequality;
  }
  j["dim_stable"] = cert.dim_stable;
  j["D"] = cert.D;
  j["lambda"] = cert.lambda;
  j["mu"] = cert.mu;
  j["eps"] = cert.eps;
  j["envelope_slope"] = std::vector<double>(cert.envelope_slope, cert.envelope_slope + 4);
  j["residual"] = std::vector<double>(cert.residual, cert.residual + 4);
  j["anchors"] = ordered_json{{"lo", cert.projections.lo},
                              {"hi", cert.projections.hi},
                              {"stride", cert.projections.stride}};
  j["options"] = ordered_json{{"window", cert.options.window},
                              {"horizon", cert.options.horizon},
                              {"gaps", cert.options.gaps},
                              {"slope_floor", cert.options.slope_floor},
                              {"slack", cert.options.slack}};
  return j;
}

ordered_json to_json(const dichotomy::NormFamilyReport& nr) {
  return ordered_json{{"lower_ok", nr.lower_ok}, {"C", nr.C},
                      {"eps", nr.eps},           {"step_C", nr.step_C},
                      {"uniform_D", nr.uniform_D}, {"worst_lower", nr.worst_lower},
                      {"pass", nr.pass}};
}

ordered_json to_json(const sequence_space::OperatorGapReport& og) {
  return ordered_json{{"measured", og.measured}, {"eta", og.eta},   {"bound", og.bound},
                      {"samples", og.samples},   {"pass", og.pass}};
}

ordered_json to_json(const linearize::ResidualReport& rr) {
  ordered_json per = ordered_json::array();
  for (size_t i = 0; i < rr.m.size(); ++i)
    per.push_back(ordered_json{{"m", rr.m[i]}, {"sup_residual", rr.sup_residual[i]}});
  std::vector<double> argx(rr.argmax_x.data(), rr.argmax_x.data() + rr.argmax_x.size());
  return ordered_json{{"per_index", std::move(per)},
                      {"max_residual", rr.max_residual},
                      {"argmax_m", rr.argmax_m},
                      {"argmax_x", argx},
                      {"tol", rr.tol},
                      {"pass", rr.pass},
                      {"tail_bound", rr.tail_bound},
                      {"bounded_f_assumed", rr.bounded_f_assumed},
                      {"construction", rr.construction}};
}

ordered_json to_json(const linearize::FoliationSolveResult& fs) {
  std::vector<double> x(fs.x.data(), fs.x.data() + fs.x.size());
  std::vector<double> ym(fs.y_minus.data(), fs.y_minus.data() + fs.y_minus.size());
  return ordered_json{{"x", x},
                      {"y_minus", ym},
                      {"gamma1", fs.gamma1},
                      {"gamma2", fs.gamma2},
                      {"iterations", fs.iterations},
                      {"residual", fs.residual},
                      {"weighted_sup_q", fs.weighted_sup_q},
                      {"weighted_sup_w", fs.weighted_sup_w},
                      {"contraction_ratio", fs.contraction_ratio},
                      {"horizon", fs.q.empty() ? 0 : static_cast<long>(fs.q.size() - 1)}};
}

ordered_json envelope(const std::string& kind, ordered_json body,
                      const ordered_json& config_echo) {
  ordered_json j{{"schema_version", kSchemaVersion}, {"kind", kind}};
  if (!config_echo.is_null() && !config_echo.empty()) j["config"] = config_echo;
  j["report"] = std::move(body);
  return j;
}

std::string spectrum_csv(const spectrum::SpectrumResult& sr) {
  std::ostringstream os;
  os << "a,dim,accepted\n";
  for (const auto& p : sr.probes)
    os << csv_num(p.a) << ',' << p.dim << ',' << (p.accepted ? 1 : 0) << '\n';
  return os.str();
}

std::string residuals_csv(const linearize::ResidualReport& rr) {
  std::ostringstream os;
  os << "m,sup_residual\n";
  for (size_t i = 0; i < rr.m.size(); ++i)
    os << rr.m[i] << ',' << csv_num(rr.sup_residual[i]) << '\n';
  return os.str();
}

std::string conjugacy_csv(const std::vector<long>& ms, const std::vector<Vec>& grid,
                          const std::vector<std::vector<Vec>>& images) {
  if (ms.size() != images.size())
    throw parameter_error("conjugacy_csv: index/image row mismatch");
  const int d = grid.empty() ? 0 : static_cast<int>(grid.front().size());
  std::ostringstream os;
  os << "m";
  for (int i = 0; i < d; ++i) os << ",x" << i;
  for (int i = 0; i < d; ++i) os << ",h" << i;
  os << '\n';
  for (size_t r = 0; r < ms.size(); ++r) {
    if (images[r].size() != grid.size())
      throw parameter_error("conjugacy_csv: grid/image column mismatch");
    for (size_t g = 0; g < grid.size(); ++g) {
      os << ms[r];
      for (int i = 0; i < d; ++i) os << ',' << csv_num(grid[g](i));
      for (int i = 0; i < d; ++i) os << ',' << csv_num(images[r][g](i));
      os << '\n';
    }
  }
  return os.str();
}

std::string foliation_csv(const linearize::FoliationSolveResult& fs) {
  std::ostringstream os;
  os << "n,norm_q,weighted_q\n";
  double wq = 1.0;
  for (size_t n = 0; n < fs.q.size(); ++n) {
    const double nq = fs.q[n].norm();
    os << n << ',' << csv_num(nq) << ',' << csv_num(nq * wq) << '\n';
    wq /= fs.gamma1;
  }
  return os.str();
}

std::string dump(const ordered_json& doc) { return doc.dump(2) + "\n"; }

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw parameter_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw parameter_error("write failed for '" + path + "'");
}

}  // namespace reports
}  // namespace dichotomia
