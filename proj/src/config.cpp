#include "dichotomia/config.hpp"

#include <fstream>
#include <sstream>

#include "dichotomia/errors.hpp"

namespace dichotomia {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& what) { throw parameter_error("config: " + what); }

const ordered_json& require(const ordered_json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) bad(std::string("missing required key '") + key + "'");
  return obj.at(key);
}

double number_field(const ordered_json& obj, const char* key) {
  const ordered_json& v = require(obj, key);
  if (!v.is_number()) bad(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

double number_or(const ordered_json& obj, const char* key, double dflt) {
  if (!obj.is_object() || !obj.contains(key)) return dflt;
  const ordered_json& v = obj.at(key);
  if (!v.is_number()) bad(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

Mat matrix_field(const ordered_json& v, const char* key) {
  if (!v.is_array() || v.empty()) bad(std::string("'") + key + "' must be a non-empty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  Mat M;
  for (std::size_t i = 0; i < rows; ++i) {
    const ordered_json& row = v.at(i);
    if (!row.is_array() || row.empty()) bad(std::string("'") + key + "' rows must be non-empty arrays");
    if (i == 0) {
      cols = row.size();
      if (cols != rows) bad(std::string("'") + key + "' must be square");
      M.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    } else if (row.size() != cols) {
      bad(std::string("'") + key + "' rows must have equal length");
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const ordered_json& e = row.at(j);
      if (!e.is_number()) bad(std::string("'") + key + "' entries must be numbers");
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e.get<double>();
    }
  }
  return M;
}

void parse_generator(const ordered_json& gen, cocycle::ExampleSpec& spec) {
  const ordered_json& kindv = require(gen, "kind");
  if (!kindv.is_string()) bad("generator 'kind' must be a string");
  const std::string kind = kindv.get<std::string>();

  if (kind == "constant") {
    if (gen.contains("diag")) {
      const ordered_json& dg = gen.at("diag");
      if (!dg.is_array() || dg.empty()) bad("generator 'diag' must be a non-empty array");
      spec.kind = "constant_diag";
      spec.diag.clear();
      for (const auto& e : dg) {
        if (!e.is_number()) bad("generator 'diag' entries must be numbers");
        spec.diag.push_back(e.get<double>());
      }
      spec.dimension = static_cast<int>(spec.diag.size());
    } else if (gen.contains("matrix")) {
      Mat M = matrix_field(gen.at("matrix"), "matrix");
      spec.kind = "periodic";  // constant = period-1 table
      spec.period_table = {M};
      spec.dimension = static_cast<int>(M.rows());
    } else {
      bad("constant generator needs 'diag' or 'matrix'");
    }
  } else if (kind == "periodic") {
    const ordered_json& ms = require(gen, "matrices");
    if (!ms.is_array() || ms.empty()) bad("generator 'matrices' must be a non-empty array");
    spec.kind = "periodic";
    spec.period_table.clear();
    for (const auto& m : ms) spec.period_table.push_back(matrix_field(m, "matrices"));
    const Eigen::Index d = spec.period_table.front().rows();
    for (const auto& M : spec.period_table)
      if (M.rows() != d) bad("generator 'matrices' must share one dimension");
    spec.dimension = static_cast<int>(d);
  } else if (kind == "nonuniform_scalar") {
    spec.kind = "nonuniform_scalar";
    spec.lambda = number_field(gen, "lambda");
    spec.eps = number_field(gen, "epsilon");
    spec.dimension = 1;
    if (gen.contains("dimension")) {
      const ordered_json& dv = gen.at("dimension");
      if (!dv.is_number_integer() || dv.get<long>() != 1)
        bad("nonuniform_scalar generator is one-dimensional");
    }
    if (spec.lambda <= 0.0) bad("'lambda' must be positive");
    if (spec.eps < 0.0) bad("'epsilon' must be non-negative");
  } else if (kind == "random_hyperbolic") {
    const ordered_json& rates = require(gen, "rates");
    if (!rates.is_array() || rates.empty()) bad("generator 'rates' must be a non-empty array");
    spec.kind = "random_hyperbolic";
    spec.diag.clear();
    for (const auto& e : rates) {
      if (!e.is_number()) bad("generator 'rates' entries must be numbers");
      const double r = e.get<double>();
      if (r <= 0.0) bad("generator 'rates' entries must be positive");
      spec.diag.push_back(r);
    }
    spec.dimension = static_cast<int>(spec.diag.size());
    if (gen.contains("seed")) {
      const ordered_json& sv = gen.at("seed");
      if (!sv.is_number_integer()) bad("generator 'seed' must be an integer");
      spec.seed = sv.get<std::uint64_t>();
    }
  } else {
    bad("unknown generator kind '" + kind + "'");
  }
}

void parse_nonlinearity(const ordered_json& nl, cocycle::ExampleSpec& spec) {
  const ordered_json& kindv = require(nl, "kind");
  if (!kindv.is_string()) bad("nonlinearity 'kind' must be a string");
  const std::string kind = kindv.get<std::string>();
  if (kind == "none") {
    spec.nonlinearity = "none";
    spec.eta = 0.0;
    spec.nl_eps = 0.0;
  } else if (kind == "tanh_squared") {
    spec.nonlinearity = "tanh_sq";
    spec.eta = number_field(nl, "eta");
    spec.nl_eps = number_or(nl, "epsilon", 0.0);
    if (spec.eta < 0.0) bad("nonlinearity 'eta' must be non-negative");
    if (spec.nl_eps < 0.0) bad("nonlinearity 'epsilon' must be non-negative");
  } else {
    bad("unknown nonlinearity kind '" + kind + "'");
  }
}

}  // namespace

RunConfig parse_config(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) bad("document root must be an object");
  RunConfig cfg;
  cfg.raw = doc;

  if (doc.contains("name")) {
    if (!doc.at("name").is_string()) bad("'name' must be a string");
    cfg.name = doc.at("name").get<std::string>();
  }

  parse_generator(require(doc, "generator"), cfg.spec);

  if (doc.contains("nonlinearity")) {
    parse_nonlinearity(doc.at("nonlinearity"), cfg.spec);
  } else {
    cfg.spec.nonlinearity = "none";
    cfg.spec.eta = 0.0;
    cfg.spec.nl_eps = 0.0;
  }

  auto positive_long = [&](const char* key, long dflt) -> long {
    if (!doc.contains(key)) return dflt;
    const ordered_json& v = doc.at(key);
    if (!v.is_number_integer()) bad(std::string("'") + key + "' must be an integer");
    const long x = v.get<long>();
    if (x <= 0) bad(std::string("'") + key + "' must be positive");
    return x;
  };
  cfg.window = positive_long("window", 0);
  cfg.horizon = static_cast<int>(positive_long("horizon", 0));
  cfg.T = positive_long("T", 0);

  cfg.tol = number_or(doc, "tol", 0.0);
  if (cfg.tol < 0.0) bad("'tol' must be non-negative");
  cfg.a_min = number_or(doc, "a_min", 0.0);
  cfg.a_max = number_or(doc, "a_max", 0.0);
  if (cfg.a_min < 0.0 || cfg.a_max < 0.0) bad("scale bounds must be non-negative");
  if (cfg.a_min > 0.0 && cfg.a_max > 0.0 && cfg.a_min >= cfg.a_max)
    bad("'a_min' must be below 'a_max'");

  if (doc.contains("seed")) {
    const ordered_json& sv = doc.at("seed");
    if (!sv.is_number_integer()) bad("'seed' must be an integer");
    cfg.seed = sv.get<std::uint64_t>();
  }

  // Reject dimension inconsistencies early.
  if (doc.contains("dimension")) {
    const ordered_json& dv = doc.at("dimension");
    if (!dv.is_number_integer()) bad("'dimension' must be an integer");
    if (dv.get<long>() != cfg.spec.dimension)
      bad("'dimension' disagrees with the generator");
  }

  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parameter_error("config: cannot open '" + path + "'");
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw parameter_error("config: invalid JSON in '" + path + "': " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const parameter_error&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw parameter_error(std::string("config: ") + e.what());
  }
}

cocycle::NonautonomousSystem make_system(const RunConfig& cfg) {
  return cocycle::make_example(cfg.spec);
}

}  // namespace dichotomia
