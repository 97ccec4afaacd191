#pragma once

// Run configuration, CSV and JSON-lines writers, and the SVG path plot.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfwd/dynamics.hpp"
#include "cfwd/step_function.hpp"
#include "cfwd/sticky1d.hpp"
#include "cfwd/verify.hpp"

namespace cfwd {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

/// Bad or inconsistent configuration; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form of x.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline const std::vector<std::string>& known_tests() {
  static const std::vector<std::string> names = {"mass_lemma", "three_points", "mass_near_boundary", "dispersion_moment",
                                                 "sup_moment", "martingale", "qv_consistency", "wiener_center"};
  return names;
}

struct SimConfig {
  int schema_version = kSchemaVersion;
  std::string g_spec = "identity-staircase(3)";
  std::string xi_spec = "constant(0)";
  StepFunction g = identity_staircase(3);
  StepFunction xi = StepFunction::constant(0.0);
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t replicas = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir = "out";
  std::vector<std::string> tests;  // empty: every test whose replica minimum is met
  bool emit_trajectories = false;
  SimOptions options{};

  std::vector<double> sticky_xi0 = {0.0, 0.5, 1.0};
  std::vector<double> sticky_y0 = {0.0, 0.2};
  std::vector<double> sticky_T = {0.5, 1.0};
  double sticky_rho = 1.0;

  std::size_t plot_replica = 0;
  bool plot_dots = false;

  EnsembleSpec ensemble() const {
    EnsembleSpec s;
    s.g = g;
    s.xi = xi;
    s.horizon = horizon;
    s.dt = dt;
    s.seed = seed;
    s.replicas = replicas;
    s.threads = threads;
    s.options = options;
    return s;
  }
};

namespace detail {

inline std::function<double(double)> named_function(const std::string& name, const std::string& field) {
  static const std::map<std::string, std::function<double(double)>> table = {
      {"identity", [](double u) { return u; }},
      {"square", [](double u) { return u * u; }},
      {"sqrt", [](double u) { return std::sqrt(u); }},
      {"cube", [](double u) { return u * u * u; }},
      {"exp", [](double u) { return std::exp(u); }},
      {"quantile-normal", [](double u) { return u <= 0.0 ? -8.0 : u >= 1.0 ? 8.0 : normal_quantile(u); }},
  };
  const auto it = table.find(name);
  if (it == table.end())
    throw ConfigError(field + ": unknown function '" + name +
                      "' (expected identity, square, sqrt, cube, exp or quantile-normal)");
  return it->second;
}

inline int parse_level(const std::string& text, const std::string& field) {
  int level = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), level);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) throw ConfigError(field + ": level must be an integer");
  return level;
}

/// Parses a preset string. `potential` selects the staircase used for dyadic(name, n).
inline StepFunction parse_preset(const std::string& spec, const std::string& field, bool potential) {
  static const std::regex staircase(R"(\s*identity-staircase\(\s*(-?\d+)\s*\)\s*)");
  static const std::regex constant(R"(\s*constant\(\s*([^()\s]+)\s*\)\s*)");
  static const std::regex dyadic(R"(\s*dyadic\(\s*([A-Za-z-]+)\s*,\s*(-?\d+)\s*\)\s*)");
  std::smatch m;
  try {
    if (std::regex_match(spec, m, staircase)) {
      const int level = parse_level(m[1], field);
      if (level < 0 || level > 20) throw ConfigError(field + ": identity-staircase level must lie in [0,20]");
      return identity_staircase(level);
    }
    if (std::regex_match(spec, m, constant)) {
      const std::string text = m[1];
      double c = 0.0;
      const auto res = std::from_chars(text.data(), text.data() + text.size(), c);
      if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(c))
        throw ConfigError(field + ": constant(c) needs a finite number");
      return StepFunction::constant(c);
    }
    if (std::regex_match(spec, m, dyadic)) {
      const auto fn = named_function(m[1], field);
      const int level = parse_level(m[2], field);
      if (level < 1 || level > 20) throw ConfigError(field + ": dyadic level must lie in [1,20]");
      if (potential) return dyadic_discretize_xi(fn, level);
      return dyadic_discretize_g(fn, dyadic_discretize_xi([](double u) { return u; }, level));
    }
  } catch (const std::logic_error& e) {
    throw ConfigError(field + ": " + e.what());
  }
  throw ConfigError(field + ": unrecognised preset '" + spec +
                    "' (expected identity-staircase(n), constant(c) or dyadic(name,n))");
}

inline StepFunction parse_function(const nlohmann::json& j, const std::string& field, bool potential, std::string& echo) {
  if (j.is_string()) {
    echo = j.get<std::string>();
    return parse_preset(echo, field, potential);
  }
  if (!j.is_object()) throw ConfigError(field + ": expected a preset string or an object with breakpoints/values");
  for (const auto& [key, _] : j.items())
    if (key != "breakpoints" && key != "values") throw ConfigError(field + "." + key + ": unknown field");
  if (!j.contains("values") || !j["values"].is_array()) throw ConfigError(field + ".values: required numeric array");
  std::vector<double> values, breakpoints;
  try {
    values = j["values"].get<std::vector<double>>();
    if (j.contains("breakpoints")) breakpoints = j["breakpoints"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field + ": breakpoints and values must be numeric arrays");
  }
  echo = j.dump();
  try {
    if (!j.contains("breakpoints")) return StepFunction::uniform(std::move(values));
    return StepFunction(std::move(breakpoints), std::move(values));
  } catch (const std::exception& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

inline double get_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field + ": expected a number");
  return j.get<double>();
}

inline std::uint64_t get_unsigned(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw ConfigError(field + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::vector<double> get_numbers(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field + ": expected a non-empty numeric array");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_number(x, field));
  return out;
}

}  // namespace detail

/**
 * Builds a validated configuration from a JSON object.
 *
 * Fields: schema_version (required, 1), g, xi (alias ξ), T, dt, replicas, seed, threads, out, tests,
 * emit_trajectories, contact ("hold" | "projection"), noise_scale, sticky_xi0, sticky_y0,
 * sticky_T, sticky_rho, plot_replica, plot_dots. Any other key is rejected.
 */
inline SimConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> allowed = {
      "schema_version", "g",         "xi",        "\u03be",        "T",          "dt",        "replicas",     "seed",
      "threads",        "out",       "tests",     "emit_trajectories",       "contact",      "noise_scale",
      "sticky_xi0",     "sticky_y0", "sticky_T",  "sticky_rho", "plot_replica", "plot_dots"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(key + ": unknown field");

  SimConfig c;
  if (!j.contains("schema_version")) throw ConfigError("schema_version: required field");
  if (get_unsigned(j["schema_version"], "schema_version") != kSchemaVersion)
    throw ConfigError("schema_version: unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  if (j.contains("g")) c.g = parse_function(j["g"], "g", false, c.g_spec);
  if (j.contains("xi") && j.contains("\u03be")) throw ConfigError("xi: given twice (as xi and \u03be)");
  if (j.contains("xi")) c.xi = parse_function(j["xi"], "xi", true, c.xi_spec);
  if (j.contains("\u03be")) c.xi = parse_function(j["\u03be"], "xi", true, c.xi_spec);
  if (j.contains("T")) c.horizon = get_number(j["T"], "T");
  if (j.contains("dt")) c.dt = get_number(j["dt"], "dt");
  if (j.contains("replicas")) c.replicas = get_unsigned(j["replicas"], "replicas");
  if (j.contains("seed")) c.seed = get_unsigned(j["seed"], "seed");
  if (j.contains("threads")) c.threads = static_cast<unsigned>(get_unsigned(j["threads"], "threads"));
  if (j.contains("out")) {
    if (!j["out"].is_string()) throw ConfigError("out: expected a directory path string");
    c.out_dir = j["out"].get<std::string>();
  }
  if (j.contains("tests")) {
    if (!j["tests"].is_array()) throw ConfigError("tests: expected an array of test names");
    for (const auto& t : j["tests"]) {
      if (!t.is_string()) throw ConfigError("tests: expected an array of test names");
      const auto name = t.get<std::string>();
      if (std::find(known_tests().begin(), known_tests().end(), name) == known_tests().end())
        throw ConfigError("tests: unknown test '" + name + "'");
      c.tests.push_back(name);
    }
  }
  if (j.contains("emit_trajectories")) {
    if (!j["emit_trajectories"].is_boolean()) throw ConfigError("emit_trajectories: expected true or false");
    c.emit_trajectories = j["emit_trajectories"].get<bool>();
  }
  if (j.contains("contact")) {
    const auto& v = j["contact"];
    if (v == "hold") c.options.contact = ContactRule::kLocalTimeHold;
    else if (v == "projection") c.options.contact = ContactRule::kProjectionOnly;
    else throw ConfigError("contact: expected \"hold\" or \"projection\"");
  }
  if (j.contains("noise_scale")) c.options.noise_scale = get_number(j["noise_scale"], "noise_scale");
  if (j.contains("sticky_xi0")) c.sticky_xi0 = get_numbers(j["sticky_xi0"], "sticky_xi0");
  if (j.contains("sticky_y0")) c.sticky_y0 = get_numbers(j["sticky_y0"], "sticky_y0");
  if (j.contains("sticky_T")) c.sticky_T = get_numbers(j["sticky_T"], "sticky_T");
  if (j.contains("sticky_rho")) c.sticky_rho = get_number(j["sticky_rho"], "sticky_rho");
  if (j.contains("plot_replica")) c.plot_replica = get_unsigned(j["plot_replica"], "plot_replica");
  if (j.contains("plot_dots")) {
    if (!j["plot_dots"].is_boolean()) throw ConfigError("plot_dots: expected true or false");
    c.plot_dots = j["plot_dots"].get<bool>();
  }
  return c;
}

/// Checks every cross-field constraint; run again after command-line overrides.
inline void validate_config(const SimConfig& c) {
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw ConfigError("T: must be a positive number");
  if (!(c.dt > 0.0)) throw ConfigError("dt: must be positive");
  if (c.dt > c.horizon) throw ConfigError("dt: must not exceed T");
  if (c.replicas == 0) throw ConfigError("replicas: must be positive");
  if (c.threads == 0) throw ConfigError("threads: must be positive");
  if (!(c.options.noise_scale >= 0.0) || !std::isfinite(c.options.noise_scale))
    throw ConfigError("noise_scale: must be a non-negative number");
  for (double x : c.sticky_xi0)
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("sticky_xi0: entries must be non-negative");
  for (double x : c.sticky_y0)
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("sticky_y0: entries must be non-negative");
  for (double x : c.sticky_T)
    if (!(x > 0.0) || !std::isfinite(x) || x < c.dt) throw ConfigError("sticky_T: entries must be positive and at least dt");
  if (!(c.sticky_rho >= 1.0) || !std::isfinite(c.sticky_rho)) throw ConfigError("sticky_rho: must be at least 1");
  if (c.plot_replica >= c.replicas) throw ConfigError("plot_replica: must be below replicas");
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  auto c = parse_config(j);
  validate_config(c);
  return c;
}

/// Config echo for manifests, in a fixed key order.
inline nlohmann::ordered_json config_to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["g"] = c.g_spec;
  j["xi"] = c.xi_spec;
  j["T"] = c.horizon;
  j["dt"] = c.dt;
  j["replicas"] = c.replicas;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out_dir;
  j["tests"] = c.tests;
  j["emit_trajectories"] = c.emit_trajectories;
  j["contact"] = c.options.contact == ContactRule::kLocalTimeHold ? "hold" : "projection";
  j["noise_scale"] = c.options.noise_scale;
  j["sticky_xi0"] = c.sticky_xi0;
  j["sticky_y0"] = c.sticky_y0;
  j["sticky_T"] = c.sticky_T;
  j["sticky_rho"] = c.sticky_rho;
  j["plot_replica"] = c.plot_replica;
  j["plot_dots"] = c.plot_dots;
  return j;
}

// ---- CSV -------------------------------------------------------------------

/// One row per (grid point, piece): t,piece,position,cluster_id,A,M,qv.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
  out << "t,piece,position,cluster_id,A,M,qv\n";
  for (std::size_t j = 0; j < tr.points(); ++j)
    for (std::size_t k = 0; k < tr.pieces(); ++k)
      out << format_number(tr.times()[j]) << ',' << k << ',' << format_number(tr.position(j, k)) << ','
          << tr.cluster_id(j, k) << ',' << format_number(tr.drift(j, k)) << ',' << format_number(tr.martingale(j, k))
          << ',' << format_number(tr.qv(j, k)) << '\n';
}

inline void write_sticky_csv(std::ostream& out, const StickyPath& path) {
  out << "t,y,at_zero\n";
  for (std::size_t j = 0; j <= path.steps(); ++j)
    out << format_number(path.time(j)) << ',' << format_number(path.y(j)) << ',' << (path.at_zero(j) ? 1 : 0) << '\n';
}

// ---- reports ---------------------------------------------------------------

/// Report schema: name, kind, params{}, lhs, rhs, se, replicas, verdict, seed, extras{}.
inline nlohmann::ordered_json report_to_json(const VerificationReport& r) {
  auto num = [](double x) -> nlohmann::ordered_json {
    if (std::isfinite(x)) return x;
    return format_number(x);
  };
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["kind"] = to_string(r.kind);
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.params) params[k] = num(v);
  j["params"] = params;
  j["lhs"] = num(r.lhs);
  j["rhs"] = num(r.rhs);
  j["se"] = num(r.se);
  j["replicas"] = r.replicas;
  j["verdict"] = to_string(r.verdict);
  j["seed"] = r.seed;
  nlohmann::ordered_json extras = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.extras) extras[k] = num(v);
  j["extras"] = extras;
  return j;
}

inline void write_reports(std::ostream& out, const std::vector<VerificationReport>& reports) {
  for (const auto& r : reports) out << report_to_json(r).dump() << '\n';
}

// ---- SVG -------------------------------------------------------------------

struct SvgStyle {
  double width = 800.0;
  double height = 500.0;
  double margin = 50.0;
  bool cluster_dots = false;  // dots at the final cluster positions, radius growing with cluster mass
};

/**
 * Particle paths over time. Each piece is drawn as polylines split wherever its cluster mass
 * changes; heavier clusters get darker strokes. An empty trajectory yields bare axes.
 */
inline void emit_svg(std::ostream& out, const Trajectory& tr, const SvgStyle& style = {}) {
  const double w = style.width, h = style.height, m = style.margin;
  double t0 = 0.0, t1 = 1.0, y0 = 0.0, y1 = 1.0;
  const bool empty = tr.points() == 0 || tr.pieces() == 0;
  if (!empty) {
    t0 = tr.times().front();
    t1 = tr.times().back();
    if (!(t1 > t0)) t1 = t0 + 1.0;
    y0 = y1 = tr.position(0, 0);
    for (std::size_t j = 0; j < tr.points(); ++j)
      for (std::size_t k = 0; k < tr.pieces(); ++k) {
        y0 = std::min(y0, tr.position(j, k));
        y1 = std::max(y1, tr.position(j, k));
      }
    if (!(y1 > y0)) {
      y0 -= 0.5;
      y1 += 0.5;
    }
  }
  auto px = [&](double t) { return m + (t - t0) / (t1 - t0) * (w - 2.0 * m); };
  auto py = [&](double y) { return h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m); };
  auto f = [](double x) { return format_number(std::round(x * 100.0) / 100.0); };
  auto gray = [](double mass) {
    const int level = static_cast<int>(std::lround(200.0 * (1.0 - std::clamp(mass, 0.0, 1.0))));
    return "rgb(" + std::to_string(level) + "," + std::to_string(level) + "," + std::to_string(level) + ")";
  };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f(w) << "\" height=\"" << f(h) << "\" viewBox=\"0 0 "
      << f(w) << ' ' << f(h) << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << f(w) << "\" height=\"" << f(h) << "\" fill=\"white\"/>\n";
  out << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << f(m) << "\" y1=\"" << f(h - m) << "\" x2=\"" << f(w - m) << "\" y2=\"" << f(h - m) << "\"/>\n";
  out << "<line x1=\"" << f(m) << "\" y1=\"" << f(m) << "\" x2=\"" << f(m) << "\" y2=\"" << f(h - m) << "\"/>\n";
  out << "</g>\n";
  out << "<g id=\"labels\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << f(w / 2) << "\" y=\"" << f(h - m / 4) << "\" text-anchor=\"middle\">t</text>\n";
  out << "<text x=\"" << f(m) << "\" y=\"" << f(h - m + 16) << "\" text-anchor=\"middle\">" << format_number(t0) << "</text>\n";
  out << "<text x=\"" << f(w - m) << "\" y=\"" << f(h - m + 16) << "\" text-anchor=\"middle\">" << format_number(t1)
      << "</text>\n";
  out << "<text x=\"" << f(m - 6) << "\" y=\"" << f(h - m) << "\" text-anchor=\"end\">" << format_number(y0) << "</text>\n";
  out << "<text x=\"" << f(m - 6) << "\" y=\"" << f(m + 4) << "\" text-anchor=\"end\">" << format_number(y1) << "</text>\n";
  out << "</g>\n";

  out << "<g id=\"paths\" fill=\"none\" stroke-width=\"1.2\">\n";
  if (!empty) {
    for (std::size_t k = 0; k < tr.pieces(); ++k) {
      std::size_t start = 0;
      while (start < tr.points()) {
        const double mass = tr.cluster_mass(start, k);
        std::size_t end = start;
        while (end + 1 < tr.points() && tr.cluster_mass(end + 1, k) == mass) ++end;
        // Segments share their end point with the next one, so the line stays connected.
        const std::size_t stop = std::min(end + 1, tr.points() - 1);
        out << "<polyline stroke=\"" << gray(mass) << "\" points=\"";
        for (std::size_t j = start; j <= stop; ++j) {
          if (j > start) out << ' ';
          out << f(px(tr.times()[j])) << ',' << f(py(tr.position(j, k)));
        }
        if (stop == start) out << ' ' << f(px(tr.times()[start])) << ',' << f(py(tr.position(start, k)));
        out << "\"/>\n";
        start = end + 1;
      }
    }
  }
  out << "</g>\n";

  if (style.cluster_dots && !empty) {
    out << "<g id=\"clusters\">\n";
    const std::size_t j = tr.points() - 1;
    for (std::size_t k = 0; k < tr.pieces(); ++k) {
      if (k > 0 && tr.same_cluster(j, k, k - 1)) continue;
      const double mass = tr.cluster_mass(j, k);
      out << "<circle cx=\"" << f(px(tr.times()[j])) << "\" cy=\"" << f(py(tr.position(j, k))) << "\" r=\""
          << f(2.0 + 8.0 * std::sqrt(mass)) << "\" fill=\"" << gray(mass) << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace cfwd
