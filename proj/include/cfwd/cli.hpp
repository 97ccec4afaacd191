#pragma once

// Subcommand drivers behind the command-line tool. Each returns the process
// exit status: 0 when every verdict passes, 1 when any fails.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfwd/dynamics.hpp"
#include "cfwd/io.hpp"
#include "cfwd/sticky1d.hpp"
#include "cfwd/verify.hpp"

namespace cfwd {

namespace detail {

inline std::filesystem::path prepare_out_dir(const SimConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("out: cannot create directory '" + cfg.out_dir + "': " + ec.message());
  return dir;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

inline void write_manifest(const std::filesystem::path& dir, const SimConfig& cfg, const std::string& command,
                           const nlohmann::ordered_json& details) {
  nlohmann::ordered_json m;
  m["tool"] = "cfwd";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config_to_json(cfg);
  m["noise"] = "Philox4x32-10 keyed by the 64-bit seed; counter (slot, step, stream, replica); AS241 inverse normal";
  for (const auto& [k, v] : details.items()) m[k] = v;
  auto out = open_output(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

inline std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.%s", stem, i, ext);
  return buf;
}

inline nlohmann::ordered_json verdict_counts(const std::vector<VerificationReport>& reports) {
  std::size_t pass = 0, fail = 0, report_only = 0;
  for (const auto& r : reports) {
    if (r.verdict == Verdict::kPass) ++pass;
    else if (r.verdict == Verdict::kFail) ++fail;
    else ++report_only;
  }
  nlohmann::ordered_json j;
  j["pass"] = pass;
  j["fail"] = fail;
  j["report_only"] = report_only;
  return j;
}

}  // namespace detail

/// Replica minimum of a named test (0 if none).
inline std::size_t minimum_replicas(const std::string& test) {
  if (test == "martingale") return 1000;
  if (test == "wiener_center") return 10000;
  return 0;
}

/// Runs one named test with the default parameter grid for the configured system.
inline std::vector<VerificationReport> run_named_test(const std::string& test, const EnsembleSpec& spec) {
  const double T = spec.horizon;
  const std::size_t pieces = init(spec.g, spec.xi).size();
  if (test == "mass_lemma") {
    std::vector<MassLemmaPoint> pts;
    for (double u : {0.25, 0.375, 0.5, 0.625, 0.75})
      for (double frac : {0.5, 1.0})
        for (double t : {0.5 * T, T}) pts.push_back({u, frac * std::min(u, 1.0 - u), t});
    return check_mass_lemma_grid(spec, pts);
  }
  if (test == "three_points") {
    std::vector<ThreePointsCase> cases;
    for (double lambda : {0.1, 0.3}) {
      for (double u : {0.25, 0.5, 0.75}) cases.push_back({u, std::min(u, 0.25), std::min(1.0 - u, 0.25), lambda});
      cases.push_back({0.5, 0.5, 0.5, lambda});
    }
    return check_three_points_grid(spec, cases);
  }
  if (test == "mass_near_boundary") {
    std::vector<BoundaryMassCase> cases;
    for (int side : {0, 1})
      for (double alpha : {0.5, 0.9})
        for (double r : {0.4, 0.2, 0.1}) cases.push_back({side, side == 0 ? 0.0 : 1.0, r, T, alpha});
    return check_mass_near_boundary_grid(spec, cases);
  }
  if (test == "dispersion_moment") return check_dispersion_moment_grid(spec, {0.25, 0.5, 0.75, 1.0}, 3.0, T);
  if (test == "sup_moment") return {check_sup_moment(spec, 0.0, 1.0, T), check_sup_moment(spec, 0.5, 3.0, T)};
  if (test == "martingale") {
    std::vector<VerificationReport> out;
    std::vector<std::size_t> ks = {0, pieces / 2, pieces - 1};
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    for (std::size_t k : ks) out.push_back(martingale_test(spec, k));
    return out;
  }
  if (test == "qv_consistency") {
    std::vector<VerificationReport> out;
    if (pieces == 1) out.push_back(qv_consistency(spec, 0, 0));
    for (std::size_t k = 0; k + 1 < pieces && k < 3; ++k) out.push_back(qv_consistency(spec, k, k + 1));
    return out;
  }
  if (test == "wiener_center") return {wiener_center_test(spec)};
  throw ConfigError("tests: unknown test '" + test + "'");
}

/// Simulates every replica; writes summary.csv, optional per-replica trajectory CSVs, and the manifest.
inline int run_simulate(const SimConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const auto dir = detail::prepare_out_dir(cfg);
  const auto spec = cfg.ensemble();
  struct Summary {
    double center = 0.0;
    std::size_t clusters = 0;
  };
  // Each replica owns its CSV file, so workers never share an output stream.
  const auto rows = parallel_map(cfg.replicas, cfg.threads, [&](std::size_t i) {
    const auto tr = simulate(spec.g, spec.xi, spec.horizon, spec.dt, spec.seed, i, spec.options);
    if (cfg.emit_trajectories) {
      auto out = detail::open_output(dir / detail::numbered("traj", i, "csv"));
      write_trajectory_csv(out, tr);
    }
    return Summary{tr.center_of_mass(tr.steps()), tr.cluster_count(tr.steps())};
  });
  auto out = detail::open_output(dir / "summary.csv");
  out << "replica,center_of_mass,clusters\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i << ',' << format_number(rows[i].center) << ',' << rows[i].clusters << '\n';

  nlohmann::ordered_json details;
  details["replicas_written"] = cfg.emit_trajectories ? cfg.replicas : 0;
  detail::write_manifest(dir, cfg, "simulate", details);
  log << "simulate: " << cfg.replicas << " replicas, " << step_count(cfg.horizon, cfg.dt) << " steps each -> "
      << dir.string() << '\n';
  return 0;
}

/**
 * Runs the selected tests (all eligible ones when none are listed) and writes reports.jsonl.
 * Explicitly requested tests below their replica minimum are a configuration error.
 */
inline int run_verify(const SimConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  std::vector<std::string> run, skipped;
  if (cfg.tests.empty()) {
    for (const auto& t : known_tests()) (cfg.replicas >= minimum_replicas(t) ? run : skipped).push_back(t);
  } else {
    for (const auto& t : cfg.tests) {
      if (cfg.replicas < minimum_replicas(t))
        throw ConfigError("replicas: test '" + t + "' needs at least " + std::to_string(minimum_replicas(t)));
      run.push_back(t);
    }
  }
  const auto dir = detail::prepare_out_dir(cfg);
  const auto spec = cfg.ensemble();
  std::vector<VerificationReport> reports;
  for (const auto& t : run) {
    auto part = run_named_test(t, spec);
    for (const auto& r : part) {
      log << r.name << '(';
      bool first = true;
      for (const auto& [k, v] : r.params) {
        if (k == "T" || k == "dt") continue;
        log << (first ? "" : ",") << k << '=' << format_number(v);
        first = false;
      }
      log << "): lhs=" << format_number(r.lhs) << " rhs=" << format_number(r.rhs) << " se=" << format_number(r.se) << ' '
          << to_string(r.verdict) << '\n';
    }
    reports.insert(reports.end(), part.begin(), part.end());
  }
  for (const auto& t : skipped)
    log << t << ": skipped (needs " << minimum_replicas(t) << " replicas, have " << cfg.replicas << ")\n";

  auto out = detail::open_output(dir / "reports.jsonl");
  write_reports(out, reports);
  nlohmann::ordered_json details;
  details["tests_run"] = run;
  details["tests_skipped"] = skipped;
  details["verdicts"] = detail::verdict_counts(reports);
  detail::write_manifest(dir, cfg, "verify", details);
  for (const auto& r : reports)
    if (r.failed()) return 1;
  return 0;
}

/// Sitting-time check over the grid sticky_xi0 x sticky_y0 x sticky_T; writes sticky_reports.jsonl.
inline int run_sticky(const SimConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const auto dir = detail::prepare_out_dir(cfg);
  std::vector<VerificationReport> reports;
  std::size_t index = 0;
  for (double xi0 : cfg.sticky_xi0)
    for (double y0 : cfg.sticky_y0)
      for (double T : cfg.sticky_T) {
        StickyParams p;
        p.xi0 = xi0;
        p.y0 = y0;
        p.rho = cfg.sticky_rho;
        auto rep = check_sitting_time(p, T, cfg.dt, cfg.replicas, cfg.seed, cfg.threads);
        log << "sitting_time xi0=" << format_number(xi0) << " y0=" << format_number(y0) << " T=" << format_number(T)
            << ": lhs=" << format_number(rep.lhs) << " rhs=" << format_number(rep.rhs) << " se=" << format_number(rep.se)
            << " " << to_string(rep.verdict) << '\n';
        if (cfg.emit_trajectories) {
          auto out = detail::open_output(dir / detail::numbered("sticky", index, "csv"));
          write_sticky_csv(out, simulate_sticky(p, T, cfg.dt, cfg.seed, 0));
        }
        reports.push_back(std::move(rep));
        ++index;
      }
  auto out = detail::open_output(dir / "sticky_reports.jsonl");
  write_reports(out, reports);
  nlohmann::ordered_json details;
  details["verdicts"] = detail::verdict_counts(reports);
  detail::write_manifest(dir, cfg, "sticky", details);
  for (const auto& r : reports)
    if (r.failed()) return 1;
  return 0;
}

/// Renders replica plot_replica as trajectory.svg.
inline int run_plot(const SimConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const auto dir = detail::prepare_out_dir(cfg);
  const auto tr = simulate(cfg.g, cfg.xi, cfg.horizon, cfg.dt, cfg.seed, cfg.plot_replica, cfg.options);
  SvgStyle style;
  style.cluster_dots = cfg.plot_dots;
  auto out = detail::open_output(dir / "trajectory.svg");
  emit_svg(out, tr, style);
  nlohmann::ordered_json details;
  details["plotted_replica"] = cfg.plot_replica;
  detail::write_manifest(dir, cfg, "plot", details);
  log << "plot: replica " << cfg.plot_replica << " -> " << (dir / "trajectory.svg").string() << '\n';
  return 0;
}

}  // namespace cfwd
