#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfwd/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Override the master seed");
  sub->add_option("--replicas", o.replicas, "Override the replica count");
  sub->add_option("--threads", o.threads, "Worker threads (results do not depend on it)");
  sub->add_option("--out", o.out, "Output directory");
}

cfwd::SimConfig resolve(const Overrides& o) {
  auto cfg = cfwd::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicas) cfg.replicas = *o.replicas;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.out_dir = *o.out;
  cfwd::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sticky-reflected particle system: simulation, Monte Carlo bound checks, plots"};
  app.require_subcommand(1);
  Overrides o;
  auto* simulate = app.add_subcommand("simulate", "Simulate replicas; write summary and optional trajectory CSVs");
  auto* verify = app.add_subcommand("verify", "Run Monte Carlo checks; write reports.jsonl");
  auto* sticky = app.add_subcommand("sticky", "Sitting-time check for the one-dimensional sticky process");
  auto* plot = app.add_subcommand("plot", "Render one replica as SVG");
  for (auto* sub : {simulate, verify, sticky, plot}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto cfg = resolve(o);
    if (simulate->parsed()) return cfwd::run_simulate(cfg, std::cerr);
    if (verify->parsed()) return cfwd::run_verify(cfg, std::cerr);
    if (sticky->parsed()) return cfwd::run_sticky(cfg, std::cerr);
    return cfwd::run_plot(cfg, std::cerr);
  } catch (const cfwd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
